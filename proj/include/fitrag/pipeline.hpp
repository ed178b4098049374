/*
 * Copyright 2026 The fitrag Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fitrag/bilabel.hpp"
#include "fitrag/corpus.hpp"
#include "fitrag/embedding.hpp"
#include "fitrag/llm.hpp"
#include "fitrag/recognizer.hpp"
#include "fitrag/reducer.hpp"

namespace fitrag {

struct EmbeddingSettings {
    std::string provider = "hash";  // "hash" or "remote"
    std::size_t dim = 256;
    std::uint64_t seed = 0;
    RemoteEmbedderConfig remote;
};

struct LlmSettings {
    std::string provider = "mock";  // "mock" or "http"
    std::filesystem::path script;
    bool strict = true;
    std::string default_answer = "I don't know.";
    HttpLlmConfig http;
};

struct PipelineConfig {
    std::filesystem::path corpus;
    std::filesystem::path qa;
    std::filesystem::path index;  // empty: build in memory
    std::filesystem::path scorer;
    std::filesystem::path scorer_fixed_w;
    std::filesystem::path detector;
    std::filesystem::path nn_reference;
    std::filesystem::path training_set;
    std::filesystem::path detector_data;

    EmbeddingSettings embedding;
    LlmSettings llm;
    RecognizerConfig recognizer;
    PromptLibrary prompts = PromptLibrary::defaults();
    TemplateKind template_kind = TemplateKind::Comprehensive;

    std::size_t top_retrieve = 100;
    std::size_t top_rerank = 10;
    std::size_t window = 3;
    std::size_t stride = 1;
    std::size_t annotate_k = 50;
    std::size_t concurrency = 0;  // 0: the LLM client's cap

    ScorerTrainingConfig scorer_training;
    DetectorDataConfig detector_data_build;
    DetectorTrainingConfig detector_training;

    std::uint64_t seed = 0;

    /// Relative paths resolve against base_dir.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);

    /// Re-derives every component seed from the root seed.
    void set_seed(std::uint64_t root);
    /// Throws ConfigError on inconsistent values.
    void validate() const;
};

std::shared_ptr<const EmbeddingProvider> make_provider(const EmbeddingSettings& settings);
std::shared_ptr<const LlmClient> make_llm(const LlmSettings& settings);
/// Loads config.index when set (it must exist), otherwise builds in memory.
VectorIndex load_or_build_index(const PipelineConfig& config, const Corpus& corpus,
                                const EmbeddingProvider& provider);
std::vector<QARecord> load_questions(const std::filesystem::path& path);

struct Ablations {
    bool no_recognizer = false;
    bool no_reducer = false;
    bool fixed_w = false;
    std::optional<TemplateKind> template_kind;

    std::string name() const;
    /// "no_recognizer", "no_reducer", "fixed_w", "template=<kind>".
    static Ablations parse(std::string_view flag);
};

struct StageTimings {
    double retrieve_ms = 0.0;
    double score_ms = 0.0;
    double recognize_ms = 0.0;
    double reduce_ms = 0.0;
    double llm_ms = 0.0;
};

struct AnswerTrace {
    std::string question_id;
    std::string question;
    RecognizerVerdict verdict;
    std::optional<SubDocCombination> combination;
    std::string prompt;
    std::size_t prompt_tokens = 0;
    std::string response;
    std::optional<bool> correct;  // empty without gold answers
    StageTimings timings;

    nlohmann::json to_json(bool with_timings = true) const;
    /// Field-wise equality, ignoring timings.
    bool same_outcome(const AnswerTrace& other) const;
};

struct PipelineParts {
    Corpus corpus;
    VectorIndex index;
    std::shared_ptr<const EmbeddingProvider> provider;
    std::shared_ptr<const ScorerModel> scorer;
    std::shared_ptr<const ScorerModel> scorer_fixed_w;  // optional
    std::shared_ptr<const EligibilityDetector> detector;
    NnReferenceSet reference;
    std::shared_ptr<const LlmClient> llm;
};

class Pipeline {
public:
    Pipeline(PipelineParts parts, PipelineConfig config);
    /// Loads every component named by the config.
    static Pipeline load(const PipelineConfig& config);

    /// Retrieve, score, recognize, reduce, prompt, complete. When scored_out
    /// is given it receives the scored retrieval list.
    AnswerTrace answer(const QARecord& qa, const Ablations& ablations = {},
                       std::vector<ScoredDoc>* scored_out = nullptr) const;
    AnswerTrace answer(std::string_view question, const Ablations& ablations = {}) const;

    /// Top-k retrieval with bi-label scores, using the scorer the ablation selects.
    std::vector<ScoredDoc> retrieve_scored(std::string_view question, const Ablations& ablations = {}) const;

    const PipelineConfig& config() const { return config_; }
    const Corpus& corpus() const { return parts_.corpus; }
    const LlmClient& llm() const { return *parts_.llm; }

private:
    const ScorerModel& scorer_for(const Ablations& ablations) const;

    PipelineParts parts_;
    PipelineConfig config_;
};

inline AnswerTrace answer_question(const QARecord& qa, const Pipeline& pipeline, const Ablations& ablations = {}) {
    return pipeline.answer(qa, ablations);
}

struct QuestionFailure {
    std::string question_id;
    std::string stage;
    std::string message;
    bool excluded = false;  // transport failure, left out of the denominators
};

struct QuestionOutcome {
    std::string question_id;
    Verdict verdict = Verdict::Retrieve;
    std::size_t prompt_tokens = 0;
    bool correct = false;
};

inline constexpr std::size_t kRecallDepths[] = {1, 5, 10, 20, 100};

struct EvalSummary {
    std::string ablation;
    std::size_t questions = 0;
    std::size_t evaluated = 0;
    double accuracy = 0.0;
    double mean_prompt_tokens = 0.0;
    double retrieval_skip_rate = 0.0;
    // ordering -> depth -> recall
    std::map<std::string, std::map<std::size_t, double>> recall;
    std::vector<QuestionOutcome> outcomes;
    std::vector<QuestionFailure> failures;

    nlohmann::json to_json() const;
};

struct EvalReport : EvalSummary {
    std::vector<EvalSummary> sub_reports;

    nlohmann::json to_json() const;
    std::string dump() const;
    /// Plain-text table of the headline numbers.
    std::string table() const;
};

/// Runs every question (concurrently up to the configured cap), keeping
/// results in input order. Transport failures are listed and excluded;
/// failures of local components abort with a StageError.
EvalSummary evaluate_once(std::span<const QARecord> questions, const Pipeline& pipeline, const Ablations& ablations);

/// The main run plus one sub-report per extra ablation.
EvalReport evaluate(std::span<const QARecord> questions, const Pipeline& pipeline, const Ablations& ablations = {},
                    std::span<const Ablations> compare = {});

}  // namespace fitrag
