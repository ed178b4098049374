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
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fitrag/bilabel.hpp"
#include "fitrag/corpus.hpp"
#include "fitrag/embedding.hpp"
#include "fitrag/llm.hpp"
#include "fitrag/mlp.hpp"

namespace fitrag {

/// A retrieved document with its bi-label score.
struct ScoredDoc {
    RetrievedDoc retrieved;
    BiLabelScore score;
};

/// Scores every retrieved document against the question.
std::vector<ScoredDoc> score_retrieved(const ScorerModel& scorer, std::string_view question,
                                       std::span<const RetrievedDoc> retrieved);

struct RerankedDoc {
    RetrievedDoc retrieved;
    BiLabelScore score;
    double combined = 0.0;  // p_ans + p_pref
    std::size_t position = 0;  // 1-based
};

enum class RerankCriterion { BiLabelSum, HasAnswer, LlmPrefer };

std::string_view to_string(RerankCriterion c);
double rerank_key(const BiLabelScore& s, RerankCriterion c);

/// Sorted by the criterion (descending), ties kept in retrieval order,
/// truncated to k.
std::vector<RerankedDoc> rerank_topk(std::span<const ScoredDoc> scored, std::size_t k = 10,
                                     RerankCriterion criterion = RerankCriterion::BiLabelSum);

struct ScoredSubDoc {
    SubDocument subdoc;
    BiLabelScore score;
    double combined = 0.0;
    std::size_t parent_position = 0;
};

/// For each document, the window with the highest p_ans + p_pref (earliest on ties).
std::vector<ScoredSubDoc> representative_subdocs(std::span<const RerankedDoc> docs, const ScorerModel& scorer,
                                                 std::string_view question, std::size_t window = 3,
                                                 std::size_t stride = 1);

/// Descending by combined score, ties by parent rerank position.
std::vector<ScoredSubDoc> prerank(std::vector<ScoredSubDoc> subdocs);

struct SubDocCombination {
    std::vector<ScoredSubDoc> members;
    Eigen::VectorXd features;
    std::size_t token_count = 0;

    std::vector<std::string> passages() const;
};

/// (p_ans, p_pref) of each member in order, zero-padded to 2 * max_docs.
Eigen::VectorXd combination_features(std::span<const ScoredSubDoc> members, std::size_t max_docs);

SubDocCombination make_combination(std::vector<ScoredSubDoc> members, std::size_t max_docs);

/// Decides whether a combination, described by its padded score features,
/// is enough for the LLM to answer.
class EligibilityDetector {
public:
    virtual ~EligibilityDetector() = default;
    virtual bool eligible(const Eigen::VectorXd& features) const = 0;
    virtual std::size_t max_docs() const = 0;
};

/// Four fully connected layers over the padded score features, one sigmoid output.
class DetectorModel final : public EligibilityDetector {
public:
    DetectorModel() = default;
    DetectorModel(Mlp<double> net, std::size_t max_docs, std::uint64_t seed);

    static std::vector<Eigen::Index> architecture(std::size_t max_docs, std::span<const Eigen::Index> hidden);

    double probability(const Eigen::VectorXd& features) const;
    bool eligible(const Eigen::VectorXd& features) const override { return probability(features) >= kThreshold; }
    std::size_t max_docs() const override { return max_docs_; }
    const Mlp<double>& net() const { return net_; }
    std::uint64_t seed() const { return seed_; }

    void save(const std::filesystem::path& path) const;
    static DetectorModel load(const std::filesystem::path& path);

    static constexpr double kThreshold = 0.5;

private:
    Mlp<double> net_;
    std::size_t max_docs_ = 10;
    std::uint64_t seed_ = 0;
};

/// Grows a prefix of `sorted` one sub-document at a time and returns the
/// first prefix the detector accepts, or the first max_docs entries if none is.
SubDocCombination greedy_filter(std::span<const ScoredSubDoc> sorted, const EligibilityDetector& detector);

/// Rerank -> representative windows -> prerank -> greedy filter.
SubDocCombination reduce(std::string_view question, std::span<const ScoredDoc> scored, const ScorerModel& scorer,
                         const EligibilityDetector& detector, std::size_t top_rerank = 10, std::size_t window = 3,
                         std::size_t stride = 1);

/// Retrieval prompt from a combination's member texts.
LlmRequest build_retrieve_prompt(std::string_view question, const SubDocCombination& combination,
                                 const PromptLibrary& library = PromptLibrary::defaults(),
                                 TemplateKind kind = TemplateKind::Comprehensive,
                                 const Tokenizer& tokenizer = default_tokenizer());

// ---- detector training data ----------------------------------------------

enum class ScoreAggregate { Mean, Sum };

struct DetectorDataConfig {
    std::size_t max_docs = 10;
    std::size_t samples = 200;
    double max_overlap = 0.8;
    ScoreAggregate aggregate = ScoreAggregate::Mean;
    std::size_t top_retrieve = 100;
    std::size_t window = 3;
    std::size_t stride = 1;
    TemplateKind template_kind = TemplateKind::Comprehensive;
    std::uint64_t seed = 0;
};

struct DetectorExample {
    std::string question_id;
    std::vector<std::string> member_ids;
    Eigen::VectorXd features;
    bool label = false;
    double score_ans = 0.0;   // aggregated p_ans of the members
    double score_pref = 0.0;  // aggregated p_pref of the members
};

struct DetectorDataset {
    std::vector<DetectorExample> examples;
    std::size_t questions_used = 0;
    std::size_t questions_skipped = 0;
    std::size_t llm_failures = 0;
    std::vector<std::string> warnings;
};

/// Jaccard similarity of two member-id sets.
double jaccard(std::span<const std::string> a, std::span<const std::string> b);

/// True iff a is at least as good on both coordinates and better on one.
bool dominates(double ax, double ay, double bx, double by);

/// Indices of the Pareto-optimal points (maximizing both coordinates), in input order.
std::vector<std::size_t> skyline(std::span<const std::pair<double, double>> points);

/// Samples, overlap-filters, skyline-filters and labels combinations of the
/// given scored sub-documents for one question.
std::vector<DetectorExample> sample_detector_examples(const QARecord& qa, std::span<const ScoredSubDoc> subdocs,
                                                      const LlmClient& llm, const PromptLibrary& prompts,
                                                      const DetectorDataConfig& config, Rng& rng,
                                                      std::size_t* llm_failures = nullptr,
                                                      std::vector<std::string>* warnings = nullptr);

/// Full training-data build over questions that need retrieval: wrong
/// without documents, right with the reranked top documents.
DetectorDataset build_detector_dataset(std::span<const QARecord> questions, const Corpus& corpus,
                                       const VectorIndex& index, const ScorerModel& scorer, const LlmClient& llm,
                                       const PromptLibrary& prompts, const DetectorDataConfig& config);

void save_detector_dataset(const std::filesystem::path& path, std::span<const DetectorExample> examples);
std::vector<DetectorExample> load_detector_dataset(const std::filesystem::path& path);

struct DetectorTrainingConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    std::vector<Eigen::Index> hidden = {64, 32, 16};
    double holdout_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct DetectorTrainingResult {
    DetectorModel model;
    double train_accuracy = 0.0;
    double holdout_accuracy = 0.0;
    std::size_t holdout_size = 0;
};

/// Mean scalar BCE of the network output and its gradient; labels in {0, 1}.
LossAndGradient detector_loss(const Mlp<double>& net, const Eigen::MatrixXd& features, const Eigen::VectorXd& labels);

/// Refuses single-class data.
DetectorTrainingResult train_detector(std::span<const DetectorExample> examples, std::size_t max_docs,
                                      const DetectorTrainingConfig& config);

}  // namespace fitrag
