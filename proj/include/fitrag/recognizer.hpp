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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fitrag/bilabel.hpp"
#include "fitrag/corpus.hpp"
#include "fitrag/embedding.hpp"
#include "fitrag/llm.hpp"

namespace fitrag {

enum class Verdict { Retrieve, NoRetrieve };

std::string_view to_string(Verdict v);

/// Whether delta_ltod is compared against the Has_Answer logit or probability.
enum class LtodThreshold { Logit, Probability };

struct RecognizerConfig {
    double delta_ltod = 4.5;
    double s_l = 0.04;
    double s_n = 0.67;
    std::size_t k_neighbors = 10;
    LtodThreshold threshold_on = LtodThreshold::Logit;

    /// Throws ConfigError when s_l or s_n leave [0, 1] or k is zero.
    void validate() const;
};

struct RecognizerVerdict {
    double s_ltod = 0.0;
    double s_nn = 0.0;
    Verdict decision = Verdict::Retrieve;
};

struct NnEntry {
    std::string question_id;
    Embedding embedding;
    bool correct_without_retrieval = false;
};

/// Questions labeled by whether the LLM answered them correctly without
/// retrieval. Immutable once built.
class NnReferenceSet {
public:
    NnReferenceSet() = default;
    NnReferenceSet(std::vector<NnEntry> entries, std::string fingerprint);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t dim() const { return static_cast<std::size_t>(points_.rows()); }
    const std::vector<NnEntry>& entries() const { return entries_; }
    const std::string& fingerprint() const { return fingerprint_; }
    std::size_t positives() const;

    /// Indices of the k nearest entries by Euclidean distance, ties by
    /// ascending question_id.
    std::vector<std::size_t> nearest(const Embedding& query, std::size_t k) const;

    /// JSONL {question_id, label, embedding}; label is "correct_w/o_retrieve"
    /// or "incorrect_w/o_retrieve".
    void save(const std::filesystem::path& path) const;
    static NnReferenceSet load(const std::filesystem::path& path);

private:
    std::vector<NnEntry> entries_;
    Eigen::MatrixXd points_;
    std::string fingerprint_;
};

struct NnReferenceBuild {
    NnReferenceSet reference;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

/// Asks every question with the no-retrieval prompt and records whether the
/// answer was correct. LLM failures skip the question with a warning.
NnReferenceBuild build_nn_reference(std::span<const QARecord> questions, const LlmClient& llm,
                                    const EmbeddingProvider& provider,
                                    const PromptLibrary& prompts = PromptLibrary::defaults());

/// Fraction of the retrieved documents whose Has_Answer output exceeds
/// delta_ltod. Throws UndefinedScoreError on empty input.
double s_ltod(std::span<const BiLabelScore> scores, const RecognizerConfig& config);

/// Fraction of the k nearest reference questions answered correctly without
/// retrieval. Throws ConfigError if the reference has fewer than k entries.
double s_nn(const Embedding& question_embedding, const NnReferenceSet& reference, std::size_t k);

/// No_Retrieve iff s_ltod > s_l and s_nn > s_n (both strict).
RecognizerVerdict decide(double s_ltod_value, double s_nn_value, const RecognizerConfig& config);

}  // namespace fitrag
