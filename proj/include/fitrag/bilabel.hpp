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
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fitrag/corpus.hpp"
#include "fitrag/embedding.hpp"
#include "fitrag/llm.hpp"
#include "fitrag/mlp.hpp"

namespace fitrag {

struct BiLabel {
    bool has_answer = false;
    bool llm_prefer = false;

    bool matched() const { return has_answer == llm_prefer; }
    bool operator==(const BiLabel&) const = default;
};

struct BiLabelScore {
    double logit_ans = 0.0;
    double logit_pref = 0.0;
    double p_ans = 0.5;
    double p_pref = 0.5;

    static BiLabelScore from_logits(double logit_ans, double logit_pref);
    double combined() const { return p_ans + p_pref; }
};

/// Sum of the clamped binary cross-entropies of both heads.
double bce_loss(const BiLabelScore& score, const BiLabel& label);

/// f(w): w for a matched label pair, 1 - w for a mismatched one.
inline double imbalance_factor(double w, const BiLabel& label) { return label.matched() ? w : 1.0 - w; }

/// How a (question, document) embedding pair becomes the head's input.
enum class FeatureMode {
    Concat,         // q ++ d
    ConcatProduct,  // q ++ d ++ (q * d)
    ConcatCosine,   // q ++ d ++ [q . d]
};

std::string_view to_string(FeatureMode mode);
FeatureMode parse_feature_mode(std::string_view name);
std::size_t feature_width(std::size_t dim, FeatureMode mode);
/// Scaled by sqrt(dim) (products by dim) so unit-norm embeddings give
/// unit-scale features; the cosine of unrelated pairs has spread
/// 1/sqrt(dim), so it is scaled by sqrt(dim) too.
Eigen::VectorXd pair_features(const Embedding& question, const Embedding& doc, FeatureMode mode);

struct LabeledPair {
    std::string question_id;
    std::string doc_id;
    Embedding question_embedding;
    Embedding doc_embedding;
    BiLabel label;

    bool matched() const { return label.matched(); }
};

/// Column-per-sample design matrix with its two label rows
/// (row 0 has_answer, row 1 llm_prefer).
struct BiLabelBatch {
    Eigen::MatrixXd features;
    Eigen::Matrix<double, 2, Eigen::Dynamic> labels;

    std::size_t size() const { return static_cast<std::size_t>(features.cols()); }
    bool empty() const { return size() == 0; }
    bool matched(std::size_t i) const;
    BiLabel label(std::size_t i) const;

    BiLabelBatch subset(std::span<const std::size_t> columns) const;
    static BiLabelBatch from_pairs(std::span<const LabeledPair> pairs, FeatureMode mode);
    static BiLabelBatch from_columns(Eigen::MatrixXd features, std::span<const BiLabel> labels);
};

using ScorerHead = Mlp<double>;

struct LossAndGradient {
    double loss = 0.0;
    Eigen::VectorXd gradient;
};

/// (1 / normalizer) * sum_i c_i * l_i with c_i = matched_coef or
/// mismatched_coef, and its parameter gradient. Every loss in the learning
/// algorithm is one of these.
LossAndGradient partial_loss(const ScorerHead& head, const BiLabelBatch& batch, double matched_coef,
                             double mismatched_coef, double normalizer, bool with_gradient = true);

/// Mean over the batch of f(w) * l.
double weighted_loss(const ScorerHead& head, const BiLabelBatch& batch, double w);
LossAndGradient weighted_loss_and_gradient(const ScorerHead& head, const BiLabelBatch& batch, double w);

/// One gradient-descent step on the w-weighted loss; returns the new
/// parameters. Throws TrainingError on a non-finite gradient.
Eigen::VectorXd train_step(const ScorerHead& head, const BiLabelBatch& batch, double w, double learning_rate);

struct ValidationSplits {
    BiLabelBatch matched;
    BiLabelBatch mismatched;
};

struct Hypergradient {
    double d_mat = 0.0;  // d L_v^mat(theta_k) / dw
    double d_mis = 0.0;  // d L_v^mis(theta_k) / dw
    double d_com = 0.0;  // (d_mat + d_mis) / 2
};

/// Derivative of both validation losses at theta_k w.r.t. w, through the
/// step theta_k = theta_{k-1} - eta * grad L_t(theta_{k-1}, train).
/// `head` holds theta_{k-1}. Throws ConfigError if a validation split is empty.
Hypergradient hypergradient(const ScorerHead& head, const Eigen::VectorXd& theta_k, const BiLabelBatch& train,
                            const ValidationSplits& validation, double learning_rate);

/// w' = clamp(w - alpha * d_com, 0, 1).
double hypergradient_step(const ScorerHead& head, const Eigen::VectorXd& theta_k, const BiLabelBatch& train,
                          const ValidationSplits& validation, double w, double learning_rate, double hyper_step);

struct ScorerTrainingConfig {
    double learning_rate = 3e-4;
    double hyper_step = 1.0;
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    std::vector<Eigen::Index> hidden = {64, 32};
    FeatureMode feature_mode = FeatureMode::ConcatCosine;
    double validation_fraction = 0.1;
    double initial_w = 0.5;
    bool learn_w = true;
    // Above this many validation pairs, the hypergradient uses a seeded
    // per-epoch subsample of this size per split.
    std::size_t full_validation_limit = 10000;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_matched_loss = 0.0;
    double val_mismatched_loss = 0.0;
    double w = 0.0;
};

struct ScorerTrainingHistory {
    std::vector<EpochStats> epochs;
    std::vector<double> w_trajectory;  // w_0 then w after every step
};

struct HeadTrainingResult {
    ScorerHead head;
    double w_final = 0.5;
    ScorerTrainingHistory history;
    /// (L_v^mat + L_v^mis) / 2 at the final parameters.
    double validation_objective = 0.0;
};

/// Stratified random split of the column indices into training and
/// matched/mismatched validation parts.
struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val_matched;
    std::vector<std::size_t> val_mismatched;
};
DataSplit split_training_data(const BiLabelBatch& data, double validation_fraction, std::uint64_t seed);

/// The imbalance-aware learning loop: per mini-batch, a descent step on the
/// w-weighted loss followed by a hypergradient update of w.
/// Refuses data without both matched and mismatched pairs.
HeadTrainingResult train_bilabel_head(const BiLabelBatch& data, const ScorerTrainingConfig& config);
HeadTrainingResult train_bilabel_head(const BiLabelBatch& train, const ValidationSplits& validation,
                                      const ScorerTrainingConfig& config);

/// Frozen embedding provider plus trained two-head MLP. Immutable; score()
/// is safe to call concurrently.
class ScorerModel {
public:
    ScorerModel(std::shared_ptr<const EmbeddingProvider> provider, FeatureMode mode, ScorerHead head,
                double w_final, std::uint64_t seed);

    BiLabelScore score(std::string_view question, std::string_view doc_text) const;
    BiLabelScore score(const Embedding& question, const Embedding& doc) const;
    std::vector<BiLabelScore> score_many(const Embedding& question, std::span<const Embedding> docs) const;
    std::vector<BiLabelScore> score_texts(std::string_view question, std::span<const std::string> doc_texts) const;

    const EmbeddingProvider& provider() const { return *provider_; }
    std::shared_ptr<const EmbeddingProvider> provider_ptr() const { return provider_; }
    FeatureMode feature_mode() const { return mode_; }
    const ScorerHead& head() const { return head_; }
    double w_final() const { return w_final_; }
    std::uint64_t seed() const { return seed_; }

    void save(const std::filesystem::path& path) const;
    /// Throws IntegrityError if the file was produced with another provider.
    static ScorerModel load(const std::filesystem::path& path, std::shared_ptr<const EmbeddingProvider> provider);

private:
    std::shared_ptr<const EmbeddingProvider> provider_;
    FeatureMode mode_;
    ScorerHead head_;
    double w_final_;
    std::uint64_t seed_;
};

ScorerModel train_scorer(std::span<const LabeledPair> pairs, std::shared_ptr<const EmbeddingProvider> provider,
                         const ScorerTrainingConfig& config, ScorerTrainingHistory* history = nullptr);

inline BiLabelScore score(const ScorerModel& model, std::string_view question, std::string_view doc_text) {
    return model.score(question, doc_text);
}

struct Annotation {
    BiLabel label;
    std::string prompt;
    std::string response;
};

/// Has_Answer from answer containment; LLM_Prefer from whether the LLM
/// answers correctly with the document appended. Throws AnnotationError.
Annotation annotate_training_pair(const QARecord& qa, const Document& doc, const LlmClient& llm,
                                  const PromptLibrary& prompts = PromptLibrary::defaults(),
                                  TemplateKind kind = TemplateKind::Comprehensive);

struct TrainingSet {
    std::vector<LabeledPair> pairs;
    std::size_t matched = 0;
    std::size_t mismatched = 0;
    std::size_t failures = 0;
    std::vector<std::string> warnings;

    /// |matched| / |mismatched|; infinity when nothing is mismatched.
    double imbalance_ratio() const;
};

TrainingSet build_training_set(std::span<const QARecord> questions, const Corpus& corpus, const VectorIndex& index,
                               const EmbeddingProvider& provider, const LlmClient& llm,
                               std::size_t per_question_k = 50,
                               const PromptLibrary& prompts = PromptLibrary::defaults());

/// JSONL cache of labeled pairs.
void save_training_set(const std::filesystem::path& path, std::span<const LabeledPair> pairs);
std::vector<LabeledPair> load_training_set(const std::filesystem::path& path);

}  // namespace fitrag
