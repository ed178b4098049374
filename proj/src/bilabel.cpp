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

#include "fitrag/bilabel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "fitrag/errors.hpp"
#include "fitrag/rng.hpp"

namespace fitrag {

namespace {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd vector_from_json(const json& a) {
    if (!a.is_array()) throw ParseError("expected a numeric array", 0);
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
}

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

// -eta * grad L_v(theta_k) . direction, for both validation splits.
Hypergradient hypergradient_along(const ScorerHead& head_k, const Eigen::VectorXd& direction,
                                  const ValidationSplits& validation, double learning_rate) {
    if (validation.matched.empty() || validation.mismatched.empty()) {
        throw ConfigError("hypergradient needs non-empty matched and mismatched validation splits");
    }
    const auto gm = partial_loss(head_k, validation.matched, 1.0, 1.0, static_cast<double>(validation.matched.size()));
    const auto gs =
        partial_loss(head_k, validation.mismatched, 1.0, 1.0, static_cast<double>(validation.mismatched.size()));
    Hypergradient h;
    h.d_mat = -learning_rate * gm.gradient.dot(direction);
    h.d_mis = -learning_rate * gs.gradient.dot(direction);
    h.d_com = 0.5 * (h.d_mat + h.d_mis);
    return h;
}

std::vector<std::size_t> subsample(std::size_t n, std::size_t limit, Rng& rng) {
    std::vector<std::size_t> idx = rng.permutation(n);
    if (idx.size() > limit) idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

BiLabelScore BiLabelScore::from_logits(double logit_ans, double logit_pref) {
    return {logit_ans, logit_pref, sigmoid(logit_ans), sigmoid(logit_pref)};
}

double bce_loss(const BiLabelScore& score, const BiLabel& label) {
    return binary_cross_entropy(score.p_ans, label.has_answer ? 1.0 : 0.0) +
           binary_cross_entropy(score.p_pref, label.llm_prefer ? 1.0 : 0.0);
}

std::string_view to_string(FeatureMode mode) {
    switch (mode) {
        case FeatureMode::Concat: return "concat";
        case FeatureMode::ConcatProduct: return "concat_product";
        case FeatureMode::ConcatCosine: return "concat_cosine";
    }
    return "concat";
}

FeatureMode parse_feature_mode(std::string_view name) {
    if (name == "concat") return FeatureMode::Concat;
    if (name == "concat_product") return FeatureMode::ConcatProduct;
    if (name == "concat_cosine") return FeatureMode::ConcatCosine;
    throw ConfigError("unknown feature mode '" + std::string(name) + "'");
}

std::size_t feature_width(std::size_t dim, FeatureMode mode) {
    switch (mode) {
        case FeatureMode::Concat: return 2 * dim;
        case FeatureMode::ConcatProduct: return 3 * dim;
        case FeatureMode::ConcatCosine: return 2 * dim + 1;
    }
    return 2 * dim;
}

Eigen::VectorXd pair_features(const Embedding& question, const Embedding& doc, FeatureMode mode) {
    if (question.size() != doc.size()) throw ContractError("question and document embeddings differ in dimension");
    const Eigen::Index d = question.size();
    Eigen::VectorXd x(static_cast<Eigen::Index>(feature_width(static_cast<std::size_t>(d), mode)));
    // Unit-norm inputs have coordinates of size ~1/sqrt(d); rescale so the
    // head sees unit-scale features whatever the embedding width.
    const double s = std::sqrt(static_cast<double>(d));
    x.head(d) = s * question;
    x.segment(d, d) = s * doc;
    if (mode == FeatureMode::ConcatProduct) x.tail(d) = (s * s) * question.cwiseProduct(doc);
    if (mode == FeatureMode::ConcatCosine) x[2 * d] = s * question.dot(doc);
    return x;
}

bool BiLabelBatch::matched(std::size_t i) const {
    const auto c = static_cast<Eigen::Index>(i);
    return labels(0, c) == labels(1, c);
}

BiLabel BiLabelBatch::label(std::size_t i) const {
    const auto c = static_cast<Eigen::Index>(i);
    return {labels(0, c) > 0.5, labels(1, c) > 0.5};
}

BiLabelBatch BiLabelBatch::subset(std::span<const std::size_t> columns) const {
    BiLabelBatch b;
    b.features.resize(features.rows(), static_cast<Eigen::Index>(columns.size()));
    b.labels.resize(2, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < columns.size(); ++i) {
        b.features.col(static_cast<Eigen::Index>(i)) = features.col(static_cast<Eigen::Index>(columns[i]));
        b.labels.col(static_cast<Eigen::Index>(i)) = labels.col(static_cast<Eigen::Index>(columns[i]));
    }
    return b;
}

BiLabelBatch BiLabelBatch::from_pairs(std::span<const LabeledPair> pairs, FeatureMode mode) {
    BiLabelBatch b;
    if (pairs.empty()) return b;
    const auto dim = static_cast<std::size_t>(pairs.front().question_embedding.size());
    b.features.resize(static_cast<Eigen::Index>(feature_width(dim, mode)), static_cast<Eigen::Index>(pairs.size()));
    b.labels.resize(2, static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        b.features.col(c) = pair_features(pairs[i].question_embedding, pairs[i].doc_embedding, mode);
        b.labels(0, c) = pairs[i].label.has_answer ? 1.0 : 0.0;
        b.labels(1, c) = pairs[i].label.llm_prefer ? 1.0 : 0.0;
    }
    return b;
}

BiLabelBatch BiLabelBatch::from_columns(Eigen::MatrixXd features, std::span<const BiLabel> labels) {
    if (static_cast<std::size_t>(features.cols()) != labels.size()) {
        throw ContractError("feature columns and labels differ in count");
    }
    BiLabelBatch b;
    b.features = std::move(features);
    b.labels.resize(2, static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        b.labels(0, static_cast<Eigen::Index>(i)) = labels[i].has_answer ? 1.0 : 0.0;
        b.labels(1, static_cast<Eigen::Index>(i)) = labels[i].llm_prefer ? 1.0 : 0.0;
    }
    return b;
}

LossAndGradient partial_loss(const ScorerHead& head, const BiLabelBatch& batch, double matched_coef,
                             double mismatched_coef, double normalizer, bool with_gradient) {
    LossAndGradient out;
    if (batch.empty()) {
        if (with_gradient) out.gradient = Eigen::VectorXd::Zero(head.num_params());
        return out;
    }
    ScorerHead::Tape tape;
    const Eigen::MatrixXd logits = head.forward(batch.features, tape);
    Eigen::MatrixXd dlogits(2, logits.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.cols(); ++i) {
        const double c = batch.matched(static_cast<std::size_t>(i)) ? matched_coef : mismatched_coef;
        double l = 0.0;
        for (Eigen::Index j = 0; j < 2; ++j) {
            const double z = logits(j, i);
            const double y = batch.labels(j, i);
            l += binary_cross_entropy(sigmoid(z), y);
            dlogits(j, i) = c * binary_cross_entropy_logit_grad(z, y) / normalizer;
        }
        total += c * l;
    }
    out.loss = total / normalizer;
    if (with_gradient) out.gradient = head.backward(tape, dlogits);
    return out;
}

double weighted_loss(const ScorerHead& head, const BiLabelBatch& batch, double w) {
    if (batch.empty()) throw ContractError("weighted loss of an empty batch");
    return partial_loss(head, batch, w, 1.0 - w, static_cast<double>(batch.size()), false).loss;
}

LossAndGradient weighted_loss_and_gradient(const ScorerHead& head, const BiLabelBatch& batch, double w) {
    if (batch.empty()) throw ContractError("weighted loss of an empty batch");
    return partial_loss(head, batch, w, 1.0 - w, static_cast<double>(batch.size()), true);
}

Eigen::VectorXd train_step(const ScorerHead& head, const BiLabelBatch& batch, double w, double learning_rate) {
    if (!(learning_rate >= 0.0)) throw ContractError("learning rate must be non-negative");
    const LossAndGradient lg = weighted_loss_and_gradient(head, batch, w);
    if (!lg.gradient.allFinite()) throw TrainingError("non-finite gradient in training step");
    return head.params() - learning_rate * lg.gradient;
}

Hypergradient hypergradient(const ScorerHead& head, const Eigen::VectorXd& theta_k, const BiLabelBatch& train,
                            const ValidationSplits& validation, double learning_rate) {
    if (validation.matched.empty() || validation.mismatched.empty()) {
        throw ConfigError("hypergradient needs non-empty matched and mismatched validation splits");
    }
    const double n = static_cast<double>(std::max<std::size_t>(train.size(), 1));
    const Eigen::VectorXd g_mat = partial_loss(head, train, 1.0, 0.0, n).gradient;
    const Eigen::VectorXd g_mis = partial_loss(head, train, 0.0, 1.0, n).gradient;
    ScorerHead head_k = head;
    head_k.set_params(theta_k);
    return hypergradient_along(head_k, g_mat - g_mis, validation, learning_rate);
}

double hypergradient_step(const ScorerHead& head, const Eigen::VectorXd& theta_k, const BiLabelBatch& train,
                          const ValidationSplits& validation, double w, double learning_rate, double hyper_step) {
    const Hypergradient h = hypergradient(head, theta_k, train, validation, learning_rate);
    if (!std::isfinite(h.d_com)) throw TrainingError("non-finite hypergradient");
    return clamp01(w - hyper_step * h.d_com);
}

DataSplit split_training_data(const BiLabelBatch& data, double validation_fraction, std::uint64_t seed) {
    std::vector<std::size_t> mat, mis;
    for (std::size_t i = 0; i < data.size(); ++i) (data.matched(i) ? mat : mis).push_back(i);
    if (mat.empty() || mis.empty()) {
        throw ImbalanceDegenerateError("training data must contain both matched and mismatched label pairs (got " +
                                       std::to_string(mat.size()) + " matched, " + std::to_string(mis.size()) +
                                       " mismatched)");
    }
    Rng rng(seed, "scorer-split");
    rng.shuffle(mat);
    rng.shuffle(mis);
    auto n_val = [&](std::size_t n) {
        auto k = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
        k = std::max<std::size_t>(k, 1);
        if (n >= 2) k = std::min(k, n - 1);
        return std::min(k, n);
    };
    DataSplit s;
    const std::size_t vm = n_val(mat.size());
    const std::size_t vs = n_val(mis.size());
    s.val_matched.assign(mat.begin(), mat.begin() + static_cast<std::ptrdiff_t>(vm));
    s.val_mismatched.assign(mis.begin(), mis.begin() + static_cast<std::ptrdiff_t>(vs));
    s.train.assign(mat.begin() + static_cast<std::ptrdiff_t>(vm), mat.end());
    s.train.insert(s.train.end(), mis.begin() + static_cast<std::ptrdiff_t>(vs), mis.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val_matched.begin(), s.val_matched.end());
    std::sort(s.val_mismatched.begin(), s.val_mismatched.end());
    return s;
}

HeadTrainingResult train_bilabel_head(const BiLabelBatch& data, const ScorerTrainingConfig& config) {
    const DataSplit s = split_training_data(data, config.validation_fraction, config.seed);
    ValidationSplits val{data.subset(s.val_matched), data.subset(s.val_mismatched)};
    return train_bilabel_head(data.subset(s.train), val, config);
}

HeadTrainingResult train_bilabel_head(const BiLabelBatch& train, const ValidationSplits& validation,
                                      const ScorerTrainingConfig& config) {
    if (train.empty()) throw ImbalanceDegenerateError("empty training split");
    if (validation.matched.empty() || validation.mismatched.empty()) {
        throw ImbalanceDegenerateError("validation needs both matched and mismatched pairs");
    }
    if (config.batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (config.initial_w < 0.0 || config.initial_w > 1.0) throw ConfigError("initial w must lie in [0, 1]");

    std::vector<Eigen::Index> widths{train.features.rows()};
    widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
    widths.push_back(2);

    HeadTrainingResult r;
    r.head = ScorerHead(widths);
    Rng init_rng(config.seed, "scorer-init");
    r.head.initialize(init_rng);
    double w = config.initial_w;
    r.history.w_trajectory.push_back(w);

    Rng shuffle_rng(config.seed, "scorer-shuffle");
    Rng val_rng(config.seed, "scorer-val-subsample");
    const std::size_t limit = std::max<std::size_t>(config.full_validation_limit, 1);
    const double eta = config.learning_rate;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        ValidationSplits val_used;
        const ValidationSplits* val = &validation;
        if (validation.matched.size() > limit || validation.mismatched.size() > limit) {
            const auto im = subsample(validation.matched.size(), limit, val_rng);
            const auto is = subsample(validation.mismatched.size(), limit, val_rng);
            val_used = {validation.matched.subset(im), validation.mismatched.subset(is)};
            val = &val_used;
        }
        const std::vector<std::size_t> order = shuffle_rng.permutation(train.size());
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            const BiLabelBatch batch =
                train.subset(std::span<const std::size_t>(order.data() + start, n));
            const double norm = static_cast<double>(n);
            const Eigen::VectorXd g_mat = partial_loss(r.head, batch, 1.0, 0.0, norm).gradient;
            const Eigen::VectorXd g_mis = partial_loss(r.head, batch, 0.0, 1.0, norm).gradient;
            const Eigen::VectorXd grad = w * g_mat + (1.0 - w) * g_mis;
            if (!grad.allFinite()) throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch));
            const Eigen::VectorXd theta_k = r.head.params() - eta * grad;
            r.head.set_params(theta_k);
            if (config.learn_w) {
                const Hypergradient h = hypergradient_along(r.head, g_mat - g_mis, *val, eta);
                if (!std::isfinite(h.d_com)) throw TrainingError("non-finite hypergradient");
                w = clamp01(w - config.hyper_step * h.d_com);
            }
            r.history.w_trajectory.push_back(w);
        }
        EpochStats stats;
        stats.train_loss = weighted_loss(r.head, train, w);
        stats.val_matched_loss =
            partial_loss(r.head, validation.matched, 1, 1, static_cast<double>(validation.matched.size()), false).loss;
        stats.val_mismatched_loss =
            partial_loss(r.head, validation.mismatched, 1, 1, static_cast<double>(validation.mismatched.size()), false)
                .loss;
        stats.w = w;
        r.history.epochs.push_back(stats);
    }
    r.w_final = w;
    const double lm =
        partial_loss(r.head, validation.matched, 1, 1, static_cast<double>(validation.matched.size()), false).loss;
    const double ls =
        partial_loss(r.head, validation.mismatched, 1, 1, static_cast<double>(validation.mismatched.size()), false)
            .loss;
    r.validation_objective = 0.5 * (lm + ls);
    return r;
}

ScorerModel::ScorerModel(std::shared_ptr<const EmbeddingProvider> provider, FeatureMode mode, ScorerHead head,
                         double w_final, std::uint64_t seed)
    : provider_(std::move(provider)), mode_(mode), head_(std::move(head)), w_final_(w_final), seed_(seed) {
    if (!provider_) throw ContractError("scorer needs an embedding provider");
    if (static_cast<std::size_t>(head_.input_size()) != feature_width(provider_->dim(), mode_)) {
        throw IntegrityError("scorer head input width does not match provider dimension");
    }
    if (head_.output_size() != 2) throw IntegrityError("scorer head must have two outputs");
    if (!head_.params().allFinite()) throw IntegrityError("scorer parameters are not finite");
}

BiLabelScore ScorerModel::score(const Embedding& question, const Embedding& doc) const {
    const Eigen::MatrixXd logits = head_.forward(pair_features(question, doc, mode_));
    return BiLabelScore::from_logits(logits(0, 0), logits(1, 0));
}

BiLabelScore ScorerModel::score(std::string_view question, std::string_view doc_text) const {
    return score(embed(*provider_, question), embed(*provider_, doc_text));
}

std::vector<BiLabelScore> ScorerModel::score_many(const Embedding& question, std::span<const Embedding> docs) const {
    std::vector<BiLabelScore> out;
    if (docs.empty()) return out;
    Eigen::MatrixXd x(head_.input_size(), static_cast<Eigen::Index>(docs.size()));
    for (std::size_t i = 0; i < docs.size(); ++i) {
        x.col(static_cast<Eigen::Index>(i)) = pair_features(question, docs[i], mode_);
    }
    const Eigen::MatrixXd logits = head_.forward(x);
    out.reserve(docs.size());
    for (Eigen::Index i = 0; i < logits.cols(); ++i) out.push_back(BiLabelScore::from_logits(logits(0, i), logits(1, i)));
    return out;
}

std::vector<BiLabelScore> ScorerModel::score_texts(std::string_view question,
                                                   std::span<const std::string> doc_texts) const {
    const Embedding q = embed(*provider_, question);
    std::vector<Embedding> docs;
    docs.reserve(doc_texts.size());
    for (const std::string& t : doc_texts) docs.push_back(embed(*provider_, t));
    return score_many(q, docs);
}

void ScorerModel::save(const std::filesystem::path& path) const {
    json arch = {{"widths", head_.widths()}, {"hidden_activation", "tanh"}, {"feature_mode", to_string(mode_)}};
    json j = {{"format", "fitrag-scorer"},   {"version", 1},
              {"architecture", arch},        {"theta", vector_to_json(head_.params())},
              {"w_final", w_final_},         {"provider_fingerprint", provider_->fingerprint()},
              {"seed", seed_}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump() << '\n';
}

ScorerModel ScorerModel::load(const std::filesystem::path& path, std::shared_ptr<const EmbeddingProvider> provider) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
        if (j.at("format") != "fitrag-scorer" || j.at("version") != 1) throw IntegrityError("not a scorer model file");
        if (j.at("provider_fingerprint").get<std::string>() != provider->fingerprint()) {
            throw IntegrityError("scorer was trained with provider '" + j["provider_fingerprint"].get<std::string>() +
                                 "', not '" + provider->fingerprint() + "'");
        }
        const auto& arch = j.at("architecture");
        ScorerHead head(arch.at("widths").get<std::vector<Eigen::Index>>());
        head.set_params(vector_from_json(j.at("theta")));
        return ScorerModel(std::move(provider), parse_feature_mode(arch.at("feature_mode").get<std::string>()),
                           std::move(head), j.at("w_final").get<double>(), j.at("seed").get<std::uint64_t>());
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("malformed scorer model: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw IntegrityError(std::string("malformed scorer model: ") + e.what());
    }
}

ScorerModel train_scorer(std::span<const LabeledPair> pairs, std::shared_ptr<const EmbeddingProvider> provider,
                         const ScorerTrainingConfig& config, ScorerTrainingHistory* history) {
    if (!provider) throw ContractError("train_scorer needs an embedding provider");
    for (const LabeledPair& p : pairs) {
        if (static_cast<std::size_t>(p.question_embedding.size()) != provider->dim() ||
            static_cast<std::size_t>(p.doc_embedding.size()) != provider->dim()) {
            throw IntegrityError("labeled pair embedding dimension does not match the provider");
        }
    }
    const BiLabelBatch data = BiLabelBatch::from_pairs(pairs, config.feature_mode);
    HeadTrainingResult r = train_bilabel_head(data, config);
    if (history) *history = r.history;
    return ScorerModel(std::move(provider), config.feature_mode, std::move(r.head), r.w_final, config.seed);
}

Annotation annotate_training_pair(const QARecord& qa, const Document& doc, const LlmClient& llm,
                                  const PromptLibrary& prompts, TemplateKind kind) {
    Annotation a;
    a.label.has_answer = contains_answer(doc.text, qa.gold_answers);
    try {
        const std::string passage = doc.text;
        const LlmRequest req = build_retrieve_prompt(qa.question, std::span<const std::string>(&passage, 1), prompts,
                                                     kind);
        a.prompt = req.prompt;
        a.response = complete(llm, req).text;
    } catch (const Error& e) {
        throw AnnotationError(qa.question_id, doc.doc_id, e.what());
    }
    a.label.llm_prefer = is_correct(a.response, qa.gold_answers);
    return a;
}

double TrainingSet::imbalance_ratio() const {
    if (mismatched == 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(matched) / static_cast<double>(mismatched);
}

TrainingSet build_training_set(std::span<const QARecord> questions, const Corpus& corpus, const VectorIndex& index,
                               const EmbeddingProvider& provider, const LlmClient& llm, std::size_t per_question_k,
                               const PromptLibrary& prompts) {
    TrainingSet set;
    for (const QARecord& qa : questions) {
        const Embedding q = embed(provider, qa.question);
        for (const RetrievedDoc& rd : retrieve(corpus, index, provider, qa.question, per_question_k)) {
            Annotation a;
            try {
                a = annotate_training_pair(qa, *rd.doc, llm, prompts);
            } catch (const AnnotationError& e) {
                ++set.failures;
                set.warnings.emplace_back(e.what());
                continue;
            }
            LabeledPair p{qa.question_id, rd.doc->doc_id, q, embed(provider, rd.doc->text), a.label};
            (p.matched() ? set.matched : set.mismatched) += 1;
            set.pairs.push_back(std::move(p));
        }
    }
    return set;
}

void save_training_set(const std::filesystem::path& path, std::span<const LabeledPair> pairs) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const LabeledPair& p : pairs) {
        out << json{{"question_id", p.question_id},
                    {"doc_id", p.doc_id},
                    {"has_answer", p.label.has_answer},
                    {"llm_prefer", p.label.llm_prefer},
                    {"question_embedding", vector_to_json(p.question_embedding)},
                    {"doc_embedding", vector_to_json(p.doc_embedding)}}
                   .dump()
            << '\n';
    }
}

std::vector<LabeledPair> load_training_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<LabeledPair> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            LabeledPair p;
            p.question_id = j.at("question_id").get<std::string>();
            p.doc_id = j.at("doc_id").get<std::string>();
            p.label = {j.at("has_answer").get<bool>(), j.at("llm_prefer").get<bool>()};
            p.question_embedding = vector_from_json(j.at("question_embedding"));
            p.doc_embedding = vector_from_json(j.at("doc_embedding"));
            out.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

}  // namespace fitrag
