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

#include "fitrag/reducer.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "fitrag/errors.hpp"

namespace fitrag {

namespace {

using nlohmann::json;

bool subdoc_before(const ScoredSubDoc& a, const ScoredSubDoc& b) {
    if (a.combined != b.combined) return a.combined > b.combined;
    if (a.parent_position != b.parent_position) return a.parent_position < b.parent_position;
    return a.subdoc.start_sentence < b.subdoc.start_sentence;
}

std::vector<ScoredSubDoc> score_windows(const RerankedDoc& doc, const ScorerModel& scorer, const Embedding& question,
                                        std::size_t window, std::size_t stride) {
    std::vector<SubDocument> subs = generate_subdocuments(*doc.retrieved.doc, window, stride);
    std::vector<Embedding> embs;
    std::vector<ScoredSubDoc> out;
    embs.reserve(subs.size());
    for (const SubDocument& s : subs) {
        embs.push_back(embed(scorer.provider(), s.text.empty() ? doc.retrieved.doc->text : s.text));
    }
    const std::vector<BiLabelScore> scores = scorer.score_many(question, embs);
    for (std::size_t i = 0; i < subs.size(); ++i) {
        out.push_back({std::move(subs[i]), scores[i], scores[i].combined(), doc.position});
    }
    return out;
}

double aggregate(std::span<const ScoredSubDoc> members, bool ans, ScoreAggregate how) {
    double s = 0.0;
    for (const ScoredSubDoc& m : members) s += ans ? m.score.p_ans : m.score.p_pref;
    if (how == ScoreAggregate::Mean && !members.empty()) s /= static_cast<double>(members.size());
    return s;
}

json vec_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
}

double accuracy(const DetectorModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.cols() == 0) return 0.0;
    std::size_t right = 0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        const bool predicted = model.eligible(x.col(i));
        if (predicted == (y[i] > 0.5)) ++right;
    }
    return static_cast<double>(right) / static_cast<double>(x.cols());
}

}  // namespace

std::vector<ScoredDoc> score_retrieved(const ScorerModel& scorer, std::string_view question,
                                       std::span<const RetrievedDoc> retrieved) {
    const Embedding q = embed(scorer.provider(), question);
    std::vector<Embedding> docs;
    docs.reserve(retrieved.size());
    for (const RetrievedDoc& r : retrieved) docs.push_back(embed(scorer.provider(), r.doc->text));
    const std::vector<BiLabelScore> scores = scorer.score_many(q, docs);
    std::vector<ScoredDoc> out;
    out.reserve(retrieved.size());
    for (std::size_t i = 0; i < retrieved.size(); ++i) out.push_back({retrieved[i], scores[i]});
    return out;
}

std::string_view to_string(RerankCriterion c) {
    switch (c) {
        case RerankCriterion::BiLabelSum: return "bilabel_sum";
        case RerankCriterion::HasAnswer: return "has_answer_only";
        case RerankCriterion::LlmPrefer: return "llm_prefer_only";
    }
    return "bilabel_sum";
}

double rerank_key(const BiLabelScore& s, RerankCriterion c) {
    switch (c) {
        case RerankCriterion::HasAnswer: return s.p_ans;
        case RerankCriterion::LlmPrefer: return s.p_pref;
        case RerankCriterion::BiLabelSum: break;
    }
    return s.p_ans + s.p_pref;
}

std::vector<RerankedDoc> rerank_topk(std::span<const ScoredDoc> scored, std::size_t k, RerankCriterion criterion) {
    std::vector<RerankedDoc> out;
    out.reserve(scored.size());
    for (const ScoredDoc& s : scored) out.push_back({s.retrieved, s.score, s.score.combined(), 0});
    std::stable_sort(out.begin(), out.end(), [&](const RerankedDoc& a, const RerankedDoc& b) {
        const double ka = rerank_key(a.score, criterion);
        const double kb = rerank_key(b.score, criterion);
        if (ka != kb) return ka > kb;
        return a.retrieved.rank < b.retrieved.rank;
    });
    if (out.size() > k) out.resize(k);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].position = i + 1;
    return out;
}

std::vector<ScoredSubDoc> representative_subdocs(std::span<const RerankedDoc> docs, const ScorerModel& scorer,
                                                 std::string_view question, std::size_t window, std::size_t stride) {
    if (docs.empty()) throw ContractError("representative_subdocs needs at least one document");
    const Embedding q = embed(scorer.provider(), question);
    std::vector<ScoredSubDoc> out;
    out.reserve(docs.size());
    for (const RerankedDoc& d : docs) {
        std::vector<ScoredSubDoc> windows = score_windows(d, scorer, q, window, stride);
        std::size_t best = 0;
        for (std::size_t i = 1; i < windows.size(); ++i) {
            if (windows[i].combined > windows[best].combined) best = i;
        }
        out.push_back(std::move(windows[best]));
    }
    return out;
}

std::vector<ScoredSubDoc> prerank(std::vector<ScoredSubDoc> subdocs) {
    std::stable_sort(subdocs.begin(), subdocs.end(), [](const ScoredSubDoc& a, const ScoredSubDoc& b) {
        if (a.combined != b.combined) return a.combined > b.combined;
        return a.parent_position < b.parent_position;
    });
    return subdocs;
}

std::vector<std::string> SubDocCombination::passages() const {
    std::vector<std::string> out;
    out.reserve(members.size());
    for (const ScoredSubDoc& m : members) out.push_back(m.subdoc.text);
    return out;
}

Eigen::VectorXd combination_features(std::span<const ScoredSubDoc> members, std::size_t max_docs) {
    if (members.size() > max_docs) throw ContractError("combination has more members than max_docs");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * max_docs));
    for (std::size_t i = 0; i < members.size(); ++i) {
        x[static_cast<Eigen::Index>(2 * i)] = members[i].score.p_ans;
        x[static_cast<Eigen::Index>(2 * i + 1)] = members[i].score.p_pref;
    }
    return x;
}

SubDocCombination make_combination(std::vector<ScoredSubDoc> members, std::size_t max_docs) {
    SubDocCombination c;
    c.features = combination_features(members, max_docs);
    for (const ScoredSubDoc& m : members) c.token_count += m.subdoc.token_count;
    c.members = std::move(members);
    return c;
}

DetectorModel::DetectorModel(Mlp<double> net, std::size_t max_docs, std::uint64_t seed)
    : net_(std::move(net)), max_docs_(max_docs), seed_(seed) {
    if (max_docs_ == 0) throw ContractError("max_docs must be positive");
    if (static_cast<std::size_t>(net_.input_size()) != 2 * max_docs_ || net_.output_size() != 1) {
        throw IntegrityError("detector network shape does not match max_docs");
    }
    if (net_.num_layers() != 4) throw IntegrityError("detector must have four fully connected layers");
}

std::vector<Eigen::Index> DetectorModel::architecture(std::size_t max_docs, std::span<const Eigen::Index> hidden) {
    if (hidden.size() != 3) throw ConfigError("the detector needs exactly three hidden widths (four layers)");
    std::vector<Eigen::Index> w{static_cast<Eigen::Index>(2 * max_docs)};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(1);
    return w;
}

double DetectorModel::probability(const Eigen::VectorXd& features) const {
    if (features.size() != net_.input_size()) throw ContractError("detector features have the wrong length");
    return sigmoid(net_.forward(features)(0, 0));
}

void DetectorModel::save(const std::filesystem::path& path) const {
    json j = {{"format", "fitrag-detector"},
              {"version", 1},
              {"architecture", {{"widths", net_.widths()}, {"hidden_activation", "tanh"}}},
              {"parameters", vec_json(net_.params())},
              {"max_docs", max_docs_},
              {"seed", seed_},
              {"threshold", kThreshold}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump() << '\n';
}

DetectorModel DetectorModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        const json j = json::parse(in);
        if (j.at("format") != "fitrag-detector" || j.at("version") != 1) {
            throw IntegrityError("not a detector model file");
        }
        Mlp<double> net(j.at("architecture").at("widths").get<std::vector<Eigen::Index>>());
        net.set_params(vec_from_json(j.at("parameters")));
        if (!net.params().allFinite()) throw IntegrityError("detector parameters are not finite");
        return DetectorModel(std::move(net), j.at("max_docs").get<std::size_t>(), j.at("seed").get<std::uint64_t>());
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("malformed detector model: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw IntegrityError(std::string("malformed detector model: ") + e.what());
    }
}

SubDocCombination greedy_filter(std::span<const ScoredSubDoc> sorted, const EligibilityDetector& detector) {
    if (sorted.empty()) throw ContractError("greedy_filter needs at least one sub-document");
    const std::size_t max_docs = detector.max_docs();
    const std::size_t limit = std::min(sorted.size(), max_docs);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * max_docs));
    for (std::size_t i = 0; i < limit; ++i) {
        x[static_cast<Eigen::Index>(2 * i)] = sorted[i].score.p_ans;
        x[static_cast<Eigen::Index>(2 * i + 1)] = sorted[i].score.p_pref;
        if (detector.eligible(x)) {
            return make_combination({sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(i + 1)}, max_docs);
        }
    }
    return make_combination({sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(limit)}, max_docs);
}

SubDocCombination reduce(std::string_view question, std::span<const ScoredDoc> scored, const ScorerModel& scorer,
                         const EligibilityDetector& detector, std::size_t top_rerank, std::size_t window,
                         std::size_t stride) {
    const std::vector<RerankedDoc> top = rerank_topk(scored, top_rerank);
    if (top.empty()) throw ContractError("reduce needs at least one scored document");
    const std::vector<ScoredSubDoc> sorted = prerank(representative_subdocs(top, scorer, question, window, stride));
    return greedy_filter(sorted, detector);
}

LlmRequest build_retrieve_prompt(std::string_view question, const SubDocCombination& combination,
                                 const PromptLibrary& library, TemplateKind kind, const Tokenizer& tokenizer) {
    if (combination.members.empty()) throw ContractError("cannot build a prompt from an empty combination");
    const std::vector<std::string> passages = combination.passages();
    return build_retrieve_prompt(question, passages, library, kind, tokenizer);
}

double jaccard(std::span<const std::string> a, std::span<const std::string> b) {
    std::set<std::string> sa(a.begin(), a.end());
    std::set<std::string> sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const std::string& s : sa) inter += sb.count(s);
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

bool dominates(double ax, double ay, double bx, double by) {
    return ax >= bx && ay >= by && (ax > bx || ay > by);
}

std::vector<std::size_t> skyline(std::span<const std::pair<double, double>> points) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
            if (j != i && dominates(points[j].first, points[j].second, points[i].first, points[i].second)) {
                dominated = true;
            }
        }
        if (!dominated) out.push_back(i);
    }
    return out;
}

std::vector<DetectorExample> sample_detector_examples(const QARecord& qa, std::span<const ScoredSubDoc> subdocs,
                                                      const LlmClient& llm, const PromptLibrary& prompts,
                                                      const DetectorDataConfig& config, Rng& rng,
                                                      std::size_t* llm_failures, std::vector<std::string>* warnings) {
    std::vector<DetectorExample> out;
    if (subdocs.empty() || config.max_docs == 0) return out;

    struct Candidate {
        std::vector<ScoredSubDoc> members;
        std::vector<std::string> ids;
        double ans, pref;
    };
    std::vector<Candidate> kept;
    const std::size_t max_size = std::min(config.max_docs, subdocs.size());
    for (std::size_t s = 0; s < config.samples; ++s) {
        const std::size_t size = 1 + rng.index(max_size);
        std::vector<std::size_t> pool(subdocs.size());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
        for (std::size_t i = 0; i < size; ++i) std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
        Candidate c;
        for (std::size_t i = 0; i < size; ++i) c.members.push_back(subdocs[pool[i]]);
        std::sort(c.members.begin(), c.members.end(), subdoc_before);
        for (const ScoredSubDoc& m : c.members) c.ids.push_back(m.subdoc.id());
        std::sort(c.ids.begin(), c.ids.end());
        const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const Candidate& k) {
            return jaccard(k.ids, c.ids) > config.max_overlap;
        });
        if (overlaps) continue;
        c.ans = aggregate(c.members, true, config.aggregate);
        c.pref = aggregate(c.members, false, config.aggregate);
        kept.push_back(std::move(c));
    }

    std::vector<std::pair<double, double>> points;
    points.reserve(kept.size());
    for (const Candidate& c : kept) points.emplace_back(c.ans, c.pref);
    for (std::size_t i : skyline(points)) {
        Candidate& c = kept[i];
        DetectorExample ex;
        ex.question_id = qa.question_id;
        ex.features = combination_features(c.members, config.max_docs);
        ex.score_ans = c.ans;
        ex.score_pref = c.pref;
        for (const ScoredSubDoc& m : c.members) ex.member_ids.push_back(m.subdoc.id());
        try {
            std::vector<std::string> passages;
            for (const ScoredSubDoc& m : c.members) passages.push_back(m.subdoc.text);
            const LlmRequest req = build_retrieve_prompt(qa.question, passages, prompts, config.template_kind);
            ex.label = is_correct(complete(llm, req).text, qa.gold_answers);
        } catch (const Error& e) {
            if (llm_failures) ++*llm_failures;
            if (warnings) warnings->push_back("question '" + qa.question_id + "' combination skipped: " + e.what());
            continue;
        }
        out.push_back(std::move(ex));
    }
    return out;
}

DetectorDataset build_detector_dataset(std::span<const QARecord> questions, const Corpus& corpus,
                                       const VectorIndex& index, const ScorerModel& scorer, const LlmClient& llm,
                                       const PromptLibrary& prompts, const DetectorDataConfig& config) {
    DetectorDataset ds;
    Rng rng(config.seed, "detector-sampling");
    for (const QARecord& qa : questions) {
        const auto retrieved = retrieve(corpus, index, scorer.provider(), qa.question, config.top_retrieve);
        const auto scored = score_retrieved(scorer, qa.question, retrieved);
        const auto top = rerank_topk(scored, config.max_docs);
        bool needs_retrieval = false;
        try {
            const bool alone = is_correct(complete(llm, build_noretrieve_prompt(qa.question, prompts)).text,
                                          qa.gold_answers);
            std::vector<std::string> full;
            for (const RerankedDoc& d : top) full.push_back(d.retrieved.doc->text);
            const bool with_docs =
                !full.empty() &&
                is_correct(complete(llm, build_retrieve_prompt(qa.question, full, prompts, config.template_kind)).text,
                           qa.gold_answers);
            needs_retrieval = !alone && with_docs;
        } catch (const Error& e) {
            ++ds.llm_failures;
            ds.warnings.push_back("question '" + qa.question_id + "' skipped: " + e.what());
        }
        if (!needs_retrieval) {
            ++ds.questions_skipped;
            continue;
        }
        ++ds.questions_used;
        const Embedding q = embed(scorer.provider(), qa.question);
        std::vector<ScoredSubDoc> subdocs;
        for (const RerankedDoc& d : top) {
            auto windows = score_windows(d, scorer, q, config.window, config.stride);
            subdocs.insert(subdocs.end(), std::make_move_iterator(windows.begin()),
                           std::make_move_iterator(windows.end()));
        }
        auto examples = sample_detector_examples(qa, subdocs, llm, prompts, config, rng, &ds.llm_failures, &ds.warnings);
        ds.examples.insert(ds.examples.end(), std::make_move_iterator(examples.begin()),
                           std::make_move_iterator(examples.end()));
    }
    return ds;
}

void save_detector_dataset(const std::filesystem::path& path, std::span<const DetectorExample> examples) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const DetectorExample& e : examples) {
        out << json{{"question_id", e.question_id},
                    {"member_subdoc_ids", e.member_ids},
                    {"features", vec_json(e.features)},
                    {"label", e.label ? 1 : 0},
                    {"score_ans", e.score_ans},
                    {"score_pref", e.score_pref}}
                   .dump()
            << '\n';
    }
}

std::vector<DetectorExample> load_detector_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<DetectorExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            DetectorExample e;
            e.question_id = j.at("question_id").get<std::string>();
            e.member_ids = j.at("member_subdoc_ids").get<std::vector<std::string>>();
            e.features = vec_from_json(j.at("features"));
            e.label = j.at("label").get<int>() != 0;
            e.score_ans = j.value("score_ans", 0.0);
            e.score_pref = j.value("score_pref", 0.0);
            out.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw ParseError(ex.what(), line_no);
        }
    }
    return out;
}

LossAndGradient detector_loss(const Mlp<double>& net, const Eigen::MatrixXd& features, const Eigen::VectorXd& labels) {
    LossAndGradient out;
    const auto n = features.cols();
    if (n == 0) throw ContractError("detector loss of an empty batch");
    Mlp<double>::Tape tape;
    const Eigen::MatrixXd logits = net.forward(features, tape);
    Eigen::MatrixXd d(1, n);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        total += binary_cross_entropy(sigmoid(logits(0, i)), labels[i]);
        d(0, i) = binary_cross_entropy_logit_grad(logits(0, i), labels[i]) / static_cast<double>(n);
    }
    out.loss = total / static_cast<double>(n);
    out.gradient = net.backward(tape, d);
    return out;
}

DetectorTrainingResult train_detector(std::span<const DetectorExample> examples, std::size_t max_docs,
                                      const DetectorTrainingConfig& config) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (static_cast<std::size_t>(examples[i].features.size()) != 2 * max_docs) {
            throw IntegrityError("detector example has the wrong feature length");
        }
        (examples[i].label ? pos : neg).push_back(i);
    }
    if (pos.empty() || neg.empty()) {
        throw TrainingError("detector training data must contain both labels (got " + std::to_string(pos.size()) +
                            " positive, " + std::to_string(neg.size()) + " negative)");
    }
    if (config.batch_size == 0 || !(config.learning_rate > 0.0)) throw ConfigError("invalid detector training config");

    Rng split_rng(config.seed, "detector-holdout");
    split_rng.shuffle(pos);
    split_rng.shuffle(neg);
    std::vector<std::size_t> train, hold;
    for (auto* group : {&pos, &neg}) {
        const auto h = static_cast<std::size_t>(config.holdout_fraction * static_cast<double>(group->size()));
        hold.insert(hold.end(), group->begin(), group->begin() + static_cast<std::ptrdiff_t>(h));
        train.insert(train.end(), group->begin() + static_cast<std::ptrdiff_t>(h), group->end());
    }
    std::sort(train.begin(), train.end());
    std::sort(hold.begin(), hold.end());

    auto gather = [&](const std::vector<std::size_t>& idx, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
        x.resize(static_cast<Eigen::Index>(2 * max_docs), static_cast<Eigen::Index>(idx.size()));
        y.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            x.col(static_cast<Eigen::Index>(i)) = examples[idx[i]].features;
            y[static_cast<Eigen::Index>(i)] = examples[idx[i]].label ? 1.0 : 0.0;
        }
    };
    Eigen::MatrixXd xt, xh;
    Eigen::VectorXd yt, yh;
    gather(train, xt, yt);
    gather(hold, xh, yh);

    Mlp<double> net(DetectorModel::architecture(max_docs, config.hidden));
    Rng init_rng(config.seed, "detector-init");
    net.initialize(init_rng);
    Adam<double> opt(net.num_params(), config.learning_rate);
    Rng shuffle_rng(config.seed, "detector-shuffle");
    Eigen::VectorXd params = net.params();
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const std::vector<std::size_t> order = shuffle_rng.permutation(train.size());
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            Eigen::MatrixXd xb(xt.rows(), static_cast<Eigen::Index>(n));
            Eigen::VectorXd yb(static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i) {
                xb.col(static_cast<Eigen::Index>(i)) = xt.col(static_cast<Eigen::Index>(order[start + i]));
                yb[static_cast<Eigen::Index>(i)] = yt[static_cast<Eigen::Index>(order[start + i])];
            }
            const LossAndGradient lg = detector_loss(net, xb, yb);
            if (!lg.gradient.allFinite()) throw TrainingError("non-finite detector gradient");
            opt.step(params, lg.gradient);
            net.set_params(params);
        }
    }
    DetectorTrainingResult r;
    r.model = DetectorModel(std::move(net), max_docs, config.seed);
    r.train_accuracy = accuracy(r.model, xt, yt);
    r.holdout_accuracy = accuracy(r.model, xh, yh);
    r.holdout_size = hold.size();
    return r;
}

}  // namespace fitrag
