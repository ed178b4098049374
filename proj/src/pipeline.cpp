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

#include "fitrag/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fitrag/errors.hpp"
#include "fitrag/rng.hpp"

namespace fitrag {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

fs::path resolve(const json& j, const char* key, const fs::path& base) {
    if (!j.contains(key) || j[key].is_null()) return {};
    fs::path p = j[key].get<std::string>();
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

RetryPolicy read_retry(const json& j, RetryPolicy r) {
    read(j, "retries", r.retries);
    if (j.contains("backoff_ms")) r.backoff = std::chrono::milliseconds(j["backoff_ms"].get<long>());
    if (j.contains("timeout_ms")) r.timeout = std::chrono::milliseconds(j["timeout_ms"].get<long>());
    return r;
}

bool is_transport(const std::exception& e) {
    return dynamic_cast<const TransportError*>(&e) != nullptr || dynamic_cast<const ProviderError*>(&e) != nullptr;
}

// Runs fn, attributing any failure to the stage.
template <typename F>
auto staged(const char* stage, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what(), is_transport(e));
    }
}

ScoredSubDoc whole_document(const RerankedDoc& d) {
    const Document& doc = *d.retrieved.doc;
    SubDocument s{doc.doc_id, 0, doc.sentence_count(), doc.text, count_tokens(doc.text)};
    return {std::move(s), d.score, d.combined, d.position};
}

json combination_json(const SubDocCombination& c) {
    json members = json::array();
    for (const ScoredSubDoc& m : c.members) {
        members.push_back({{"subdoc_id", m.subdoc.id()},
                           {"parent_doc_id", m.subdoc.parent_doc_id},
                           {"parent_position", m.parent_position},
                           {"start_sentence", m.subdoc.start_sentence},
                           {"sentence_count", m.subdoc.sentence_count},
                           {"token_count", m.subdoc.token_count},
                           {"p_ans", m.score.p_ans},
                           {"p_pref", m.score.p_pref},
                           {"text", m.subdoc.text}});
    }
    return {{"members", members}, {"token_count", c.token_count}};
}

}  // namespace

// ---- configuration --------------------------------------------------------

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base) {
    PipelineConfig c;
    try {
        c.corpus = resolve(j, "corpus", base);
        c.qa = resolve(j, "qa", base);
        c.index = resolve(j, "index", base);
        c.scorer = resolve(j, "scorer", base);
        c.scorer_fixed_w = resolve(j, "scorer_fixed_w", base);
        c.detector = resolve(j, "detector", base);
        c.nn_reference = resolve(j, "nn_reference", base);
        c.training_set = resolve(j, "training_set", base);
        c.detector_data = resolve(j, "detector_data", base);

        if (j.contains("embedding")) {
            const json& e = j["embedding"];
            read(e, "provider", c.embedding.provider);
            read(e, "dim", c.embedding.dim);
            read(e, "seed", c.embedding.seed);
            read(e, "endpoint", c.embedding.remote.endpoint);
            read(e, "token_env", c.embedding.remote.token_env);
            read(e, "batch_size", c.embedding.remote.batch_size);
            c.embedding.remote.dim = c.embedding.dim;
            c.embedding.remote.retry = read_retry(e, c.embedding.remote.retry);
        }
        if (j.contains("llm")) {
            const json& l = j["llm"];
            read(l, "provider", c.llm.provider);
            c.llm.script = resolve(l, "script", base);
            read(l, "strict", c.llm.strict);
            read(l, "default_answer", c.llm.default_answer);
            read(l, "endpoint", c.llm.http.endpoint);
            read(l, "token_env", c.llm.http.token_env);
            read(l, "max_tokens", c.llm.http.max_tokens);
            read(l, "concurrency", c.llm.http.concurrency);
            c.llm.http.retry = read_retry(l, c.llm.http.retry);
        }
        if (j.contains("recognizer")) {
            const json& r = j["recognizer"];
            read(r, "delta_ltod", c.recognizer.delta_ltod);
            read(r, "s_l", c.recognizer.s_l);
            read(r, "s_n", c.recognizer.s_n);
            read(r, "k", c.recognizer.k_neighbors);
            if (r.contains("threshold_on")) {
                const std::string on = r["threshold_on"].get<std::string>();
                if (on == "logit") c.recognizer.threshold_on = LtodThreshold::Logit;
                else if (on == "probability") c.recognizer.threshold_on = LtodThreshold::Probability;
                else throw ConfigError("recognizer.threshold_on must be 'logit' or 'probability'");
            }
        }
        if (j.contains("prompts")) c.prompts = PromptLibrary::from_json(j["prompts"]);
        if (j.contains("template")) c.template_kind = parse_template_kind(j["template"].get<std::string>());
        if (j.contains("retrieval")) {
            const json& r = j["retrieval"];
            read(r, "top_retrieve", c.top_retrieve);
            read(r, "top_rerank", c.top_rerank);
            read(r, "window", c.window);
            read(r, "stride", c.stride);
        }
        read(j, "annotate_k", c.annotate_k);
        read(j, "concurrency", c.concurrency);

        if (j.contains("scorer_training")) {
            const json& s = j["scorer_training"];
            ScorerTrainingConfig& t = c.scorer_training;
            read(s, "learning_rate", t.learning_rate);
            read(s, "hyper_step", t.hyper_step);
            read(s, "epochs", t.epochs);
            read(s, "batch_size", t.batch_size);
            read(s, "hidden", t.hidden);
            if (s.contains("feature_mode")) t.feature_mode = parse_feature_mode(s["feature_mode"].get<std::string>());
            read(s, "validation_fraction", t.validation_fraction);
            read(s, "initial_w", t.initial_w);
            read(s, "learn_w", t.learn_w);
            read(s, "full_validation_limit", t.full_validation_limit);
        }
        if (j.contains("detector_sampling")) {
            const json& d = j["detector_sampling"];
            read(d, "max_docs", c.detector_data_build.max_docs);
            read(d, "samples", c.detector_data_build.samples);
            read(d, "max_overlap", c.detector_data_build.max_overlap);
            if (d.contains("aggregate")) {
                const std::string a = d["aggregate"].get<std::string>();
                if (a == "mean") c.detector_data_build.aggregate = ScoreAggregate::Mean;
                else if (a == "sum") c.detector_data_build.aggregate = ScoreAggregate::Sum;
                else throw ConfigError("detector_sampling.aggregate must be 'mean' or 'sum'");
            }
        }
        if (j.contains("detector_training")) {
            const json& d = j["detector_training"];
            DetectorTrainingConfig& t = c.detector_training;
            read(d, "learning_rate", t.learning_rate);
            read(d, "epochs", t.epochs);
            read(d, "batch_size", t.batch_size);
            read(d, "hidden", t.hidden);
            read(d, "holdout_fraction", t.holdout_fraction);
        }
        c.detector_data_build.top_retrieve = c.top_retrieve;
        c.detector_data_build.window = c.window;
        c.detector_data_build.stride = c.stride;
        c.detector_data_build.template_kind = c.template_kind;
        std::uint64_t seed = 0;
        read(j, "seed", seed);
        c.set_seed(seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j, path.parent_path());
}

void PipelineConfig::set_seed(std::uint64_t root) {
    seed = root;
    scorer_training.seed = derive_seed(root, "scorer");
    detector_data_build.seed = derive_seed(root, "detector-data");
    detector_training.seed = derive_seed(root, "detector");
}

void PipelineConfig::validate() const {
    if (top_retrieve == 0 || top_rerank == 0) throw ConfigError("top_retrieve and top_rerank must be positive");
    if (top_rerank > top_retrieve) throw ConfigError("top_rerank must not exceed top_retrieve");
    if (window == 0 || stride == 0) throw ConfigError("window and stride must be positive");
    if (template_kind == TemplateKind::NoRetrieve) {
        throw ConfigError("the retrieval template cannot be 'no_retrieve'");
    }
    if (embedding.provider != "hash" && embedding.provider != "remote") {
        throw ConfigError("embedding.provider must be 'hash' or 'remote'");
    }
    if (llm.provider != "mock" && llm.provider != "http") throw ConfigError("llm.provider must be 'mock' or 'http'");
    recognizer.validate();
}

std::shared_ptr<const EmbeddingProvider> make_provider(const EmbeddingSettings& s) {
    if (s.provider == "hash") return std::make_shared<HashEmbedder>(s.dim, s.seed);
    if (s.provider == "remote") return std::make_shared<RemoteEmbedder>(s.remote);
    throw ConfigError("unknown embedding provider '" + s.provider + "'");
}

std::shared_ptr<const LlmClient> make_llm(const LlmSettings& s) {
    if (s.provider == "mock") {
        if (s.script.empty()) throw ConfigError("llm.script is required for the mock client");
        return std::make_shared<MockLlmClient>(MockLlmClient::load(s.script, s.strict, s.default_answer));
    }
    if (s.provider == "http") return std::make_shared<HttpLlmClient>(s.http);
    throw ConfigError("unknown llm provider '" + s.provider + "'");
}

VectorIndex load_or_build_index(const PipelineConfig& config, const Corpus& corpus,
                                const EmbeddingProvider& provider) {
    if (config.index.empty()) return VectorIndex::build(corpus, provider);
    if (!fs::exists(config.index)) throw ConfigError("index file " + config.index.string() + " does not exist");
    VectorIndex index = VectorIndex::load(config.index, provider);
    if (index.size() != corpus.size()) throw IntegrityError("index and corpus disagree on the number of documents");
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (index.doc_ids()[i] != corpus[i].doc_id) throw IntegrityError("index and corpus disagree on document ids");
    }
    return index;
}

std::vector<QARecord> load_questions(const fs::path& path) {
    if (path.empty()) throw ConfigError("no QA file given");
    return load_qa(path);
}

// ---- ablations and traces -------------------------------------------------

std::string Ablations::name() const {
    std::string out;
    auto add = [&](std::string_view part) {
        if (!out.empty()) out += ',';
        out += part;
    };
    if (no_recognizer) add("no_recognizer");
    if (no_reducer) add("no_reducer");
    if (fixed_w) add("fixed_w");
    if (template_kind) add("template=" + std::string(to_string(*template_kind)));
    return out.empty() ? "default" : out;
}

Ablations Ablations::parse(std::string_view flag) {
    Ablations a;
    if (flag == "default") return a;
    if (flag == "no_recognizer") a.no_recognizer = true;
    else if (flag == "no_reducer") a.no_reducer = true;
    else if (flag == "fixed_w") a.fixed_w = true;
    else if (flag.starts_with("template=")) {
        const TemplateKind k = parse_template_kind(flag.substr(9));
        if (k == TemplateKind::NoRetrieve) throw ConfigError("template ablation cannot be 'no_retrieve'");
        a.template_kind = k;
    } else {
        throw ConfigError("unknown ablation '" + std::string(flag) + "'");
    }
    return a;
}

json AnswerTrace::to_json(bool with_timings) const {
    json j = {{"question_id", question_id},
              {"question", question},
              {"verdict", {{"decision", std::string(fitrag::to_string(verdict.decision))},
                           {"s_ltod", verdict.s_ltod},
                           {"s_nn", verdict.s_nn}}},
              {"combination", combination ? combination_json(*combination) : json(nullptr)},
              {"prompt", prompt},
              {"prompt_tokens", prompt_tokens},
              {"response", response},
              {"correct", correct ? json(*correct) : json(nullptr)}};
    if (with_timings) {
        j["timings_ms"] = {{"retrieve", timings.retrieve_ms},
                           {"score", timings.score_ms},
                           {"recognize", timings.recognize_ms},
                           {"reduce", timings.reduce_ms},
                           {"llm", timings.llm_ms}};
    }
    return j;
}

bool AnswerTrace::same_outcome(const AnswerTrace& other) const { return to_json(false) == other.to_json(false); }

// ---- pipeline -------------------------------------------------------------

Pipeline::Pipeline(PipelineParts parts, PipelineConfig config) : parts_(std::move(parts)), config_(std::move(config)) {
    config_.validate();
    if (!parts_.provider || !parts_.scorer || !parts_.detector || !parts_.llm) {
        throw ConfigError("pipeline needs a provider, scorer, detector and LLM client");
    }
    if (parts_.index.size() != parts_.corpus.size()) throw IntegrityError("index does not cover the corpus");
    if (parts_.index.fingerprint() != index_fingerprint(*parts_.provider)) {
        throw IntegrityError("index was built with a different embedding provider");
    }
    if (!parts_.reference.fingerprint().empty() && parts_.reference.fingerprint() != parts_.provider->fingerprint()) {
        throw IntegrityError("reference questions were embedded with a different provider");
    }
    if (parts_.reference.size() < config_.recognizer.k_neighbors) {
        throw ConfigError("reference set has " + std::to_string(parts_.reference.size()) +
                          " questions, fewer than k = " + std::to_string(config_.recognizer.k_neighbors));
    }
}

Pipeline Pipeline::load(const PipelineConfig& config) {
    const std::pair<const char*, const fs::path*> required[] = {
        {"corpus", &config.corpus}, {"scorer", &config.scorer},
        {"detector", &config.detector}, {"nn_reference", &config.nn_reference}};
    for (const auto& [name, path] : required) {
        if (path->empty()) throw ConfigError(std::string("config is missing '") + name + "'");
        if (!fs::exists(*path)) throw ConfigError(std::string(name) + " file " + path->string() + " does not exist");
    }
    if (!config.scorer_fixed_w.empty() && !fs::exists(config.scorer_fixed_w)) {
        throw ConfigError("scorer_fixed_w file " + config.scorer_fixed_w.string() + " does not exist");
    }
    PipelineParts parts;
    parts.provider = make_provider(config.embedding);
    parts.corpus = load_corpus(config.corpus);
    parts.index = load_or_build_index(config, parts.corpus, *parts.provider);
    parts.scorer = std::make_shared<ScorerModel>(ScorerModel::load(config.scorer, parts.provider));
    if (!config.scorer_fixed_w.empty()) {
        parts.scorer_fixed_w = std::make_shared<ScorerModel>(ScorerModel::load(config.scorer_fixed_w, parts.provider));
    }
    parts.detector = std::make_shared<DetectorModel>(DetectorModel::load(config.detector));
    parts.reference = NnReferenceSet::load(config.nn_reference);
    parts.llm = make_llm(config.llm);
    return Pipeline(std::move(parts), config);
}

const ScorerModel& Pipeline::scorer_for(const Ablations& ablations) const {
    if (!ablations.fixed_w) return *parts_.scorer;
    if (!parts_.scorer_fixed_w) throw ConfigError("the fixed_w ablation needs a scorer trained with fixed w");
    return *parts_.scorer_fixed_w;
}

std::vector<ScoredDoc> Pipeline::retrieve_scored(std::string_view question, const Ablations& ablations) const {
    const auto retrieved = staged("retrieve", [&] {
        return retrieve(parts_.corpus, parts_.index, *parts_.provider, question, config_.top_retrieve);
    });
    return staged("score", [&] { return score_retrieved(scorer_for(ablations), question, retrieved); });
}

AnswerTrace Pipeline::answer(const QARecord& qa, const Ablations& ablations, std::vector<ScoredDoc>* scored_out) const {
    AnswerTrace t;
    t.question_id = qa.question_id;
    t.question = qa.question;
    const ScorerModel& scorer = staged("score", [&]() -> const ScorerModel& { return scorer_for(ablations); });

    auto start = Clock::now();
    const auto retrieved = staged("retrieve", [&] {
        return retrieve(parts_.corpus, parts_.index, *parts_.provider, qa.question, config_.top_retrieve);
    });
    t.timings.retrieve_ms = elapsed_ms(start);

    start = Clock::now();
    const auto scored = staged("score", [&] { return score_retrieved(scorer, qa.question, retrieved); });
    t.timings.score_ms = elapsed_ms(start);

    start = Clock::now();
    if (!ablations.no_recognizer) {
        t.verdict = staged("recognize", [&] {
            std::vector<BiLabelScore> scores;
            scores.reserve(scored.size());
            for (const ScoredDoc& s : scored) scores.push_back(s.score);
            const double lt = s_ltod(scores, config_.recognizer);
            const double nn = s_nn(embed(*parts_.provider, qa.question), parts_.reference,
                                   config_.recognizer.k_neighbors);
            return decide(lt, nn, config_.recognizer);
        });
    }
    t.timings.recognize_ms = elapsed_ms(start);

    const TemplateKind kind = ablations.template_kind.value_or(config_.template_kind);
    LlmRequest request;
    start = Clock::now();
    if (t.verdict.decision == Verdict::NoRetrieve) {
        request = staged("prompt", [&] { return build_noretrieve_prompt(qa.question, config_.prompts); });
    } else {
        t.combination = staged("reduce", [&] {
            if (ablations.no_reducer) {
                const auto top = rerank_topk(scored, config_.top_rerank);
                if (top.empty()) throw ContractError("nothing retrieved");
                std::vector<ScoredSubDoc> members;
                for (const RerankedDoc& d : top) members.push_back(whole_document(d));
                const std::size_t n = members.size();
                return make_combination(std::move(members), n);
            }
            return reduce(qa.question, scored, scorer, *parts_.detector, config_.top_rerank, config_.window,
                          config_.stride);
        });
        request = staged("prompt", [&] { return build_retrieve_prompt(qa.question, *t.combination, config_.prompts, kind); });
    }
    t.timings.reduce_ms = elapsed_ms(start);
    t.prompt = request.prompt;
    t.prompt_tokens = request.token_count;

    start = Clock::now();
    t.response = staged("llm", [&] { return complete(*parts_.llm, request).text; });
    t.timings.llm_ms = elapsed_ms(start);
    if (!qa.gold_answers.empty()) t.correct = is_correct(t.response, qa.gold_answers);
    if (scored_out) *scored_out = scored;
    return t;
}

AnswerTrace Pipeline::answer(std::string_view question, const Ablations& ablations) const {
    return answer(QARecord{"", std::string(question), {}}, ablations);
}

// ---- evaluation -----------------------------------------------------------

namespace {

const RerankCriterion kCriteria[] = {RerankCriterion::HasAnswer, RerankCriterion::LlmPrefer,
                                     RerankCriterion::BiLabelSum};

struct Slot {
    bool done = false;
    bool failed = false;
    QuestionFailure failure;
    QuestionOutcome outcome;
    std::map<std::string, std::map<std::size_t, double>> recall;
};

void recall_for(const QARecord& qa, std::span<const ScoredDoc> scored, Slot& slot) {
    if (qa.gold_answers.empty()) return;
    auto record = [&](const std::string& name, const std::vector<const Document*>& ranked) {
        for (std::size_t k : kRecallDepths) {
            slot.recall[name][k] = ranked.empty() ? 0.0 : recall_at_k(ranked, qa.gold_answers, std::min(k, ranked.size()));
        }
    };
    std::vector<const Document*> by_similarity;
    for (const ScoredDoc& s : scored) by_similarity.push_back(s.retrieved.doc);
    record("similarity", by_similarity);
    for (RerankCriterion c : kCriteria) {
        std::vector<const Document*> ranked;
        for (const RerankedDoc& d : rerank_topk(scored, scored.size(), c)) ranked.push_back(d.retrieved.doc);
        record(std::string(to_string(c)), ranked);
    }
}

}  // namespace

EvalSummary evaluate_once(std::span<const QARecord> questions, const Pipeline& pipeline, const Ablations& ablations) {
    if (questions.empty()) throw ContractError("evaluation needs at least one question");
    std::vector<Slot> slots(questions.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= questions.size() || abort.load()) return;
            Slot& slot = slots[i];
            const QARecord& qa = questions[i];
            try {
                std::vector<ScoredDoc> scored;
                const AnswerTrace t = pipeline.answer(qa, ablations, &scored);
                slot.outcome = {qa.question_id, t.verdict.decision, t.prompt_tokens, t.correct.value_or(false)};
                recall_for(qa, scored, slot);
            } catch (const StageError& e) {
                if (!e.transport()) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    abort = true;
                    return;
                }
                slot.failed = true;
                slot.failure = {qa.question_id, e.stage(), e.what(), true};
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                abort = true;
                return;
            }
            slot.done = true;
        }
    };

    std::size_t workers = pipeline.config().concurrency ? pipeline.config().concurrency
                                                        : pipeline.llm().max_concurrency();
    workers = std::clamp<std::size_t>(workers, 1, questions.size());
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    EvalSummary r;
    r.ablation = ablations.name();
    r.questions = questions.size();
    double correct = 0.0, tokens = 0.0, skipped = 0.0;
    std::size_t with_gold = 0;
    for (const Slot& s : slots) {
        if (s.failed) {
            r.failures.push_back(s.failure);
            continue;
        }
        ++r.evaluated;
        r.outcomes.push_back(s.outcome);
        correct += s.outcome.correct ? 1.0 : 0.0;
        tokens += static_cast<double>(s.outcome.prompt_tokens);
        skipped += s.outcome.verdict == Verdict::NoRetrieve ? 1.0 : 0.0;
        if (s.recall.empty()) continue;
        ++with_gold;
        for (const auto& [name, by_k] : s.recall)
            for (const auto& [k, v] : by_k) r.recall[name][k] += v;
    }
    if (r.evaluated > 0) {
        const auto n = static_cast<double>(r.evaluated);
        r.accuracy = correct / n;
        r.mean_prompt_tokens = tokens / n;
        r.retrieval_skip_rate = skipped / n;
    }
    for (auto& [name, by_k] : r.recall)
        for (auto& [k, v] : by_k) v /= static_cast<double>(with_gold);
    return r;
}

EvalReport evaluate(std::span<const QARecord> questions, const Pipeline& pipeline, const Ablations& ablations,
                    std::span<const Ablations> compare) {
    EvalReport report;
    static_cast<EvalSummary&>(report) = evaluate_once(questions, pipeline, ablations);
    for (const Ablations& a : compare) report.sub_reports.push_back(evaluate_once(questions, pipeline, a));
    return report;
}

json EvalSummary::to_json() const {
    json recall_j = json::object();
    for (const auto& [name, by_k] : recall) {
        json row = json::object();
        for (const auto& [k, v] : by_k) row["@" + std::to_string(k)] = v;
        recall_j[name] = row;
    }
    json outcomes_j = json::array();
    for (const QuestionOutcome& o : outcomes) {
        outcomes_j.push_back({{"question_id", o.question_id},
                              {"verdict", std::string(fitrag::to_string(o.verdict))},
                              {"prompt_tokens", o.prompt_tokens},
                              {"correct", o.correct}});
    }
    json failures_j = json::array();
    for (const QuestionFailure& f : failures) {
        failures_j.push_back(
            {{"question_id", f.question_id}, {"stage", f.stage}, {"message", f.message}, {"excluded", f.excluded}});
    }
    return {{"ablation", ablation},
            {"questions", questions},
            {"evaluated", evaluated},
            {"accuracy", accuracy},
            {"mean_prompt_tokens", mean_prompt_tokens},
            {"retrieval_skip_rate", retrieval_skip_rate},
            {"recall", recall_j},
            {"outcomes", outcomes_j},
            {"failures", failures_j}};
}

json EvalReport::to_json() const {
    json j = EvalSummary::to_json();
    json subs = json::array();
    for (const EvalSummary& s : sub_reports) subs.push_back(s.to_json());
    j["sub_reports"] = subs;
    return j;
}

std::string EvalReport::dump() const { return to_json().dump(2) + "\n"; }

std::string EvalReport::table() const {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %9s %9s %9s %8s %8s\n", "run", "accuracy", "tokens", "skip", "R@10sim",
                  "R@10bi");
    out << line;
    auto row = [&](const EvalSummary& s) {
        auto r10 = [&](const char* name) {
            const auto it = s.recall.find(name);
            if (it == s.recall.end()) return 0.0;
            const auto k = it->second.find(10);
            return k == it->second.end() ? 0.0 : k->second;
        };
        std::snprintf(line, sizeof line, "%-28s %9.4f %9.1f %9.4f %8.4f %8.4f\n", s.ablation.c_str(), s.accuracy,
                      s.mean_prompt_tokens, s.retrieval_skip_rate, r10("similarity"), r10("bilabel_sum"));
        out << line;
    };
    row(*this);
    for (const EvalSummary& s : sub_reports) row(s);
    if (!failures.empty()) out << failures.size() << " question(s) failed in transport and were excluded\n";
    return out.str();
}

}  // namespace fitrag
