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

#include "fitrag/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fitrag/errors.hpp"
#include "fitrag/pipeline.hpp"

namespace fitrag {

namespace {

namespace fs = std::filesystem;

// Bad flag values detected after parsing.
class UsageError : public Error {
public:
    using Error::Error;
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string template_name;
    std::string out;
    std::string qa;
    std::vector<std::string> ablations;
    std::vector<std::string> compare;
    std::vector<std::string> gold;
    std::string question;
    bool fixed_w = false;
    double w = 0.5;
};

fs::path pick(const std::string& flag, const fs::path& configured, const char* what) {
    if (!flag.empty()) return flag;
    if (configured.empty()) throw UsageError(std::string("no ") + what + " path: pass --out or set it in the config");
    return configured;
}

std::vector<QARecord> questions_from(const Options& o, const PipelineConfig& c) {
    const fs::path path = o.qa.empty() ? c.qa : fs::path(o.qa);
    if (path.empty()) throw UsageError("no QA file: pass --qa or set 'qa' in the config");
    if (!fs::exists(path)) throw UsageError("QA file " + path.string() + " does not exist");
    std::vector<QARecord> qa = load_qa(path);
    if (qa.empty()) throw UsageError("QA file " + path.string() + " has no questions");
    return qa;
}

Ablations combined(const std::vector<std::string>& flags) {
    Ablations a;
    for (const std::string& f : flags) {
        Ablations one;
        try {
            one = Ablations::parse(f);
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
        a.no_recognizer |= one.no_recognizer;
        a.no_reducer |= one.no_reducer;
        a.fixed_w |= one.fixed_w;
        if (one.template_kind) a.template_kind = one.template_kind;
    }
    return a;
}

void emit(const Options& o, std::ostream& out, const std::string& text) {
    if (o.out.empty()) {
        out << text;
        return;
    }
    std::ofstream f(o.out);
    if (!f) throw Error("cannot write " + o.out);
    f << text;
}

PipelineConfig load_config(const Options& o) {
    PipelineConfig c = PipelineConfig::load(o.config);
    if (o.seed) c.set_seed(*o.seed);
    if (!o.template_name.empty()) {
        try {
            c.template_kind = parse_template_kind(o.template_name);
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
        if (c.template_kind == TemplateKind::NoRetrieve) throw UsageError("--template cannot be 'no_retrieve'");
        c.detector_data_build.template_kind = c.template_kind;
    }
    return c;
}

struct Loaded {
    std::shared_ptr<const EmbeddingProvider> provider;
    Corpus corpus;
    VectorIndex index;
};

Loaded load_retrieval(const PipelineConfig& c) {
    if (c.corpus.empty()) throw ConfigError("config is missing 'corpus'");
    Loaded l;
    l.provider = make_provider(c.embedding);
    l.corpus = load_corpus(c.corpus);
    l.index = load_or_build_index(c, l.corpus, *l.provider);
    return l;
}

int cmd_index(const Options& o, std::ostream& err) {
    const PipelineConfig c = load_config(o);
    const fs::path target = pick(o.out, c.index, "index");
    const auto provider = make_provider(c.embedding);
    const Corpus corpus = load_corpus(c.corpus);
    VectorIndex::build(corpus, *provider).save(target);
    err << "indexed " << corpus.size() << " documents into " << target.string() << "\n";
    return kExitOk;
}

int cmd_annotate(const Options& o, std::ostream& err) {
    const PipelineConfig c = load_config(o);
    const fs::path target = pick(o.out, c.training_set, "training set");
    const auto qa = questions_from(o, c);
    const Loaded l = load_retrieval(c);
    const auto llm = make_llm(c.llm);
    const TrainingSet ts = build_training_set(qa, l.corpus, l.index, *l.provider, *llm, c.annotate_k, c.prompts);
    for (const std::string& w : ts.warnings) err << "warning: " << w << "\n";
    save_training_set(target, ts.pairs);
    err << ts.pairs.size() << " pairs (" << ts.matched << " matched, " << ts.mismatched << " mismatched, "
        << ts.failures << " failed)\n";
    return kExitOk;
}

int cmd_train_scorer(const Options& o, std::ostream& err) {
    PipelineConfig c = load_config(o);
    const fs::path target = pick(o.out, o.fixed_w ? c.scorer_fixed_w : c.scorer, "scorer");
    if (c.training_set.empty()) throw ConfigError("config is missing 'training_set'");
    const std::vector<LabeledPair> pairs = load_training_set(c.training_set);
    if (o.fixed_w) {
        if (o.w < 0.0 || o.w > 1.0) throw UsageError("--w must lie in [0, 1]");
        c.scorer_training.learn_w = false;
        c.scorer_training.initial_w = o.w;
    }
    ScorerTrainingHistory history;
    const ScorerModel model = train_scorer(pairs, make_provider(c.embedding), c.scorer_training, &history);
    model.save(target);
    err << "trained on " << pairs.size() << " pairs, w = " << model.w_final() << "\n";
    return kExitOk;
}

int cmd_build_detector_data(const Options& o, std::ostream& err) {
    const PipelineConfig c = load_config(o);
    const fs::path target = pick(o.out, c.detector_data, "detector data");
    const auto qa = questions_from(o, c);
    const Loaded l = load_retrieval(c);
    if (c.scorer.empty()) throw ConfigError("config is missing 'scorer'");
    const ScorerModel scorer = ScorerModel::load(c.scorer, l.provider);
    const auto llm = make_llm(c.llm);
    const DetectorDataset ds =
        build_detector_dataset(qa, l.corpus, l.index, scorer, *llm, c.prompts, c.detector_data_build);
    for (const std::string& w : ds.warnings) err << "warning: " << w << "\n";
    save_detector_dataset(target, ds.examples);
    err << ds.examples.size() << " combinations from " << ds.questions_used << " questions (" << ds.questions_skipped
        << " skipped)\n";
    return kExitOk;
}

int cmd_train_detector(const Options& o, std::ostream& err) {
    const PipelineConfig c = load_config(o);
    const fs::path target = pick(o.out, c.detector, "detector");
    if (c.detector_data.empty()) throw ConfigError("config is missing 'detector_data'");
    const auto examples = load_detector_dataset(c.detector_data);
    const DetectorTrainingResult r = train_detector(examples, c.detector_data_build.max_docs, c.detector_training);
    r.model.save(target);
    err << "train accuracy " << r.train_accuracy << ", holdout accuracy " << r.holdout_accuracy << " on "
        << r.holdout_size << "\n";
    return kExitOk;
}

int cmd_build_nn_ref(const Options& o, std::ostream& err) {
    const PipelineConfig c = load_config(o);
    const fs::path target = pick(o.out, c.nn_reference, "reference");
    const auto qa = questions_from(o, c);
    const auto provider = make_provider(c.embedding);
    const auto llm = make_llm(c.llm);
    const NnReferenceBuild b = build_nn_reference(qa, *llm, *provider, c.prompts);
    for (const std::string& w : b.warnings) err << "warning: " << w << "\n";
    b.reference.save(target);
    err << b.reference.size() << " reference questions, " << b.reference.positives()
        << " answered without retrieval\n";
    return kExitOk;
}

int cmd_query(const Options& o, std::ostream& out) {
    const PipelineConfig c = load_config(o);
    const Ablations a = combined(o.ablations);
    const Pipeline p = Pipeline::load(c);
    const AnswerTrace t = p.answer(QARecord{"", o.question, o.gold}, a);
    emit(o, out, t.to_json().dump(2) + "\n");
    return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
    const PipelineConfig c = load_config(o);
    const Ablations a = combined(o.ablations);
    std::vector<Ablations> compare;
    for (const std::string& f : o.compare) compare.push_back(combined({f}));
    const auto qa = questions_from(o, c);
    const Pipeline p = Pipeline::load(c);
    const EvalReport report = evaluate(qa, p, a, compare);
    emit(o, out, report.dump());
    err << report.table();
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"fitrag: retrieval-augmented question answering for black-box LLMs"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "root seed for every random stream");
    app.add_option("--template", o.template_name, "prompt template: comprehensive, simple or cot");
    app.add_option("--out", o.out, "output path (default from config, or stdout)");

    auto* index = app.add_subcommand("index", "build and save the vector index");
    auto* annotate = app.add_subcommand("annotate", "label (question, document) pairs for scorer training");
    annotate->add_option("--qa", o.qa, "questions (JSONL)");
    auto* train_scorer_cmd = app.add_subcommand("train-scorer", "train the bi-label document scorer");
    train_scorer_cmd->add_flag("--fixed-w", o.fixed_w, "keep w fixed instead of learning it");
    train_scorer_cmd->add_option("--w", o.w, "the fixed w (with --fixed-w)");
    auto* detector_data = app.add_subcommand("build-detector-data", "sample labeled sub-document combinations");
    detector_data->add_option("--qa", o.qa, "questions (JSONL)");
    auto* train_detector_cmd = app.add_subcommand("train-detector", "train the eligible augmentation detector");
    auto* nn_ref = app.add_subcommand("build-nn-ref", "label reference questions by answerability without retrieval");
    nn_ref->add_option("--qa", o.qa, "questions (JSONL)");
    auto* query = app.add_subcommand("query", "answer one question and print its trace");
    query->add_option("question", o.question, "the question")->required();
    query->add_option("--gold", o.gold, "gold answers, for the correctness flag");
    query->add_option("--ablation", o.ablations, "no_recognizer, no_reducer, fixed_w or template=<kind>");
    auto* eval = app.add_subcommand("eval", "evaluate over a QA file");
    eval->add_option("--qa", o.qa, "questions (JSONL)");
    eval->add_option("--ablation", o.ablations, "ablation applied to the main run");
    eval->add_option("--compare", o.compare, "extra ablation run reported as a sub-report");
    app.fallthrough();

    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*index) return cmd_index(o, err);
        if (*annotate) return cmd_annotate(o, err);
        if (*train_scorer_cmd) return cmd_train_scorer(o, err);
        if (*detector_data) return cmd_build_detector_data(o, err);
        if (*train_detector_cmd) return cmd_train_detector(o, err);
        if (*nn_ref) return cmd_build_nn_ref(o, err);
        if (*query) return cmd_query(o, out);
        if (*eval) return cmd_eval(o, out, err);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const StageError& e) {
        err << "error in stage " << e.stage() << ": " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace fitrag
