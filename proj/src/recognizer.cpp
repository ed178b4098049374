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

#include "fitrag/recognizer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fitrag/errors.hpp"

namespace fitrag {

namespace {

using nlohmann::json;

constexpr const char* kCorrect = "correct_w/o_retrieve";
constexpr const char* kIncorrect = "incorrect_w/o_retrieve";

}  // namespace

std::string_view to_string(Verdict v) { return v == Verdict::Retrieve ? "Retrieve" : "No_Retrieve"; }

void RecognizerConfig::validate() const {
    if (s_l < 0.0 || s_l > 1.0) throw ConfigError("s_l must lie in [0, 1]");
    if (s_n < 0.0 || s_n > 1.0) throw ConfigError("s_n must lie in [0, 1]");
    if (k_neighbors == 0) throw ConfigError("k_neighbors must be >= 1");
}

NnReferenceSet::NnReferenceSet(std::vector<NnEntry> entries, std::string fingerprint)
    : entries_(std::move(entries)), fingerprint_(std::move(fingerprint)) {
    if (entries_.empty()) return;
    const Eigen::Index d = entries_.front().embedding.size();
    points_.resize(d, static_cast<Eigen::Index>(entries_.size()));
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].embedding.size() != d) throw IntegrityError("reference embeddings differ in dimension");
        points_.col(static_cast<Eigen::Index>(i)) = entries_[i].embedding;
    }
}

std::size_t NnReferenceSet::positives() const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [](const NnEntry& e) { return e.correct_without_retrieval; }));
}

std::vector<std::size_t> NnReferenceSet::nearest(const Embedding& query, std::size_t k) const {
    if (query.size() != points_.rows()) throw IntegrityError("query dimension does not match the reference set");
    const Eigen::VectorXd dist = (points_.colwise() - query).colwise().squaredNorm().transpose();
    std::vector<std::size_t> idx(entries_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t n = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double da = dist[static_cast<Eigen::Index>(a)];
                          const double db = dist[static_cast<Eigen::Index>(b)];
                          if (da != db) return da < db;
                          return entries_[a].question_id < entries_[b].question_id;
                      });
    idx.resize(n);
    return idx;
}

void NnReferenceSet::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const NnEntry& e : entries_) {
        json emb = json::array();
        for (Eigen::Index i = 0; i < e.embedding.size(); ++i) emb.push_back(e.embedding[i]);
        out << json{{"question_id", e.question_id},
                    {"label", e.correct_without_retrieval ? kCorrect : kIncorrect},
                    {"embedding", emb},
                    {"fingerprint", fingerprint_}}
                   .dump()
            << '\n';
    }
}

NnReferenceSet NnReferenceSet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<NnEntry> entries;
    std::string fingerprint;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            NnEntry e;
            e.question_id = j.at("question_id").get<std::string>();
            const std::string label = j.at("label").get<std::string>();
            if (label != kCorrect && label != kIncorrect) throw ParseError("unknown label '" + label + "'", line_no);
            e.correct_without_retrieval = label == kCorrect;
            const json& emb = j.at("embedding");
            e.embedding.resize(static_cast<Eigen::Index>(emb.size()));
            for (std::size_t i = 0; i < emb.size(); ++i) e.embedding[static_cast<Eigen::Index>(i)] = emb[i].get<double>();
            if (j.contains("fingerprint")) fingerprint = j["fingerprint"].get<std::string>();
            entries.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw ParseError(ex.what(), line_no);
        }
    }
    return NnReferenceSet(std::move(entries), std::move(fingerprint));
}

NnReferenceBuild build_nn_reference(std::span<const QARecord> questions, const LlmClient& llm,
                                    const EmbeddingProvider& provider, const PromptLibrary& prompts) {
    NnReferenceBuild out;
    std::vector<NnEntry> entries;
    for (const QARecord& qa : questions) {
        bool correct = false;
        try {
            correct = is_correct(complete(llm, build_noretrieve_prompt(qa.question, prompts)).text, qa.gold_answers);
        } catch (const Error& e) {
            ++out.skipped;
            out.warnings.push_back("question '" + qa.question_id + "' skipped: " + e.what());
            continue;
        }
        entries.push_back({qa.question_id, embed(provider, qa.question), correct});
    }
    out.reference = NnReferenceSet(std::move(entries), provider.fingerprint());
    return out;
}

double s_ltod(std::span<const BiLabelScore> scores, const RecognizerConfig& config) {
    if (scores.empty()) throw UndefinedScoreError("S_ltod is undefined for an empty retrieved set");
    std::size_t above = 0;
    for (const BiLabelScore& s : scores) {
        const double v = config.threshold_on == LtodThreshold::Logit ? s.logit_ans : s.p_ans;
        if (v > config.delta_ltod) ++above;
    }
    return static_cast<double>(above) / static_cast<double>(scores.size());
}

double s_nn(const Embedding& question_embedding, const NnReferenceSet& reference, std::size_t k) {
    if (k == 0) throw ConfigError("k_neighbors must be >= 1");
    if (reference.size() < k) {
        throw ConfigError("reference set has " + std::to_string(reference.size()) + " entries, fewer than k = " +
                          std::to_string(k));
    }
    std::size_t positive = 0;
    for (std::size_t i : reference.nearest(question_embedding, k)) {
        if (reference.entries()[i].correct_without_retrieval) ++positive;
    }
    return static_cast<double>(positive) / static_cast<double>(k);
}

RecognizerVerdict decide(double s_ltod_value, double s_nn_value, const RecognizerConfig& config) {
    RecognizerVerdict v{s_ltod_value, s_nn_value, Verdict::Retrieve};
    if (s_ltod_value > config.s_l && s_nn_value > config.s_n) v.decision = Verdict::NoRetrieve;
    return v;
}

}  // namespace fitrag
