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

#include <doctest.h>

#include <filesystem>

#include "fitrag/errors.hpp"
#include "fitrag/recognizer.hpp"

using namespace fitrag;

namespace {

Embedding point(double x, double y) {
    Embedding e(2);
    e << x, y;
    return e;
}

NnReferenceSet line_reference(std::vector<bool> labels) {
    std::vector<NnEntry> entries;
    for (std::size_t i = 0; i < labels.size(); ++i)
        entries.push_back({"r" + std::to_string(i), point(static_cast<double>(i), 0.0), labels[i]});
    return NnReferenceSet(std::move(entries), "test");
}

}  // namespace

TEST_CASE("s_ltod counts logits strictly above the threshold") {
    RecognizerConfig cfg;
    cfg.delta_ltod = 1.0;
    const std::vector<BiLabelScore> scores = {BiLabelScore::from_logits(2.0, 0.0), BiLabelScore::from_logits(1.0, 0.0),
                                              BiLabelScore::from_logits(-3.0, 0.0),
                                              BiLabelScore::from_logits(1.5, 0.0)};
    CHECK(s_ltod(scores, cfg) == doctest::Approx(0.5));

    cfg.threshold_on = LtodThreshold::Probability;
    cfg.delta_ltod = 0.6;
    // sigmoid(2) = 0.88, sigmoid(1) = 0.73, sigmoid(1.5) = 0.82 clear 0.6.
    CHECK(s_ltod(scores, cfg) == doctest::Approx(0.75));

    CHECK_THROWS_AS(s_ltod(std::vector<BiLabelScore>{}, cfg), UndefinedScoreError);
}

TEST_CASE("s_nn is the positive fraction of the k nearest") {
    const NnReferenceSet ref = line_reference({true, true, false, false, true});
    CHECK(ref.positives() == 3);
    CHECK(s_nn(point(0.1, 0.0), ref, 2) == doctest::Approx(1.0));
    CHECK(s_nn(point(0.1, 0.0), ref, 3) == doctest::Approx(2.0 / 3.0));
    CHECK(s_nn(point(3.9, 0.0), ref, 2) == doctest::Approx(0.5));
    CHECK_THROWS_AS(s_nn(point(0, 0), ref, 6), ConfigError);
}

TEST_CASE("nearest breaks distance ties by question id") {
    std::vector<NnEntry> entries = {{"b", point(1, 0), true}, {"a", point(-1, 0), false}, {"c", point(0, 5), true}};
    const NnReferenceSet ref(entries, "fp");
    const auto idx = ref.nearest(point(0, 0), 2);
    REQUIRE(idx.size() == 2);
    CHECK(ref.entries()[idx[0]].question_id == "a");
    CHECK(ref.entries()[idx[1]].question_id == "b");
}

TEST_CASE("decide requires both scores strictly above their thresholds") {
    RecognizerConfig cfg;
    cfg.s_l = 0.1;
    cfg.s_n = 0.5;
    CHECK(decide(0.2, 0.6, cfg).decision == Verdict::NoRetrieve);
    CHECK(decide(0.1, 0.6, cfg).decision == Verdict::Retrieve);
    CHECK(decide(0.2, 0.5, cfg).decision == Verdict::Retrieve);
    CHECK(decide(0.0, 1.0, cfg).decision == Verdict::Retrieve);
    const auto v = decide(0.3, 0.7, cfg);
    CHECK(v.s_ltod == 0.3);
    CHECK(v.s_nn == 0.7);
}

TEST_CASE("config validation") {
    RecognizerConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.s_n = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.k_neighbors = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("reference building labels questions and skips failures") {
    const std::vector<QARecord> qs = {
        {"q1", "Who wrote Hamlet?", {"Shakespeare"}},
        {"q2", "Capital of Peru?", {"Lima"}},
        {"q3", "Unscripted question?", {"x"}},
    };
    MockLlmClient llm;
    llm.on_question(qs[0].question, "William Shakespeare").on_question(qs[1].question, "Cusco");
    HashEmbedder e(32);
    const NnReferenceBuild b = build_nn_reference(qs, llm, e);
    CHECK(b.reference.size() == 2);
    CHECK(b.skipped == 1);
    CHECK(b.warnings.size() == 1);
    CHECK(b.reference.positives() == 1);
    CHECK(b.reference.dim() == 32);
}

TEST_CASE("reference save/load round trip") {
    const NnReferenceSet ref = line_reference({true, false, true});
    const auto p = std::filesystem::temp_directory_path() / "fitrag-unit-ref.jsonl";
    ref.save(p);
    const NnReferenceSet back = NnReferenceSet::load(p);
    REQUIRE(back.size() == 3);
    CHECK(back.positives() == 2);
    CHECK(back.entries()[2].embedding == ref.entries()[2].embedding);
    CHECK(back.fingerprint() == ref.fingerprint());
}
