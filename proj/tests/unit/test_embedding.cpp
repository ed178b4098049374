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
#include <fstream>

#include "fitrag/embedding.hpp"
#include "fitrag/errors.hpp"

using namespace fitrag;
namespace fs = std::filesystem;

namespace {

Corpus small_corpus() {
    Corpus c;
    c.add(make_document("paris", "Paris", "Paris is the capital of France. It lies on the Seine."));
    c.add(make_document("rome", "Rome", "Rome is the capital of Italy. It has seven hills."));
    c.add(make_document("oslo", "Oslo", "Oslo is the capital of Norway. Winters are long."));
    return c;
}

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "fitrag-unit-embedding";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("hash embeddings are deterministic and unit norm") {
    HashEmbedder a(64, 3), b(64, 3), other(64, 4);
    const Embedding x = embed(a, "the capital of France");
    CHECK(x.size() == 64);
    CHECK(x.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((x - embed(b, "the capital of France")).norm() == 0.0);
    CHECK((x - embed(other, "the capital of France")).norm() > 0.0);
    CHECK(a.fingerprint() != other.fingerprint());
}

TEST_CASE("hash embeddings ignore case") {
    HashEmbedder e(64);
    CHECK((embed(e, "Capital OF France") - embed(e, "capital of france")).norm() < 1e-12);
}

TEST_CASE("blank text is rejected") {
    HashEmbedder e(32);
    CHECK_THROWS_AS(embed(e, "   \n"), ContractError);
    CHECK_THROWS_AS(HashEmbedder(0), ConfigError);
}

TEST_CASE("index over an empty corpus is rejected") {
    CHECK_THROWS_AS(VectorIndex::build(Corpus{}, HashEmbedder(16)), ContractError);
}

TEST_CASE("retrieve ranks by similarity") {
    const Corpus c = small_corpus();
    HashEmbedder e(256);
    const VectorIndex idx = VectorIndex::build(c, e);
    const auto hits = retrieve(c, idx, e, "What is the capital of Italy?", 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].doc->doc_id == "rome");
    for (std::size_t i = 0; i < hits.size(); ++i) CHECK(hits[i].rank == i + 1);
    CHECK(hits[0].similarity >= hits[1].similarity);
    CHECK(hits[1].similarity >= hits[2].similarity);
    CHECK(retrieve(c, idx, e, "Italy", 10).size() == 3);
    CHECK_THROWS_AS(retrieve(c, idx, e, "Italy", 0), ContractError);
}

TEST_CASE("search breaks ties by document id") {
    Eigen::MatrixXd v(2, 3);
    v << 1, 1, 0,
         0, 0, 1;
    VectorIndex idx("fp", {"b", "a", "c"}, v);
    Embedding q(2);
    q << 1, 0;
    const auto hits = idx.search(q, 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].row == 1);
    CHECK(hits[1].row == 0);
    CHECK(hits[2].row == 2);
}

TEST_CASE("index save/load round trip") {
    const Corpus c = small_corpus();
    HashEmbedder e(128, 9);
    const VectorIndex idx = VectorIndex::build(c, e);
    const fs::path p = temp_path("idx.bin");
    idx.save(p);
    const VectorIndex back = VectorIndex::load(p, e);
    CHECK(back.doc_ids() == idx.doc_ids());
    CHECK(back.fingerprint() == idx.fingerprint());
    CHECK((back.vectors() - idx.vectors()).norm() == 0.0);
}

TEST_CASE("index load rejects a mismatched provider or a corrupt file") {
    const Corpus c = small_corpus();
    HashEmbedder e(128, 9);
    const fs::path p = temp_path("idx2.bin");
    VectorIndex::build(c, e).save(p);
    CHECK_THROWS_AS(VectorIndex::load(p, HashEmbedder(64, 9)), IntegrityError);
    CHECK_THROWS_AS(VectorIndex::load(p, HashEmbedder(128, 10)), IntegrityError);

    const auto size = fs::file_size(p);
    fs::resize_file(p, size - 5);
    CHECK_THROWS_AS(VectorIndex::load(p, e), IntegrityError);

    const fs::path junk = temp_path("junk.bin");
    std::ofstream(junk) << "not an index";
    CHECK_THROWS_AS(VectorIndex::load(junk), IntegrityError);
}

TEST_CASE("query dimension must match the index") {
    const VectorIndex idx = VectorIndex::build(small_corpus(), HashEmbedder(32));
    CHECK_THROWS_AS(idx.search(Embedding::Ones(16).normalized(), 1), IntegrityError);
}

TEST_CASE("recall_at_k examples") {
    const Corpus c = small_corpus();
    const std::vector<const Document*> ranked = {c.find("oslo"), c.find("rome"), c.find("paris")};
    const std::vector<std::string> gold = {"Seine"};
    CHECK(recall_at_k(std::span<const Document* const>(ranked), gold, 1) == 0.0);
    CHECK(recall_at_k(std::span<const Document* const>(ranked), gold, 2) == 0.0);
    CHECK(recall_at_k(std::span<const Document* const>(ranked), gold, 3) == 1.0);
    CHECK_THROWS_AS(recall_at_k(std::span<const Document* const>(ranked), gold, 4), ContractError);

    std::vector<RetrievedDoc> results = {{c.find("paris"), 0.9, 1}, {c.find("rome"), 0.5, 2}};
    CHECK(recall_at_k(std::span<const RetrievedDoc>(results), gold, 1) == 1.0);
}
