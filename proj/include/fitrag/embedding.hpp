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
#include "fitrag/http.hpp"

namespace fitrag {

using Embedding = Eigen::VectorXd;

/// Maps text to a unit-norm dense vector. Implementations must be
/// deterministic for a fixed configuration and safe to call concurrently.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::size_t dim() const = 0;
    /// Identifies the configuration; stored alongside anything built from it.
    virtual std::string fingerprint() const = 0;
    virtual Embedding embed_text(std::string_view text) const = 0;
    virtual std::vector<Embedding> embed_batch(std::span<const std::string> texts) const;
};

/// Signed feature hashing over lowercased word tokens.
class HashEmbedder final : public EmbeddingProvider {
public:
    explicit HashEmbedder(std::size_t dim = 256, std::uint64_t seed = 0);

    std::size_t dim() const override { return dim_; }
    std::string fingerprint() const override;
    Embedding embed_text(std::string_view text) const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

struct RemoteEmbedderConfig {
    std::string endpoint;
    std::string token_env = "FITRAG_EMBED_TOKEN";
    std::size_t dim = 0;
    std::size_t batch_size = 32;
    RetryPolicy retry;
};

/// JSON POST {"texts": [...]} -> {"embeddings": [[...], ...]}.
class RemoteEmbedder final : public EmbeddingProvider {
public:
    explicit RemoteEmbedder(RemoteEmbedderConfig config);

    std::size_t dim() const override { return config_.dim; }
    std::string fingerprint() const override;
    Embedding embed_text(std::string_view text) const override;
    std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

private:
    RemoteEmbedderConfig config_;
};

/// Checked entry point: rejects blank text, normalizes to unit length.
Embedding embed(const EmbeddingProvider& provider, std::string_view text);

/// Text used to embed a corpus document for retrieval.
std::string retrieval_text(const Document& doc);

struct RetrievedDoc {
    const Document* doc = nullptr;
    double similarity = 0.0;
    std::size_t rank = 0;  // 1-based
};

/// Exact inner-product index over unit vectors, one column per document.
class VectorIndex {
public:
    VectorIndex() = default;
    VectorIndex(std::string fingerprint, std::vector<std::string> doc_ids, Eigen::MatrixXd vectors);

    /// Throws ContractError for an empty corpus.
    static VectorIndex build(const Corpus& corpus, const EmbeddingProvider& provider);

    std::size_t size() const { return doc_ids_.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(vectors_.rows()); }
    const std::string& fingerprint() const { return fingerprint_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    const Eigen::MatrixXd& vectors() const { return vectors_; }

    struct Hit {
        std::size_t row;
        double similarity;
    };
    /// Top-k by similarity, ties broken by ascending doc_id.
    std::vector<Hit> search(const Embedding& query, std::size_t k) const;

    void save(const std::filesystem::path& path) const;
    /// Throws IntegrityError when the file is corrupt or its dimension or
    /// fingerprint disagree with `provider`.
    static VectorIndex load(const std::filesystem::path& path, const EmbeddingProvider& provider);
    static VectorIndex load(const std::filesystem::path& path);

private:
    std::string fingerprint_;
    std::vector<std::string> doc_ids_;
    Eigen::MatrixXd vectors_;
};

/// Fingerprint recorded in an index built with `provider`.
std::string index_fingerprint(const EmbeddingProvider& provider);

/// Top-k documents for the question. Requires k >= 1; returns min(k, |corpus|).
std::vector<RetrievedDoc> retrieve(const Corpus& corpus, const VectorIndex& index, const EmbeddingProvider& provider,
                                   std::string_view question, std::size_t k = 100);

/// 1 if any of the first k results contains a gold answer, else 0.
double recall_at_k(std::span<const RetrievedDoc> results, std::span<const std::string> gold_answers, std::size_t k);

/// Same, for any ordered list of documents.
double recall_at_k(std::span<const Document* const> ranked, std::span<const std::string> gold_answers, std::size_t k);

}  // namespace fitrag
