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

#include "fitrag/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fitrag/errors.hpp"
#include "fitrag/rng.hpp"

namespace fitrag {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

void normalize_in_place(Embedding& v, std::string_view what) {
    const double n = v.norm();
    if (!std::isfinite(n) || n == 0.0) throw ProviderError("degenerate embedding for " + std::string(what), false);
    v /= n;
}

constexpr char kIndexMagic[8] = {'F', 'I', 'T', 'R', 'A', 'G', 'I', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

static_assert(std::endian::native == std::endian::little, "index files are little-endian");

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IntegrityError("index file truncated");
    return v;
}

std::string read_string(std::istream& in, std::size_t max_len) {
    const auto len = read_pod<std::uint32_t>(in);
    if (len > max_len) throw IntegrityError("index file has an implausible string length");
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw IntegrityError("index file truncated");
    return s;
}

}  // namespace

std::vector<Embedding> EmbeddingProvider::embed_batch(std::span<const std::string> texts) const {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) out.push_back(embed_text(t));
    return out;
}

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim == 0) throw ConfigError("hash embedder dimension must be positive");
}

std::string HashEmbedder::fingerprint() const {
    return "hash-bow:dim=" + std::to_string(dim_) + ":seed=" + std::to_string(seed_);
}

Embedding HashEmbedder::embed_text(std::string_view text) const {
    Embedding v = Embedding::Zero(static_cast<Eigen::Index>(dim_));
    const std::uint64_t salt = splitmix64(seed_);
    auto add = [&](std::string_view token) {
        const std::uint64_t h = splitmix64(fnv1a64(token) ^ salt);
        const auto bucket = static_cast<Eigen::Index>(h % dim_);
        v[bucket] += ((h >> 40) & 1U) ? 1.0 : -1.0;
    };
    bool any = false;
    for (const std::string& tok : default_tokenizer().tokenize(text)) {
        if (tok.size() == 1 && std::ispunct(static_cast<unsigned char>(tok[0]))) continue;
        std::string lower(tok);
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        add(lower);
        any = true;
    }
    if (!any || v.squaredNorm() == 0.0) add(trim(text));
    if (v.squaredNorm() == 0.0) v[0] = 1.0;
    normalize_in_place(v, "hash embedding");
    return v;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ConfigError("remote embedder requires an endpoint");
    if (config_.dim == 0) throw ConfigError("remote embedder requires a positive dim");
    if (config_.batch_size == 0) config_.batch_size = 1;
    parse_endpoint(config_.endpoint);
}

std::string RemoteEmbedder::fingerprint() const {
    return "remote:" + config_.endpoint + ":dim=" + std::to_string(config_.dim);
}

Embedding RemoteEmbedder::embed_text(std::string_view text) const {
    const std::string t(text);
    return embed_batch(std::span<const std::string>(&t, 1)).front();
}

std::vector<Embedding> RemoteEmbedder::embed_batch(std::span<const std::string> texts) const {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    const std::string token = env_or_empty(config_.token_env);
    for (std::size_t start = 0; start < texts.size(); start += config_.batch_size) {
        const std::size_t n = std::min(config_.batch_size, texts.size() - start);
        json body = {{"texts", json::array()}};
        for (std::size_t i = 0; i < n; ++i) body["texts"].push_back(texts[start + i]);
        HttpReply reply;
        try {
            reply = post_json_with_retry(config_.endpoint, body.dump(), token, config_.retry);
        } catch (const TransportError& e) {
            throw ProviderError(std::string("embedding request failed: ") + e.what(), true);
        }
        if (reply.status != 200) {
            throw ProviderError("embedding endpoint returned HTTP " + std::to_string(reply.status),
                                reply.status == 429 || reply.status >= 500);
        }
        json parsed;
        try {
            parsed = json::parse(reply.body);
        } catch (const json::parse_error& e) {
            throw ProviderError(std::string("embedding response is not JSON: ") + e.what(), false);
        }
        if (!parsed.contains("embeddings") || !parsed["embeddings"].is_array() || parsed["embeddings"].size() != n) {
            throw ProviderError("embedding response has wrong shape", false);
        }
        for (const json& row : parsed["embeddings"]) {
            if (!row.is_array() || row.size() != config_.dim) {
                throw ProviderError("embedding has dimension " + std::to_string(row.size()) + ", expected " +
                                        std::to_string(config_.dim),
                                    false);
            }
            Embedding v(static_cast<Eigen::Index>(config_.dim));
            for (std::size_t j = 0; j < config_.dim; ++j) v[static_cast<Eigen::Index>(j)] = row[j].get<double>();
            if (!v.allFinite()) throw ProviderError("embedding contains non-finite values", false);
            normalize_in_place(v, "remote embedding");
            out.push_back(std::move(v));
        }
    }
    return out;
}

Embedding embed(const EmbeddingProvider& provider, std::string_view text) {
    if (trim(text).empty()) throw ContractError("cannot embed blank text");
    Embedding v = provider.embed_text(text);
    if (static_cast<std::size_t>(v.size()) != provider.dim()) {
        throw ProviderError("provider returned a vector of the wrong dimension", false);
    }
    if (!v.allFinite()) throw ProviderError("provider returned non-finite values", false);
    normalize_in_place(v, "embedding");
    return v;
}

std::string retrieval_text(const Document& doc) {
    if (doc.title.empty()) return doc.text;
    return doc.title + ". " + doc.text;
}

std::string index_fingerprint(const EmbeddingProvider& provider) {
    return provider.fingerprint() + ";embed=title. text";
}

VectorIndex::VectorIndex(std::string fingerprint, std::vector<std::string> doc_ids, Eigen::MatrixXd vectors)
    : fingerprint_(std::move(fingerprint)), doc_ids_(std::move(doc_ids)), vectors_(std::move(vectors)) {
    if (static_cast<std::size_t>(vectors_.cols()) != doc_ids_.size()) {
        throw IntegrityError("index vector count does not match id count");
    }
}

VectorIndex VectorIndex::build(const Corpus& corpus, const EmbeddingProvider& provider) {
    if (corpus.empty()) throw ContractError("cannot build an index over an empty corpus");
    std::vector<std::string> texts;
    std::vector<std::string> ids;
    texts.reserve(corpus.size());
    for (const Document& d : corpus) {
        texts.push_back(retrieval_text(d));
        ids.push_back(d.doc_id);
    }
    for (const std::string& t : texts) {
        if (trim(t).empty()) throw ContractError("document has no text to embed");
    }
    std::vector<Embedding> vecs = provider.embed_batch(texts);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(provider.dim()), static_cast<Eigen::Index>(vecs.size()));
    for (std::size_t i = 0; i < vecs.size(); ++i) {
        Embedding v = vecs[i];
        if (static_cast<std::size_t>(v.size()) != provider.dim()) throw IntegrityError("embedding dimension mismatch");
        normalize_in_place(v, ids[i]);
        m.col(static_cast<Eigen::Index>(i)) = v;
    }
    return VectorIndex(index_fingerprint(provider), std::move(ids), std::move(m));
}

std::vector<VectorIndex::Hit> VectorIndex::search(const Embedding& query, std::size_t k) const {
    if (k == 0) throw ContractError("k must be >= 1");
    if (query.size() != vectors_.rows()) throw IntegrityError("query dimension does not match index");
    const Eigen::VectorXd sims = vectors_.transpose() * query;
    std::vector<Hit> hits(doc_ids_.size());
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i] = {i, sims[static_cast<Eigen::Index>(i)]};
    auto better = [&](const Hit& a, const Hit& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return doc_ids_[a.row] < doc_ids_[b.row];
    };
    const std::size_t n = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), better);
    hits.resize(n);
    return hits;
}

void VectorIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(kIndexMagic, sizeof(kIndexMagic));
    write_pod(out, kIndexVersion);
    write_pod(out, static_cast<std::uint32_t>(dim()));
    write_pod(out, static_cast<std::uint64_t>(size()));
    write_pod(out, static_cast<std::uint32_t>(fingerprint_.size()));
    out.write(fingerprint_.data(), static_cast<std::streamsize>(fingerprint_.size()));
    for (std::size_t i = 0; i < size(); ++i) {
        write_pod(out, static_cast<std::uint32_t>(doc_ids_[i].size()));
        out.write(doc_ids_[i].data(), static_cast<std::streamsize>(doc_ids_[i].size()));
        out.write(reinterpret_cast<const char*>(vectors_.col(static_cast<Eigen::Index>(i)).data()),
                  static_cast<std::streamsize>(sizeof(double) * dim()));
    }
    if (!out) throw Error("failed writing " + path.string());
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[sizeof(kIndexMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kIndexMagic, sizeof(magic)) != 0) throw IntegrityError("not a fitrag index file");
    if (read_pod<std::uint32_t>(in) != kIndexVersion) throw IntegrityError("unsupported index version");
    const auto dim = read_pod<std::uint32_t>(in);
    const auto count = read_pod<std::uint64_t>(in);
    if (dim == 0) throw IntegrityError("index has zero dimension");
    std::string fp = read_string(in, 1 << 16);
    std::vector<std::string> ids;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        ids.push_back(read_string(in, 1 << 20));
        in.read(reinterpret_cast<char*>(m.col(static_cast<Eigen::Index>(i)).data()),
                static_cast<std::streamsize>(sizeof(double) * dim));
        if (!in) throw IntegrityError("index file truncated");
    }
    if (in.peek() != std::char_traits<char>::eof()) throw IntegrityError("trailing bytes in index file");
    return VectorIndex(std::move(fp), std::move(ids), std::move(m));
}

VectorIndex VectorIndex::load(const std::filesystem::path& path, const EmbeddingProvider& provider) {
    VectorIndex idx = load(path);
    if (idx.dim() != provider.dim()) {
        throw IntegrityError("index dimension " + std::to_string(idx.dim()) + " does not match provider dimension " +
                             std::to_string(provider.dim()));
    }
    if (idx.fingerprint() != index_fingerprint(provider)) {
        throw IntegrityError("index was built with '" + idx.fingerprint() + "', provider is '" +
                             index_fingerprint(provider) + "'");
    }
    return idx;
}

std::vector<RetrievedDoc> retrieve(const Corpus& corpus, const VectorIndex& index, const EmbeddingProvider& provider,
                                   std::string_view question, std::size_t k) {
    const Embedding q = embed(provider, question);
    std::vector<RetrievedDoc> out;
    std::size_t rank = 0;
    for (const VectorIndex::Hit& h : index.search(q, k)) {
        const Document* d = corpus.find(index.doc_ids()[h.row]);
        if (!d) throw IntegrityError("index references unknown document '" + index.doc_ids()[h.row] + "'");
        out.push_back({d, h.similarity, ++rank});
    }
    return out;
}

double recall_at_k(std::span<const Document* const> ranked, std::span<const std::string> gold_answers,
                   std::size_t k) {
    if (k > ranked.size()) throw ContractError("recall@k requires k <= number of results");
    for (std::size_t i = 0; i < k; ++i) {
        if (contains_answer(ranked[i]->text, gold_answers)) return 1.0;
    }
    return 0.0;
}

double recall_at_k(std::span<const RetrievedDoc> results, std::span<const std::string> gold_answers, std::size_t k) {
    std::vector<const Document*> ranked;
    ranked.reserve(results.size());
    for (const RetrievedDoc& r : results) ranked.push_back(r.doc);
    return recall_at_k(std::span<const Document* const>(ranked), gold_answers, k);
}

}  // namespace fitrag
