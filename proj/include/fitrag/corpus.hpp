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

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fitrag {

/// Half-open character range [begin, end) into a document's text.
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool operator==(const Span&) const = default;
};

struct Document {
    std::string doc_id;
    std::string title;
    std::string text;
    std::vector<Span> sentences;

    std::size_t sentence_count() const { return sentences.size(); }
    std::string_view sentence(std::size_t i) const;
    /// Text from the start of sentence `first` to the end of sentence `first + count - 1`.
    std::string_view sentence_range(std::size_t first, std::size_t count) const;
};

/// Builds a document and segments its sentences.
Document make_document(std::string doc_id, std::string title, std::string text);

struct SubDocument {
    std::string parent_doc_id;
    std::size_t start_sentence = 0;
    std::size_t sentence_count = 0;
    std::string text;
    std::size_t token_count = 0;

    /// Stable identity used for overlap checks, "<doc_id>#<start>+<count>".
    std::string id() const;
};

struct QARecord {
    std::string question_id;
    std::string question;
    std::vector<std::string> gold_answers;
};

/// Immutable after loading; safe to share across threads for reads.
class Corpus {
public:
    Corpus() = default;

    /// Throws ConflictError on a duplicate doc_id.
    void add(Document doc);

    std::size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }
    const Document& operator[](std::size_t i) const { return docs_[i]; }
    const Document* find(std::string_view doc_id) const;
    std::vector<Document>::const_iterator begin() const { return docs_.begin(); }
    std::vector<Document>::const_iterator end() const { return docs_.end(); }

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// JSONL corpus: one {"id", "title", "text"} object per line; blank lines skipped.
Corpus load_corpus(const std::filesystem::path& path);
Corpus read_corpus(std::istream& in);
void write_corpus(std::ostream& out, const Corpus& corpus);

/// JSONL QA file: {"question_id", "question", "answers": [...]}.
std::vector<QARecord> load_qa(const std::filesystem::path& path);
std::vector<QARecord> read_qa(std::istream& in);
void write_qa(std::ostream& out, std::span<const QARecord> records);

/// Sentence boundaries: '.', '!' or '?' followed by whitespace or end of text.
/// A '.' after a single capital initial ("J. Smith") or a title abbreviation
/// ("Mr.", "Dr.") does not end a sentence. Text without a terminator is one span.
std::vector<Span> split_sentences(std::string_view text);

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
    virtual std::size_t count(std::string_view text) const { return tokenize(text).size(); }
};

/// Splits on whitespace, then peels leading and trailing punctuation
/// characters off each piece as single-character tokens.
class WhitespacePunctTokenizer final : public Tokenizer {
public:
    std::vector<std::string> tokenize(std::string_view text) const override;
    std::size_t count(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

std::size_t count_tokens(std::string_view text);
std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer);

std::vector<SubDocument> generate_subdocuments(const Document& doc, std::size_t window = 3,
                                               std::size_t stride = 1,
                                               const Tokenizer& tokenizer = default_tokenizer());

enum class AnswerMatch { Containment, Exact };

/// Lowercase, collapse whitespace, strip surrounding punctuation per token.
std::string normalize_answer(std::string_view text);

/// True iff the normalized text contains a normalized gold answer (Containment)
/// or equals one (Exact). Answers that normalize to "" never match.
bool contains_answer(std::string_view text, std::span<const std::string> gold_answers,
                     AnswerMatch mode = AnswerMatch::Containment);

}  // namespace fitrag
