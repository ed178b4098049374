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

#include "fitrag/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "fitrag/errors.hpp"

namespace fitrag {

namespace {

using nlohmann::json;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

constexpr std::array<std::string_view, 12> kAbbreviations = {
    "Mr", "Mrs", "Ms", "Dr", "Prof", "St", "Jr", "Sr", "Mt", "vs", "Gen", "Col"};

// Word immediately preceding position `dot` (exclusive), without opening punctuation.
std::string_view word_before(std::string_view text, std::size_t dot) {
    std::size_t b = dot;
    while (b > 0 && !is_space(text[b - 1])) --b;
    std::string_view w = text.substr(b, dot - b);
    while (!w.empty() && !is_alpha(w.front())) w.remove_prefix(1);
    return w;
}

// Whitespace-delimited token starting at or after `pos`.
std::string_view token_after(std::string_view text, std::size_t pos) {
    while (pos < text.size() && is_space(text[pos])) ++pos;
    std::size_t e = pos;
    while (e < text.size() && !is_space(text[e])) ++e;
    return text.substr(pos, e - pos);
}

bool is_initial_token(std::string_view tok) {
    return tok.size() == 2 && is_upper(tok[0]) && tok[1] == '.';
}

bool starts_capitalized_word(std::string_view tok) {
    if (tok.size() < 2 || !is_upper(tok[0])) return false;
    return is_alpha(tok[1]);
}

// A '.' that belongs to an abbreviation rather than ending a sentence.
bool is_abbreviation_dot(std::string_view text, std::size_t dot) {
    std::string_view w = word_before(text, dot);
    if (w.empty()) return false;
    if (std::find(kAbbreviations.begin(), kAbbreviations.end(), w) != kAbbreviations.end()) return true;
    if (w.size() == 1 && is_upper(w[0])) {
        std::string_view next = token_after(text, dot + 1);
        return is_initial_token(next) || starts_capitalized_word(next);
    }
    return false;
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(std::string("missing field \"") + key + "\"", line);
    if (!it->is_string()) throw ParseError(std::string("field \"") + key + "\" is not a string", line);
    return it->get<std::string>();
}

template <typename Fn>
void for_each_jsonl(std::istream& in, Fn&& fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(), is_space)) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        if (!obj.is_object()) throw ParseError("expected a JSON object", line_no);
        fn(obj, line_no);
    }
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

}  // namespace

std::string_view Document::sentence(std::size_t i) const {
    const Span& s = sentences.at(i);
    return std::string_view(text).substr(s.begin, s.size());
}

std::string_view Document::sentence_range(std::size_t first, std::size_t count) const {
    if (count == 0) return {};
    const Span& a = sentences.at(first);
    const Span& b = sentences.at(first + count - 1);
    return std::string_view(text).substr(a.begin, b.end - a.begin);
}

Document make_document(std::string doc_id, std::string title, std::string text) {
    Document d{std::move(doc_id), std::move(title), std::move(text), {}};
    d.sentences = split_sentences(d.text);
    return d;
}

std::string SubDocument::id() const {
    return parent_doc_id + "#" + std::to_string(start_sentence) + "+" + std::to_string(sentence_count);
}

void Corpus::add(Document doc) {
    if (by_id_.count(doc.doc_id)) throw ConflictError("duplicate document id '" + doc.doc_id + "'");
    by_id_.emplace(doc.doc_id, docs_.size());
    docs_.push_back(std::move(doc));
}

const Document* Corpus::find(std::string_view doc_id) const {
    auto it = by_id_.find(std::string(doc_id));
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

Corpus read_corpus(std::istream& in) {
    Corpus corpus;
    for_each_jsonl(in, [&](const json& obj, std::size_t line) {
        std::string id = require_string(obj, "id", line);
        std::string title = obj.contains("title") ? require_string(obj, "title", line) : std::string();
        std::string text = require_string(obj, "text", line);
        try {
            corpus.add(make_document(std::move(id), std::move(title), std::move(text)));
        } catch (const ConflictError& e) {
            throw ConflictError("line " + std::to_string(line) + ": " + e.what());
        }
    });
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_corpus(in);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const Document& d : corpus) {
        out << json{{"id", d.doc_id}, {"title", d.title}, {"text", d.text}}.dump() << '\n';
    }
}

std::vector<QARecord> read_qa(std::istream& in) {
    std::vector<QARecord> out;
    std::unordered_map<std::string, std::size_t> seen;
    for_each_jsonl(in, [&](const json& obj, std::size_t line) {
        QARecord r;
        r.question_id = require_string(obj, "question_id", line);
        r.question = require_string(obj, "question", line);
        auto it = obj.find("answers");
        if (it == obj.end() || !it->is_array()) throw ParseError("missing array field \"answers\"", line);
        for (const json& a : *it) {
            if (!a.is_string()) throw ParseError("answers must be strings", line);
            r.gold_answers.push_back(a.get<std::string>());
        }
        if (r.gold_answers.empty()) throw ParseError("answers must be non-empty", line);
        if (!seen.emplace(r.question_id, line).second) {
            throw ConflictError("line " + std::to_string(line) + ": duplicate question id '" + r.question_id + "'");
        }
        out.push_back(std::move(r));
    });
    return out;
}

std::vector<QARecord> load_qa(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_qa(in);
}

void write_qa(std::ostream& out, std::span<const QARecord> records) {
    for (const QARecord& r : records) {
        out << json{{"question_id", r.question_id}, {"question", r.question}, {"answers", r.gold_answers}}.dump()
            << '\n';
    }
}

std::vector<Span> split_sentences(std::string_view text) {
    std::vector<Span> spans;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && is_space(text[i])) ++i;
        if (i >= n) break;
        const std::size_t begin = i;
        std::size_t end = n;
        for (std::size_t j = i; j < n; ++j) {
            if (!is_terminator(text[j])) continue;
            std::size_t k = j;
            while (k < n && is_terminator(text[k])) ++k;
            while (k < n && is_closer(text[k])) ++k;
            if (k < n && !is_space(text[k])) {
                j = k - 1;
                continue;
            }
            if (k - j == 1 && text[j] == '.' && k < n && is_abbreviation_dot(text, j)) continue;
            end = k;
            break;
        }
        // Trailing whitespace is never part of a sentence.
        std::size_t e = end;
        while (e > begin && is_space(text[e - 1])) --e;
        spans.push_back({begin, e});
        i = end;
    }
    return spans;
}

std::vector<std::string> WhitespacePunctTokenizer::tokenize(std::string_view text) const {
    std::vector<std::string> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && is_space(text[i])) ++i;
        std::size_t e = i;
        while (e < n && !is_space(text[e])) ++e;
        if (e == i) break;
        std::size_t b = i;
        std::size_t t = e;
        std::vector<std::string> trailing;
        while (b < t && is_punct(text[b])) out.emplace_back(1, text[b++]);
        while (t > b && is_punct(text[t - 1])) trailing.emplace_back(1, text[--t]);
        if (t > b) out.emplace_back(text.substr(b, t - b));
        out.insert(out.end(), trailing.rbegin(), trailing.rend());
        i = e;
    }
    return out;
}

std::size_t WhitespacePunctTokenizer::count(std::string_view text) const {
    std::size_t total = 0;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && is_space(text[i])) ++i;
        std::size_t e = i;
        while (e < n && !is_space(text[e])) ++e;
        if (e == i) break;
        std::size_t b = i;
        std::size_t t = e;
        while (b < t && is_punct(text[b])) ++b, ++total;
        while (t > b && is_punct(text[t - 1])) --t, ++total;
        if (t > b) ++total;
        i = e;
    }
    return total;
}

const Tokenizer& default_tokenizer() {
    static const WhitespacePunctTokenizer tokenizer;
    return tokenizer;
}

std::size_t count_tokens(std::string_view text) { return default_tokenizer().count(text); }

std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer) { return tokenizer.count(text); }

std::vector<SubDocument> generate_subdocuments(const Document& doc, std::size_t window, std::size_t stride,
                                               const Tokenizer& tokenizer) {
    if (window == 0 || stride == 0) throw ContractError("window and stride must be >= 1");
    std::vector<SubDocument> out;
    const std::size_t s = doc.sentence_count();
    auto emit = [&](std::size_t start, std::size_t count) {
        SubDocument sd;
        sd.parent_doc_id = doc.doc_id;
        sd.start_sentence = start;
        sd.sentence_count = count;
        sd.text = std::string(doc.sentence_range(start, count));
        sd.token_count = tokenizer.count(sd.text);
        out.push_back(std::move(sd));
    };
    if (s == 0) {
        // Whitespace-only documents still yield one (empty) sub-document.
        SubDocument sd;
        sd.parent_doc_id = doc.doc_id;
        out.push_back(std::move(sd));
        return out;
    }
    if (s <= window) {
        emit(0, s);
        return out;
    }
    std::size_t start = 0;
    for (; start + window <= s; start += stride) emit(start, window);
    // A stride that skips past the tail still covers the last sentences.
    if (start - stride + window < s) emit(s - window, window);
    return out;
}

std::string normalize_answer(std::string_view text) {
    std::string out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && is_space(text[i])) ++i;
        std::size_t e = i;
        while (e < n && !is_space(text[e])) ++e;
        std::size_t b = i;
        std::size_t t = e;
        while (b < t && is_punct(text[b])) ++b;
        while (t > b && is_punct(text[t - 1])) --t;
        if (t > b) {
            if (!out.empty()) out.push_back(' ');
            for (std::size_t k = b; k < t; ++k) {
                out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[k]))));
            }
        }
        i = e;
    }
    return out;
}

bool contains_answer(std::string_view text, std::span<const std::string> gold_answers, AnswerMatch mode) {
    if (gold_answers.empty()) throw ContractError("gold answer set must be non-empty");
    const std::string norm = normalize_answer(text);
    for (const std::string& g : gold_answers) {
        const std::string ng = normalize_answer(g);
        if (ng.empty()) continue;
        if (mode == AnswerMatch::Exact ? norm == ng : norm.find(ng) != std::string::npos) return true;
    }
    return false;
}

}  // namespace fitrag
