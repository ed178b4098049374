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

#include "fitrag/llm.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fitrag/errors.hpp"

namespace fitrag {

namespace {

using nlohmann::json;

std::string one_line(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool space = false;
    for (char c : text) {
        if (c == '\n' || c == '\r' || c == '\t' || c == ' ') {
            space = true;
            continue;
        }
        if (space && !out.empty()) out.push_back(' ');
        space = false;
        out.push_back(c);
    }
    return out;
}

}  // namespace

std::string_view to_string(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::Comprehensive: return "comprehensive";
        case TemplateKind::Simple: return "simple";
        case TemplateKind::Cot: return "cot";
        case TemplateKind::NoRetrieve: return "no_retrieve";
    }
    return "comprehensive";
}

TemplateKind parse_template_kind(std::string_view name) {
    if (name == "comprehensive") return TemplateKind::Comprehensive;
    if (name == "simple") return TemplateKind::Simple;
    if (name == "cot") return TemplateKind::Cot;
    if (name == "no_retrieve") return TemplateKind::NoRetrieve;
    throw ConfigError("unknown prompt template '" + std::string(name) + "'");
}

PromptLibrary PromptLibrary::defaults() {
    PromptLibrary lib;
    const std::string refer = "Refer to the passage below and answer the following question.";

    PromptTemplate comprehensive;
    comprehensive.instruction = refer +
                                "\nMake sure you fully understand the meaning of the question and passages."
                                "\nThen give the answer and explain why you choose this answer.";
    lib.set(TemplateKind::Comprehensive, comprehensive);

    PromptTemplate simple;
    simple.instruction = refer;
    simple.suffix = "The answer is";
    lib.set(TemplateKind::Simple, simple);

    PromptTemplate cot;
    cot.instruction = refer;
    cot.suffix = "Let's think step by step.";
    lib.set(TemplateKind::Cot, cot);

    PromptTemplate no_retrieve;
    no_retrieve.instruction =
        "First generate a background passage about the question based on your own knowledge."
        "\nThen answer the question by reasoning over the passage you generated.";
    no_retrieve.takes_passages = false;
    lib.set(TemplateKind::NoRetrieve, no_retrieve);
    return lib;
}

PromptLibrary PromptLibrary::from_json(const json& j) {
    PromptLibrary lib = defaults();
    if (j.is_null()) return lib;
    if (!j.is_object()) throw ConfigError("prompt templates must be a JSON object");
    for (const auto& [name, entry] : j.items()) {
        const TemplateKind kind = parse_template_kind(name);
        PromptTemplate t = lib.get(kind);
        if (!entry.is_object()) throw ConfigError("template '" + name + "' must be an object");
        t.instruction = entry.value("instruction", t.instruction);
        t.passages_header = entry.value("passages_header", t.passages_header);
        t.question_prefix = entry.value("question_prefix", t.question_prefix);
        t.suffix = entry.value("suffix", t.suffix);
        lib.set(kind, std::move(t));
    }
    return lib;
}

const PromptTemplate& PromptLibrary::get(TemplateKind kind) const {
    auto it = templates_.find(kind);
    if (it == templates_.end()) throw ConfigError("template '" + std::string(to_string(kind)) + "' is not defined");
    return it->second;
}

void PromptLibrary::set(TemplateKind kind, PromptTemplate t) { templates_[kind] = std::move(t); }

std::string render_prompt(const PromptTemplate& t, std::string_view question, std::span<const std::string> passages) {
    std::vector<std::string> lines;
    if (!t.instruction.empty()) lines.push_back(t.instruction);
    if (t.takes_passages && !passages.empty()) {
        if (!t.passages_header.empty()) lines.push_back(t.passages_header);
        for (std::size_t i = 0; i < passages.size(); ++i) {
            lines.push_back(std::to_string(i + 1) + ". " + one_line(passages[i]));
        }
    }
    lines.push_back(t.question_prefix + one_line(question));
    if (!t.suffix.empty()) lines.push_back(t.suffix);
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

LlmRequest build_retrieve_prompt(std::string_view question, std::span<const std::string> passages,
                                 const PromptLibrary& library, TemplateKind kind, const Tokenizer& tokenizer) {
    if (passages.empty()) throw ContractError("a retrieval prompt needs at least one passage");
    const PromptTemplate& t = library.get(kind);
    if (!t.takes_passages) throw ContractError("template '" + std::string(to_string(kind)) + "' takes no passages");
    LlmRequest req;
    req.question = std::string(question);
    req.prompt = render_prompt(t, question, passages);
    req.token_count = tokenizer.count(req.prompt);
    req.kind = kind;
    req.passage_count = passages.size();
    return req;
}

LlmRequest build_noretrieve_prompt(std::string_view question, const PromptLibrary& library,
                                   const Tokenizer& tokenizer) {
    LlmRequest req;
    req.question = std::string(question);
    req.prompt = render_prompt(library.get(TemplateKind::NoRetrieve), question, {});
    req.token_count = tokenizer.count(req.prompt);
    req.kind = TemplateKind::NoRetrieve;
    return req;
}

MockLlmClient::MockLlmClient(bool strict, std::string default_answer, std::size_t concurrency)
    : strict_(strict), default_answer_(std::move(default_answer)), concurrency_(concurrency ? concurrency : 1) {}

MockLlmClient& MockLlmClient::on_question(std::string question, std::string answer) {
    question_rules_.push_back({std::move(question), std::nullopt, std::move(answer)});
    return *this;
}

MockLlmClient& MockLlmClient::on_question_containing(std::string question, std::string needle, std::string answer) {
    question_rules_.push_back({std::move(question), std::move(needle), std::move(answer)});
    return *this;
}

MockLlmClient& MockLlmClient::on_pattern(const std::string& regex, std::string answer) {
    try {
        pattern_rules_.push_back({regex, std::regex(regex, std::regex::ECMAScript), std::move(answer)});
    } catch (const std::regex_error& e) {
        throw ConfigError("invalid mock pattern '" + regex + "': " + e.what());
    }
    return *this;
}

MockLlmClient MockLlmClient::load(const std::filesystem::path& path, bool strict, std::string default_answer,
                                  std::size_t concurrency) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    MockLlmClient mock(strict, std::move(default_answer), concurrency);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json entry;
        try {
            entry = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        if (!entry.is_object() || !entry.contains("match") || !entry["match"].is_object() ||
            !entry.contains("answer") || !entry["answer"].is_string()) {
            throw ParseError("mock entries need an object \"match\" and a string \"answer\"", line_no);
        }
        const json& m = entry["match"];
        std::string answer = entry["answer"].get<std::string>();
        if (m.contains("question")) {
            if (m.contains("contains")) {
                mock.on_question_containing(m["question"].get<std::string>(), m["contains"].get<std::string>(),
                                            std::move(answer));
            } else {
                mock.on_question(m["question"].get<std::string>(), std::move(answer));
            }
        } else if (m.contains("pattern")) {
            mock.on_pattern(m["pattern"].get<std::string>(), std::move(answer));
        } else {
            throw ParseError("mock match needs \"question\" or \"pattern\"", line_no);
        }
    }
    return mock;
}

void MockLlmClient::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const QuestionRule& r : question_rules_) {
        json m = {{"question", r.question}};
        if (r.needle) m["contains"] = *r.needle;
        out << json{{"match", m}, {"answer", r.answer}}.dump() << '\n';
    }
    for (const PatternRule& r : pattern_rules_) {
        out << json{{"match", {{"pattern", r.source}}}, {"answer", r.answer}}.dump() << '\n';
    }
}

LlmResponse MockLlmClient::complete(const LlmRequest& request) const {
    for (const QuestionRule& r : question_rules_) {
        if (r.question != request.question) continue;
        if (r.needle && request.prompt.find(*r.needle) == std::string::npos) continue;
        return {r.answer, 0};
    }
    for (const PatternRule& r : pattern_rules_) {
        if (std::regex_search(request.prompt, r.pattern)) return {r.answer, 0};
    }
    if (strict_) throw UnscriptedPromptError("no scripted response for question '" + request.question + "'");
    return {default_answer_, 0};
}

HttpLlmClient::HttpLlmClient(HttpLlmConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ConfigError("remote LLM client requires an endpoint");
    if (config_.concurrency == 0) config_.concurrency = 1;
    if (config_.retry.timeout.count() <= 0) throw ConfigError("remote LLM client requires a positive timeout");
    parse_endpoint(config_.endpoint);
}

LlmResponse HttpLlmClient::complete(const LlmRequest& request) const {
    {
        std::unique_lock lock(mutex_);
        slot_free_.wait(lock, [&] { return in_flight_ < config_.concurrency; });
        ++in_flight_;
    }
    struct Release {
        const HttpLlmClient* self;
        ~Release() {
            {
                std::lock_guard lock(self->mutex_);
                --self->in_flight_;
            }
            self->slot_free_.notify_one();
        }
    } release{this};

    const json body = {{"prompt", request.prompt}, {"max_tokens", config_.max_tokens}, {"temperature", 0}};
    const auto start = std::chrono::steady_clock::now();
    const HttpReply reply =
        post_json_with_retry(config_.endpoint, body.dump(), env_or_empty(config_.token_env), config_.retry);
    const auto elapsed = std::chrono::steady_clock::now() - start;
    if (reply.status != 200) {
        throw TransportError("LLM endpoint returned HTTP " + std::to_string(reply.status) + " after " +
                             std::to_string(reply.attempts) + " attempts");
    }
    try {
        const json parsed = json::parse(reply.body);
        return {parsed.at("text").get<std::string>(),
                std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count()};
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed LLM response: ") + e.what());
    }
}

LlmResponse complete(const LlmClient& client, const LlmRequest& request) {
    const auto start = std::chrono::steady_clock::now();
    LlmResponse r = client.complete(request);
    if (r.latency_ms == 0) {
        r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                           .count();
    }
    return r;
}

bool is_correct(std::string_view response_text, std::span<const std::string> gold_answers) {
    return contains_answer(response_text, gold_answers);
}

}  // namespace fitrag
