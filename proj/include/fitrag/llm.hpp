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

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fitrag/corpus.hpp"
#include "fitrag/http.hpp"

namespace fitrag {

enum class TemplateKind { Comprehensive, Simple, Cot, NoRetrieve };

std::string_view to_string(TemplateKind kind);
/// Accepts "comprehensive", "simple", "cot", "no_retrieve".
TemplateKind parse_template_kind(std::string_view name);

/// Rendered as
///   <instruction>
///   Passages:
///   1. <passage>
///   ...
///   Question: <question>
///   <suffix>
/// with empty parts omitted.
struct PromptTemplate {
    std::string instruction;
    std::string passages_header = "Passages:";
    std::string question_prefix = "Question: ";
    std::string suffix;
    bool takes_passages = true;
};

/// Instruction wording is data: every template can be replaced from config.
class PromptLibrary {
public:
    static PromptLibrary defaults();
    /// Overrides defaults with {"<name>": {"instruction": ..., "suffix": ...}, ...}.
    static PromptLibrary from_json(const nlohmann::json& j);

    const PromptTemplate& get(TemplateKind kind) const;
    void set(TemplateKind kind, PromptTemplate t);

private:
    std::map<TemplateKind, PromptTemplate> templates_;
};

struct LlmRequest {
    std::string question;
    std::string prompt;
    std::size_t token_count = 0;
    TemplateKind kind = TemplateKind::Comprehensive;
    std::size_t passage_count = 0;
};

struct LlmResponse {
    std::string text;
    std::int64_t latency_ms = 0;
};

std::string render_prompt(const PromptTemplate& t, std::string_view question, std::span<const std::string> passages);

/// Requires at least one passage and a passage-taking template.
LlmRequest build_retrieve_prompt(std::string_view question, std::span<const std::string> passages,
                                 const PromptLibrary& library = PromptLibrary::defaults(),
                                 TemplateKind kind = TemplateKind::Comprehensive,
                                 const Tokenizer& tokenizer = default_tokenizer());

LlmRequest build_noretrieve_prompt(std::string_view question, const PromptLibrary& library = PromptLibrary::defaults(),
                                   const Tokenizer& tokenizer = default_tokenizer());

/// A black-box text completion service. Implementations are shareable
/// across threads.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual LlmResponse complete(const LlmRequest& request) const = 0;
    /// Upper bound on useful concurrent in-flight requests.
    virtual std::size_t max_concurrency() const { return 1; }
};

/// Scripted responses. Question-keyed entries are checked first in script
/// order (an entry may additionally require a substring of the prompt),
/// then regex patterns over the full prompt in script order.
class MockLlmClient final : public LlmClient {
public:
    explicit MockLlmClient(bool strict = true, std::string default_answer = "I don't know.",
                           std::size_t concurrency = 4);

    MockLlmClient& on_question(std::string question, std::string answer);
    MockLlmClient& on_question_containing(std::string question, std::string needle, std::string answer);
    MockLlmClient& on_pattern(const std::string& regex, std::string answer);

    /// JSONL lines {"match": {"question"?: str, "contains"?: str, "pattern"?: str}, "answer": str}.
    static MockLlmClient load(const std::filesystem::path& path, bool strict = true,
                              std::string default_answer = "I don't know.", std::size_t concurrency = 4);
    void save(const std::filesystem::path& path) const;

    LlmResponse complete(const LlmRequest& request) const override;
    std::size_t max_concurrency() const override { return concurrency_; }
    std::size_t size() const { return question_rules_.size() + pattern_rules_.size(); }

private:
    struct QuestionRule {
        std::string question;
        std::optional<std::string> needle;
        std::string answer;
    };
    struct PatternRule {
        std::string source;
        std::regex pattern;
        std::string answer;
    };

    bool strict_;
    std::string default_answer_;
    std::size_t concurrency_;
    std::vector<QuestionRule> question_rules_;
    std::vector<PatternRule> pattern_rules_;
};

struct HttpLlmConfig {
    std::string endpoint;
    std::string token_env = "FITRAG_LLM_TOKEN";
    int max_tokens = 256;
    std::size_t concurrency = 4;
    RetryPolicy retry;
};

/// JSON POST {"prompt", "max_tokens", "temperature": 0} -> {"text"}.
class HttpLlmClient final : public LlmClient {
public:
    explicit HttpLlmClient(HttpLlmConfig config);

    LlmResponse complete(const LlmRequest& request) const override;
    std::size_t max_concurrency() const override { return config_.concurrency; }

private:
    HttpLlmConfig config_;
    mutable std::mutex mutex_;
    mutable std::condition_variable slot_free_;
    mutable std::size_t in_flight_ = 0;
};

LlmResponse complete(const LlmClient& client, const LlmRequest& request);

/// Containment of a gold answer in the response.
bool is_correct(std::string_view response_text, std::span<const std::string> gold_answers);

}  // namespace fitrag
