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

#include <atomic>
#include <filesystem>
#include <thread>

#include "fitrag/embedding.hpp"
#include "fitrag/errors.hpp"
#include "fitrag/llm.hpp"

// After Eigen: httplib leaks macros that break Eigen's product kernels.
#include <httplib.h>
#include <nlohmann/json.hpp>

using namespace fitrag;
using nlohmann::json;

namespace {

// Local server on a free port; stops on destruction.
class TestServer {
public:
    TestServer() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~TestServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Server& server() { return server_; }
    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

RetryPolicy fast_retry(int retries) {
    RetryPolicy p;
    p.retries = retries;
    p.backoff = std::chrono::milliseconds(1);
    p.timeout = std::chrono::milliseconds(2000);
    return p;
}

}  // namespace

TEST_CASE("render_prompt layout") {
    PromptTemplate t;
    t.instruction = "Answer.";
    t.suffix = "The answer is";
    const std::vector<std::string> passages = {"First\npassage.", "Second."};
    CHECK(render_prompt(t, "Who?", passages) ==
          "Answer.\nPassages:\n1. First passage.\n2. Second.\nQuestion: Who?\nThe answer is");

    PromptTemplate bare;
    bare.takes_passages = false;
    CHECK(render_prompt(bare, "Who?", passages) == "Question: Who?");
}

TEST_CASE("retrieve prompts need passages") {
    const std::vector<std::string> none;
    CHECK_THROWS_AS(build_retrieve_prompt("Q?", none), ContractError);
    const std::vector<std::string> one = {"P."};
    CHECK_THROWS_AS(build_retrieve_prompt("Q?", one, PromptLibrary::defaults(), TemplateKind::NoRetrieve),
                    ContractError);
    const LlmRequest r = build_retrieve_prompt("Q?", one);
    CHECK(r.passage_count == 1);
    CHECK(r.token_count == count_tokens(r.prompt));
    CHECK(r.prompt.find("1. P.") != std::string::npos);
}

TEST_CASE("no-retrieve prompt carries no passages") {
    const LlmRequest r = build_noretrieve_prompt("Who wrote Hamlet?");
    CHECK(r.kind == TemplateKind::NoRetrieve);
    CHECK(r.passage_count == 0);
    CHECK(r.prompt.find("Passages:") == std::string::npos);
    CHECK(r.prompt.find("Question: Who wrote Hamlet?") != std::string::npos);
}

TEST_CASE("prompt wording can be overridden") {
    const PromptLibrary lib = PromptLibrary::from_json(json{{"simple", {{"instruction", "Read."}, {"suffix", "A:"}}}});
    CHECK(lib.get(TemplateKind::Simple).instruction == "Read.");
    CHECK(lib.get(TemplateKind::Cot).instruction == PromptLibrary::defaults().get(TemplateKind::Cot).instruction);
    CHECK_THROWS_AS(PromptLibrary::from_json(json{{"fancy", json::object()}}), ConfigError);
    CHECK(parse_template_kind("no_retrieve") == TemplateKind::NoRetrieve);
    CHECK_THROWS_AS(parse_template_kind("other"), ConfigError);
}

TEST_CASE("mock client resolution order") {
    MockLlmClient m(true);
    m.on_question_containing("Q1", "needle", "from needle")
        .on_question("Q1", "from question")
        .on_pattern("Question: Q2", "from pattern");
    const std::vector<std::string> hay = {"a needle here"};
    const std::vector<std::string> plain = {"nothing"};
    CHECK(m.complete(build_retrieve_prompt("Q1", hay)).text == "from needle");
    CHECK(m.complete(build_retrieve_prompt("Q1", plain)).text == "from question");
    CHECK(m.complete(build_noretrieve_prompt("Q2")).text == "from pattern");
    CHECK_THROWS_AS(m.complete(build_noretrieve_prompt("Q3")), UnscriptedPromptError);

    MockLlmClient lenient(false, "dunno");
    CHECK(lenient.complete(build_noretrieve_prompt("Q3")).text == "dunno");
}

TEST_CASE("mock script save/load round trip") {
    MockLlmClient m;
    m.on_question("Q1", "A1").on_question_containing("Q2", "x", "A2").on_pattern("^Z", "A3");
    const auto p = std::filesystem::temp_directory_path() / "fitrag-unit-mock.jsonl";
    m.save(p);
    const MockLlmClient back = MockLlmClient::load(p);
    CHECK(back.size() == 3);
    CHECK(back.complete(build_noretrieve_prompt("Q1")).text == "A1");
    CHECK_THROWS_AS(MockLlmClient().on_pattern("(", "x"), ConfigError);
}

TEST_CASE("is_correct uses containment after normalization") {
    const std::vector<std::string> gold = {"George Washington"};
    CHECK(is_correct("It was george washington, the general.", gold));
    CHECK_FALSE(is_correct("It was Adams.", gold));
}

TEST_CASE("http retries a server error and then succeeds") {
    TestServer srv;
    std::atomic<int> calls{0};
    srv.server().Post("/complete", [&](const httplib::Request& req, httplib::Response& res) {
        if (calls++ == 0) {
            res.status = 500;
            return;
        }
        const json body = json::parse(req.body);
        CHECK(body["temperature"] == 0);
        res.set_content(json{{"text", "Paris"}}.dump(), "application/json");
    });
    HttpLlmConfig cfg;
    cfg.endpoint = srv.url("/complete");
    cfg.retry = fast_retry(2);
    HttpLlmClient client(cfg);
    CHECK(client.complete(build_noretrieve_prompt("Capital?")).text == "Paris");
    CHECK(calls == 2);
}

TEST_CASE("http gives up after the retry budget") {
    TestServer srv;
    std::atomic<int> calls{0};
    srv.server().Post("/complete", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 503;
    });
    const HttpReply r = post_json_with_retry(srv.url("/complete"), "{}", "", fast_retry(2));
    CHECK(r.status == 503);
    CHECK(r.attempts == 3);
    CHECK(calls == 3);

    HttpLlmConfig cfg;
    cfg.endpoint = srv.url("/complete");
    cfg.retry = fast_retry(0);
    CHECK_THROWS_AS(HttpLlmClient(cfg).complete(build_noretrieve_prompt("Q")), TransportError);
}

TEST_CASE("client errors are not retried") {
    TestServer srv;
    std::atomic<int> calls{0};
    srv.server().Post("/x", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 400;
    });
    CHECK(post_json_with_retry(srv.url("/x"), "{}", "", fast_retry(3)).status == 400);
    CHECK(calls == 1);
}

TEST_CASE("unreachable endpoint is a transport error") {
    int port = 0;
    {
        httplib::Server s;
        port = s.bind_to_any_port("127.0.0.1");
    }
    CHECK_THROWS_AS(post_json_with_retry("http://127.0.0.1:" + std::to_string(port) + "/x", "{}", "", fast_retry(1)),
                    TransportError);
}

TEST_CASE("remote embedder batches and normalizes") {
    TestServer srv;
    std::atomic<int> calls{0};
    srv.server().Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        const json body = json::parse(req.body);
        json rows = json::array();
        for (const auto& t : body["texts"]) rows.push_back({static_cast<double>(t.get<std::string>().size()), 0.0, 3.0});
        res.set_content(json{{"embeddings", rows}}.dump(), "application/json");
    });
    RemoteEmbedderConfig cfg;
    cfg.endpoint = srv.url("/embed");
    cfg.dim = 3;
    cfg.batch_size = 2;
    cfg.retry = fast_retry(0);
    RemoteEmbedder e(cfg);
    const std::vector<std::string> texts = {"abcd", "a", "abc"};
    const auto out = e.embed_batch(texts);
    REQUIRE(out.size() == 3);
    CHECK(calls == 2);
    CHECK(out[0][0] == doctest::Approx(0.8));
    CHECK(out[0][2] == doctest::Approx(0.6));
    CHECK(out[1].norm() == doctest::Approx(1.0));

    RemoteEmbedderConfig wrong = cfg;
    wrong.dim = 4;
    CHECK_THROWS_AS(RemoteEmbedder(wrong).embed_text("x"), ProviderError);
}
