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

#include "fitrag/http.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "fitrag/errors.hpp"

namespace fitrag {

Endpoint parse_endpoint(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("endpoint URL must include a scheme: '" + url + "'");
    const auto path_start = url.find('/', scheme + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

static bool retryable_status(int status) { return status == 429 || status >= 500; }

HttpReply post_json_with_retry(const std::string& url, const std::string& body, const std::string& bearer_token,
                               const RetryPolicy& policy) {
    const Endpoint ep = parse_endpoint(url);
    httplib::Client client(ep.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(policy.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(policy.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);

    HttpReply reply;
    std::string last_error = "no attempt made";
    bool got_response = false;
    const int attempts = 1 + std::max(0, policy.retries);
    for (int i = 0; i < attempts; ++i) {
        if (i > 0) std::this_thread::sleep_for(policy.backoff * (1 << (i - 1)));
        reply.attempts = i + 1;
        auto res = client.Post(ep.path, headers, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        got_response = true;
        reply.status = res->status;
        reply.body = res->body;
        if (!retryable_status(res->status)) return reply;
        last_error = "HTTP " + std::to_string(res->status);
    }
    if (!got_response) {
        throw TransportError("POST " + url + " failed after " + std::to_string(attempts) + " attempts: " + last_error);
    }
    return reply;
}

std::string env_or_empty(const std::string& name) {
    if (name.empty()) return {};
    const char* v = std::getenv(name.c_str());
    return v ? std::string(v) : std::string();
}

}  // namespace fitrag
