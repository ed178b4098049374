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

#include <chrono>
#include <string>

namespace fitrag {

struct Endpoint {
    std::string scheme_host_port;  // "http://host:port"
    std::string path;              // "/v1/complete"
};

/// Splits "http://host:port/path" into the client address and request path.
Endpoint parse_endpoint(const std::string& url);

struct RetryPolicy {
    int retries = 2;  // extra attempts after the first
    std::chrono::milliseconds backoff{200};
    std::chrono::milliseconds timeout{30000};
};

struct HttpReply {
    int status = 0;
    std::string body;
    int attempts = 0;
};

/// POSTs a JSON body. Connection failures, 429 and 5xx are retried with
/// exponential backoff; the last reply is returned either way. Throws
/// TransportError only when no HTTP response was ever received.
HttpReply post_json_with_retry(const std::string& url, const std::string& body, const std::string& bearer_token,
                               const RetryPolicy& policy);

/// Value of the environment variable, or "" when unset or name is empty.
std::string env_or_empty(const std::string& name);

}  // namespace fitrag
