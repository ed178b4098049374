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
#include <stdexcept>
#include <string>

namespace fitrag {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file; line is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConflictError : public Error {
public:
    using Error::Error;
};

// A precondition on the arguments of an operation was violated.
class ContractError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IntegrityError : public Error {
public:
    using Error::Error;
};

class ProviderError : public Error {
public:
    ProviderError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

class TransportError : public Error {
public:
    using Error::Error;
};

class UnscriptedPromptError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class ImbalanceDegenerateError : public TrainingError {
public:
    using TrainingError::TrainingError;
};

class AnnotationError : public Error {
public:
    AnnotationError(const std::string& question_id, const std::string& doc_id, const std::string& cause)
        : Error("annotation failed for question '" + question_id + "' doc '" + doc_id + "': " + cause),
          question_id_(question_id), doc_id_(doc_id) {}
    const std::string& question_id() const noexcept { return question_id_; }
    const std::string& doc_id() const noexcept { return doc_id_; }

private:
    std::string question_id_;
    std::string doc_id_;
};

class UndefinedScoreError : public Error {
public:
    using Error::Error;
};

// Pipeline failure attributed to the stage that raised it. `transport` marks
// failures of a remote service rather than of a local component.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& cause, bool transport = false)
        : Error(stage + ": " + cause), stage_(std::move(stage)), transport_(transport) {}
    const std::string& stage() const noexcept { return stage_; }
    bool transport() const noexcept { return transport_; }

private:
    std::string stage_;
    bool transport_;
};

}  // namespace fitrag
