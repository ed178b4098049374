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

// Reference computations written independently of the library code paths
// they check: plain loops, no shared helpers.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fitrag/bilabel.hpp"
#include "fitrag/llm.hpp"

namespace fitrag::oracle {

inline std::string lower(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Case-insensitive substring test; adequate for the single-word answers of
// the synthetic worlds.
inline bool mentions(const std::string& text, const std::vector<std::string>& answers) {
    const std::string t = lower(text);
    for (const std::string& a : answers)
        if (!a.empty() && t.find(lower(a)) != std::string::npos) return true;
    return false;
}

// Forward pass of a tanh MLP by explicit loops over the weight entries.
inline std::vector<double> mlp_logits(const Mlp<double>& net, const Eigen::VectorXd& x) {
    std::vector<double> a(x.data(), x.data() + x.size());
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const auto w = net.weight(l);
        const auto b = net.bias(l);
        std::vector<double> z(static_cast<std::size_t>(w.rows()), 0.0);
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            double s = b[i];
            for (Eigen::Index j = 0; j < w.cols(); ++j) s += w(i, j) * a[static_cast<std::size_t>(j)];
            z[static_cast<std::size_t>(i)] = l + 1 == net.num_layers() ? s : std::tanh(s);
        }
        a = std::move(z);
    }
    return a;
}

inline double bce(double logit, double y) {
    double p = 1.0 / (1.0 + std::exp(-logit));
    p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
    return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

// (1/normalizer) * sum of c_i * (bce_ans + bce_pref), c_i by matched status.
inline double bilabel_loss(const Mlp<double>& head, const BiLabelBatch& batch, double matched_coef,
                           double mismatched_coef, double normalizer) {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto z = mlp_logits(head, batch.features.col(static_cast<Eigen::Index>(i)));
        const double y0 = batch.labels(0, static_cast<Eigen::Index>(i));
        const double y1 = batch.labels(1, static_cast<Eigen::Index>(i));
        const double c = y0 == y1 ? matched_coef : mismatched_coef;
        total += c * (bce(z[0], y0) + bce(z[1], y1));
    }
    return total / normalizer;
}

inline double mean_loss(const Mlp<double>& head, const BiLabelBatch& batch) {
    return bilabel_loss(head, batch, 1.0, 1.0, static_cast<double>(batch.size()));
}

inline double rel_error(double a, double b, double floor = 1e-7) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Wraps a client and records every request it forwards.
class RecordingLlm final : public LlmClient {
public:
    explicit RecordingLlm(std::shared_ptr<const LlmClient> inner) : inner_(std::move(inner)) {}
    LlmResponse complete(const LlmRequest& request) const override {
        {
            std::lock_guard lock(mutex_);
            requests_.push_back(request);
        }
        return inner_->complete(request);
    }
    std::size_t max_concurrency() const override { return inner_->max_concurrency(); }
    std::vector<LlmRequest> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }

private:
    std::shared_ptr<const LlmClient> inner_;
    mutable std::mutex mutex_;
    mutable std::vector<LlmRequest> requests_;
};

}  // namespace fitrag::oracle
