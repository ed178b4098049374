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

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fitrag/rng.hpp"

namespace fitrag {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    // Split on sign so exp never overflows.
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

constexpr double kProbabilityEpsilon = 1e-7;

template <typename Scalar>
Scalar clamp_probability(Scalar p) {
    const Scalar eps = Scalar(kProbabilityEpsilon);
    return p < eps ? eps : (p > Scalar(1) - eps ? Scalar(1) - eps : p);
}

/// Binary cross-entropy of one output with the probability clamped to [eps, 1 - eps].
template <typename Scalar>
Scalar binary_cross_entropy(Scalar p, Scalar y) {
    const Scalar q = clamp_probability(p);
    return -(y * std::log(q) + (Scalar(1) - y) * std::log(Scalar(1) - q));
}

/// d BCE(sigmoid(z), y) / dz of the unclamped loss. The clamp only guards
/// log(0) in the reported value; zeroing the gradient there would leave
/// confidently wrong outputs stuck.
template <typename Scalar>
Scalar binary_cross_entropy_logit_grad(Scalar z, Scalar y) {
    return sigmoid(z) - y;
}

/// Fully connected network with tanh hidden units and a linear output layer
/// (the caller applies sigmoid). Parameters live in one flat vector laid out
/// layer by layer as [W_0 (col-major), b_0, W_1, b_1, ...]; samples are columns.
template <typename Scalar = double>
class Mlp {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Index = Eigen::Index;

    struct Tape {
        // activations[0] is the input, activations[l] the output of hidden layer l.
        std::vector<Matrix> activations;
    };

    Mlp() = default;

    explicit Mlp(std::vector<Index> widths) : widths_(std::move(widths)) {
        if (widths_.size() < 2) throw std::invalid_argument("an MLP needs at least input and output widths");
        Index n = 0;
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            if (widths_[l] <= 0 || widths_[l + 1] <= 0) throw std::invalid_argument("layer widths must be positive");
            offsets_.push_back(n);
            n += widths_[l + 1] * widths_[l] + widths_[l + 1];
        }
        params_ = Vector::Zero(n);
    }

    const std::vector<Index>& widths() const { return widths_; }
    Index input_size() const { return widths_.front(); }
    Index output_size() const { return widths_.back(); }
    std::size_t num_layers() const { return offsets_.size(); }
    Index num_params() const { return params_.size(); }

    const Vector& params() const { return params_; }
    Vector& params() { return params_; }
    void set_params(const Vector& p) {
        if (p.size() != params_.size()) throw std::invalid_argument("parameter vector has the wrong size");
        params_ = p;
    }

    /// Glorot-uniform weights, zero biases.
    void initialize(Rng& rng) {
        params_.setZero();
        for (std::size_t l = 0; l < num_layers(); ++l) {
            const Scalar limit = std::sqrt(Scalar(6) / Scalar(widths_[l] + widths_[l + 1]));
            auto w = weight(l);
            for (Index j = 0; j < w.cols(); ++j)
                for (Index i = 0; i < w.rows(); ++i) w(i, j) = Scalar(rng.uniform(-1.0, 1.0)) * limit;
        }
    }

    Eigen::Map<Matrix> weight(std::size_t l) {
        return Eigen::Map<Matrix>(params_.data() + offsets_[l], widths_[l + 1], widths_[l]);
    }
    Eigen::Map<const Matrix> weight(std::size_t l) const {
        return Eigen::Map<const Matrix>(params_.data() + offsets_[l], widths_[l + 1], widths_[l]);
    }
    Eigen::Map<Vector> bias(std::size_t l) {
        return Eigen::Map<Vector>(params_.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]);
    }
    Eigen::Map<const Vector> bias(std::size_t l) const {
        return Eigen::Map<const Vector>(params_.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]);
    }

    /// Output logits, output_size() x n.
    Matrix forward(const Eigen::Ref<const Matrix>& inputs) const {
        Tape tape;
        return forward(inputs, tape);
    }

    Matrix forward(const Eigen::Ref<const Matrix>& inputs, Tape& tape) const {
        if (inputs.rows() != input_size()) throw std::invalid_argument("input has the wrong number of features");
        tape.activations.clear();
        tape.activations.emplace_back(inputs);
        for (std::size_t l = 0; l < num_layers(); ++l) {
            Matrix z = weight(l) * tape.activations.back();
            z.colwise() += bias(l);
            if (l + 1 == num_layers()) return z;
            tape.activations.emplace_back(z.array().tanh().matrix());
        }
        return {};
    }

    /// Gradient of a scalar loss w.r.t. the parameters, given its gradient
    /// w.r.t. the logits returned by the forward pass that filled `tape`.
    Vector backward(const Tape& tape, const Eigen::Ref<const Matrix>& logit_grad) const {
        Vector grad = Vector::Zero(num_params());
        Matrix delta = logit_grad;
        for (std::size_t l = num_layers(); l-- > 0;) {
            const Matrix& a = tape.activations[l];
            Eigen::Map<Matrix>(grad.data() + offsets_[l], widths_[l + 1], widths_[l]).noalias() = delta * a.transpose();
            Eigen::Map<Vector>(grad.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]) =
                delta.rowwise().sum();
            if (l > 0) {
                Matrix back = weight(l).transpose() * delta;
                delta = (back.array() * (Scalar(1) - a.array().square())).matrix();
            }
        }
        return grad;
    }

private:
    std::vector<Index> widths_;
    std::vector<Index> offsets_;
    Vector params_;
};

/// Adam over a flat parameter vector.
template <typename Scalar = double>
class Adam {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Adam(Eigen::Index n, Scalar lr, Scalar beta1 = 0.9, Scalar beta2 = 0.999, Scalar eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

    void step(Vector& params, const Vector& grad) {
        ++t_;
        m_ = beta1_ * m_ + (Scalar(1) - beta1_) * grad;
        v_ = beta2_ * v_ + (Scalar(1) - beta2_) * grad.cwiseAbs2();
        const Scalar c1 = Scalar(1) - std::pow(beta1_, Scalar(t_));
        const Scalar c2 = Scalar(1) - std::pow(beta2_, Scalar(t_));
        params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
    }

private:
    Scalar lr_, beta1_, beta2_, eps_;
    Vector m_, v_;
    long t_ = 0;
};

}  // namespace fitrag
