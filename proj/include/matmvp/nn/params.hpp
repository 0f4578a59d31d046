// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "matmvp/core/rng.hpp"
#include "matmvp/nn/array.hpp"

namespace matmvp::nn {

// Ordered named parameter set; registration order is the canonical order for
// checkpoints and optimizer state.
template <class S>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Arr<S> value;
        Arr<S> grad;
    };

    int add(const std::string& name, std::vector<int> shape) {
        Entry e;
        e.name = name;
        e.value = Arr<S>(shape);
        e.grad = Arr<S>(std::move(shape));
        entries_.push_back(std::move(e));
        return static_cast<int>(entries_.size()) - 1;
    }

    int count() const { return static_cast<int>(entries_.size()); }
    Entry& entry(int i) { return entries_[static_cast<size_t>(i)]; }
    const Entry& entry(int i) const { return entries_[static_cast<size_t>(i)]; }
    Arr<S>& value(int i) { return entries_[static_cast<size_t>(i)].value; }
    Arr<S>& grad(int i) { return entries_[static_cast<size_t>(i)].grad; }

    int64_t total_size() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

    void zero_grads() {
        for (auto& e : entries_)
            std::fill(e.grad.v.begin(), e.grad.v.end(), S(0));
    }

    bool grads_finite() const {
        for (const auto& e : entries_)
            for (S g : e.grad.v)
                if (!std::isfinite(static_cast<double>(g))) return false;
        return true;
    }

private:
    std::vector<Entry> entries_;
};

// Initializers.
template <class S>
void init_normal(Arr<S>& a, Rng& rng, double stddev) {
    for (auto& v : a.v) v = static_cast<S>(rng.gaussian() * stddev);
}

template <class S>
void init_he(Arr<S>& a, Rng& rng, int fan_in) {
    init_normal(a, rng, std::sqrt(2.0 / fan_in));
}

template <class S>
void init_xavier(Arr<S>& a, Rng& rng, int fan_in) {
    init_normal(a, rng, std::sqrt(1.0 / fan_in));
}

template <class S>
void init_ones(Arr<S>& a) {
    std::fill(a.v.begin(), a.v.end(), S(1));
}

// AdamW with decoupled weight decay. Norm scales/biases and embeddings are
// excluded from decay by the caller through the mask.
template <class S>
class AdamW {
public:
    AdamW(ParamStore<S>& params, double beta1, double beta2, double eps, double weight_decay,
          std::vector<bool> decay_mask)
        : params_(params),
          beta1_(beta1),
          beta2_(beta2),
          eps_(eps),
          weight_decay_(weight_decay),
          decay_mask_(std::move(decay_mask)) {
        m_.reserve(static_cast<size_t>(params.count()));
        v_.reserve(static_cast<size_t>(params.count()));
        for (int i = 0; i < params.count(); ++i) {
            m_.emplace_back(params.value(i).shape);
            v_.emplace_back(params.value(i).shape);
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (int i = 0; i < params_.count(); ++i) {
            Arr<S>& w = params_.value(i);
            const Arr<S>& g = params_.grad(i);
            Arr<S>& m = m_[static_cast<size_t>(i)];
            Arr<S>& v = v_[static_cast<size_t>(i)];
            const bool decay = decay_mask_.empty() ? true : decay_mask_[static_cast<size_t>(i)];
            for (int64_t j = 0; j < w.size(); ++j) {
                const double gj = static_cast<double>(g.v[static_cast<size_t>(j)]);
                const double mj = beta1_ * static_cast<double>(m.v[static_cast<size_t>(j)]) + (1.0 - beta1_) * gj;
                const double vj = beta2_ * static_cast<double>(v.v[static_cast<size_t>(j)]) + (1.0 - beta2_) * gj * gj;
                m.v[static_cast<size_t>(j)] = static_cast<S>(mj);
                v.v[static_cast<size_t>(j)] = static_cast<S>(vj);
                double wj = static_cast<double>(w.v[static_cast<size_t>(j)]);
                if (decay && weight_decay_ > 0.0) wj -= lr * weight_decay_ * wj;
                wj -= lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps_);
                w.v[static_cast<size_t>(j)] = static_cast<S>(wj);
            }
        }
    }

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    std::vector<Arr<S>>& m_state() { return m_; }
    std::vector<Arr<S>>& v_state() { return v_; }

private:
    ParamStore<S>& params_;
    double beta1_, beta2_, eps_, weight_decay_;
    std::vector<bool> decay_mask_;
    std::vector<Arr<S>> m_, v_;
    int64_t t_ = 0;
};

}  // namespace matmvp::nn
