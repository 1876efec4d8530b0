// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sslm/core/error.hpp"
#include "sslm/core/tensor.hpp"

namespace sslm {

// Flat list of the tensors of any parameter pack exposing for_each(name, tensor).
template <typename T, typename P>
std::vector<Tensor<T>*> tensor_list(P& pack) {
  std::vector<Tensor<T>*> out;
  pack.for_each([&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
double global_norm(const std::vector<Tensor<T>*>& grads) {
  double s = 0.0;
  for (const auto* g : grads) {
    for (T v : g->data) s += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(s);
}

// Rescales so the global norm is at most max_norm; returns the pre-clip norm.
template <typename T>
double clip_global_norm(const std::vector<Tensor<T>*>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto* g : grads) g->vec() *= scale;
  }
  return norm;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction.
template <typename T>
class Adam {
 public:
  Adam(const std::vector<Tensor<T>*>& params, AdamConfig cfg) : cfg_(cfg) {
    for (const auto* p : params) {
      m_.push_back(p->zeros_like());
      v_.push_back(p->zeros_like());
    }
  }

  void step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>*>& grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw ConfigError("optimizer state mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T step_size = static_cast<T>(lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(cfg_.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      T* p = params[i]->ptr();
      const T* g = grads[i]->ptr();
      T* m = m_[i].ptr();
      T* v = v_[i].ptr();
      const std::size_t n = params[i]->numel();
      for (std::size_t j = 0; j < n; ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        p[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace sslm
