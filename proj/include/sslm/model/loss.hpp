// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sslm/core/error.hpp"
#include "sslm/core/tensor.hpp"
#include "sslm/model/batch.hpp"

namespace sslm {

struct LossSum {
  double sum = 0.0;
  std::size_t count = 0;

  double mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }

  LossSum& operator+=(const LossSum& o) {
    sum += o.sum;
    count += o.count;
    return *this;
  }
};

namespace detail {

// log-sum-exp of row / temperature.
template <typename Row>
double log_sum_exp(const Row& row, double temperature = 1.0) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < row.size(); ++j) mx = std::max(mx, static_cast<double>(row(j)) / temperature);
  double s = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) s += std::exp(static_cast<double>(row(j)) / temperature - mx);
  return mx + std::log(s);
}

}  // namespace detail

// Sum of -log softmax(logits)[target] over rows whose target is not ignored. When
// dlogits is given it receives scale * (softmax - onehot) on those rows and zero elsewhere.
template <typename T>
LossSum cross_entropy(const RowMatrix<T>& logits, std::span<const TokenId> targets, RowMatrix<T>* dlogits = nullptr,
                      T scale = T(1)) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw ConfigError("logits and targets disagree on row count");
  }
  LossSum out;
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const TokenId y = targets[static_cast<std::size_t>(i)];
    if (y == kIgnoreTarget) continue;
    const double lse = detail::log_sum_exp(logits.row(i));
    out.sum += lse - static_cast<double>(logits(i, y));
    ++out.count;
    if (dlogits) {
      for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        (*dlogits)(i, j) = static_cast<T>(std::exp(static_cast<double>(logits(i, j)) - lse)) * scale;
      }
      (*dlogits)(i, y) -= scale;
    }
  }
  return out;
}

// Mean next-token negative log-likelihood in nats.
template <typename T>
double nll(const RowMatrix<T>& logits, std::span<const TokenId> targets) {
  return cross_entropy<T>(logits, targets).mean();
}

struct DistillConfig {
  double mix_weight = 0.5;   // lambda: weight of the teacher term
  double temperature = 1.0;  // tau

  void validate() const {
    if (!(mix_weight >= 0.0 && mix_weight <= 1.0)) throw ConfigError("distill.mix_weight must be in [0, 1]");
    if (!(temperature > 0.0)) throw ConfigError("distill.temperature must be > 0");
  }
};

// Per token: (1 - lambda) * CE(data target) + lambda * tau^2 * CE(softmax(teacher / tau),
// softmax(student / tau)). With lambda = 0 this is exactly cross_entropy.
template <typename T>
LossSum distill_loss(const RowMatrix<T>& logits, const RowMatrix<T>& teacher_logits, std::span<const TokenId> targets,
                     const DistillConfig& cfg, RowMatrix<T>* dlogits = nullptr, T scale = T(1)) {
  if (cfg.mix_weight == 0.0) return cross_entropy<T>(logits, targets, dlogits, scale);
  if (teacher_logits.rows() != logits.rows() || teacher_logits.cols() != logits.cols()) {
    throw ConfigError("teacher and student logits differ in shape");
  }
  const double lambda = cfg.mix_weight, tau = cfg.temperature;
  LossSum out;
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  const auto v = logits.cols();
  std::vector<double> q(static_cast<std::size_t>(v)), pt(static_cast<std::size_t>(v));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const TokenId y = targets[static_cast<std::size_t>(i)];
    if (y == kIgnoreTarget) continue;
    const double lse = detail::log_sum_exp(logits.row(i));
    const double lse_s = detail::log_sum_exp(logits.row(i), tau);
    const double lse_t = detail::log_sum_exp(teacher_logits.row(i), tau);
    double soft = 0.0;
    for (Eigen::Index j = 0; j < v; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const double log_q = static_cast<double>(logits(i, j)) / tau - lse_s;
      pt[ju] = std::exp(static_cast<double>(teacher_logits(i, j)) / tau - lse_t);
      q[ju] = std::exp(log_q);
      soft -= pt[ju] * log_q;
    }
    const double hard = lse - static_cast<double>(logits(i, y));
    out.sum += (1.0 - lambda) * hard + lambda * tau * tau * soft;
    ++out.count;
    if (dlogits) {
      for (Eigen::Index j = 0; j < v; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const double p = std::exp(static_cast<double>(logits(i, j)) - lse);
        (*dlogits)(i, j) = static_cast<T>(((1.0 - lambda) * p + lambda * tau * (q[ju] - pt[ju])) * static_cast<double>(scale));
      }
      (*dlogits)(i, y) -= static_cast<T>((1.0 - lambda) * static_cast<double>(scale));
    }
  }
  return out;
}

}  // namespace sslm
