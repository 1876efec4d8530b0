// SPDX-License-Identifier: Apache-2.0
#pragma once

// Cost proxy: one unit is one parameter touched by one token position in one training
// step, i.e. units = steps * batch * context * params. Proportional to training FLOPs.

#include <cstdint>
#include <limits>
#include <string>

#include "json.hpp"
#include "sslm/core/error.hpp"
#include "sslm/model/config.hpp"
#include "sslm/model/count.hpp"

namespace sslm {

inline constexpr const char* kCostUnitFormula = "units = steps x batch x context x params";

struct CostModel {
  double c_generic = 0.0;
  double c_specialization = 0.0;

  void validate() const {
    if (!(c_generic >= 0.0) || !(c_specialization >= 0.0)) throw ConfigError("cost model entries must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const CostModel& c) {
  j = {{"c_generic", c.c_generic}, {"c_specialization", c.c_specialization}};
}
inline void from_json(const nlohmann::json& j, CostModel& c) {
  c.c_generic = j.at("c_generic").get<double>();
  c.c_specialization = j.at("c_specialization").get<double>();
}

inline double total_cost(const CostModel& c, double n_tasks) {
  if (n_tasks < 0) throw ConfigError("number of tasks must be >= 0");
  return c.c_generic + c.c_specialization * n_tasks;
}

// Number of tasks at which the two total-cost lines meet. Identical models meet
// everywhere and report 0; parallel distinct lines, and lines that only meet at N < 0,
// never meet and report +inf.
inline double crossover_tasks(const CostModel& a, const CostModel& b) {
  const double ds = a.c_specialization - b.c_specialization;
  const double dg = b.c_generic - a.c_generic;
  if (ds == 0.0) return dg == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  const double n = dg / ds;
  return n < 0.0 ? std::numeric_limits<double>::infinity() : n;
}

inline double cost_units(std::uint64_t steps, std::uint64_t batch, std::uint64_t context, std::uint64_t params) {
  return static_cast<double>(steps) * static_cast<double>(batch) * static_cast<double>(context) *
         static_cast<double>(params);
}

// Multiply-adds to materialize one expert's MLP matrices in every layer.
inline double projection_macs(const ModelConfig& c, const PnConfig& pn) {
  const double per_layer = static_cast<double>(pn.m * pn.h) +
                           2.0 * static_cast<double>(pn.h) * static_cast<double>(c.model_dim) *
                               static_cast<double>(c.inner_dim);
  return static_cast<double>(c.num_layers) * per_layer;
}

// One PN step: the materialized expert runs like an SLM and every distinct expert in the
// batch pays its projection once.
inline double pn_step_units(const ModelConfig& c, const PnConfig& pn, std::uint64_t batch,
                            std::size_t distinct_experts) {
  return cost_units(1, batch, c.context_length, slm_param_count(c)) +
         static_cast<double>(distinct_experts) * projection_macs(c, pn);
}

}  // namespace sslm
