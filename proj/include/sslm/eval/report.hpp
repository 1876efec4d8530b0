// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sslm/eval/cost.hpp"
#include "sslm/eval/perplexity.hpp"

namespace sslm {

struct EvalReport {
  std::string model_id;
  std::map<std::string, NllResult> domains;
  double macro_nll = 0.0;
  double macro_ppl = 0.0;
  nlohmann::json cost;  // cost ledger reference, free-form
};

inline EvalReport make_report(std::string model_id, std::map<std::string, NllResult> domains,
                              nlohmann::json cost = nlohmann::json::object()) {
  if (domains.empty()) throw ConfigError("report needs at least one domain");
  EvalReport r;
  r.model_id = std::move(model_id);
  r.domains = std::move(domains);
  std::map<std::string, double> nlls;
  for (const auto& [d, v] : r.domains) nlls.emplace(d, v.nll);
  r.macro_ppl = macro_average(nlls);
  double s = 0.0;
  for (const auto& [_, v] : nlls) s += v;
  r.macro_nll = s / static_cast<double>(nlls.size());
  r.cost = std::move(cost);
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json domains = nlohmann::json::object();
  for (const auto& [d, v] : r.domains) domains[d] = {{"tokens", v.tokens}, {"nll", v.nll}, {"ppl", v.ppl}};
  return {{"model", r.model_id},   {"domains", domains}, {"macro_nll", r.macro_nll},
          {"macro_ppl", r.macro_ppl}, {"cost", r.cost},  {"cost_unit", kCostUnitFormula}};
}

inline std::string to_csv(const EvalReport& r) {
  std::ostringstream s;
  s.precision(10);
  s << "domain,tokens,nll,ppl\n";
  for (const auto& [d, v] : r.domains) s << d << "," << v.tokens << "," << v.nll << "," << v.ppl << "\n";
  return s.str();
}

// Rows (N, method, total_cost) for every method and task count.
inline std::string cost_curve_csv(const std::map<std::string, CostModel>& methods, const std::vector<double>& tasks) {
  std::ostringstream s;
  s.precision(12);
  s << "N,method,total_cost\n";
  for (double n : tasks) {
    for (const auto& [name, c] : methods) s << n << "," << name << "," << total_cost(c, n) << "\n";
  }
  return s.str();
}

}  // namespace sslm
