// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sslm/core/error.hpp"

namespace sslm {

enum class CostCategory { generic, specialization };

inline std::string to_string(CostCategory c) { return c == CostCategory::generic ? "generic" : "specialization"; }

struct LogRow {
  std::size_t step = 0;
  std::optional<double> train_loss;
  std::optional<double> val_loss;
  double lr = 0.0;
  double cost_units = 0.0;  // cumulative
};

struct TrainLog {
  std::vector<LogRow> rows;
  CostCategory category = CostCategory::generic;
  std::size_t steps = 0;
  std::optional<std::size_t> best_step;
  std::optional<double> best_val_loss;
  bool stopped_early = false;

  double cost_units() const { return rows.empty() ? 0.0 : rows.back().cost_units; }

  std::vector<double> val_losses() const {
    std::vector<double> out;
    for (const auto& r : rows) {
      if (r.val_loss) out.push_back(*r.val_loss);
    }
    return out;
  }

  std::optional<double> final_train_loss() const {
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
      if (it->train_loss) return it->train_loss;
    }
    return std::nullopt;
  }

  void append(const TrainLog& other) {
    const double base = cost_units();
    for (auto r : other.rows) {
      r.cost_units += base;
      rows.push_back(r);
    }
    steps += other.steps;
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(9);
  s << v;
  return s.str();
}

}  // namespace detail

inline std::string to_csv(const TrainLog& log) {
  std::string out = "step,train_loss,val_loss,lr,cost_units\n";
  for (const auto& r : log.rows) {
    out += std::to_string(r.step) + ",";
    out += (r.train_loss ? detail::fmt_double(*r.train_loss) : "") + ",";
    out += (r.val_loss ? detail::fmt_double(*r.val_loss) : "") + ",";
    out += detail::fmt_double(r.lr) + "," + detail::fmt_double(r.cost_units) + "\n";
  }
  return out;
}

inline nlohmann::json summary_json(const TrainLog& log) {
  nlohmann::json j = {{"steps", log.steps},
                      {"cost_units", log.cost_units()},
                      {"cost_category", to_string(log.category)},
                      {"stopped_early", log.stopped_early}};
  if (const auto f = log.final_train_loss()) j["final_train_loss"] = *f;
  if (log.best_step) j["best_step"] = *log.best_step;
  if (log.best_val_loss) j["best_val_loss"] = *log.best_val_loss;
  return j;
}

inline void write_log(const std::filesystem::path& stem, const TrainLog& log) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  const auto csv_path = std::filesystem::path(stem.string() + ".csv");
  const auto json_path = std::filesystem::path(stem.string() + ".json");
  std::ofstream csv(csv_path);
  if (!csv) throw IoError(csv_path.string(), "cannot open for writing");
  csv << to_csv(log);
  std::ofstream js(json_path);
  if (!js) throw IoError(json_path.string(), "cannot open for writing");
  js << summary_json(log).dump(2) << "\n";
}

}  // namespace sslm
