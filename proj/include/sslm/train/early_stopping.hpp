// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <optional>

#include "sslm/core/error.hpp"

namespace sslm {

// Tracks validation losses; stops once `patience` evaluations in a row fail to strictly
// improve on the best so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {
    if (patience == 0) throw ConfigError("patience must be >= 1");
  }

  // Returns true when this loss is the new best.
  bool observe(double loss) {
    const std::size_t idx = count_++;
    if (loss < best_) {
      best_ = loss;
      best_index_ = idx;
      bad_ = 0;
      return true;
    }
    ++bad_;
    return false;
  }

  bool should_stop() const { return bad_ >= patience_; }
  std::optional<std::size_t> best_index() const { return best_index_; }
  double best() const { return best_; }
  std::size_t evaluations() const { return count_; }

 private:
  std::size_t patience_;
  std::size_t count_ = 0;
  std::size_t bad_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
  std::optional<std::size_t> best_index_;
};

}  // namespace sslm
