#pragma once

#include <cmath>
#include <cstddef>

#include "lgtse/common/error.hpp"

namespace lgtse {

// Learning-rate schedule: x0.98 every two epochs for the first 100 epochs, a
// hold at the epoch-100 value, then x0.9 every two epochs over the final 20
// epochs of the run. Runs that never reach epoch 100 stay on the 0.98 law
// throughout.
inline double lr_at_epoch(double lr0, std::size_t epochs_total, std::size_t epoch) {
  if (epoch >= epochs_total) throw InvalidInputError("lr_at_epoch: epoch out of range");
  if (epoch < 100) return lr0 * std::pow(0.98, static_cast<double>(epoch / 2));
  const double base100 = lr0 * std::pow(0.98, 50.0);
  const std::size_t tail_start = epochs_total > 120 ? epochs_total - 20 : 100;
  if (epoch < tail_start) return base100;
  return base100 * std::pow(0.9, static_cast<double>((epoch - tail_start) / 2));
}

}  // namespace lgtse
