#pragma once

#include <string>

#include "lgtse/common/error.hpp"
#include "lgtse/guidance/context.hpp"

namespace lgtse {

// The four training-time data usages. Exactly one is active per run:
//   base       - plain batches, original dataset, [Y, G] input
//   concat     - plain batches, original dataset, [Y, Y_d, G] input
//   on_the_fly - each batch doubled with denoised twins, [Y(or Y_d), G] input
//   offline    - plain batches over the merged (original + denoised) dataset
enum class Strategy { base, concat, on_the_fly, offline };

struct StrategyDescriptor {
  Strategy strategy = Strategy::base;
  std::string name = "base";
  StackLayout layout = StackLayout::base_concat;
  bool enlarged_batches = false;
  bool merged_dataset = false;
};

inline StrategyDescriptor select_strategy(const std::string& name) {
  StrategyDescriptor d;
  d.name = name;
  if (name == "base") {
    d.strategy = Strategy::base;
  } else if (name == "concat") {
    d.strategy = Strategy::concat;
    d.layout = StackLayout::distortion_concat;
  } else if (name == "on_the_fly") {
    d.strategy = Strategy::on_the_fly;
    d.enlarged_batches = true;
  } else if (name == "offline") {
    d.strategy = Strategy::offline;
    d.merged_dataset = true;
  } else {
    throw ConfigError("unknown strategy '" + name +
                      "' (expected base|concat|on_the_fly|offline)");
  }
  return d;
}

inline std::size_t backbone_in_channels(const StrategyDescriptor& d) {
  return d.layout == StackLayout::distortion_concat ? 6 : 4;
}

}  // namespace lgtse
