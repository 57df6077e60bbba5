#pragma once

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "lgtse/ad/graph.hpp"
#include "lgtse/common/error.hpp"
#include "lgtse/common/rng.hpp"
#include "lgtse/common/tensor.hpp"

namespace lgtse {

// Named parameter container. Registration order is the architecture build
// order and stays stable, which the optimizer and checkpoints rely on.
// Freezing toggles requires_grad so frozen modules cost nothing in backward.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ad::Var<T> var;
  };

  // Initialisation derives from (seed, name), so adding parameters never
  // shifts another parameter's init stream.
  ad::Var<T> add(const std::string& name, std::vector<std::size_t> shape,
                 std::uint64_t seed, double fan_in) {
    if (index_.count(name)) throw ConfigError("param '" + name + "' registered twice");
    Tensor<T> init(shape);
    if (fan_in > 0.0) {
      Rng rng = Rng::stream(seed, "init/" + name);
      const double bound = std::sqrt(1.0 / fan_in);
      for (std::size_t i = 0; i < init.size(); ++i)
        init[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    ad::Var<T> v = ad::Var<T>::leaf(std::move(init), true);
    index_[name] = entries_.size();
    entries_.push_back({name, v});
    return v;
  }

  ad::Var<T> add_scalar(const std::string& name, T value) {
    if (index_.count(name)) throw ConfigError("param '" + name + "' registered twice");
    Tensor<T> init({1});
    init[0] = value;
    ad::Var<T> v = ad::Var<T>::leaf(std::move(init), true);
    index_[name] = entries_.size();
    entries_.push_back({name, v});
    return v;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  bool empty() const { return entries_.empty(); }

  ad::Var<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown param '" + name + "'");
    return entries_[it->second].var;
  }

  void zero_grads() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  void set_trainable(bool trainable) {
    for (auto& e : entries_) e.var.node()->requires_grad = trainable;
  }

  bool trainable() const {
    return !entries_.empty() && entries_.front().var.node()->requires_grad;
  }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.var.val().size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per-module parameter counts; module = name prefix before the first dot.
struct ParamReport {
  std::map<std::string, std::size_t> per_module;
  std::size_t total = 0;
};

template <class T>
ParamReport count_params(const ParamStore<T>& params) {
  ParamReport rep;
  for (const auto& e : params.entries()) {
    const auto dotpos = e.name.find('.');
    const std::string module = dotpos == std::string::npos ? e.name : e.name.substr(0, dotpos);
    rep.per_module[module] += e.var.val().size();
    rep.total += e.var.val().size();
  }
  return rep;
}

}  // namespace lgtse
