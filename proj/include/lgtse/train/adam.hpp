#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "lgtse/common/tensor.hpp"
#include "lgtse/nets/params.hpp"

namespace lgtse {

// Adam over one or more parameter stores, with global L2 gradient clipping
// applied across every trainable tensor before the update. Moment tensors
// are keyed by "<store>/<param>" so checkpoints can restore them by name.
template <class T>
class AdamOptimizer {
 public:
  struct Slot {
    std::string key;
    ad::Var<T> var;
    Tensor<T> m, v;
  };

  AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(const std::string& store_name, ParamStore<T>& store) {
    for (auto& e : store.entries()) {
      Slot s;
      s.key = store_name + "/" + e.name;
      s.var = e.var;
      s.m = Tensor<T>(e.var.val().shape());
      s.v = Tensor<T>(e.var.val().shape());
      slots_.push_back(std::move(s));
    }
  }

  std::uint64_t step_count() const { return step_; }
  std::vector<Slot>& slots() { return slots_; }
  void set_step_count(std::uint64_t s) { step_ = s; }

  // Scales all trainable gradients so the global L2 norm is at most
  // max_norm; returns the post-clip norm.
  double clip_global_norm(double max_norm) {
    double sq = 0.0;
    for (auto& s : slots_) {
      if (!s.var.requires_grad()) continue;
      Tensor<T>& g = s.var.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
      const T coef = static_cast<T>(max_norm / norm);
      for (auto& s : slots_) {
        if (!s.var.requires_grad()) continue;
        Tensor<T>& g = s.var.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= coef;
      }
      return max_norm;
    }
    return norm;
  }

  void step(double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (auto& s : slots_) {
      if (!s.var.requires_grad()) continue;
      Tensor<T>& g = s.var.grad();
      Tensor<T>& p = s.var.mutable_val();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double m = beta1_ * static_cast<double>(s.m[i]) + (1.0 - beta1_) * gi;
        const double v = beta2_ * static_cast<double>(s.v[i]) + (1.0 - beta2_) * gi * gi;
        s.m[i] = static_cast<T>(m);
        s.v[i] = static_cast<T>(v);
        p[i] -= static_cast<T>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
    }
  }

 private:
  double beta1_, beta2_, eps_;
  std::uint64_t step_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace lgtse
