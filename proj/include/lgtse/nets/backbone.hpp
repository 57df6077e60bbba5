#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgtse/ad/graph.hpp"
#include "lgtse/ad/ops.hpp"
#include "lgtse/common/error.hpp"
#include "lgtse/nets/params.hpp"

namespace lgtse {

// Mask-estimation backbone: strided 2-D conv encoder over frequency, a
// bottleneck of dilated temporal convs, a multi-scale pooling pyramid, and a
// mirrored transposed-conv decoder ending in a tanh complex-mask head.
struct BackboneConfig {
  std::size_t in_channels = 4;  // 4 for base_concat, 6 for distortion_concat
  std::size_t encoder_channels = 14;
  std::size_t tcn_blocks = 4;
  std::vector<std::size_t> tcn_dilations = {1, 2, 4, 8};
  std::size_t pyramid_levels = 3;
  std::size_t bottleneck_channels = 40;

  void validate() const {
    if (in_channels != 4 && in_channels != 6)
      throw ConfigError("backbone: in_channels must be 4 or 6");
    if (encoder_channels == 0 || tcn_blocks == 0 || bottleneck_channels == 0)
      throw ConfigError("backbone: zero-sized module");
    if (tcn_dilations.empty()) throw ConfigError("backbone: empty dilation list");
    for (std::size_t i = 0; i < tcn_dilations.size(); ++i) {
      if (tcn_dilations[i] == 0) throw ConfigError("backbone: dilations must be positive");
      if (i > 0 && tcn_dilations[i] <= tcn_dilations[i - 1])
        throw ConfigError("backbone: dilations must increase within a repeat");
    }
    if (pyramid_levels == 0 || pyramid_levels > 4)
      throw ConfigError("backbone: pyramid_levels must be in [1, 4]");
  }

  bool operator==(const BackboneConfig&) const = default;
};

template <class T>
class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, std::size_t n_bins, std::uint64_t seed)
      : cfg_(cfg), n_bins_(n_bins) {
    cfg_.validate();
    f1_ = (n_bins_ - 1) / 2 + 1;
    f2_ = (f1_ - 1) / 2 + 1;
    build(seed);
  }

  const BackboneConfig& config() const { return cfg_; }
  std::size_t bins() const { return n_bins_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // X: (C, F, T) -> complex mask (2F, T) in [-1, 1] per part.
  ad::Var<T> forward(const ad::Var<T>& x) const {
    using namespace ad;
    const auto& sh = x.val().shape();
    if (sh.size() != 3 || sh[0] != cfg_.in_channels || sh[1] != n_bins_)
      throw ShapeError("backbone: input " + x.val().shape_str() + " does not match config (C=" +
                       std::to_string(cfg_.in_channels) + ", F=" + std::to_string(n_bins_) + ")");
    const std::size_t Tn = sh[2];
    const std::size_t W = cfg_.encoder_channels, B = cfg_.bottleneck_channels;

    ConvSpec down;
    down.stride_h = 2;
    down.pad_h = 1;
    down.pad_w = 1;
    Var<T> h = prelu(conv2d(x, enc1_w_, enc1_b_, down), enc1_slope_);
    h = prelu(conv2d(h, enc2_w_, enc2_b_, down), enc2_slope_);

    ConvSpec one;
    h = reshape(h, {W * f2_, 1, Tn});
    h = prelu(conv2d(h, proj_in_w_, proj_in_b_, one), proj_in_slope_);  // (B, 1, T)

    for (std::size_t i = 0; i < cfg_.tcn_blocks; ++i) {
      const std::size_t d = cfg_.tcn_dilations[i % cfg_.tcn_dilations.size()];
      ConvSpec cs;
      cs.dil_w = d;
      cs.pad_w = d;
      h = add(h, prelu(conv2d(h, tcn_w_[i], tcn_b_[i], cs), tcn_slope_[i]));
    }

    // Multi-scale context: pool / project / upsample / sum.
    Var<T> pyr;
    for (std::size_t level = 0; level < cfg_.pyramid_levels; ++level) {
      const std::size_t k = std::size_t(1) << level;
      Var<T> p = k == 1 ? h : avg_pool_w(h, k);
      p = conv2d(p, pyr_w_[level], pyr_b_[level], one);
      if (k != 1) p = upsample_w(p, k, Tn);
      pyr = level == 0 ? p : add(pyr, p);
    }
    h = prelu(pyr, pyr_slope_);

    h = prelu(conv2d(h, proj_out_w_, proj_out_b_, one), proj_out_slope_);  // (W*f2, 1, T)
    h = reshape(h, {W, f2_, Tn});

    const std::size_t op1 = f1_ - (2 * f2_ - 1);
    const std::size_t op2 = n_bins_ - (2 * f1_ - 1);
    h = prelu(conv_transpose2d(h, dec1_w_, dec1_b_, 2, 1, 1, op1), dec1_slope_);
    h = prelu(conv_transpose2d(h, dec2_w_, dec2_b_, 2, 1, 1, op2), dec2_slope_);

    ConvSpec same;
    same.pad_h = 1;
    same.pad_w = 1;
    Var<T> mask = reshape(tanh_op(conv2d(h, head_w_, head_b_, same)), {2 * n_bins_, Tn});
    // Identity-anchored head: the initial estimate is the input spectrum.
    Var<T> mask_re = add_const(slice_axis0(mask, 0, n_bins_), T(1));
    return concat_axis0<T>({mask_re, slice_axis0(mask, n_bins_, 2 * n_bins_)});
  }

 private:
  void build(std::uint64_t seed) {
    const std::size_t C = cfg_.in_channels, W = cfg_.encoder_channels,
                      B = cfg_.bottleneck_channels;
    auto fan = [](std::size_t cin, std::size_t kh, std::size_t kw) {
      return static_cast<double>(cin * kh * kw);
    };
    enc1_w_ = params_.add("enc1.w", {W, C, 3, 3}, seed, fan(C, 3, 3));
    enc1_b_ = params_.add("enc1.b", {W}, seed, fan(C, 3, 3));
    enc1_slope_ = params_.add_scalar("enc1.slope", T(0.25));
    enc2_w_ = params_.add("enc2.w", {W, W, 3, 3}, seed, fan(W, 3, 3));
    enc2_b_ = params_.add("enc2.b", {W}, seed, fan(W, 3, 3));
    enc2_slope_ = params_.add_scalar("enc2.slope", T(0.25));

    proj_in_w_ = params_.add("proj_in.w", {B, W * f2_, 1, 1}, seed, double(W * f2_));
    proj_in_b_ = params_.add("proj_in.b", {B}, seed, double(W * f2_));
    proj_in_slope_ = params_.add_scalar("proj_in.slope", T(0.25));

    for (std::size_t i = 0; i < cfg_.tcn_blocks; ++i) {
      const std::string n = "tcn" + std::to_string(i);
      tcn_w_.push_back(params_.add(n + ".w", {B, B, 1, 3}, seed, fan(B, 1, 3)));
      tcn_b_.push_back(params_.add(n + ".b", {B}, seed, fan(B, 1, 3)));
      tcn_slope_.push_back(params_.add_scalar(n + ".slope", T(0.25)));
    }

    for (std::size_t level = 0; level < cfg_.pyramid_levels; ++level) {
      const std::string n = "pyramid" + std::to_string(level);
      pyr_w_.push_back(params_.add(n + ".w", {B, B, 1, 1}, seed, double(B)));
      pyr_b_.push_back(params_.add(n + ".b", {B}, seed, double(B)));
    }
    pyr_slope_ = params_.add_scalar("pyramid.slope", T(0.25));

    proj_out_w_ = params_.add("proj_out.w", {W * f2_, B, 1, 1}, seed, double(B));
    proj_out_b_ = params_.add("proj_out.b", {W * f2_}, seed, double(B));
    proj_out_slope_ = params_.add_scalar("proj_out.slope", T(0.25));

    dec1_w_ = params_.add("dec1.w", {W, W, 3, 3}, seed, fan(W, 3, 3));
    dec1_b_ = params_.add("dec1.b", {W}, seed, fan(W, 3, 3));
    dec1_slope_ = params_.add_scalar("dec1.slope", T(0.25));
    dec2_w_ = params_.add("dec2.w", {W, W, 3, 3}, seed, fan(W, 3, 3));
    dec2_b_ = params_.add("dec2.b", {W}, seed, fan(W, 3, 3));
    dec2_slope_ = params_.add_scalar("dec2.slope", T(0.25));

    head_w_ = params_.add("head.w", {2, W, 3, 3}, seed, fan(W, 3, 3));
    head_b_ = params_.add("head.b", {2}, seed, fan(W, 3, 3));
  }

  BackboneConfig cfg_;
  std::size_t n_bins_, f1_ = 0, f2_ = 0;
  ParamStore<T> params_;

  ad::Var<T> enc1_w_, enc1_b_, enc1_slope_, enc2_w_, enc2_b_, enc2_slope_;
  ad::Var<T> proj_in_w_, proj_in_b_, proj_in_slope_;
  std::vector<ad::Var<T>> tcn_w_, tcn_b_, tcn_slope_;
  std::vector<ad::Var<T>> pyr_w_, pyr_b_;
  ad::Var<T> pyr_slope_;
  ad::Var<T> proj_out_w_, proj_out_b_, proj_out_slope_;
  ad::Var<T> dec1_w_, dec1_b_, dec1_slope_, dec2_w_, dec2_b_, dec2_slope_;
  ad::Var<T> head_w_, head_b_;
};

}  // namespace lgtse
