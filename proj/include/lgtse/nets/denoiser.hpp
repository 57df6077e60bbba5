#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgtse/ad/graph.hpp"
#include "lgtse/ad/ops.hpp"
#include "lgtse/common/error.hpp"
#include "lgtse/dsp/erb.hpp"
#include "lgtse/dsp/stft.hpp"
#include "lgtse/guidance/context.hpp"
#include "lgtse/nets/gru.hpp"
#include "lgtse/nets/params.hpp"

namespace lgtse {

// Lightweight enhancement front-end: ERB-banded features -> two strided conv
// blocks -> gated grouped temporal convs -> grouped dual-path recurrence
// (intra-band, then inter-frame) -> mirrored transposed-conv decoder -> band
// mask unprojected to bins and applied as a complex ratio mask.
struct DenoiserConfig {
  std::size_t erb_bands = 64;
  std::vector<std::size_t> encoder_channels = {16, 16};
  std::size_t gt_blocks = 3;
  std::size_t dprnn_hidden = 32;
  std::size_t dprnn_groups = 2;

  void validate() const {
    if (gt_blocks < 1) throw ConfigError("denoiser: gt_blocks must be >= 1");
    if (encoder_channels.size() != 2) throw ConfigError("denoiser: expected two conv blocks");
    for (std::size_t c : encoder_channels)
      if (c == 0) throw ConfigError("denoiser: channels must be positive");
    if (erb_bands % 4 != 0) throw ConfigError("denoiser: erb_bands must be divisible by 4");
    if (dprnn_groups == 0 || encoder_channels[1] % dprnn_groups != 0)
      throw ConfigError("denoiser: encoder_channels[1] must divide into dprnn_groups");
    if (dprnn_hidden % (2 * dprnn_groups) != 0)
      throw ConfigError("denoiser: dprnn_hidden must be divisible by 2*groups");
  }

  bool operator==(const DenoiserConfig&) const = default;
};

template <class T>
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& cfg, std::size_t n_bins, int sample_rate, std::uint64_t seed)
      : cfg_(cfg), n_bins_(n_bins), erb_(n_bins, cfg.erb_bands, sample_rate) {
    cfg_.validate();
    proj_ = erb_.projection().template cast<T>();
    unproj_ = erb_.unprojection().template cast<T>();
    build(seed);
  }

  const DenoiserConfig& config() const { return cfg_; }
  std::size_t bins() const { return n_bins_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // (2F, T) -> (2F, T); the input spectrum is expected in the compressed
  // domain and the mask multiplies it there.
  ad::Var<T> forward(const ad::Var<T>& y) const {
    using namespace ad;
    if (y.val().rank() != 2 || y.val().dim(0) != 2 * n_bins_)
      throw ShapeError("denoiser: input rows " + y.val().shape_str() + " do not match config F=" +
                       std::to_string(n_bins_));
    const std::size_t F = n_bins_, Tn = y.val().dim(1);
    const std::size_t c1 = cfg_.encoder_channels[0], c2 = cfg_.encoder_channels[1];
    const std::size_t bands = cfg_.erb_bands;

    Var<T> re = slice_axis0(y, 0, F);
    Var<T> im = slice_axis0(y, F, 2 * F);
    Var<T> mag = sqrt_eps(add(mul(re, re), mul(im, im)), T(1e-10));
    Var<T> feats = concat_axis0<T>({reshape(mag, {1, F, Tn}), reshape(re, {1, F, Tn}),
                                    reshape(im, {1, F, Tn})});
    Var<T> banded = mode1_matmul(proj_, feats);  // (3, bands, T)

    ConvSpec down;
    down.stride_h = 2;
    down.pad_h = 1;
    down.pad_w = 1;
    Var<T> x = prelu(conv2d(banded, enc_w_[0], enc_b_[0], down), enc_slope_[0]);
    x = prelu(conv2d(x, enc_w_[1], enc_b_[1], down), enc_slope_[1]);
    const std::size_t b2 = bands / 4;

    // Gated grouped temporal convs with growing dilation.
    for (std::size_t i = 0; i < cfg_.gt_blocks; ++i) {
      ConvSpec cs;
      cs.dil_w = std::size_t(1) << i;
      cs.pad_w = cs.dil_w;
      cs.groups = cfg_.dprnn_groups;
      Var<T> yconv = conv2d(x, gt_w_[i], gt_b_[i], cs);
      Var<T> a = slice_axis0(yconv, 0, c2);
      Var<T> b = slice_axis0(yconv, c2, 2 * c2);
      x = add(x, mul(a, sigmoid(b)));
    }

    // Grouped dual-path recurrence.
    const std::size_t cpg = c2 / cfg_.dprnn_groups;
    std::vector<Var<T>> group_outs;
    for (std::size_t g = 0; g < cfg_.dprnn_groups; ++g) {
      Var<T> xg = slice_axis0(x, g * cpg, (g + 1) * cpg);

      // Intra: bidirectional along the band axis, batched over frames.
      std::vector<Var<T>> fwd(b2), bwd(b2);
      Var<T> h = intra_fwd_[g].initial_state(Tn);
      for (std::size_t s = 0; s < b2; ++s) {
        h = intra_fwd_[g].step(slice_dim1(xg, s), h);
        fwd[s] = h;
      }
      h = intra_bwd_[g].initial_state(Tn);
      for (std::size_t s = b2; s-- > 0;) {
        h = intra_bwd_[g].step(slice_dim1(xg, s), h);
        bwd[s] = h;
      }
      Var<T> intra = concat_axis0<T>({stack_dim1(fwd), stack_dim1(bwd)});
      ConvSpec one;
      Var<T> xg2 = add(xg, conv2d(intra, intra_proj_w_[g], intra_proj_b_[g], one));

      // Inter: unidirectional along frames, batched over bands.
      std::vector<Var<T>> states(Tn);
      h = inter_[g].initial_state(b2);
      for (std::size_t t = 0; t < Tn; ++t) {
        h = inter_[g].step(slice_dim2(xg2, t), h);
        states[t] = h;
      }
      Var<T> inter = stack_dim2(states);
      group_outs.push_back(add(xg2, conv2d(inter, inter_proj_w_[g], inter_proj_b_[g], one)));
    }
    x = concat_axis0(group_outs);

    // Mirrored decoder back to the full band grid.
    const std::size_t b1 = bands / 2;
    const std::size_t op1 = b1 - (2 * b2 - 1);
    const std::size_t op2 = bands - (2 * b1 - 1);
    x = prelu(conv_transpose2d(x, dec_w_[0], dec_b_[0], 2, 1, 1, op1), dec_slope_[0]);
    x = prelu(conv_transpose2d(x, dec_w_[1], dec_b_[1], 2, 1, 1, op2), dec_slope_[1]);
    (void)c1;

    ConvSpec one;
    Var<T> band_mask = tanh_op(conv2d(x, head_w_, head_b_, one));  // (2, bands, T)
    Var<T> mask = reshape(mode1_matmul(unproj_, band_mask), {2 * F, Tn});
    // Identity-anchored complex ratio mask: the net starts at Y_d = Y, which
    // pins the output's sign and scale (SI-SDR alone constrains neither).
    Var<T> mask_re = add_const(slice_axis0(mask, 0, F), T(1));
    Var<T> anchored = concat_axis0<T>({mask_re, slice_axis0(mask, F, 2 * F)});
    return complex_mul(anchored, y);
  }

  // Value-level application with the spec-domain contract checks.
  ComplexSpec<T> apply(const ComplexSpec<T>& y) const {
    y.validate("denoiser");
    if (!y.compressed) throw InvalidStateError("denoiser: expects a compressed spectrum");
    ad::Var<T> out = forward(ad::Var<T>::constant(y.data));
    ComplexSpec<T> d = y;
    d.data = out.val();
    return d;
  }

  DenoiserFn<T> as_fn() const {
    return [this](const ComplexSpec<T>& y) { return apply(y); };
  }

 private:
  void build(std::uint64_t seed) {
    const std::size_t c1 = cfg_.encoder_channels[0], c2 = cfg_.encoder_channels[1];
    auto conv_fan = [](std::size_t cin, std::size_t kh, std::size_t kw) {
      return static_cast<double>(cin * kh * kw);
    };

    enc_w_.push_back(params_.add("enc1.w", {c1, 3, 3, 3}, seed, conv_fan(3, 3, 3)));
    enc_b_.push_back(params_.add("enc1.b", {c1}, seed, conv_fan(3, 3, 3)));
    enc_slope_.push_back(params_.add_scalar("enc1.slope", T(0.25)));
    enc_w_.push_back(params_.add("enc2.w", {c2, c1, 3, 3}, seed, conv_fan(c1, 3, 3)));
    enc_b_.push_back(params_.add("enc2.b", {c2}, seed, conv_fan(c1, 3, 3)));
    enc_slope_.push_back(params_.add_scalar("enc2.slope", T(0.25)));

    const std::size_t cpg_in = c2 / cfg_.dprnn_groups;
    for (std::size_t i = 0; i < cfg_.gt_blocks; ++i) {
      const std::string n = "gt" + std::to_string(i);
      gt_w_.push_back(params_.add(n + ".w", {2 * c2, cpg_in, 1, 3}, seed, conv_fan(cpg_in, 1, 3)));
      gt_b_.push_back(params_.add(n + ".b", {2 * c2}, seed, conv_fan(cpg_in, 1, 3)));
    }

    const std::size_t h_group = cfg_.dprnn_hidden / cfg_.dprnn_groups;
    const std::size_t h_dir = h_group / 2;
    for (std::size_t g = 0; g < cfg_.dprnn_groups; ++g) {
      const std::string n = "dprnn" + std::to_string(g);
      intra_fwd_.push_back(GruLayer<T>::create(params_, n + ".intra_fwd", cpg_in, h_dir, seed));
      intra_bwd_.push_back(GruLayer<T>::create(params_, n + ".intra_bwd", cpg_in, h_dir, seed));
      intra_proj_w_.push_back(
          params_.add(n + ".intra_proj.w", {cpg_in, 2 * h_dir, 1, 1}, seed, 2.0 * h_dir));
      intra_proj_b_.push_back(params_.add(n + ".intra_proj.b", {cpg_in}, seed, 2.0 * h_dir));
      inter_.push_back(GruLayer<T>::create(params_, n + ".inter", cpg_in, h_group, seed));
      inter_proj_w_.push_back(
          params_.add(n + ".inter_proj.w", {cpg_in, h_group, 1, 1}, seed, double(h_group)));
      inter_proj_b_.push_back(params_.add(n + ".inter_proj.b", {cpg_in}, seed, double(h_group)));
    }

    dec_w_.push_back(params_.add("dec1.w", {c2, c1, 3, 3}, seed, conv_fan(c2, 3, 3)));
    dec_b_.push_back(params_.add("dec1.b", {c1}, seed, conv_fan(c2, 3, 3)));
    dec_slope_.push_back(params_.add_scalar("dec1.slope", T(0.25)));
    dec_w_.push_back(params_.add("dec2.w", {c1, c1, 3, 3}, seed, conv_fan(c1, 3, 3)));
    dec_b_.push_back(params_.add("dec2.b", {c1}, seed, conv_fan(c1, 3, 3)));
    dec_slope_.push_back(params_.add_scalar("dec2.slope", T(0.25)));

    head_w_ = params_.add("head.w", {2, c1, 1, 1}, seed, double(c1));
    head_b_ = params_.add("head.b", {2}, seed, double(c1));
  }

  DenoiserConfig cfg_;
  std::size_t n_bins_;
  ErbFilterbank erb_;
  Tensor<T> proj_, unproj_;
  ParamStore<T> params_;

  std::vector<ad::Var<T>> enc_w_, enc_b_, enc_slope_;
  std::vector<ad::Var<T>> gt_w_, gt_b_;
  std::vector<GruLayer<T>> intra_fwd_, intra_bwd_, inter_;
  std::vector<ad::Var<T>> intra_proj_w_, intra_proj_b_, inter_proj_w_, inter_proj_b_;
  std::vector<ad::Var<T>> dec_w_, dec_b_, dec_slope_;
  ad::Var<T> head_w_, head_b_;
};

}  // namespace lgtse
