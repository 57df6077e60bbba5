#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lgtse/ad/graph.hpp"
#include "lgtse/ad/ops.hpp"
#include "lgtse/common/error.hpp"
#include "lgtse/dsp/stft.hpp"

namespace lgtse {

enum class GuidanceSource { noisy_interaction, denoised_interaction, oracle_clean_interaction };

// Enrollment-guided representation aligned to mixture frames. Each column is
// the enrollment matrix times one softmax attention column, i.e. a convex
// combination of enrollment frames.
template <class T>
struct GuidanceFeature {
  Tensor<T> data;       // (2F, T_y)
  Tensor<T> attention;  // (T_e, T_y), columns sum to 1
  GuidanceSource source = GuidanceSource::noisy_interaction;
};

enum class StackLayout { base_concat, distortion_concat };

inline const char* layout_name(StackLayout l) {
  return l == StackLayout::base_concat ? "base_concat" : "distortion_concat";
}

// Channel-stacked backbone input. base_concat: [Y_re, Y_im, G_re, G_im];
// distortion_concat: [Y_re, Y_im, Yd_re, Yd_im, G_re, G_im].
template <class T>
struct StackedInput {
  Tensor<T> data;  // (C, F, T)
  StackLayout layout = StackLayout::base_concat;
  std::vector<std::string> channel_map;
};

template <class T>
using DenoiserFn = std::function<ComplexSpec<T>(const ComplexSpec<T>&)>;

namespace guidance_graph {

// Eq-level graph: G = E softmax(E^T Yd) with softmax over enrollment frames.
// No learned parameters; optional 1/sqrt(2F) logit scaling for ablations.
template <class T>
struct Result {
  ad::Var<T> guidance;
  ad::Var<T> attention;
};

template <class T>
Result<T> context_interaction(const ad::Var<T>& enroll, const ad::Var<T>& mix,
                              bool scale_logits = false) {
  if (enroll.val().rank() != 2 || mix.val().rank() != 2)
    throw ShapeError("context_interaction: expected (2F, T) inputs");
  if (enroll.val().dim(0) != mix.val().dim(0))
    throw ShapeError("context_interaction: 2F mismatch: " + enroll.val().shape_str() + " vs " +
                     mix.val().shape_str());
  ad::Var<T> logits = ad::matmul(ad::transpose(enroll), mix);
  if (scale_logits)
    logits = ad::scale(logits, static_cast<T>(1.0 / std::sqrt(double(enroll.val().dim(0)))));
  ad::Var<T> att = ad::softmax_axis0(logits);
  ad::Var<T> g = ad::matmul(enroll, att);
  return {g, att};
}

// (2F, T) -> the (2, F, T) channel pair.
template <class T>
ad::Var<T> as_channel_pair(const ad::Var<T>& spec) {
  const std::size_t f = spec.val().dim(0) / 2, t = spec.val().dim(1);
  return ad::reshape(spec, {2, f, t});
}

template <class T>
ad::Var<T> stack(const ad::Var<T>& y, const ad::Var<T>& g, const ad::Var<T>* yd,
                 StackLayout layout) {
  std::vector<ad::Var<T>> parts;
  parts.push_back(as_channel_pair(y));
  if (layout == StackLayout::distortion_concat) {
    if (yd == nullptr || !yd->defined())
      throw InvalidInputError("stack_features: distortion_concat requires Y_d");
    parts.push_back(as_channel_pair(*yd));
  }
  parts.push_back(as_channel_pair(g));
  return ad::concat_axis0(parts);
}

}  // namespace guidance_graph

namespace detail {

template <class T>
void check_interaction_inputs(const ComplexSpec<T>& e, const ComplexSpec<T>& y) {
  if (e.data.dim(0) != y.data.dim(0))
    throw ShapeError("context_interaction: 2F mismatch: " + e.data.shape_str() + " vs " +
                     y.data.shape_str());
  if (!(e.config == y.config) || e.compressed != y.compressed)
    throw InvalidInputError("context_interaction: enrollment/mixture configs differ");
  if (!e.data.all_finite() || !y.data.all_finite())
    throw InvalidInputError("context_interaction: non-finite inputs");
  if (e.frames() < 1 || y.frames() < 1)
    throw InvalidInputError("context_interaction: empty frame axis");
}

}  // namespace detail

// Baseline interaction (noisy mixture as the attention key).
template <class T>
GuidanceFeature<T> context_interaction(const ComplexSpec<T>& enroll, const ComplexSpec<T>& mix,
                                       bool scale_logits = false) {
  detail::check_interaction_inputs(enroll, mix);
  auto res = guidance_graph::context_interaction(ad::Var<T>::constant(enroll.data),
                                                 ad::Var<T>::constant(mix.data), scale_logits);
  GuidanceFeature<T> out;
  out.data = res.guidance.val();
  out.attention = res.attention.val();
  out.source = GuidanceSource::noisy_interaction;
  return out;
}

// Noise-agnostic variant: denoise first, then interact. Returns Y_d as well
// so augmentation can reuse it.
template <class T>
std::pair<GuidanceFeature<T>, ComplexSpec<T>> noise_agnostic_guidance(
    const ComplexSpec<T>& enroll, const ComplexSpec<T>& mix, const DenoiserFn<T>& denoiser,
    bool scale_logits = false) {
  ComplexSpec<T> denoised = denoiser(mix);
  if (!denoised.data.same_shape(mix.data))
    throw ShapeError("noise_agnostic_guidance: denoiser changed shape " + mix.data.shape_str() +
                     " -> " + denoised.data.shape_str());
  GuidanceFeature<T> g = context_interaction(enroll, denoised, scale_logits);
  g.source = GuidanceSource::denoised_interaction;
  return {std::move(g), std::move(denoised)};
}

template <class T>
StackedInput<T> stack_features(const ComplexSpec<T>& y, const GuidanceFeature<T>& g,
                               const ComplexSpec<T>* yd, StackLayout layout) {
  if (!y.data.same_shape(g.data))
    throw ShapeError("stack_features: Y and guidance shapes differ");
  if (layout == StackLayout::distortion_concat) {
    if (yd == nullptr) throw InvalidInputError("stack_features: distortion_concat requires Y_d");
    if (!yd->data.same_shape(y.data))
      throw ShapeError("stack_features: Y_d shape differs");
  }
  ad::Var<T> yv = ad::Var<T>::constant(y.data);
  ad::Var<T> gv = ad::Var<T>::constant(g.data);
  ad::Var<T> ydv;
  if (yd != nullptr) ydv = ad::Var<T>::constant(yd->data);
  ad::Var<T> stacked = guidance_graph::stack(yv, gv, yd ? &ydv : nullptr, layout);

  StackedInput<T> out;
  out.data = stacked.val();
  out.layout = layout;
  out.channel_map = {"Y_re", "Y_im"};
  if (layout == StackLayout::distortion_concat) {
    out.channel_map.push_back("Yd_re");
    out.channel_map.push_back("Yd_im");
  }
  out.channel_map.push_back("G_re");
  out.channel_map.push_back("G_im");
  return out;
}

template <class T>
StackedInput<T> stack_features(const ComplexSpec<T>& y, const GuidanceFeature<T>& g,
                               StackLayout layout) {
  return stack_features<T>(y, g, nullptr, layout);
}

template <class T>
DenoiserFn<T> identity_denoiser() {
  return [](const ComplexSpec<T>& y) { return y; };
}

}  // namespace lgtse
