#pragma once

#include <cmath>

#include "lgtse/ad/graph.hpp"
#include "lgtse/ad/ops.hpp"
#include "lgtse/common/error.hpp"
#include "lgtse/dsp/waveform.hpp"

namespace lgtse {

inline constexpr double kSiSdrClampDb = 60.0;

// Scale-invariant SDR in dB, clamped to [-60, 60] for reporting. The loss
// path below uses the epsilon-stabilised unclamped form instead.
inline double si_sdr(const Waveform& estimate, const Waveform& reference) {
  if (estimate.size() != reference.size())
    throw ShapeError("si_sdr: length mismatch");
  if (estimate.size() < 1) throw InvalidInputError("si_sdr: empty signals");
  double ref_e = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_e += reference.samples[i] * reference.samples[i];
    dot += estimate.samples[i] * reference.samples[i];
  }
  if (ref_e == 0.0) throw InvalidInputError("si_sdr: reference is identically zero");
  const double alpha = dot / ref_e;
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference.samples[i];
    const double e = s - estimate.samples[i];
    sig += s * s;
    err += e * e;
  }
  if (err == 0.0) return kSiSdrClampDb;
  if (sig == 0.0) return -kSiSdrClampDb;
  const double db = 10.0 * std::log10(sig / err);
  return std::clamp(db, -kSiSdrClampDb, kSiSdrClampDb);
}

// Improvement of the estimate over the unprocessed mixture.
inline double si_sdri(const Waveform& estimate, const Waveform& reference,
                      const Waveform& mixture) {
  return si_sdr(estimate, reference) - si_sdr(mixture, reference);
}

// Combined two-term objective: total = w_d * (-SI-SDR(y_d, y_clean))
//                                    + w_b * (-SI-SDR(y_hat, y_target)).
struct LossValue {
  double total = 0.0;
  double denoiser_term = 0.0;
  double backbone_term = 0.0;
  double weight_denoiser = 1.0;
  double weight_backbone = 1.0;
};

inline LossValue joint_loss(const Waveform& y_d, const Waveform& y_clean,
                            const Waveform& y_hat, const Waveform& y_target,
                            double weight_denoiser = 1.0, double weight_backbone = 1.0) {
  LossValue lv;
  lv.weight_denoiser = weight_denoiser;
  lv.weight_backbone = weight_backbone;
  lv.denoiser_term = -si_sdr(y_d, y_clean);
  lv.backbone_term = -si_sdr(y_hat, y_target);
  lv.total = weight_denoiser * lv.denoiser_term + weight_backbone * lv.backbone_term;
  return lv;
}

namespace ad_loss {

// Differentiable SI-SDR of est against a fixed reference; returns a scalar
// node in dB (unclamped, epsilon-stabilised).
template <class T>
ad::Var<T> si_sdr_graph(const ad::Var<T>& est, const Tensor<T>& reference, T eps = T(1e-8)) {
  if (est.val().size() != reference.size()) throw ShapeError("si_sdr_graph: length mismatch");
  T ref_e = T(0);
  for (std::size_t i = 0; i < reference.size(); ++i) ref_e += reference[i] * reference[i];
  if (ref_e == T(0)) throw InvalidInputError("si_sdr_graph: zero reference");
  ad::Var<T> ref = ad::Var<T>::constant(reference);
  ad::Var<T> alpha = ad::scale(ad::dot(est, ref), T(1) / ref_e);
  ad::Var<T> target = ad::scalar_mul(alpha, ref);
  ad::Var<T> err = ad::sub(target, est);
  ad::Var<T> num = ad::add_const(ad::dot(target, target), eps);
  ad::Var<T> den = ad::add_const(ad::dot(err, err), eps);
  return ad::scale(ad::log_op(ad::div(num, den)), static_cast<T>(10.0 / std::log(10.0)));
}

// Negated SI-SDR, the per-term training loss.
template <class T>
ad::Var<T> neg_si_sdr_loss(const ad::Var<T>& est, const Tensor<T>& reference) {
  return ad::scale(si_sdr_graph(est, reference), T(-1));
}

}  // namespace ad_loss

}  // namespace lgtse
