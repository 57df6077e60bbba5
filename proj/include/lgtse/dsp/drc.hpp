#pragma once

#include <cmath>

#include "lgtse/common/error.hpp"
#include "lgtse/dsp/stft.hpp"

namespace lgtse {

// Magnitude power-law compression, |X|^beta with phase kept.
struct DrcConfig {
  double beta = 0.5;

  void validate() const {
    if (!(beta > 0.0 && beta <= 1.0))
      throw InvalidInputError("drc: beta must be in (0, 1]");
  }
};

namespace detail {

// Rescales each bin so its magnitude becomes |X|^p. Zero-magnitude bins stay
// exactly zero (phase pinned to 0 by convention).
template <class T>
ComplexSpec<T> drc_apply_power(const ComplexSpec<T>& s, double p) {
  ComplexSpec<T> out = s;
  const std::size_t n_bins = s.bins();
  const std::size_t n_frames = s.frames();
  for (std::size_t f = 0; f < n_bins; ++f) {
    for (std::size_t t = 0; t < n_frames; ++t) {
      const double re = static_cast<double>(s.re(f, t));
      const double im = static_cast<double>(s.im(f, t));
      const double mag = std::sqrt(re * re + im * im);
      if (mag == 0.0) {
        out.re(f, t) = T(0);
        out.im(f, t) = T(0);
        continue;
      }
      const double gain = std::pow(mag, p) / mag;
      out.re(f, t) = static_cast<T>(re * gain);
      out.im(f, t) = static_cast<T>(im * gain);
    }
  }
  return out;
}

}  // namespace detail

template <class T>
ComplexSpec<T> drc_compress(const ComplexSpec<T>& s, const DrcConfig& cfg = {}) {
  cfg.validate();
  s.validate("drc_compress");
  if (s.compressed) throw InvalidStateError("drc_compress: spec already compressed");
  ComplexSpec<T> out = detail::drc_apply_power(s, cfg.beta);
  out.compressed = true;
  return out;
}

template <class T>
ComplexSpec<T> drc_expand(const ComplexSpec<T>& s, const DrcConfig& cfg = {}) {
  cfg.validate();
  s.validate("drc_expand");
  if (!s.compressed) throw InvalidStateError("drc_expand: spec is not compressed");
  ComplexSpec<T> out = detail::drc_apply_power(s, 1.0 / cfg.beta);
  out.compressed = false;
  return out;
}

}  // namespace lgtse
