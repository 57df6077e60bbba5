#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "lgtse/common/error.hpp"
#include "lgtse/common/fft.hpp"
#include "lgtse/common/tensor.hpp"
#include "lgtse/dsp/waveform.hpp"

namespace lgtse {

// Analysis configuration: 32 ms periodic-Hann window with 8 ms hop (4x
// overlap). fft_size is derived from the sample rate.
struct StftConfig {
  double window_ms = 32.0;
  double hop_ms = 8.0;

  std::size_t fft_size(int sample_rate) const {
    return static_cast<std::size_t>(window_ms * sample_rate / 1000.0 + 0.5);
  }
  std::size_t hop(int sample_rate) const {
    return static_cast<std::size_t>(hop_ms * sample_rate / 1000.0 + 0.5);
  }
  // F = fft_size/2 + 1 one-sided bins; 129 for the default 8 kHz setup.
  std::size_t bins(int sample_rate) const { return fft_size(sample_rate) / 2 + 1; }

  bool operator==(const StftConfig&) const = default;
};

// Stacked real/imaginary STFT: rows [0,F) hold real parts, rows [F,2F)
// imaginary parts. `compressed` records whether magnitude compression has
// been applied. `num_samples` remembers the analysed length so istft can
// strip the centre padding exactly.
template <class T>
struct ComplexSpec {
  Tensor<T> data;  // (2F, T)
  StftConfig config;
  int sample_rate = 8000;
  bool compressed = false;
  std::size_t num_samples = 0;

  std::size_t bins() const { return data.dim(0) / 2; }
  std::size_t frames() const { return data.dim(1); }

  T re(std::size_t f, std::size_t t) const { return data.at(f, t); }
  T im(std::size_t f, std::size_t t) const { return data.at(bins() + f, t); }
  T& re(std::size_t f, std::size_t t) { return data.at(f, t); }
  T& im(std::size_t f, std::size_t t) { return data.at(bins() + f, t); }

  T magnitude(std::size_t f, std::size_t t) const {
    return std::sqrt(re(f, t) * re(f, t) + im(f, t) * im(f, t));
  }
  T phase(std::size_t f, std::size_t t) const { return std::atan2(im(f, t), re(f, t)); }

  void validate(const char* where = "spec") const {
    if (data.rank() != 2 || data.dim(0) % 2 != 0 || data.dim(1) < 1)
      throw ShapeError(std::string(where) + ": expected (2F, T) with T >= 1, got " +
                       data.shape_str());
    if (!data.all_finite())
      throw InvalidInputError(std::string(where) + ": non-finite entries");
  }
};

namespace detail {

// Frame count under centre padding: 1 + ceil(L / hop). Depends only on the
// signal length and hop, which keeps every downstream shape predictable.
inline std::size_t stft_frames(std::size_t length, std::size_t hop) {
  return 1 + (length + hop - 1) / hop;
}

// Reflective (symmetric-without-edge) padding lookup: index into the padded
// signal maps back into [0, len).
inline std::size_t reflect_index(long long i, std::size_t len) {
  const long long n = static_cast<long long>(len);
  if (n == 1) return 0;
  long long period = 2 * (n - 1);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - m;
  return static_cast<std::size_t>(m);
}

}  // namespace detail

template <class T>
ComplexSpec<T> stft(const Waveform& w, const StftConfig& cfg = {}) {
  w.validate("stft");
  const std::size_t win = cfg.fft_size(w.sample_rate);
  const std::size_t hop = cfg.hop(w.sample_rate);
  if (win % hop != 0 || win / hop != 4)
    throw InvalidInputError("stft: hop must divide the window 4x for COLA");
  if (w.size() < win)
    throw InvalidInputError("stft: waveform shorter than one window");

  const std::size_t n_frames = detail::stft_frames(w.size(), hop);
  const std::size_t n_bins = win / 2 + 1;
  const std::size_t pad = win / 2;
  const std::vector<T> window = hann_periodic<T>(win);

  ComplexSpec<T> out;
  out.config = cfg;
  out.sample_rate = w.sample_rate;
  out.compressed = false;
  out.num_samples = w.size();
  out.data = Tensor<T>({2 * n_bins, n_frames});

  std::vector<std::complex<T>> buf(win);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const long long start = static_cast<long long>(t * hop) - static_cast<long long>(pad);
    for (std::size_t i = 0; i < win; ++i) {
      const std::size_t src = detail::reflect_index(start + static_cast<long long>(i), w.size());
      buf[i] = std::complex<T>(static_cast<T>(w.samples[src]) * window[i], T(0));
    }
    fft_inplace(buf, false);
    for (std::size_t f = 0; f < n_bins; ++f) {
      out.data.at(f, t) = buf[f].real();
      out.data.at(n_bins + f, t) = buf[f].imag();
    }
  }
  return out;
}

// Inverse STFT via windowed overlap-add with per-sample window-energy
// normalisation, then the centre padding is stripped. Exact inverse of
// stft() on the analysed region.
template <class T>
Waveform istft(const ComplexSpec<T>& s) {
  s.validate("istft");
  if (s.compressed)
    throw InvalidStateError("istft: spec is magnitude-compressed; expand first");

  const std::size_t win = s.config.fft_size(s.sample_rate);
  const std::size_t hop = s.config.hop(s.sample_rate);
  const std::size_t n_bins = win / 2 + 1;
  if (s.data.dim(0) != 2 * n_bins)
    throw ShapeError("istft: spec rows do not match config");
  const std::size_t n_frames = s.frames();
  const std::size_t pad = win / 2;
  const std::size_t length =
      s.num_samples > 0 ? s.num_samples : (n_frames - 1) * hop;
  const std::vector<T> window = hann_periodic<T>(win);

  std::vector<double> ola(pad + (n_frames - 1) * hop + win, 0.0);
  std::vector<double> wsum(ola.size(), 0.0);

  std::vector<std::complex<T>> buf(win);
  for (std::size_t t = 0; t < n_frames; ++t) {
    for (std::size_t f = 0; f < n_bins; ++f)
      buf[f] = std::complex<T>(s.data.at(f, t), s.data.at(n_bins + f, t));
    for (std::size_t f = n_bins; f < win; ++f) buf[f] = std::conj(buf[win - f]);
    fft_inplace(buf, true);
    const std::size_t base = t * hop;
    for (std::size_t i = 0; i < win; ++i) {
      ola[base + i] += static_cast<double>(buf[i].real() * window[i]);
      wsum[base + i] += static_cast<double>(window[i]) * static_cast<double>(window[i]);
    }
  }

  Waveform out;
  out.sample_rate = s.sample_rate;
  out.samples.resize(length);
  for (std::size_t n = 0; n < length; ++n) {
    const double den = wsum[pad + n];
    out.samples[n] = den > 1e-12 ? ola[pad + n] / den : 0.0;
  }
  return out;
}

}  // namespace lgtse
