#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "lgtse/common/error.hpp"
#include "lgtse/common/fft.hpp"
#include "lgtse/dsp/waveform.hpp"

namespace lgtse {

// Short-time objective intelligibility. Follows the reference procedure:
// resample to 10 kHz, drop frames more than 40 dB below the loudest clean
// frame, 15 one-third-octave bands from 150 Hz, 384 ms segments with
// normalisation + clipping at -15 dB, mean of band/segment correlations.
namespace stoi_detail {

constexpr int kFsTarget = 10000;
constexpr std::size_t kFrame = 256;
constexpr std::size_t kHop = 128;
constexpr std::size_t kFft = 512;
constexpr std::size_t kNumBands = 15;
constexpr double kMinFreq = 150.0;
constexpr std::size_t kSegLen = 30;  // 30 frames = 384 ms at 10 kHz
constexpr double kDynRangeDb = 40.0;
constexpr double kBetaDb = -15.0;  // lower SDR bound enforced by clipping

inline std::vector<double> resample_rational(const std::vector<double>& x, int sr_in,
                                             int sr_out) {
  if (sr_in == sr_out) return x;
  const int g = std::gcd(sr_in, sr_out);
  const int up = sr_out / g;
  const int down = sr_in / g;
  const int half = 10 * std::max(up, down);
  const double cutoff = 0.5 / std::max(up, down);  // of the upsampled rate

  // Hann-windowed sinc lowpass, gain `up` to undo zero stuffing.
  std::vector<double> h(2 * half + 1);
  for (int i = -half; i <= half; ++i) {
    const double t = static_cast<double>(i);
    const double sinc = i == 0 ? 2.0 * cutoff
                               : std::sin(2.0 * M_PI * cutoff * t) / (M_PI * t);
    const double win = 0.5 * (1.0 + std::cos(M_PI * t / (half + 1)));
    h[i + half] = up * sinc * win;
  }

  const std::size_t n_out = (x.size() * static_cast<std::size_t>(up)) / down;
  std::vector<double> y(n_out, 0.0);
  for (std::size_t n = 0; n < n_out; ++n) {
    // Position in the upsampled stream; only every `up`-th tap hits data.
    const long long center = static_cast<long long>(n) * down;
    double acc = 0.0;
    for (long long m = center - half; m <= center + half; ++m) {
      if (m < 0 || m % up != 0) continue;
      const long long src = m / up;
      if (src >= static_cast<long long>(x.size())) continue;
      acc += x[static_cast<std::size_t>(src)] * h[m - (center - half)];
    }
    y[n] = acc;
  }
  return y;
}

inline std::vector<double> hanning_matlab(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i + 1) /
                                 static_cast<double>(n + 1)));
  return w;
}

// Removes frames whose clean-signal energy is more than 40 dB below the
// loudest frame, and reconstructs both signals by overlap-add of the kept
// windowed frames.
inline void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const std::vector<double> w = hanning_matlab(kFrame);
  if (x.size() < kFrame) throw InvalidInputError("stoi: signal too short");
  const std::size_t n_frames = 1 + (x.size() - kFrame) / kHop;

  std::vector<double> energy_db(n_frames);
  double max_db = -1e30;
  for (std::size_t f = 0; f < n_frames; ++f) {
    double e = 0.0;
    for (std::size_t i = 0; i < kFrame; ++i) {
      const double v = x[f * kHop + i] * w[i];
      e += v * v;
    }
    energy_db[f] = 20.0 * std::log10(std::sqrt(e) + 1e-300);
    max_db = std::max(max_db, energy_db[f]);
  }

  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < n_frames; ++f)
    if (energy_db[f] > max_db - kDynRangeDb) keep.push_back(f);
  if (keep.empty()) throw InvalidInputError("stoi: no active frames");

  std::vector<double> xs(kFrame + (keep.size() - 1) * kHop, 0.0);
  std::vector<double> ys(xs.size(), 0.0);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const std::size_t src = keep[k] * kHop;
    const std::size_t dst = k * kHop;
    for (std::size_t i = 0; i < kFrame; ++i) {
      xs[dst + i] += x[src + i] * w[i];
      ys[dst + i] += y[src + i] * w[i];
    }
  }
  x = std::move(xs);
  y = std::move(ys);
}

// |STFT|^2 with 256-sample hanning frames zero-padded to 512 bins.
inline std::vector<std::vector<double>> power_spectrogram(const std::vector<double>& x) {
  const std::vector<double> w = hanning_matlab(kFrame);
  const std::size_t n_frames = x.size() >= kFrame ? 1 + (x.size() - kFrame) / kHop : 0;
  std::vector<std::vector<double>> spec(n_frames, std::vector<double>(kFft / 2 + 1));
  std::vector<std::complex<double>> buf(kFft);
  for (std::size_t f = 0; f < n_frames; ++f) {
    for (std::size_t i = 0; i < kFft; ++i)
      buf[i] = i < kFrame ? std::complex<double>(x[f * kHop + i] * w[i], 0.0)
                          : std::complex<double>(0.0, 0.0);
    fft_inplace(buf, false);
    for (std::size_t b = 0; b <= kFft / 2; ++b) spec[f][b] = std::norm(buf[b]);
  }
  return spec;
}

// One-third-octave band edges snapped to the nearest FFT bin.
inline std::vector<std::pair<std::size_t, std::size_t>> third_octave_bands() {
  std::vector<std::pair<std::size_t, std::size_t>> bands(kNumBands);
  const std::size_t n_bins = kFft / 2 + 1;
  auto nearest_bin = [&](double hz) {
    double best = 1e30;
    std::size_t arg = 0;
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * kFsTarget / kFft;
      if (std::abs(f - hz) < best) {
        best = std::abs(f - hz);
        arg = b;
      }
    }
    return arg;
  };
  for (std::size_t k = 0; k < kNumBands; ++k) {
    const double cf = kMinFreq * std::pow(2.0, static_cast<double>(k) / 3.0);
    bands[k] = {nearest_bin(cf / std::pow(2.0, 1.0 / 6.0)),
                nearest_bin(cf * std::pow(2.0, 1.0 / 6.0))};
  }
  return bands;
}

}  // namespace stoi_detail

inline double stoi(const Waveform& estimate, const Waveform& reference) {
  using namespace stoi_detail;
  if (estimate.sample_rate != reference.sample_rate)
    throw InvalidInputError("stoi: sample rates differ");
  if (estimate.size() != reference.size()) throw ShapeError("stoi: length mismatch");
  if (reference.sample_rate < 8000)
    throw InvalidInputError("stoi: sample rate must be >= 8 kHz");

  std::vector<double> x = resample_rational(reference.samples, reference.sample_rate, kFsTarget);
  std::vector<double> y = resample_rational(estimate.samples, estimate.sample_rate, kFsTarget);

  remove_silent_frames(x, y);

  const auto xs = power_spectrogram(x);
  const auto ys = power_spectrogram(y);
  const std::size_t n_frames = xs.size();
  if (n_frames < kSegLen)
    throw InvalidInputError("stoi: signal shorter than one 384 ms analysis segment");

  const auto bands = third_octave_bands();
  std::vector<std::vector<double>> xb(kNumBands, std::vector<double>(n_frames));
  std::vector<std::vector<double>> yb(kNumBands, std::vector<double>(n_frames));
  for (std::size_t f = 0; f < n_frames; ++f)
    for (std::size_t k = 0; k < kNumBands; ++k) {
      double ex = 0.0, ey = 0.0;
      for (std::size_t b = bands[k].first; b < bands[k].second; ++b) {
        ex += xs[f][b];
        ey += ys[f][b];
      }
      xb[k][f] = std::sqrt(ex);
      yb[k][f] = std::sqrt(ey);
    }

  const double clip = std::pow(10.0, -kBetaDb / 20.0);
  double acc = 0.0;
  std::size_t count = 0;
  std::vector<double> seg_x(kSegLen), seg_y(kSegLen);
  for (std::size_t m = kSegLen; m <= n_frames; ++m) {
    for (std::size_t k = 0; k < kNumBands; ++k) {
      double nx = 0.0, ny = 0.0;
      for (std::size_t i = 0; i < kSegLen; ++i) {
        seg_x[i] = xb[k][m - kSegLen + i];
        seg_y[i] = yb[k][m - kSegLen + i];
        nx += seg_x[i] * seg_x[i];
        ny += seg_y[i] * seg_y[i];
      }
      const double scale = std::sqrt(nx) / (std::sqrt(ny) + 1e-300);
      double mean_x = 0.0, mean_y = 0.0;
      for (std::size_t i = 0; i < kSegLen; ++i) {
        seg_y[i] = std::min(seg_y[i] * scale, seg_x[i] * (1.0 + clip));
        mean_x += seg_x[i];
        mean_y += seg_y[i];
      }
      mean_x /= kSegLen;
      mean_y /= kSegLen;
      double num = 0.0, dx = 0.0, dy = 0.0;
      for (std::size_t i = 0; i < kSegLen; ++i) {
        const double a = seg_x[i] - mean_x;
        const double b = seg_y[i] - mean_y;
        num += a * b;
        dx += a * a;
        dy += b * b;
      }
      if (dx > 0.0 && dy > 0.0) acc += num / std::sqrt(dx * dy);
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace lgtse
