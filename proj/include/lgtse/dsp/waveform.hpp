#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lgtse/common/error.hpp"

namespace lgtse {

// Time-domain audio. Samples are kept in double so mixing arithmetic is exact
// to well below the 1e-10 decomposition tolerance; 32-bit happens at the
// tensor/WAV boundaries.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;

  Waveform() = default;
  Waveform(std::vector<double> s, int sr) : samples(std::move(s)), sample_rate(sr) {}

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }

  double energy() const {
    double e = 0.0;
    for (double v : samples) e += v * v;
    return e;
  }

  double peak() const {
    double p = 0.0;
    for (double v : samples) p = std::max(p, std::abs(v));
    return p;
  }

  double rms() const {
    return samples.empty() ? 0.0 : std::sqrt(energy() / static_cast<double>(samples.size()));
  }

  void scale(double g) {
    for (double& v : samples) v *= g;
  }

  void validate(const char* where = "waveform") const {
    if (samples.empty()) throw InvalidInputError(std::string(where) + ": empty waveform");
    for (double v : samples)
      if (!std::isfinite(v))
        throw InvalidInputError(std::string(where) + ": non-finite sample");
  }
};

inline Waveform truncate(const Waveform& w, std::size_t n) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin(), w.samples.begin() + std::min(n, w.samples.size()));
  return out;
}

}  // namespace lgtse
