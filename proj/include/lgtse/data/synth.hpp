#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lgtse/common/error.hpp"
#include "lgtse/common/rng.hpp"
#include "lgtse/dsp/waveform.hpp"

namespace lgtse {

// Desk-scale speech stand-ins: a speaker-seeded harmonic series (F0 with
// vibrato, formant envelope) under syllabic amplitude modulation, plus
// formant-band noise. Not speech, but close enough in spectral shape for
// masking/attention experiments, and fully deterministic.
namespace synth {

namespace detail {

// Two-pole resonator, used to shape noise into formant bands.
class Resonator {
 public:
  Resonator(double freq_hz, double bw_hz, int sr) {
    const double r = std::exp(-M_PI * bw_hz / sr);
    const double theta = 2.0 * M_PI * freq_hz / sr;
    a1_ = 2.0 * r * std::cos(theta);
    a2_ = -r * r;
    gain_ = (1.0 - r) * std::sqrt(1.0 - 2.0 * r * std::cos(2.0 * theta) + r * r);
  }
  double step(double x) {
    const double y = gain_ * x + a1_ * y1_ + a2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a1_, a2_, gain_;
  double y1_ = 0.0, y2_ = 0.0;
};

struct SpeakerTimbre {
  double f0_base;
  double vibrato_hz;
  double vibrato_depth;
  double formants[3];
  double formant_bw[3];
  double formant_amp[3];
};

inline SpeakerTimbre speaker_timbre(std::uint64_t speaker_seed) {
  Rng rng = Rng::stream(speaker_seed, "speaker-timbre");
  SpeakerTimbre t;
  t.f0_base = rng.uniform(80.0, 300.0);
  t.vibrato_hz = rng.uniform(4.0, 6.5);
  t.vibrato_depth = rng.uniform(0.01, 0.03);
  t.formants[0] = rng.uniform(300.0, 850.0);
  t.formants[1] = rng.uniform(950.0, 2200.0);
  t.formants[2] = rng.uniform(2300.0, 3300.0);
  t.formant_bw[0] = rng.uniform(60.0, 110.0);
  t.formant_bw[1] = rng.uniform(90.0, 160.0);
  t.formant_bw[2] = rng.uniform(120.0, 220.0);
  t.formant_amp[0] = rng.uniform(0.8, 1.0);
  t.formant_amp[1] = rng.uniform(0.35, 0.7);
  t.formant_amp[2] = rng.uniform(0.1, 0.3);
  return t;
}

inline double envelope_at(const SpeakerTimbre& t, double hz) {
  double env = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = (hz - t.formants[i]) / (2.2 * t.formant_bw[i]);
    env += t.formant_amp[i] * std::exp(-0.5 * d * d);
  }
  return env + 0.35 / (1.0 + hz / 400.0);  // glottal-like rolloff floor
}

}  // namespace detail

inline Waveform speaker_signal(std::uint64_t speaker_seed, double duration_s,
                               std::uint64_t utterance_seed = 0, int sample_rate = 8000) {
  if (duration_s < 0.5) throw InvalidInputError("synth: duration must be >= 0.5 s");
  const detail::SpeakerTimbre timbre = detail::speaker_timbre(speaker_seed);
  Rng rng = Rng::stream(speaker_seed ^ (utterance_seed * 0x9e3779b97f4a7c15ull), "utterance");

  const std::size_t n = static_cast<std::size_t>(duration_s * sample_rate + 0.5);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(n, 0.0);

  const int n_harm =
      std::max(3, static_cast<int>(std::min(3800.0, sample_rate * 0.45) / timbre.f0_base));
  std::vector<double> harm_amp(n_harm), harm_phase(n_harm);
  for (int h = 0; h < n_harm; ++h) {
    harm_amp[h] = detail::envelope_at(timbre, (h + 1) * timbre.f0_base) * rng.uniform(0.8, 1.2);
    harm_phase[h] = rng.uniform(0.0, 2.0 * M_PI);
  }

  // Syllable gates: 2.5-4.5 Hz raised-cosine bursts with per-syllable level.
  // The floor keeps inter-syllable dips near -12 dB rather than silence.
  const double syl_rate = rng.uniform(2.5, 4.5);
  const std::size_t syl_len = static_cast<std::size_t>(sample_rate / syl_rate);
  std::vector<double> gate(n);
  for (std::size_t pos = 0; pos < n; pos += syl_len) {
    const double level = rng.uniform(0.35, 1.0);
    const double voiced = rng.uniform() < 0.82 ? 1.0 : 0.25;  // occasional hissy syllable
    for (std::size_t i = pos; i < std::min(n, pos + syl_len); ++i) {
      const double ph = static_cast<double>(i - pos) / static_cast<double>(syl_len);
      gate[i] = level * voiced * (0.25 + 0.75 * 0.5 * (1.0 - std::cos(2.0 * M_PI * ph)));
    }
  }

  const double vib_phase = rng.uniform(0.0, 2.0 * M_PI);
  const double drift = rng.uniform(-0.04, 0.04);  // slow per-utterance F0 drift
  double phase0 = rng.uniform(0.0, 2.0 * M_PI);
  for (std::size_t i = 0; i < n; ++i) {
    const double tsec = static_cast<double>(i) / sample_rate;
    const double f0 = timbre.f0_base * (1.0 + drift * tsec) *
                      (1.0 + timbre.vibrato_depth *
                                 std::sin(2.0 * M_PI * timbre.vibrato_hz * tsec + vib_phase));
    phase0 += 2.0 * M_PI * f0 / sample_rate;
    double v = 0.0;
    for (int h = 0; h < n_harm; ++h) {
      const double hf = (h + 1) * f0;
      if (hf > 0.47 * sample_rate) break;
      v += harm_amp[h] * std::sin((h + 1) * phase0 + harm_phase[h]);
    }
    w.samples[i] = v * gate[i];
  }

  // Formant-band breath noise, modulated by the same syllabic gate.
  detail::Resonator r2(timbre.formants[1], 1.8 * timbre.formant_bw[1], sample_rate);
  detail::Resonator r3(timbre.formants[2], 1.8 * timbre.formant_bw[2], sample_rate);
  for (std::size_t i = 0; i < n; ++i) {
    const double white = rng.normal();
    w.samples[i] += (r2.step(white) + 0.5 * r3.step(white)) * 1.5 * gate[i];
  }

  const double pk = w.peak();
  if (pk > 0.0) w.scale(0.9 / pk);
  return w;
}

// Pink-ish modulated background noise (white through cascaded one-pole
// lowpasses, slow random amplitude modulation).
inline Waveform noise_signal(std::uint64_t noise_seed, double duration_s,
                             int sample_rate = 8000) {
  if (duration_s < 0.5) throw InvalidInputError("synth: duration must be >= 0.5 s");
  Rng rng = Rng::stream(noise_seed, "noise");
  const std::size_t n = static_cast<std::size_t>(duration_s * sample_rate + 0.5);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(n, 0.0);

  double lp1 = 0.0, lp2 = 0.0;
  const double a1 = 0.35, a2 = 0.12;
  const double mod_hz = rng.uniform(0.4, 1.4);
  const double mod_depth = rng.uniform(0.3, 0.6);
  const double mod_phase = rng.uniform(0.0, 2.0 * M_PI);
  for (std::size_t i = 0; i < n; ++i) {
    const double white = rng.normal();
    lp1 += a1 * (white - lp1);
    lp2 += a2 * (lp1 - lp2);
    const double tsec = static_cast<double>(i) / sample_rate;
    const double am = 1.0 + mod_depth * std::sin(2.0 * M_PI * mod_hz * tsec + mod_phase);
    w.samples[i] = (0.6 * lp1 + 1.1 * lp2 + 0.12 * white) * am;
  }
  const double pk = w.peak();
  if (pk > 0.0) w.scale(0.9 / pk);
  return w;
}

}  // namespace synth
}  // namespace lgtse
