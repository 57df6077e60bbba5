#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "lgtse/common/error.hpp"
#include "lgtse/dsp/waveform.hpp"

namespace lgtse {

// One simulated item. `interferer` and `noise` hold the SNR-scaled versions
// actually summed into the mixture, so mixture = target + interferer + noise
// holds sample-exactly and clean_mixture = mixture - noise.
struct MixtureExample {
  Waveform target;
  Waveform interferer;
  Waveform noise;
  Waveform mixture;
  Waveform clean_mixture;
  Waveform enrollment;
  double snr_interferer_db = 0.0;
  double snr_noise_db = 0.0;
  std::string speaker_id;
  std::string utterance_id;
  std::string enrollment_utterance_id;
};

// Minimum-mode mixing: truncate to the shortest component, scale the
// interferer against the target and the noise against the clean 2-speaker
// mixture. If the sum would clip, every component is scaled down together,
// which leaves all SNRs and the additive decomposition intact.
inline MixtureExample mix_minimum(const Waveform& target, const Waveform& interferer,
                                  const Waveform& noise, double snr_interferer_db,
                                  double snr_noise_db, double headroom_peak = 0.95) {
  if (target.sample_rate != interferer.sample_rate || target.sample_rate != noise.sample_rate)
    throw InvalidInputError("mix_minimum: sample rates differ");
  const std::size_t n =
      std::min({target.size(), interferer.size(), noise.size()});
  if (n == 0) throw InvalidInputError("mix_minimum: empty component");

  MixtureExample ex;
  ex.snr_interferer_db = snr_interferer_db;
  ex.snr_noise_db = snr_noise_db;
  ex.target = truncate(target, n);
  ex.interferer = truncate(interferer, n);
  ex.noise = truncate(noise, n);

  const double e_t = ex.target.energy();
  const double e_i = ex.interferer.energy();
  const double e_n = ex.noise.energy();
  if (e_t == 0.0 || e_i == 0.0 || e_n == 0.0)
    throw InvalidInputError("mix_minimum: silent component");

  const double g_i = std::sqrt(e_t / e_i * std::pow(10.0, -snr_interferer_db / 10.0));
  ex.interferer.scale(g_i);

  ex.clean_mixture.sample_rate = target.sample_rate;
  ex.clean_mixture.samples.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    ex.clean_mixture.samples[k] = ex.target.samples[k] + ex.interferer.samples[k];

  const double e_c = ex.clean_mixture.energy();
  if (e_c == 0.0) throw InvalidInputError("mix_minimum: clean mixture cancelled out");
  const double g_n = std::sqrt(e_c / e_n * std::pow(10.0, -snr_noise_db / 10.0));
  ex.noise.scale(g_n);

  ex.mixture.sample_rate = target.sample_rate;
  ex.mixture.samples.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    ex.mixture.samples[k] = ex.clean_mixture.samples[k] + ex.noise.samples[k];

  const double pk = ex.mixture.peak();
  if (pk > headroom_peak) {
    const double g = headroom_peak / pk;
    ex.target.scale(g);
    ex.interferer.scale(g);
    ex.noise.scale(g);
    ex.clean_mixture.scale(g);
    ex.mixture.scale(g);
  }
  return ex;
}

}  // namespace lgtse
