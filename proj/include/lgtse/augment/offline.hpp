#pragma once

#include <filesystem>
#include <string>

#include "lgtse/common/error.hpp"
#include "lgtse/common/rng.hpp"
#include "lgtse/data/manifest.hpp"
#include "lgtse/dsp/drc.hpp"
#include "lgtse/dsp/stft.hpp"
#include "lgtse/guidance/context.hpp"
#include "lgtse/io/wav.hpp"

namespace lgtse {

// Runs the frozen denoiser over a waveform end to end: analyse, compress,
// mask, expand, resynthesise.
template <class T>
Waveform denoise_waveform(const Waveform& mixture, const DenoiserFn<T>& denoiser,
                          const StftConfig& stft_cfg = {}, const DrcConfig& drc_cfg = {}) {
  ComplexSpec<T> y = drc_compress(stft<T>(mixture, stft_cfg), drc_cfg);
  ComplexSpec<T> yd = denoiser(y);
  if (!yd.data.all_finite())
    throw DataError("denoise_waveform: denoiser produced non-finite output");
  return istft(drc_expand(yd, drc_cfg));
}

// Offline dataset merging: every mixture is denoised once with the frozen
// model and written beside the original with a ".denoised" suffix; the
// doubled manifest is shuffled deterministically under the seed. Denoised
// entries keep their original's enrollment, targets, and SNR metadata.
template <class T>
DatasetManifest build_offline_dataset(const DatasetManifest& source,
                                      const DenoiserFn<T>& denoiser, std::uint64_t seed,
                                      const StftConfig& stft_cfg = {},
                                      const DrcConfig& drc_cfg = {}) {
  DatasetManifest merged;
  merged.seed = seed;
  merged.base_dir = source.base_dir;

  for (const ManifestRecord& r : source.entries) {
    const std::filesystem::path mix_path = source.resolve(r.mixture);
    Waveform mixture;
    try {
      mixture = wavio::read(mix_path);
    } catch (const Error&) {
      throw IngestError("build_offline_dataset: unreadable audio file " + mix_path.string());
    }
    const Waveform denoised = denoise_waveform(mixture, denoiser, stft_cfg, drc_cfg);
    if (!std::all_of(denoised.samples.begin(), denoised.samples.end(),
                     [](double v) { return std::isfinite(v); }))
      throw DataError("build_offline_dataset: non-finite denoised audio for " + r.id);

    std::filesystem::path den_rel = r.mixture;
    den_rel.replace_extension(".denoised.wav");
    wavio::write(source.resolve(den_rel.string()), denoised);

    ManifestRecord dr = r;
    dr.id = r.id + "-denoised";
    dr.mixture = den_rel.generic_string();
    dr.provenance = "denoised";

    merged.entries.push_back(r);
    merged.entries.push_back(std::move(dr));
  }

  Rng rng = Rng::stream(seed, "offline-shuffle");
  rng.shuffle(merged.entries);
  return merged;
}

}  // namespace lgtse
