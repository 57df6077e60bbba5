#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lgtse/augment/strategy.hpp"
#include "lgtse/common/error.hpp"
#include "lgtse/data/manifest.hpp"
#include "lgtse/dsp/drc.hpp"
#include "lgtse/dsp/stft.hpp"
#include "lgtse/guidance/context.hpp"
#include "lgtse/io/wav.hpp"

namespace lgtse {

// One manifest record loaded and transformed: compressed spectra plus the
// waveform references the losses need. Waveforms are shared_ptr so twin
// batch items can alias the same ground truth.
template <class T>
struct PreparedExample {
  ComplexSpec<T> enroll;
  ComplexSpec<T> mixture;
  std::shared_ptr<const Waveform> target;
  std::shared_ptr<const Waveform> clean_mix;
  std::shared_ptr<const Waveform> mixture_wave;
  std::string provenance = "original";
  std::size_t index = 0;
};

template <class T>
PreparedExample<T> prepare_example(const DatasetManifest& manifest, std::size_t index,
                                   const StftConfig& stft_cfg = {},
                                   const DrcConfig& drc_cfg = {}) {
  const ManifestRecord& r = manifest.entries.at(index);
  PreparedExample<T> ex;
  ex.index = index;
  ex.provenance = r.provenance;
  Waveform mix = wavio::read(manifest.resolve(r.mixture));
  Waveform enr = wavio::read(manifest.resolve(r.enrollment));
  ex.target = std::make_shared<Waveform>(wavio::read(manifest.resolve(r.target)));
  ex.clean_mix = std::make_shared<Waveform>(wavio::read(manifest.resolve(r.clean_mix)));
  ex.mixture = drc_compress(stft<T>(mix, stft_cfg), drc_cfg);
  ex.enroll = drc_compress(stft<T>(enr, stft_cfg), drc_cfg);
  ex.mixture_wave = std::make_shared<Waveform>(std::move(mix));
  return ex;
}

// One training element: the input spectrum (original Y or its denoised twin),
// the shared noise-agnostic guidance, and the shared ground truths.
template <class T>
struct BatchItem {
  ComplexSpec<T> input_spec;
  ComplexSpec<T> denoised;  // Y_d of the pair (equals input_spec for twins)
  GuidanceFeature<T> guidance;
  std::shared_ptr<const Waveform> target;
  std::shared_ptr<const Waveform> clean_mix;
  std::shared_ptr<const Waveform> mixture_wave;
  std::string provenance = "original";
  std::size_t source_index = 0;
};

template <class T>
struct TrainingBatch {
  std::vector<BatchItem<T>> items;
  std::size_t size() const { return items.size(); }
};

// Plain batch: one element per original, guidance through the denoiser.
template <class T>
TrainingBatch<T> make_plain_batch(const std::vector<PreparedExample<T>>& originals,
                                  const DenoiserFn<T>& denoiser) {
  TrainingBatch<T> batch;
  for (const auto& ex : originals) {
    auto [guidance, yd] = noise_agnostic_guidance(ex.enroll, ex.mixture, denoiser);
    BatchItem<T> item;
    item.input_spec = ex.mixture;
    item.denoised = std::move(yd);
    item.guidance = std::move(guidance);
    item.target = ex.target;
    item.clean_mix = ex.clean_mix;
    item.mixture_wave = ex.mixture_wave;
    item.provenance = ex.provenance;
    item.source_index = ex.index;
    batch.items.push_back(std::move(item));
  }
  return batch;
}

// Batch enlargement: each original contributes itself plus a denoised twin.
// The twin reuses the pair's guidance and references the same ground truth.
template <class T>
TrainingBatch<T> make_onthefly_batch(const std::vector<PreparedExample<T>>& originals,
                                     const DenoiserFn<T>& denoiser) {
  if (originals.empty()) throw InvalidInputError("make_onthefly_batch: empty batch");
  TrainingBatch<T> batch;
  for (const auto& ex : originals) {
    auto [guidance, yd] = noise_agnostic_guidance(ex.enroll, ex.mixture, denoiser);

    BatchItem<T> original;
    original.input_spec = ex.mixture;
    original.denoised = yd;
    original.guidance = guidance;
    original.target = ex.target;
    original.clean_mix = ex.clean_mix;
    original.mixture_wave = ex.mixture_wave;
    original.provenance = "original";
    original.source_index = ex.index;

    BatchItem<T> twin;
    twin.input_spec = yd;
    twin.denoised = std::move(yd);
    twin.guidance = std::move(guidance);
    twin.target = ex.target;  // same ground truth object
    twin.clean_mix = ex.clean_mix;
    twin.mixture_wave = ex.mixture_wave;
    twin.provenance = "denoised";
    twin.source_index = ex.index;

    batch.items.push_back(std::move(original));
    batch.items.push_back(std::move(twin));
  }
  return batch;
}

}  // namespace lgtse
