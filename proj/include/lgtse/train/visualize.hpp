#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lgtse/augment/batch.hpp"
#include "lgtse/guidance/context.hpp"
#include "lgtse/io/npy.hpp"
#include "lgtse/io/ppm.hpp"
#include "lgtse/nets/denoiser.hpp"

namespace lgtse {

// Guidance visualization export: the five panels comparing direct and
// noise-agnostic enrollment guidance. Each panel is written both as the raw
// (2F, T) array and as a log-magnitude image.
//   enrollment, mixture, denoised, guidance_noisy (E x softmax(E^T Y)),
//   guidance_denoised (E x softmax(E^T Yd)).
struct GuidanceExport {
  std::vector<std::filesystem::path> arrays;
  std::vector<std::filesystem::path> images;
};

namespace visualize_detail {

template <class T>
Tensor<T> stacked_magnitude(const Tensor<T>& spec) {
  const std::size_t F = spec.dim(0) / 2, Tn = spec.dim(1);
  Tensor<T> mag({F, Tn});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < Tn; ++t)
      mag.at(f, t) = std::sqrt(spec.at(f, t) * spec.at(f, t) +
                               spec.at(F + f, t) * spec.at(F + f, t));
  return mag;
}

}  // namespace visualize_detail

template <class T>
GuidanceExport export_guidance_figures(const PreparedExample<T>& ex,
                                       const DenoiserFn<T>& denoiser,
                                       const std::filesystem::path& out_dir,
                                       bool scale_logits = false) {
  std::filesystem::create_directories(out_dir);

  const GuidanceFeature<T> g_noisy = context_interaction(ex.enroll, ex.mixture, scale_logits);
  auto [g_denoised, yd] = noise_agnostic_guidance(ex.enroll, ex.mixture, denoiser, scale_logits);

  struct Panel {
    const char* name;
    const Tensor<T>* data;
  };
  const Panel panels[5] = {{"enrollment", &ex.enroll.data},
                           {"mixture", &ex.mixture.data},
                           {"denoised", &yd.data},
                           {"guidance_noisy", &g_noisy.data},
                           {"guidance_denoised", &g_denoised.data}};

  GuidanceExport out;
  for (const Panel& p : panels) {
    const std::filesystem::path arr = out_dir / (std::string(p.name) + ".npy");
    const std::filesystem::path img = out_dir / (std::string(p.name) + ".ppm");
    npy::save(arr, *p.data);
    ppm::write_db_image(img, visualize_detail::stacked_magnitude(*p.data));
    out.arrays.push_back(arr);
    out.images.push_back(img);
  }
  return out;
}

}  // namespace lgtse
