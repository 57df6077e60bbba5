#pragma once

#include <string>
#include <vector>

#include "lgtse/ad/graph.hpp"
#include "lgtse/ad/ops.hpp"
#include "lgtse/augment/batch.hpp"
#include "lgtse/augment/strategy.hpp"
#include "lgtse/guidance/context.hpp"
#include "lgtse/nets/backbone.hpp"
#include "lgtse/nets/denoiser.hpp"

namespace lgtse {

template <class T>
Tensor<T> waveform_tensor(const Waveform& w) {
  Tensor<T> t({w.size()});
  for (std::size_t i = 0; i < w.size(); ++i) t[i] = static_cast<T>(w.samples[i]);
  return t;
}

// One extraction branch: the estimate aligned to its ground truth. Plain
// batches have one branch per example; enlarged batches add the denoised
// twin, which shares the pair's guidance and targets.
template <class T>
struct BranchGraph {
  ad::Var<T> est_wave;
  std::string provenance;
};

template <class T>
struct ItemGraph {
  ad::Var<T> yd_spec;
  ad::Var<T> guidance;
  ad::Var<T> yd_wave;  // defined only with a real (non-identity) denoiser
  std::vector<BranchGraph<T>> branches;
};

// Builds the forward graph for one example. The same builder serves
// training (live or frozen front-end) and evaluation (constant params make
// it a plain forward pass):
//   stft(y), stft(e) -> compress -> [denoise] -> context interaction ->
//   channel stack -> backbone mask -> complex multiply -> expand -> istft.
template <class T>
ItemGraph<T> build_item_graph(const PreparedExample<T>& ex, Denoiser<T>* denoiser,
                              Backbone<T>* backbone, const StrategyDescriptor& strat,
                              bool enlarged, const BatchItem<T>* frozen,
                              const DrcConfig& drc_cfg, bool scale_logits,
                              bool need_yd_wave = true) {
  using ad::Var;
  const std::size_t sr = static_cast<std::size_t>(ex.mixture.sample_rate);
  const std::size_t fft = ex.mixture.config.fft_size(static_cast<int>(sr));
  const std::size_t hop = ex.mixture.config.hop(static_cast<int>(sr));
  const std::size_t length = ex.mixture.num_samples;

  ItemGraph<T> g;
  Var<T> y = Var<T>::constant(ex.mixture.data);

  if (frozen != nullptr) {
    g.yd_spec = Var<T>::constant(frozen->denoised.data);
    g.guidance = Var<T>::constant(frozen->guidance.data);
  } else if (denoiser == nullptr) {
    g.yd_spec = y;
    g.guidance = guidance_graph::context_interaction(Var<T>::constant(ex.enroll.data), y,
                                                     scale_logits)
                     .guidance;
  } else {
    g.yd_spec = denoiser->forward(y);
    g.guidance = guidance_graph::context_interaction(Var<T>::constant(ex.enroll.data), g.yd_spec,
                                                     scale_logits)
                     .guidance;
  }

  if (denoiser != nullptr && need_yd_wave)
    g.yd_wave = ad::istft_graph(ad::drc_expand_graph(g.yd_spec, drc_cfg.beta), fft, hop, length);

  if (backbone == nullptr) return g;

  auto make_branch = [&](const Var<T>& input_pair, const char* provenance) {
    Var<T> stacked =
        strat.layout == StackLayout::distortion_concat
            ? guidance_graph::stack<T>(input_pair, g.guidance, &g.yd_spec, strat.layout)
            : guidance_graph::stack<T>(input_pair, g.guidance, nullptr, strat.layout);
    Var<T> mask = backbone->forward(stacked);
    Var<T> est_spec = ad::complex_mul(mask, input_pair);
    Var<T> est =
        ad::istft_graph(ad::drc_expand_graph(est_spec, drc_cfg.beta), fft, hop, length);
    g.branches.push_back(BranchGraph<T>{est, provenance});
  };

  make_branch(y, ex.provenance.c_str());
  if (enlarged) make_branch(g.yd_spec, "denoised");
  return g;
}

// Inference-only extraction of the target estimate for one example.
template <class T>
Waveform extract_estimate(const PreparedExample<T>& ex, Denoiser<T>* denoiser,
                          Backbone<T>& backbone, const StrategyDescriptor& strat,
                          const DrcConfig& drc_cfg, bool scale_logits) {
  const bool dn_trainable = denoiser != nullptr && denoiser->params().trainable();
  const bool bb_trainable = backbone.params().trainable();
  if (denoiser != nullptr) denoiser->params().set_trainable(false);
  backbone.params().set_trainable(false);

  ItemGraph<T> g = build_item_graph<T>(ex, denoiser, &backbone, strat, false, nullptr, drc_cfg,
                                       scale_logits, /*need_yd_wave=*/false);
  Waveform est;
  est.sample_rate = ex.mixture.sample_rate;
  est.samples.assign(g.branches[0].est_wave.val().vec().begin(),
                     g.branches[0].est_wave.val().vec().end());

  if (denoiser != nullptr) denoiser->params().set_trainable(dn_trainable);
  backbone.params().set_trainable(bb_trainable);
  return est;
}

}  // namespace lgtse
