#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "lgtse/common/error.hpp"
#include "lgtse/nets/backbone.hpp"
#include "lgtse/nets/denoiser.hpp"

namespace lgtse {

enum class Stage { pretrain_denoiser, pretrain_backbone, joint_finetune };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::pretrain_denoiser: return "pretrain_denoiser";
    case Stage::pretrain_backbone: return "pretrain_backbone";
    case Stage::joint_finetune: return "joint_finetune";
  }
  return "?";
}

inline Stage stage_from_name(const std::string& s) {
  if (s == "pretrain_denoiser") return Stage::pretrain_denoiser;
  if (s == "pretrain_backbone") return Stage::pretrain_backbone;
  if (s == "joint_finetune") return Stage::joint_finetune;
  throw ConfigError("unknown stage '" + s + "'");
}

// One training run. freeze_denoiser is pinned by the stage: the backbone is
// pretrained against a frozen front-end, joint fine-tuning unfreezes it.
struct TrainPlan {
  Stage stage = Stage::pretrain_denoiser;
  std::string strategy = "base";
  std::string denoiser_kind = "gtcrn";  // "gtcrn" | "identity"
  double lr0 = 0.0005;
  std::size_t epochs = 150;
  std::size_t batch_size = 8;
  double grad_clip_l2 = 1.0;
  std::uint64_t seed = 1;
  bool freeze_denoiser = false;
  double weight_denoiser = 1.0;
  double weight_backbone = 1.0;
  bool strict_determinism = true;
  bool scale_logits = false;

  void validate() const {
    if (epochs == 0 || batch_size == 0) throw ConfigError("plan: epochs/batch_size must be > 0");
    if (lr0 <= 0.0) throw ConfigError("plan: lr0 must be positive");
    if (grad_clip_l2 <= 0.0) throw ConfigError("plan: grad_clip_l2 must be positive");
    if (denoiser_kind != "gtcrn" && denoiser_kind != "identity")
      throw ConfigError("plan: denoiser_kind must be gtcrn|identity");
    if (stage == Stage::pretrain_backbone && !freeze_denoiser)
      throw ConfigError("plan: pretrain_backbone requires freeze_denoiser = true");
    if (stage == Stage::joint_finetune && freeze_denoiser)
      throw ConfigError("plan: joint_finetune requires freeze_denoiser = false");
    if (stage != Stage::pretrain_denoiser && denoiser_kind == "identity" &&
        stage == Stage::joint_finetune)
      throw ConfigError("plan: cannot jointly fine-tune an identity denoiser");
  }

  static TrainPlan for_stage(Stage s) {
    TrainPlan p;
    p.stage = s;
    p.freeze_denoiser = (s == Stage::pretrain_backbone);
    return p;
  }
};

// The model pair a run operates on. A null denoiser means the identity
// front-end (the degenerate baseline); a null backbone is only legal during
// denoiser pretraining.
template <class T>
struct Models {
  std::unique_ptr<Denoiser<T>> denoiser;
  std::unique_ptr<Backbone<T>> backbone;
};

}  // namespace lgtse
