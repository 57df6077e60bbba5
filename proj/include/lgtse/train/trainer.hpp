#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgtse/augment/batch.hpp"
#include "lgtse/augment/strategy.hpp"
#include "lgtse/common/rng.hpp"
#include "lgtse/data/manifest.hpp"
#include "lgtse/metrics/report.hpp"
#include "lgtse/metrics/si_sdr.hpp"
#include "lgtse/metrics/stoi.hpp"
#include "lgtse/train/adam.hpp"
#include "lgtse/train/checkpoint.hpp"
#include "lgtse/train/pipeline.hpp"
#include "lgtse/train/plan.hpp"
#include "lgtse/train/schedule.hpp"

#ifndef LGTSE_REVISION
#define LGTSE_REVISION "unknown"
#endif

namespace lgtse {

template <class T>
struct StageRunResult {
  checkpoint::Snapshot<T> snap;
  std::vector<double> post_clip_grad_norms;
  std::filesystem::path latest_checkpoint;
  std::filesystem::path best_checkpoint;
  double best_dev_si_sdr_db = -1e30;
};

namespace trainer_detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline nlohmann::json plan_json(const TrainPlan& p) {
  return {{"stage", stage_name(p.stage)},
          {"strategy", p.strategy},
          {"denoiser_kind", p.denoiser_kind},
          {"lr0", p.lr0},
          {"epochs", p.epochs},
          {"batch_size", p.batch_size},
          {"grad_clip_l2", p.grad_clip_l2},
          {"seed", p.seed},
          {"freeze_denoiser", p.freeze_denoiser},
          {"weight_denoiser", p.weight_denoiser},
          {"weight_backbone", p.weight_backbone},
          {"strict_determinism", p.strict_determinism},
          {"scale_logits", p.scale_logits}};
}

inline void write_run_stamp(const std::filesystem::path& out_dir, const TrainPlan& plan) {
  std::filesystem::create_directories(out_dir);
  nlohmann::ordered_json stamp;
  stamp["seed"] = plan.seed;
  stamp["config_hash"] = fnv1a(plan_json(plan).dump());
  stamp["revision"] = LGTSE_REVISION;
  std::ofstream f(out_dir / "run_stamp.json");
  if (!f) throw IoError("cannot write run stamp in " + out_dir.string());
  f << stamp.dump(2) << "\n";
}

}  // namespace trainer_detail

// Orchestrates one training stage over a manifest pair. The loop per epoch:
// seeded batch order -> per-example forward graphs -> summed branch losses
// -> backward (scaled to the batch mean) -> global L2 clip -> Adam step;
// dev SI-SDR is logged every epoch and checkpoints are written each epoch.
template <class T>
class StageRunner {
 public:
  StageRunner(const TrainPlan& plan, StftConfig stft_cfg = {}, DrcConfig drc_cfg = {})
      : plan_(plan), stft_cfg_(stft_cfg), drc_cfg_(drc_cfg) {}

  StageRunResult<T> run(const DatasetManifest& train_man, const DatasetManifest& dev_man,
                        Models<T>& models, const std::filesystem::path& out_dir,
                        const checkpoint::Loaded<T>* resume = nullptr) {
    plan_.validate();
    const StrategyDescriptor strat = select_strategy(plan_.strategy);
    check_prerequisites(models);
    configure_trainability(models);

    AdamOptimizer<T> opt;
    if (models.denoiser) opt.attach("denoiser", models.denoiser->params());
    if (models.backbone) opt.attach("backbone", models.backbone->params());

    StageRunResult<T> result;
    result.snap.stage = plan_.stage;
    result.snap.seed = plan_.seed;
    result.snap.strategy = plan_.strategy;
    result.snap.denoiser_kind = plan_.denoiser_kind;
    result.snap.revision = LGTSE_REVISION;
    if (resume != nullptr) {
      if (resume->snap.stage != plan_.stage)
        throw ConfigError("resume: checkpoint stage does not match the plan");
      result.snap.epoch = resume->snap.epoch;
      result.snap.history = resume->snap.history;
      checkpoint::restore_optimizer(opt, *resume);
    }

    trainer_detail::write_run_stamp(out_dir, plan_);

    // Load and transform the corpus once.
    std::vector<PreparedExample<T>> train_ex;
    train_ex.reserve(train_man.size());
    for (std::size_t i = 0; i < train_man.size(); ++i)
      train_ex.push_back(prepare_example<T>(train_man, i, stft_cfg_, drc_cfg_));
    std::vector<PreparedExample<T>> dev_ex;
    dev_ex.reserve(dev_man.size());
    for (std::size_t i = 0; i < dev_man.size(); ++i)
      dev_ex.push_back(prepare_example<T>(dev_man, i, stft_cfg_, drc_cfg_));

    // With a frozen front-end the denoised spectra and guidance never change:
    // compute them once and reuse across epochs.
    std::vector<BatchItem<T>> frozen_items;
    if (plan_.stage == Stage::pretrain_backbone) {
      const DenoiserFn<T> fn =
          models.denoiser ? models.denoiser->as_fn() : identity_denoiser<T>();
      TrainingBatch<T> all = make_plain_batch(train_ex, fn);
      frozen_items = std::move(all.items);
      for (auto& item : frozen_items) item.guidance.attention = Tensor<T>();
    }

    const std::size_t n = train_ex.size();
    if (n == 0) throw InvalidInputError("run_stage: empty training manifest");

    for (std::size_t epoch = result.snap.epoch; epoch < plan_.epochs; ++epoch) {
      const double lr = lr_at_epoch(plan_.lr0, plan_.epochs, epoch);

      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      Rng shuffler = Rng::stream(plan_.seed, "epoch-order", epoch);
      shuffler.shuffle(order);

      double loss_acc = 0.0;
      std::size_t loss_count = 0;
      for (std::size_t start = 0; start < n; start += plan_.batch_size) {
        const std::size_t stop = std::min(n, start + plan_.batch_size);
        if (models.denoiser) models.denoiser->params().zero_grads();
        if (models.backbone) models.backbone->params().zero_grads();

        // Count loss elements first so each contributes 1/n_elems.
        const std::size_t per_ex = strat.enlarged_batches && models.backbone ? 2 : 1;
        const std::size_t n_elems = (stop - start) * per_ex;

        double batch_loss = 0.0;
        for (std::size_t k = start; k < stop; ++k) {
          const PreparedExample<T>& ex = train_ex[order[k]];
          const BatchItem<T>* frozen =
              frozen_items.empty() ? nullptr : &frozen_items[order[k]];
          ad::Var<T> loss = example_loss(ex, models, strat, frozen);
          batch_loss += static_cast<double>(loss.val()[0]);
          ad::backward(loss, static_cast<T>(1.0 / static_cast<double>(n_elems)));
        }
        batch_loss /= static_cast<double>(n_elems);
        if (!std::isfinite(batch_loss))
          throw TrainingDivergedError("training diverged: non-finite loss at epoch " +
                                      std::to_string(epoch) + ", batch " +
                                      std::to_string(start / plan_.batch_size));
        loss_acc += batch_loss;
        ++loss_count;

        result.post_clip_grad_norms.push_back(opt.clip_global_norm(plan_.grad_clip_l2));
        opt.step(lr);
      }

      EpochRecord rec;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.train_loss = loss_acc / static_cast<double>(loss_count);
      rec.dev_si_sdr_db = dev_metric(dev_ex, models, strat);
      result.snap.history.push_back(rec);
      result.snap.epoch = epoch + 1;
      result.snap.lr = lr;

      result.latest_checkpoint = out_dir / "latest.ckpt";
      checkpoint::save(result.latest_checkpoint, result.snap, models, &opt);
      if (rec.dev_si_sdr_db > result.best_dev_si_sdr_db) {
        result.best_dev_si_sdr_db = rec.dev_si_sdr_db;
        result.best_checkpoint = out_dir / "best.ckpt";
        checkpoint::save(result.best_checkpoint, result.snap, models, &opt);
      }
    }
    return result;
  }

  // Mean dev-set SI-SDR: enhancement quality against the clean two-speaker
  // mixture in stage 1, extraction quality against the target otherwise.
  double dev_metric(const std::vector<PreparedExample<T>>& dev_ex, Models<T>& models,
                    const StrategyDescriptor& strat) {
    if (dev_ex.empty()) return 0.0;
    const bool dn_trainable = models.denoiser && models.denoiser->params().trainable();
    const bool bb_trainable = models.backbone && models.backbone->params().trainable();
    if (models.denoiser) models.denoiser->params().set_trainable(false);
    if (models.backbone) models.backbone->params().set_trainable(false);

    double acc = 0.0;
    for (const auto& ex : dev_ex) {
      if (plan_.stage == Stage::pretrain_denoiser) {
        ComplexSpec<T> yd = models.denoiser->apply(ex.mixture);
        const Waveform wave = istft(drc_expand(yd, drc_cfg_));
        acc += si_sdr(wave, *ex.clean_mix);
      } else {
        Denoiser<T>* dn =
            plan_.denoiser_kind == "identity" ? nullptr : models.denoiser.get();
        ItemGraph<T> g =
            build_item_graph<T>(ex, dn, models.backbone.get(), strat, false, nullptr, drc_cfg_,
                                plan_.scale_logits, /*need_yd_wave=*/false);
        Waveform est;
        est.sample_rate = ex.mixture.sample_rate;
        est.samples.assign(g.branches[0].est_wave.val().vec().begin(),
                           g.branches[0].est_wave.val().vec().end());
        acc += si_sdr(est, *ex.target);
      }
    }
    if (models.denoiser) models.denoiser->params().set_trainable(dn_trainable);
    if (models.backbone) models.backbone->params().set_trainable(bb_trainable);
    return acc / static_cast<double>(dev_ex.size());
  }

 private:
  void check_prerequisites(const Models<T>& models) const {
    switch (plan_.stage) {
      case Stage::pretrain_denoiser:
        if (plan_.denoiser_kind != "gtcrn" || !models.denoiser)
          throw ConfigError("pretrain_denoiser requires a trainable denoiser model");
        break;
      case Stage::pretrain_backbone:
        if (!models.backbone) throw ConfigError("pretrain_backbone requires a backbone model");
        if (plan_.denoiser_kind == "gtcrn" && !models.denoiser)
          throw ConfigError(
              "pretrain_backbone requires the pretrained denoiser checkpoint (stage 1)");
        break;
      case Stage::joint_finetune:
        if (!models.denoiser || !models.backbone)
          throw ConfigError(
              "joint_finetune requires both pretrained checkpoints (denoiser and backbone)");
        break;
    }
  }

  void configure_trainability(Models<T>& models) const {
    switch (plan_.stage) {
      case Stage::pretrain_denoiser:
        models.denoiser->params().set_trainable(true);
        break;
      case Stage::pretrain_backbone:
        if (models.denoiser) models.denoiser->params().set_trainable(false);
        models.backbone->params().set_trainable(true);
        break;
      case Stage::joint_finetune:
        models.denoiser->params().set_trainable(true);
        models.backbone->params().set_trainable(true);
        break;
    }
  }

  // Sum of per-branch losses for one example; each branch contributes the
  // stage-weighted combination of the denoiser and backbone terms.
  ad::Var<T> example_loss(const PreparedExample<T>& ex, Models<T>& models,
                          const StrategyDescriptor& strat, const BatchItem<T>* frozen) {
    const bool live = plan_.stage == Stage::joint_finetune;
    const bool enlarged = strat.enlarged_batches && models.backbone != nullptr;
    Denoiser<T>* dn = plan_.denoiser_kind == "identity" ? nullptr : models.denoiser.get();
    const bool need_yd_wave =
        plan_.stage == Stage::pretrain_denoiser || plan_.stage == Stage::joint_finetune;

    ItemGraph<T> g =
        build_item_graph<T>(ex, dn, models.backbone.get(), strat, enlarged,
                            live ? nullptr : frozen, drc_cfg_, plan_.scale_logits, need_yd_wave);

    const Tensor<T> clean = waveform_tensor<T>(*ex.clean_mix);
    const Tensor<T> target = waveform_tensor<T>(*ex.target);

    ad::Var<T> total;
    if (plan_.stage == Stage::pretrain_denoiser) {
      total = ad::scale(ad_loss::neg_si_sdr_loss(g.yd_wave, clean),
                        static_cast<T>(plan_.weight_denoiser));
      return total;
    }
    for (const auto& branch : g.branches) {
      ad::Var<T> term = ad::scale(ad_loss::neg_si_sdr_loss(branch.est_wave, target),
                                  static_cast<T>(plan_.weight_backbone));
      if (plan_.stage == Stage::joint_finetune && dn != nullptr && plan_.weight_denoiser != 0.0) {
        ad::Var<T> dterm = ad::scale(ad_loss::neg_si_sdr_loss(g.yd_wave, clean),
                                     static_cast<T>(plan_.weight_denoiser));
        term = ad::add(term, dterm);
      }
      total = total.defined() ? ad::add(total, term) : term;
    }
    return total;
  }

  TrainPlan plan_;
  StftConfig stft_cfg_;
  DrcConfig drc_cfg_;
};

// Full-corpus evaluation through the extraction pipeline. Per-record I/O
// failures are counted and skipped rather than aborting the run.
template <class T>
EvalReport evaluate_manifest(Models<T>& models, const std::string& denoiser_kind,
                             const DatasetManifest& manifest, const StrategyDescriptor& strat,
                             const StftConfig& stft_cfg = {}, const DrcConfig& drc_cfg = {},
                             bool scale_logits = false, bool with_stoi = true,
                             const std::filesystem::path* pesq_tmp_dir = nullptr) {
  if (!models.backbone) throw ConfigError("evaluate: backbone checkpoint required");
  EvalReport rep;
  Denoiser<T>* dn = denoiser_kind == "identity" ? nullptr : models.denoiser.get();
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    try {
      PreparedExample<T> ex = prepare_example<T>(manifest, i, stft_cfg, drc_cfg);
      const Waveform est =
          extract_estimate<T>(ex, dn, *models.backbone, strat, drc_cfg, scale_logits);
      UtteranceEval u;
      u.id = manifest.entries[i].id;
      u.si_sdr_db = si_sdr(est, *ex.target);
      u.si_sdri_db = u.si_sdr_db - si_sdr(*ex.mixture_wave, *ex.target);
      u.stoi = with_stoi ? stoi(est, *ex.target) : 0.0;
      if (pesq_tmp_dir != nullptr) {
        const std::filesystem::path est_path = *pesq_tmp_dir / (u.id + ".est.wav");
        wavio::write(est_path, est);
        u.pesq = run_external_pesq(manifest.resolve(manifest.entries[i].target), est_path);
      }
      rep.utterances.push_back(std::move(u));
    } catch (const Error&) {
      ++rep.failures;
    }
  }
  return rep;
}

}  // namespace lgtse
