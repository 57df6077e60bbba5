// Command-line front end: corpus simulation, the two-stage training
// protocol, offline dataset merging, extraction, evaluation, and guidance
// visualization. All subcommands read a flat JSON config file plus
// overriding flags; exit codes map error categories (see README).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lgtse/lgtse.hpp"

namespace fs = std::filesystem;
using namespace lgtse;

namespace {

using Scalar = float;

struct ConfigBundle {
  TrainPlan plan;
  DenoiserConfig denoiser;
  BackboneConfig backbone;
  StftConfig stft;
  DrcConfig drc;
};

// Flat key-value config document; unknown keys are rejected so typos fail
// loudly.
ConfigBundle load_config(const std::string& path) {
  ConfigBundle c;
  if (path.empty()) return c;
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  for (const auto& [key, val] : j.items()) {
    if (key == "stage") c.plan.stage = stage_from_name(val.get<std::string>());
    else if (key == "strategy") c.plan.strategy = val.get<std::string>();
    else if (key == "denoiser_kind") c.plan.denoiser_kind = val.get<std::string>();
    else if (key == "lr0") c.plan.lr0 = val.get<double>();
    else if (key == "epochs") c.plan.epochs = val.get<std::size_t>();
    else if (key == "batch_size") c.plan.batch_size = val.get<std::size_t>();
    else if (key == "grad_clip_l2") c.plan.grad_clip_l2 = val.get<double>();
    else if (key == "seed") c.plan.seed = val.get<std::uint64_t>();
    else if (key == "freeze_denoiser") c.plan.freeze_denoiser = val.get<bool>();
    else if (key == "weight_denoiser") c.plan.weight_denoiser = val.get<double>();
    else if (key == "weight_backbone") c.plan.weight_backbone = val.get<double>();
    else if (key == "strict_determinism") c.plan.strict_determinism = val.get<bool>();
    else if (key == "scale_logits") c.plan.scale_logits = val.get<bool>();
    else if (key == "erb_bands") c.denoiser.erb_bands = val.get<std::size_t>();
    else if (key == "encoder_channels")
      c.denoiser.encoder_channels = val.get<std::vector<std::size_t>>();
    else if (key == "gt_blocks") c.denoiser.gt_blocks = val.get<std::size_t>();
    else if (key == "dprnn_hidden") c.denoiser.dprnn_hidden = val.get<std::size_t>();
    else if (key == "dprnn_groups") c.denoiser.dprnn_groups = val.get<std::size_t>();
    else if (key == "backbone_width") c.backbone.encoder_channels = val.get<std::size_t>();
    else if (key == "bottleneck_channels")
      c.backbone.bottleneck_channels = val.get<std::size_t>();
    else if (key == "tcn_blocks") c.backbone.tcn_blocks = val.get<std::size_t>();
    else if (key == "tcn_dilations")
      c.backbone.tcn_dilations = val.get<std::vector<std::size_t>>();
    else if (key == "pyramid_levels") c.backbone.pyramid_levels = val.get<std::size_t>();
    else if (key == "window_ms") c.stft.window_ms = val.get<double>();
    else if (key == "hop_ms") c.stft.hop_ms = val.get<double>();
    else if (key == "beta") c.drc.beta = val.get<double>();
    else throw ConfigError("unknown config key '" + key + "' in " + path);
  }
  return c;
}

void write_stamp(const fs::path& dir, std::uint64_t seed, const std::string& what) {
  fs::create_directories(dir);
  nlohmann::ordered_json stamp;
  stamp["seed"] = seed;
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : what) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  stamp["config_hash"] = h;
  stamp["revision"] = LGTSE_REVISION;
  std::ofstream f(dir / "run_stamp.json");
  f << stamp.dump(2) << "\n";
}

DatasetManifest load_split(const fs::path& corpus, const std::string& split) {
  return manifest_io::load(corpus / (split + ".manifest.jsonl"));
}

std::size_t corpus_bins(const DatasetManifest& man, const StftConfig& cfg) {
  if (man.size() == 0) throw InvalidInputError("empty manifest");
  const Waveform w = wavio::read(man.resolve(man.entries[0].mixture));
  return cfg.bins(w.sample_rate);
}

void print_param_report(const char* name, const ParamReport& rep) {
  std::printf("%s parameters: %zu total\n", name, rep.total);
  for (const auto& [module, count] : rep.per_module)
    std::printf("  %-18s %zu\n", module.c_str(), count);
}

PreparedExample<Scalar> prepare_from_wavs(const fs::path& mixture, const fs::path& enrollment,
                                          const ConfigBundle& cfg) {
  PreparedExample<Scalar> ex;
  Waveform mix = wavio::read(mixture);
  Waveform enr = wavio::read(enrollment);
  ex.mixture = drc_compress(stft<Scalar>(mix, cfg.stft), cfg.drc);
  ex.enroll = drc_compress(stft<Scalar>(enr, cfg.stft), cfg.drc);
  ex.target = std::make_shared<Waveform>(mix);  // placeholder, unused for extract
  ex.clean_mix = ex.target;
  ex.mixture_wave = std::make_shared<Waveform>(std::move(mix));
  return ex;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"lgtse: enrollment-guided target speech extraction with a denoiser front-end"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "flat JSON config file")->capture_default_str();

  // ----- simulate ------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "generate a synthetic desk-scale corpus");
  fs::path sim_out;
  std::size_t sim_train = 240, sim_dev = 40, sim_test = 40;
  std::size_t sim_speakers = 12, sim_dev_speakers = 4, sim_test_speakers = 4, sim_utts = 8;
  std::uint64_t sim_seed = 17, sim_bank_seed = 1117;
  double snr_i_lo = -5.0, snr_i_hi = 5.0, snr_n_lo = -6.0, snr_n_hi = 3.0;
  int sim_sr = 8000;
  std::string sim_from_dirs;
  sim->add_option("--out", sim_out, "output corpus directory")->required();
  sim->add_option("--train", sim_train, "training mixtures");
  sim->add_option("--dev", sim_dev, "dev mixtures");
  sim->add_option("--test", sim_test, "test mixtures");
  sim->add_option("--speakers", sim_speakers, "train speakers");
  sim->add_option("--dev-speakers", sim_dev_speakers, "dev speakers");
  sim->add_option("--test-speakers", sim_test_speakers, "test speakers");
  sim->add_option("--utts-per-speaker", sim_utts, "utterances per speaker");
  sim->add_option("--seed", sim_seed, "corpus seed");
  sim->add_option("--bank-seed", sim_bank_seed, "source bank seed");
  sim->add_option("--snr-interferer-lo", snr_i_lo, "interferer SNR low (dB)");
  sim->add_option("--snr-interferer-hi", snr_i_hi, "interferer SNR high (dB)");
  sim->add_option("--snr-noise-lo", snr_n_lo, "noise SNR low (dB)");
  sim->add_option("--snr-noise-hi", snr_n_hi, "noise SNR high (dB)");
  sim->add_option("--sample-rate", sim_sr, "sample rate (Hz)");
  sim->add_option("--from-dirs", sim_from_dirs,
                  "real-audio source root laid out as <split>/<speaker>/<utt>.wav");

  // ----- training stages ----------------------------------------------
  struct TrainArgs {
    fs::path corpus, out;
    std::string train_manifest;  // override (e.g. merged offline manifest)
    std::string denoiser_ckpt;
    std::string backbone_ckpt;
    std::string strategy;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr0;
  };
  auto add_train_opts = [](CLI::App* cmd, TrainArgs& a, bool need_denoiser_ckpt,
                           bool need_backbone_ckpt) {
    cmd->add_option("--corpus", a.corpus, "corpus directory (from `simulate`)")->required();
    cmd->add_option("--out", a.out, "output/run directory")->required();
    cmd->add_option("--train-manifest", a.train_manifest,
                    "override training manifest (e.g. offline merged)");
    if (need_denoiser_ckpt)
      cmd->add_option("--denoiser", a.denoiser_ckpt,
                      "stage-1 denoiser checkpoint, or 'identity'");
    if (need_backbone_ckpt)
      cmd->add_option("--backbone", a.backbone_ckpt, "pretrained backbone checkpoint")
          ->required();
    cmd->add_option("--strategy", a.strategy, "base|concat|on_the_fly|offline");
    cmd->add_option("--epochs", a.epochs, "epoch count");
    cmd->add_option("--batch", a.batch_size, "batch size");
    cmd->add_option("--seed", a.seed, "training seed");
    cmd->add_option("--lr0", a.lr0, "initial learning rate");
  };

  auto* pd = app.add_subcommand("pretrain-denoiser", "stage 1: train the enhancement front-end");
  TrainArgs pd_args;
  add_train_opts(pd, pd_args, false, false);

  auto* pb = app.add_subcommand("pretrain-backbone",
                                "stage 1b: train the extraction backbone against a frozen "
                                "(or identity) front-end");
  TrainArgs pb_args;
  add_train_opts(pb, pb_args, true, false);

  auto* ft = app.add_subcommand("finetune", "stage 2: unfreeze and jointly fine-tune");
  TrainArgs ft_args;
  add_train_opts(ft, ft_args, true, true);

  // ----- build-offline --------------------------------------------------
  auto* bo = app.add_subcommand("build-offline",
                                "denoise the training set and write the merged manifest");
  fs::path bo_corpus, bo_out;
  std::string bo_denoiser;
  std::uint64_t bo_seed = 33;
  std::string bo_split = "train";
  bo->add_option("--corpus", bo_corpus, "corpus directory")->required();
  bo->add_option("--denoiser", bo_denoiser, "stage-1 denoiser checkpoint, or 'identity'")
      ->required();
  bo->add_option("--out", bo_out, "merged manifest path (.jsonl)")->required();
  bo->add_option("--seed", bo_seed, "shuffle seed");
  bo->add_option("--split", bo_split, "split to merge (default train)");

  // ----- extract ---------------------------------------------------------
  auto* ex = app.add_subcommand("extract", "extract the target speaker from one mixture");
  std::string ex_ckpt;
  fs::path ex_mix, ex_enroll, ex_out;
  ex->add_option("--checkpoint", ex_ckpt, "trained checkpoint")->required();
  ex->add_option("--mixture", ex_mix, "mixture wav")->required();
  ex->add_option("--enrollment", ex_enroll, "enrollment wav")->required();
  ex->add_option("--out", ex_out, "output wav")->required();

  // ----- evaluate ----------------------------------------------------------
  auto* ev = app.add_subcommand("evaluate", "run the extraction pipeline over a manifest");
  std::string ev_ckpt;
  fs::path ev_manifest, ev_out;
  bool ev_no_stoi = false;
  ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint")->required();
  ev->add_option("--manifest", ev_manifest, "evaluation manifest (.jsonl)")->required();
  ev->add_option("--out", ev_out, "report directory")->required();
  ev->add_flag("--no-stoi", ev_no_stoi, "skip STOI");

  // ----- visualize-guidance -------------------------------------------------
  auto* vz = app.add_subcommand("visualize-guidance",
                                "export the five guidance comparison panels");
  std::string vz_ckpt = "identity";
  fs::path vz_manifest, vz_out;
  std::size_t vz_index = 0;
  vz->add_option("--checkpoint", vz_ckpt, "denoiser checkpoint, or 'identity'");
  vz->add_option("--manifest", vz_manifest, "manifest (.jsonl)")->required();
  vz->add_option("--index", vz_index, "record index");
  vz->add_option("--out", vz_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  ConfigBundle cfg = load_config(config_path);

  auto load_denoiser = [&](const std::string& spec_str, Models<Scalar>& models) -> std::string {
    if (spec_str.empty() || spec_str == "identity") return "identity";
    auto loaded = checkpoint::load<Scalar>(spec_str);
    if (!loaded.models.denoiser)
      throw ConfigError("checkpoint " + spec_str + " holds no denoiser");
    models.denoiser = std::move(loaded.models.denoiser);
    return "gtcrn";
  };

  if (*sim) {
    SourceBank bank = sim_from_dirs.empty()
                          ? SourceBank::synthetic(sim_bank_seed, sim_speakers, sim_dev_speakers,
                                                  sim_test_speakers, sim_utts, sim_sr)
                          : SourceBank::from_dirs(sim_from_dirs, sim_sr, sim_bank_seed);
    CorpusSpec spec;
    spec.n_train = sim_train;
    spec.n_dev = sim_dev;
    spec.n_test = sim_test;
    spec.interferer_snr = {snr_i_lo, snr_i_hi};
    spec.noise_snr = {snr_n_lo, snr_n_hi};
    spec.seed = sim_seed;
    build_corpus(bank, spec, sim_out);
    write_stamp(sim_out, sim_seed, "simulate");
    std::printf("corpus written to %s (%zu/%zu/%zu)\n", sim_out.c_str(), sim_train, sim_dev,
                sim_test);
    return 0;
  }

  auto apply_overrides = [&](const TrainArgs& a, Stage stage) {
    cfg.plan.stage = stage;
    cfg.plan.freeze_denoiser = (stage == Stage::pretrain_backbone);
    if (!a.strategy.empty()) cfg.plan.strategy = a.strategy;
    if (a.epochs) cfg.plan.epochs = *a.epochs;
    if (a.batch_size) cfg.plan.batch_size = *a.batch_size;
    if (a.seed) cfg.plan.seed = *a.seed;
    if (a.lr0) cfg.plan.lr0 = *a.lr0;
  };

  auto train_manifest_for = [&](const TrainArgs& a) {
    if (!a.train_manifest.empty()) return manifest_io::load(a.train_manifest);
    return load_split(a.corpus, "train");
  };

  if (*pd) {
    apply_overrides(pd_args, Stage::pretrain_denoiser);
    cfg.plan.denoiser_kind = "gtcrn";
    DatasetManifest train = train_manifest_for(pd_args);
    DatasetManifest dev = load_split(pd_args.corpus, "dev");
    Models<Scalar> models;
    models.denoiser = std::make_unique<Denoiser<Scalar>>(
        cfg.denoiser, corpus_bins(train, cfg.stft), 8000, cfg.plan.seed);
    print_param_report("denoiser", count_params(models.denoiser->params()));
    StageRunner<Scalar> runner(cfg.plan, cfg.stft, cfg.drc);
    auto r = runner.run(train, dev, models, pd_args.out);
    std::printf("stage 1 done: dev SI-SDR %.2f dB, checkpoint %s\n",
                r.snap.history.back().dev_si_sdr_db, r.latest_checkpoint.c_str());
    return 0;
  }

  if (*pb) {
    apply_overrides(pb_args, Stage::pretrain_backbone);
    DatasetManifest train = train_manifest_for(pb_args);
    DatasetManifest dev = load_split(pb_args.corpus, "dev");
    Models<Scalar> models;
    cfg.plan.denoiser_kind = load_denoiser(pb_args.denoiser_ckpt, models);
    const StrategyDescriptor strat = select_strategy(cfg.plan.strategy);
    cfg.backbone.in_channels = backbone_in_channels(strat);
    models.backbone = std::make_unique<Backbone<Scalar>>(
        cfg.backbone, corpus_bins(train, cfg.stft), cfg.plan.seed);
    print_param_report("backbone", count_params(models.backbone->params()));
    StageRunner<Scalar> runner(cfg.plan, cfg.stft, cfg.drc);
    auto r = runner.run(train, dev, models, pb_args.out);
    std::printf("backbone pretraining done: dev SI-SDR %.2f dB, checkpoint %s\n",
                r.snap.history.back().dev_si_sdr_db, r.latest_checkpoint.c_str());
    return 0;
  }

  if (*ft) {
    apply_overrides(ft_args, Stage::joint_finetune);
    DatasetManifest train = train_manifest_for(ft_args);
    DatasetManifest dev = load_split(ft_args.corpus, "dev");
    Models<Scalar> models;
    cfg.plan.denoiser_kind = load_denoiser(ft_args.denoiser_ckpt, models);
    auto loaded_bb = checkpoint::load<Scalar>(ft_args.backbone_ckpt);
    if (!loaded_bb.models.backbone)
      throw ConfigError("checkpoint " + ft_args.backbone_ckpt + " holds no backbone");
    models.backbone = std::move(loaded_bb.models.backbone);
    // A backbone checkpoint from `pretrain-backbone` also carries the frozen
    // denoiser; prefer an explicitly given one.
    if (!models.denoiser && loaded_bb.models.denoiser && cfg.plan.denoiser_kind != "identity") {
      models.denoiser = std::move(loaded_bb.models.denoiser);
      cfg.plan.denoiser_kind = "gtcrn";
    }
    StageRunner<Scalar> runner(cfg.plan, cfg.stft, cfg.drc);
    auto r = runner.run(train, dev, models, ft_args.out);
    std::printf("joint fine-tuning done: dev SI-SDR %.2f dB, checkpoint %s\n",
                r.snap.history.back().dev_si_sdr_db, r.latest_checkpoint.c_str());
    return 0;
  }

  if (*bo) {
    Models<Scalar> models;
    const std::string kind = load_denoiser(bo_denoiser, models);
    DatasetManifest source = load_split(bo_corpus, bo_split);
    const DenoiserFn<Scalar> fn =
        kind == "identity" ? identity_denoiser<Scalar>() : models.denoiser->as_fn();
    DatasetManifest merged = build_offline_dataset<Scalar>(source, fn, bo_seed, cfg.stft, cfg.drc);
    manifest_io::save(bo_out, merged);
    write_stamp(bo_out.parent_path().empty() ? fs::path(".") : bo_out.parent_path(), bo_seed,
                "build-offline");
    std::printf("merged manifest with %zu entries written to %s\n", merged.size(),
                bo_out.c_str());
    return 0;
  }

  if (*ex) {
    auto loaded = checkpoint::load<Scalar>(ex_ckpt);
    if (!loaded.models.backbone) throw ConfigError("checkpoint holds no backbone");
    PreparedExample<Scalar> item = prepare_from_wavs(ex_mix, ex_enroll, cfg);
    const StrategyDescriptor strat = select_strategy(loaded.snap.strategy);
    Denoiser<Scalar>* dn =
        loaded.snap.denoiser_kind == "identity" ? nullptr : loaded.models.denoiser.get();
    const Waveform est = extract_estimate<Scalar>(item, dn, *loaded.models.backbone, strat,
                                                  cfg.drc, cfg.plan.scale_logits);
    wavio::write(ex_out, est);
    std::printf("estimate written to %s\n", ex_out.c_str());
    return 0;
  }

  if (*ev) {
    auto loaded = checkpoint::load<Scalar>(ev_ckpt);
    DatasetManifest manifest = manifest_io::load(ev_manifest);
    const StrategyDescriptor strat = select_strategy(loaded.snap.strategy);
    fs::create_directories(ev_out);
    const fs::path pesq_dir = ev_out / "pesq_tmp";
    const bool want_pesq = std::getenv("LGTSE_PESQ_BIN") != nullptr;
    if (want_pesq) fs::create_directories(pesq_dir);
    EvalReport rep = evaluate_manifest<Scalar>(
        loaded.models, loaded.snap.denoiser_kind, manifest, strat, cfg.stft, cfg.drc,
        cfg.plan.scale_logits, !ev_no_stoi, want_pesq ? &pesq_dir : nullptr);
    report_io::save(rep, ev_out / "summary.txt", ev_out / "per_utterance.jsonl");
    write_stamp(ev_out, loaded.snap.seed, "evaluate");
    std::printf("evaluated %zu utterances (%zu failures)\n", rep.count(), rep.failures);
    std::printf("mean SI-SDR  %.2f dB\nmean SI-SDRi %.2f dB\nmean STOI    %.4f\n",
                rep.mean_si_sdr_db(), rep.mean_si_sdri_db(), rep.mean_stoi());
    return 0;
  }

  if (*vz) {
    DatasetManifest manifest = manifest_io::load(vz_manifest);
    if (vz_index >= manifest.size()) throw InvalidInputError("record index out of range");
    PreparedExample<Scalar> item = prepare_example<Scalar>(manifest, vz_index, cfg.stft, cfg.drc);
    Models<Scalar> models;
    const std::string kind = load_denoiser(vz_ckpt, models);
    const DenoiserFn<Scalar> fn =
        kind == "identity" ? identity_denoiser<Scalar>() : models.denoiser->as_fn();
    GuidanceExport out = export_guidance_figures<Scalar>(item, fn, vz_out,
                                                         cfg.plan.scale_logits);
    for (const auto& p : out.arrays) std::printf("array %s\n", p.c_str());
    for (const auto& p : out.images) std::printf("image %s\n", p.c_str());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
