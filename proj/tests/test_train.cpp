#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "lgtse/data/corpus.hpp"
#include "lgtse/metrics/stoi.hpp"
#include "lgtse/train/schedule.hpp"
#include "lgtse/train/trainer.hpp"
#include "lgtse/train/visualize.hpp"

using namespace lgtse;
namespace fs = std::filesystem;

namespace {

fs::path corpus_root() {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "lgtse_train_test" / "corpus";
    fs::remove_all(p);
    fs::create_directories(p);
    SourceBank bank = SourceBank::synthetic(41, 4, 2, 2, 3);
    CorpusSpec spec;
    spec.n_train = 8;
    spec.n_dev = 3;
    spec.n_test = 3;
    spec.seed = 7;
    build_corpus(bank, spec, p);
    return p;
  }();
  return root;
}

fs::path work_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "lgtse_train_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

DenoiserConfig tiny_denoiser_config() {
  DenoiserConfig c;
  c.erb_bands = 8;
  c.encoder_channels = {4, 4};
  c.gt_blocks = 1;
  c.dprnn_hidden = 4;
  c.dprnn_groups = 2;
  return c;
}

BackboneConfig tiny_backbone_config(std::size_t in_channels = 4) {
  BackboneConfig c;
  c.in_channels = in_channels;
  c.encoder_channels = 4;
  c.bottleneck_channels = 8;
  c.tcn_blocks = 2;
  c.tcn_dilations = {1, 2};
  c.pyramid_levels = 2;
  return c;
}

TrainPlan tiny_plan(Stage stage, std::size_t epochs, const std::string& strategy = "base",
                    const std::string& denoiser_kind = "gtcrn") {
  TrainPlan p = TrainPlan::for_stage(stage);
  p.strategy = strategy;
  p.denoiser_kind = denoiser_kind;
  p.epochs = epochs;
  p.batch_size = 4;
  p.seed = 11;
  return p;
}

std::vector<float> param_bytes(const ParamStore<float>& ps) {
  std::vector<float> out;
  for (const auto& e : ps.entries())
    out.insert(out.end(), e.var.val().vec().begin(), e.var.val().vec().end());
  return out;
}

}  // namespace

TEST_CASE("lr schedule matches the closed-form table") {
  CHECK(lr_at_epoch(0.0005, 150, 0) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK(lr_at_epoch(0.0005, 150, 1) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK(lr_at_epoch(0.0005, 150, 2) == doctest::Approx(0.0005 * 0.98).epsilon(1e-12));
  // Closed form at epoch 4: 0.0005 * 0.98^2 = 0.0004802.
  CHECK(lr_at_epoch(0.0005, 150, 4) == doctest::Approx(0.0005 * 0.98 * 0.98).epsilon(1e-12));
  CHECK(lr_at_epoch(0.0005, 150, 100) ==
        doctest::Approx(0.0005 * std::pow(0.98, 50.0)).epsilon(1e-12));
  // Hold between 100 and the final-20 window, then 0.9 decay inside it.
  CHECK(lr_at_epoch(0.0005, 150, 129) == doctest::Approx(lr_at_epoch(0.0005, 150, 100)));
  CHECK(lr_at_epoch(0.0005, 150, 132) ==
        doctest::Approx(lr_at_epoch(0.0005, 150, 100) * 0.9).epsilon(1e-12));
  CHECK(lr_at_epoch(0.0005, 150, 149) ==
        doctest::Approx(lr_at_epoch(0.0005, 150, 100) * std::pow(0.9, 9.0)).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at_epoch(0.0005, 10, 10), InvalidInputError);
}

TEST_CASE("plan invariants") {
  TrainPlan p = TrainPlan::for_stage(Stage::pretrain_backbone);
  CHECK(p.freeze_denoiser);
  p.freeze_denoiser = false;
  CHECK_THROWS_AS(p.validate(), ConfigError);

  TrainPlan j = TrainPlan::for_stage(Stage::joint_finetune);
  CHECK(!j.freeze_denoiser);
  j.freeze_denoiser = true;
  CHECK_THROWS_AS(j.validate(), ConfigError);
}

TEST_CASE("stage prerequisites are enforced") {
  DatasetManifest train = manifest_io::load(corpus_root() / "train.manifest.jsonl");
  DatasetManifest dev = manifest_io::load(corpus_root() / "dev.manifest.jsonl");

  Models<float> empty;
  StageRunner<float> joint(tiny_plan(Stage::joint_finetune, 1));
  CHECK_THROWS_AS(joint.run(train, dev, empty, work_dir("pre1")), ConfigError);

  Models<float> no_denoiser;
  no_denoiser.backbone = std::make_unique<Backbone<float>>(tiny_backbone_config(), 129, 1);
  StageRunner<float> pb(tiny_plan(Stage::pretrain_backbone, 1));
  CHECK_THROWS_AS(pb.run(train, dev, no_denoiser, work_dir("pre2")), ConfigError);
}

TEST_CASE("stage 1 trains only the denoiser; backbone pretraining freezes it") {
  DatasetManifest train = manifest_io::load(corpus_root() / "train.manifest.jsonl");
  DatasetManifest dev = manifest_io::load(corpus_root() / "dev.manifest.jsonl");

  Models<float> models;
  models.denoiser = std::make_unique<Denoiser<float>>(tiny_denoiser_config(), 129, 8000, 3);
  const std::vector<float> before = param_bytes(models.denoiser->params());

  StageRunner<float> s1(tiny_plan(Stage::pretrain_denoiser, 2));
  auto r1 = s1.run(train, dev, models, work_dir("s1"));
  CHECK(r1.snap.history.size() == 2);
  const std::vector<float> after_s1 = param_bytes(models.denoiser->params());
  CHECK(before != after_s1);

  // Post-clip gradient norms always satisfy the clip bound.
  for (double n : r1.post_clip_grad_norms) CHECK(n <= 1.0 + 1e-6);

  // Backbone pretraining must leave the frozen denoiser byte-identical.
  models.backbone = std::make_unique<Backbone<float>>(tiny_backbone_config(), 129, 4);
  StageRunner<float> s2(tiny_plan(Stage::pretrain_backbone, 2));
  auto r2 = s2.run(train, dev, models, work_dir("s2"));
  CHECK(param_bytes(models.denoiser->params()) == after_s1);
  CHECK(r2.post_clip_grad_norms.size() == 2 * ((8 + 3) / 4));

  // Joint fine-tuning unfreezes both.
  TrainPlan jp = tiny_plan(Stage::joint_finetune, 1);
  StageRunner<float> s3(jp);
  const std::vector<float> bb_before = param_bytes(models.backbone->params());
  s3.run(train, dev, models, work_dir("s3"));
  CHECK(param_bytes(models.denoiser->params()) != after_s1);
  CHECK(param_bytes(models.backbone->params()) != bb_before);
}

TEST_CASE("identical seeds give identical runs; the run stamp is written") {
  DatasetManifest train = manifest_io::load(corpus_root() / "train.manifest.jsonl");
  DatasetManifest dev = manifest_io::load(corpus_root() / "dev.manifest.jsonl");

  auto run_once = [&](const fs::path& dir) {
    Models<float> models;
    models.denoiser = std::make_unique<Denoiser<float>>(tiny_denoiser_config(), 129, 8000, 3);
    StageRunner<float> s1(tiny_plan(Stage::pretrain_denoiser, 2));
    auto r = s1.run(train, dev, models, dir);
    return std::make_pair(r.snap.history.back().dev_si_sdr_db,
                          param_bytes(models.denoiser->params()));
  };
  const fs::path dir1 = work_dir("det1"), dir2 = work_dir("det2");
  auto [dev1, p1] = run_once(dir1);
  auto [dev2, p2] = run_once(dir2);
  CHECK(dev1 == dev2);
  CHECK(p1 == p2);
  CHECK(fs::exists(dir1 / "run_stamp.json"));
}

TEST_CASE("checkpoint resume reproduces an uninterrupted run bit-for-bit") {
  DatasetManifest train = manifest_io::load(corpus_root() / "train.manifest.jsonl");
  DatasetManifest dev = manifest_io::load(corpus_root() / "dev.manifest.jsonl");

  // Uninterrupted two epochs.
  Models<float> straight;
  straight.denoiser = std::make_unique<Denoiser<float>>(tiny_denoiser_config(), 129, 8000, 3);
  StageRunner<float> s2(tiny_plan(Stage::pretrain_denoiser, 2));
  s2.run(train, dev, straight, work_dir("resume_a"));

  // One epoch, then resume from the checkpoint for the second.
  const fs::path dir_b = work_dir("resume_b");
  {
    Models<float> first;
    first.denoiser = std::make_unique<Denoiser<float>>(tiny_denoiser_config(), 129, 8000, 3);
    TrainPlan p1 = tiny_plan(Stage::pretrain_denoiser, 2);
    p1.epochs = 1;
    StageRunner<float> s1(p1);
    s1.run(train, dev, first, dir_b);
  }
  auto loaded = checkpoint::load<float>(dir_b / "latest.ckpt");
  CHECK(loaded.snap.epoch == 1);
  StageRunner<float> s1b(tiny_plan(Stage::pretrain_denoiser, 2));
  auto rb = s1b.run(train, dev, loaded.models, dir_b, &loaded);
  CHECK(rb.snap.history.size() == 2);

  CHECK(param_bytes(straight.denoiser->params()) == param_bytes(loaded.models.denoiser->params()));
}

TEST_CASE("checkpoints round-trip configs and reject mismatched scalars") {
  Models<float> models;
  models.denoiser = std::make_unique<Denoiser<float>>(tiny_denoiser_config(), 129, 8000, 5);
  models.backbone = std::make_unique<Backbone<float>>(tiny_backbone_config(6), 129, 6);

  checkpoint::Snapshot<float> snap;
  snap.stage = Stage::joint_finetune;
  snap.epoch = 3;
  snap.seed = 17;
  snap.strategy = "concat";
  const fs::path p = work_dir("ckpt") / "m.ckpt";
  checkpoint::save<float>(p, snap, models, nullptr);

  auto loaded = checkpoint::load<float>(p);
  CHECK(loaded.snap.stage == Stage::joint_finetune);
  CHECK(loaded.snap.epoch == 3);
  CHECK(loaded.models.denoiser->config() == models.denoiser->config());
  CHECK(loaded.models.backbone->config() == models.backbone->config());
  CHECK(param_bytes(loaded.models.denoiser->params()) == param_bytes(models.denoiser->params()));

  CHECK_THROWS_AS(checkpoint::load<double>(p), ConfigError);
}

TEST_CASE("non-finite loss raises TrainingDiverged with location info") {
  DatasetManifest train = manifest_io::load(corpus_root() / "train.manifest.jsonl");
  DatasetManifest dev = manifest_io::load(corpus_root() / "dev.manifest.jsonl");

  Models<float> models;
  models.denoiser = std::make_unique<Denoiser<float>>(tiny_denoiser_config(), 129, 8000, 3);
  models.denoiser->params().entries()[0].var.mutable_val()[0] =
      std::numeric_limits<float>::quiet_NaN();

  StageRunner<float> s1(tiny_plan(Stage::pretrain_denoiser, 1));
  CHECK_THROWS_WITH_AS(s1.run(train, dev, models, work_dir("nan")),
                       doctest::Contains("epoch 0"), TrainingDivergedError);
}

TEST_CASE("degenerate baseline: identity-denoiser guidance equals direct interaction") {
  // The baseline configuration is the base strategy with the identity
  // front-end; its guidance is bit-identical to direct context interaction,
  // so with equal seeds the training trajectory is the direct-interaction
  // trajectory (determinism is checked separately above).
  DatasetManifest train = manifest_io::load(corpus_root() / "train.manifest.jsonl");
  PreparedExample<float> ex = prepare_example<float>(train, 0);
  auto [g, yd] = noise_agnostic_guidance(ex.enroll, ex.mixture, identity_denoiser<float>());
  GuidanceFeature<float> direct = context_interaction(ex.enroll, ex.mixture);
  CHECK(g.data.vec() == direct.data.vec());

  Models<float> models;
  models.backbone = std::make_unique<Backbone<float>>(tiny_backbone_config(), 129, 8);
  StageRunner<float> runner(tiny_plan(Stage::pretrain_backbone, 1, "base", "identity"));
  auto r = runner.run(train, manifest_io::load(corpus_root() / "dev.manifest.jsonl"), models,
                      work_dir("e1"));
  CHECK(r.snap.history.size() == 1);
  CHECK(std::isfinite(r.snap.history[0].train_loss));
}

TEST_CASE("evaluation identities: oracle and pass-through pipelines") {
  DatasetManifest test_man = manifest_io::load(corpus_root() / "test.manifest.jsonl");

  EvalReport oracle, passthrough;
  for (std::size_t i = 0; i < test_man.size(); ++i) {
    PreparedExample<float> ex = prepare_example<float>(test_man, i);
    UtteranceEval o;
    o.id = test_man.entries[i].id;
    o.si_sdr_db = si_sdr(*ex.target, *ex.target);
    o.si_sdri_db = si_sdri(*ex.target, *ex.target, *ex.mixture_wave);
    o.stoi = stoi(*ex.target, *ex.target);
    oracle.utterances.push_back(o);

    UtteranceEval m;
    m.id = o.id;
    m.si_sdr_db = si_sdr(*ex.mixture_wave, *ex.target);
    m.si_sdri_db = si_sdri(*ex.mixture_wave, *ex.target, *ex.mixture_wave);
    m.stoi = stoi(*ex.mixture_wave, *ex.target);
    passthrough.utterances.push_back(m);
  }
  CHECK(oracle.mean_si_sdr_db() == doctest::Approx(kSiSdrClampDb));
  CHECK(oracle.mean_stoi() >= 0.99);
  CHECK(passthrough.mean_si_sdri_db() == 0.0);
}

TEST_CASE("evaluate_manifest runs the full pipeline and counts failures") {
  DatasetManifest test_man = manifest_io::load(corpus_root() / "test.manifest.jsonl");

  Models<float> models;
  models.backbone = std::make_unique<Backbone<float>>(tiny_backbone_config(), 129, 9);
  EvalReport rep = evaluate_manifest<float>(models, "identity", test_man,
                                            select_strategy("base"));
  CHECK(rep.count() == test_man.size());
  CHECK(rep.failures == 0);
  for (const auto& u : rep.utterances) CHECK(std::isfinite(u.si_sdr_db));

  DatasetManifest broken = test_man;
  broken.entries[0].mixture = "test/mix/missing.wav";
  EvalReport rep2 = evaluate_manifest<float>(models, "identity", broken, select_strategy("base"));
  CHECK(rep2.failures == 1);
  CHECK(rep2.count() == test_man.size() - 1);
}

TEST_CASE("guidance figure export: five panels with the expected equalities") {
  DatasetManifest train = manifest_io::load(corpus_root() / "train.manifest.jsonl");
  PreparedExample<float> ex = prepare_example<float>(train, 1);

  const fs::path out1 = work_dir("viz_identity");
  GuidanceExport e1 = export_guidance_figures<float>(ex, identity_denoiser<float>(), out1);
  CHECK(e1.arrays.size() == 5);
  CHECK(e1.images.size() == 5);
  for (const auto& p : e1.arrays) CHECK(fs::exists(p));
  for (const auto& p : e1.images) CHECK(fs::exists(p));

  // Identity denoiser: the two guidance arrays are byte-identical.
  auto noisy = npy::load<float>(out1 / "guidance_noisy.npy");
  auto denoised = npy::load<float>(out1 / "guidance_denoised.npy");
  REQUIRE(noisy.shape() == denoised.shape());
  CHECK(noisy.vec() == denoised.vec());

  // Oracle denoiser: denoised guidance equals interaction with the clean mix.
  PreparedExample<float> clean_ex = ex;
  const Waveform clean = *ex.clean_mix;
  ComplexSpec<float> clean_spec = drc_compress(stft<float>(clean), DrcConfig{});
  DenoiserFn<float> oracle = [&](const ComplexSpec<float>&) { return clean_spec; };
  const fs::path out2 = work_dir("viz_oracle");
  export_guidance_figures<float>(ex, oracle, out2);
  auto oracle_guid = npy::load<float>(out2 / "guidance_denoised.npy");
  GuidanceFeature<float> direct = context_interaction(ex.enroll, clean_spec);
  CHECK(oracle_guid.vec() == direct.data.vec());
}
