#include <doctest.h>

#include <cmath>
#include <vector>

#include "lgtse/common/rng.hpp"
#include "lgtse/data/synth.hpp"
#include "lgtse/metrics/si_sdr.hpp"
#include "lgtse/metrics/stoi.hpp"

using namespace lgtse;

namespace {

Waveform random_wave(std::uint64_t seed, std::size_t n, int sr = 8000) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (auto& v : w.samples) v = rng.uniform(-0.8, 0.8);
  return w;
}

// Orthogonalise n against s (Gram-Schmidt) and scale its norm to match.
Waveform orthogonal_equal_energy(const Waveform& s, std::uint64_t seed) {
  Waveform n = random_wave(seed, s.size(), s.sample_rate);
  double dot = 0.0, se = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    dot += n.samples[i] * s.samples[i];
    se += s.samples[i] * s.samples[i];
  }
  for (std::size_t i = 0; i < s.size(); ++i) n.samples[i] -= dot / se * s.samples[i];
  const double ne = n.energy();
  n.scale(std::sqrt(se / ne));
  return n;
}

}  // namespace

TEST_CASE("si_sdr exact cases") {
  const Waveform s = random_wave(1, 4000);

  // Perfect estimate hits the clamp ceiling.
  CHECK(si_sdr(s, s) == kSiSdrClampDb);

  // Orthogonal noise with equal energy gives exactly 0 dB (alpha = 1).
  const Waveform n = orthogonal_equal_energy(s, 2);
  Waveform est = s;
  for (std::size_t i = 0; i < s.size(); ++i) est.samples[i] += n.samples[i];
  CHECK(std::abs(si_sdr(est, s)) < 1e-9);

  // Reference-scale invariance.
  for (double c : {0.1, 3.0, 1000.0}) {
    Waveform sc = s;
    sc.scale(c);
    CHECK(std::abs(si_sdr(est, sc) - si_sdr(est, s)) < 1e-9);
  }
}

TEST_CASE("si_sdr error paths") {
  const Waveform s = random_wave(3, 100);
  Waveform zero;
  zero.samples.assign(100, 0.0);
  CHECK_THROWS_AS(si_sdr(s, zero), InvalidInputError);
  Waveform shorter = random_wave(4, 99);
  CHECK_THROWS_AS(si_sdr(shorter, s), ShapeError);
}

TEST_CASE("si_sdr strictly decreases with orthogonal noise energy") {
  const Waveform s = random_wave(5, 4000);
  const Waveform n = orthogonal_equal_energy(s, 6);
  double prev = 1e9;
  for (double g : {0.1, 0.3, 1.0, 3.0}) {
    Waveform est = s;
    for (std::size_t i = 0; i < s.size(); ++i) est.samples[i] += g * n.samples[i];
    const double v = si_sdr(est, s);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("si_sdri") {
  const Waveform ref = random_wave(7, 4000);
  Waveform mix = ref;
  const Waveform n = orthogonal_equal_energy(ref, 8);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] += 0.7 * n.samples[i];

  CHECK(si_sdri(mix, ref, mix) == 0.0);
  CHECK(si_sdri(ref, ref, mix) == doctest::Approx(kSiSdrClampDb - si_sdr(mix, ref)));

  const Waveform est = random_wave(9, 4000);
  CHECK(si_sdri(est, ref, mix) == doctest::Approx(si_sdr(est, ref) - si_sdr(mix, ref)));
}

TEST_CASE("joint loss composition and stage weights") {
  const Waveform clean = random_wave(10, 2000);
  const Waveform target = random_wave(11, 2000);

  // Perfect denoiser and extractor: two clamped ceilings.
  LossValue perfect = joint_loss(clean, clean, target, target);
  CHECK(perfect.total == doctest::Approx(-120.0));

  const Waveform yd = random_wave(12, 2000);
  const Waveform yhat = random_wave(13, 2000);
  LossValue lv = joint_loss(yd, clean, yhat, target);
  CHECK(lv.total - lv.weight_denoiser * lv.denoiser_term - lv.weight_backbone * lv.backbone_term ==
        0.0);
  CHECK(lv.denoiser_term == doctest::Approx(-si_sdr(yd, clean)));
  CHECK(lv.backbone_term == doctest::Approx(-si_sdr(yhat, target)));

  // Denoiser-only mode zeroes the backbone contribution.
  LossValue stage1 = joint_loss(yd, clean, yhat, target, 1.0, 0.0);
  CHECK(stage1.total == doctest::Approx(stage1.denoiser_term));
}

TEST_CASE("joint loss gradient matches finite differences on 64-sample toys") {
  Rng rng(14);
  Tensor<double> clean({64}), target({64});
  for (std::size_t i = 0; i < 64; ++i) {
    clean[i] = rng.uniform(-1.0, 1.0);
    target[i] = rng.uniform(-1.0, 1.0);
  }
  auto yd = ad::Var<double>::leaf(Tensor<double>({64}), true);
  auto yh = ad::Var<double>::leaf(Tensor<double>({64}), true);
  for (std::size_t i = 0; i < 64; ++i) {
    yd.mutable_val()[i] = rng.uniform(-1.0, 1.0);
    yh.mutable_val()[i] = rng.uniform(-1.0, 1.0);
  }

  auto loss_fn = [&] {
    return ad::add(ad_loss::neg_si_sdr_loss(yd, clean), ad_loss::neg_si_sdr_loss(yh, target));
  };
  yd.zero_grad();
  yh.zero_grad();
  ad::backward(loss_fn());

  double num = 0.0, den = 0.0;
  const double h = 1e-7;
  for (auto* leaf : {&yd, &yh}) {
    for (std::size_t i = 0; i < 64; ++i) {
      const double orig = leaf->mutable_val()[i];
      leaf->mutable_val()[i] = orig + h;
      const double fp = loss_fn().val()[0];
      leaf->mutable_val()[i] = orig - h;
      const double fm = loss_fn().val()[0];
      leaf->mutable_val()[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      num += (leaf->grad()[i] - fd) * (leaf->grad()[i] - fd);
      den += fd * fd;
    }
  }
  CHECK(std::sqrt(num / den) < 1e-5);
}

TEST_CASE("stoi self-score and noise behaviour") {
  const Waveform speech = synth::speaker_signal(42, 2.0);

  CHECK(stoi(speech, speech) >= 0.99);

  // Independent noise scores low on average.
  double acc = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const Waveform junk = random_wave(100 + k, speech.size());
    acc += stoi(junk, speech);
  }
  CHECK(acc / 20.0 < 0.2);
}

TEST_CASE("stoi degrades monotonically with noise level") {
  const Waveform speech = synth::speaker_signal(43, 2.0);
  for (std::uint64_t k = 0; k < 20; ++k) {
    const Waveform noise = synth::noise_signal(200 + k, 2.0);
    Waveform light = speech, heavy = speech;
    for (std::size_t i = 0; i < speech.size(); ++i) {
      light.samples[i] += 0.1 * noise.samples[i];
      heavy.samples[i] += noise.samples[i];
    }
    CHECK(stoi(light, speech) > stoi(heavy, speech));
  }
}

TEST_CASE("stoi rejects too-short input") {
  const Waveform tiny = random_wave(15, 800);  // 0.1 s
  CHECK_THROWS_AS(stoi(tiny, tiny), InvalidInputError);
}
