#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

#include "lgtse/common/fft.hpp"
#include "lgtse/data/corpus.hpp"
#include "lgtse/data/mix.hpp"
#include "lgtse/data/synth.hpp"

using namespace lgtse;
namespace fs = std::filesystem;

namespace {

fs::path temp_root(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "lgtse_data_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Peak of |cross-correlation| over all lags, normalised by signal norms.
double xcorr_peak(const Waveform& a, const Waveform& b) {
  std::size_t n = 1;
  while (n < 2 * std::max(a.size(), b.size())) n <<= 1;
  std::vector<std::complex<double>> fa(n), fb(n);
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = a.samples[i];
  for (std::size_t i = 0; i < b.size(); ++i) fb[i] = b.samples[i];
  fft_inplace(fa, false);
  fft_inplace(fb, false);
  for (std::size_t i = 0; i < n; ++i) fa[i] *= std::conj(fb[i]);
  fft_inplace(fa, true);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, std::abs(fa[i].real()));
  return peak / std::sqrt(a.energy() * b.energy());
}

double spectral_centroid_hz(const Waveform& w) {
  std::size_t n = 1;
  while (n < w.size()) n <<= 1;
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < w.size(); ++i) buf[i] = w.samples[i];
  fft_inplace(buf, false);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double hz = static_cast<double>(k) * w.sample_rate / static_cast<double>(n);
    const double mag = std::abs(buf[k]);
    num += hz * mag;
    den += mag;
  }
  return num / den;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("speaker synthesis is deterministic per (seed, duration)") {
  const Waveform a = synth::speaker_signal(7, 1.2);
  const Waveform b = synth::speaker_signal(7, 1.2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.samples[i] == b.samples[i]);
  CHECK(a.peak() == doctest::Approx(0.9));

  const Waveform c = synth::speaker_signal(7, 1.2, /*utterance_seed=*/1);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a.samples[i] - c.samples[i]);
  CHECK(diff > 1.0);

  CHECK_THROWS_AS(synth::speaker_signal(7, 0.2), InvalidInputError);
}

TEST_CASE("different speakers decorrelate and stay in the speech band") {
  for (std::uint64_t k = 0; k < 20; ++k) {
    const Waveform a = synth::speaker_signal(1000 + 2 * k, 1.0);
    const Waveform b = synth::speaker_signal(1001 + 2 * k, 1.0);
    CHECK(xcorr_peak(a, b) < 0.5);
  }
  for (std::uint64_t k = 0; k < 10; ++k) {
    const double c = spectral_centroid_hz(synth::speaker_signal(2000 + k, 1.0));
    CHECK(c > 100.0);
    CHECK(c < 2000.0);
  }
}

TEST_CASE("mix_minimum truncates, hits requested SNRs, and decomposes exactly") {
  const Waveform t = synth::speaker_signal(1, 1.0);       // 8000
  const Waveform i = synth::speaker_signal(2, 1.125);     // 9000
  const Waveform n = synth::noise_signal(3, 1.25);        // 10000
  REQUIRE(t.size() == 8000);
  REQUIRE(i.size() == 9000);
  REQUIRE(n.size() == 10000);

  MixtureExample ex = mix_minimum(t, i, n, 2.5, -3.0);
  CHECK(ex.target.size() == 8000);
  CHECK(ex.interferer.size() == 8000);
  CHECK(ex.noise.size() == 8000);
  CHECK(ex.mixture.size() == 8000);
  CHECK(ex.clean_mixture.size() == 8000);

  const double snr_i = 10.0 * std::log10(ex.target.energy() / ex.interferer.energy());
  const double snr_n = 10.0 * std::log10(ex.clean_mixture.energy() / ex.noise.energy());
  CHECK(std::abs(snr_i - 2.5) < 0.01);
  CHECK(std::abs(snr_n - (-3.0)) < 0.01);

  double residual = 0.0, residual_clean = 0.0;
  for (std::size_t k = 0; k < 8000; ++k) {
    residual = std::max(residual,
                        std::abs(ex.mixture.samples[k] - ex.target.samples[k] -
                                 ex.interferer.samples[k] - ex.noise.samples[k]));
    residual_clean = std::max(residual_clean,
                              std::abs(ex.clean_mixture.samples[k] -
                                       (ex.mixture.samples[k] - ex.noise.samples[k])));
  }
  CHECK(residual < 1e-10);
  CHECK(residual_clean < 1e-10);
}

TEST_CASE("snr_noise_db = 0 equalises noise and clean-mixture energy") {
  const Waveform t = synth::speaker_signal(4, 1.0);
  const Waveform i = synth::speaker_signal(5, 1.0);
  const Waveform n = synth::noise_signal(6, 1.0);
  MixtureExample ex = mix_minimum(t, i, n, 0.0, 0.0);
  const double ratio_db = 10.0 * std::log10(ex.clean_mixture.energy() / ex.noise.energy());
  CHECK(std::abs(ratio_db) < 0.01);
}

TEST_CASE("mix_minimum rejects silent components") {
  Waveform silent;
  silent.sample_rate = 8000;
  silent.samples.assign(8000, 0.0);
  const Waveform t = synth::speaker_signal(7, 1.0);
  const Waveform n = synth::noise_signal(8, 1.0);
  CHECK_THROWS_AS(mix_minimum(t, silent, n, 0.0, 0.0), InvalidInputError);
}

TEST_CASE("source bank split hygiene") {
  SourceBank bank = SourceBank::synthetic(11, 3, 2, 2, 3);
  bank.validate();

  // One utterance per speaker is not enough for enrollment pairing.
  SourceBank bad = SourceBank::synthetic(11, 3, 2, 2, 1);
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  // Speaker ids never overlap across splits.
  std::set<std::string> train_ids, other_ids;
  for (const auto& s : bank.split[0]) train_ids.insert(s.speaker_id);
  for (int sp : {1, 2})
    for (const auto& s : bank.split[sp]) other_ids.insert(s.speaker_id);
  for (const auto& id : other_ids) CHECK(train_ids.count(id) == 0);
}

TEST_CASE("real-audio mode is indistinguishable downstream") {
  // Materialise a speaker/utterance tree from the synthesizer, rebuild the
  // bank from those WAVs, and check the corpus contract end to end.
  const fs::path src = temp_root("real_sources");
  Rng rng(61);
  for (int s = 0; s < 3; ++s) {
    const std::string split = SourceBank::kSplitNames[s];
    for (int spk = 0; spk < 2; ++spk) {
      const fs::path dir = src / split / (split + "_p" + std::to_string(spk));
      fs::create_directories(dir);
      for (int u = 0; u < 3; ++u) {
        const Waveform w =
            synth::speaker_signal(7000 + 10 * s + spk, rng.uniform(1.0, 1.3), u);
        wavio::write(dir / ("utt" + std::to_string(u) + ".wav"), w);
      }
    }
  }

  SourceBank bank = SourceBank::from_dirs(src, 8000, 99);
  bank.validate();
  CorpusSpec spec;
  spec.n_train = 6;
  spec.n_dev = 2;
  spec.n_test = 2;
  spec.seed = 11;
  const fs::path root = temp_root("real_corpus");
  CorpusManifests m = build_corpus(bank, spec, root);
  REQUIRE(m.train.size() == 6);

  // Same manifest schema, resolvable audio, same invariants as synthetic.
  DatasetManifest loaded = manifest_io::load(root / "train.manifest.jsonl");
  for (const auto& r : loaded.entries) {
    CHECK(r.provenance == "original");
    const Waveform mix = wavio::read(loaded.resolve(r.mixture));
    const Waveform target = wavio::read(loaded.resolve(r.target));
    const Waveform enroll = wavio::read(loaded.resolve(r.enrollment));
    CHECK(mix.size() == target.size());
    CHECK(!enroll.samples.empty());
  }
}

TEST_CASE("corpus generation: counts, enrollment pairing, SNRs from disk, determinism") {
  SourceBank bank = SourceBank::synthetic(21, 4, 2, 2, 3);
  CorpusSpec spec;
  spec.n_train = 12;
  spec.n_dev = 4;
  spec.n_test = 4;
  spec.seed = 99;

  const fs::path root1 = temp_root("corpus1");
  CorpusManifests m1 = build_corpus(bank, spec, root1);
  REQUIRE(m1.train.size() == 12);
  REQUIRE(m1.dev.size() == 4);
  REQUIRE(m1.test.size() == 4);

  // Enrollment pairing invariants, checked at the example level.
  for (std::size_t k = 0; k < 6; ++k) {
    MixtureExample ex = corpus_detail::make_example(bank, 0, m1.train.entries[k].seed,
                                                    spec.interferer_snr, spec.noise_snr);
    CHECK(ex.enrollment_utterance_id != ex.utterance_id);
    CHECK(!ex.enrollment.samples.empty());
  }

  // Requested SNRs hold when re-measured from the stored audio.
  for (const auto& r : m1.train.entries) {
    const Waveform target = wavio::read(m1.train.resolve(r.target));
    const Waveform clean = wavio::read(m1.train.resolve(r.clean_mix));
    const Waveform noise = wavio::read(root1 / "train" / "noise" / (r.id + ".wav"));
    Waveform interferer;
    interferer.sample_rate = target.sample_rate;
    interferer.samples.resize(target.size());
    for (std::size_t i = 0; i < target.size(); ++i)
      interferer.samples[i] = clean.samples[i] - target.samples[i];
    const double snr_i = 10.0 * std::log10(target.energy() / interferer.energy());
    const double snr_n = 10.0 * std::log10(clean.energy() / noise.energy());
    CHECK(std::abs(snr_i - r.snr_db_interferer) < 0.01);
    CHECK(std::abs(snr_n - r.snr_db_noise) < 0.01);
  }

  // Byte-identical regeneration, manifests included.
  const fs::path root2 = temp_root("corpus2");
  build_corpus(bank, spec, root2);
  for (const auto& r : m1.train.entries) {
    CHECK(file_bytes(root1 / r.mixture) == file_bytes(root2 / r.mixture));
    CHECK(file_bytes(root1 / r.target) == file_bytes(root2 / r.target));
  }
  CHECK(file_bytes(root1 / "train.manifest.jsonl") == file_bytes(root2 / "train.manifest.jsonl"));
  CHECK(file_bytes(root1 / "test.manifest.jsonl") == file_bytes(root2 / "test.manifest.jsonl"));
}
