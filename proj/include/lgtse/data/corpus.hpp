#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "lgtse/common/error.hpp"
#include "lgtse/common/rng.hpp"
#include "lgtse/data/manifest.hpp"
#include "lgtse/data/mix.hpp"
#include "lgtse/data/synth.hpp"
#include "lgtse/io/wav.hpp"

namespace lgtse {

// Utterance pools per split. Synthetic utterances are (seed, duration)
// recipes rendered on demand; real-audio mode points at WAV files laid out
// as <split>/<speaker>/<utterance>.wav. Downstream code cannot tell the two
// modes apart once the corpus is built.
struct SourceBank {
  struct Utterance {
    std::string utt_id;
    std::uint64_t synth_seed = 0;
    double duration_s = 0.0;
    std::filesystem::path wav;  // empty in synthetic mode
  };
  struct Speaker {
    std::string speaker_id;
    std::uint64_t speaker_seed = 0;
    std::vector<Utterance> utterances;
  };

  std::vector<Speaker> split[3];  // train, dev, test
  std::vector<std::uint64_t> noise_seeds;
  std::vector<std::filesystem::path> noise_wavs;
  int sample_rate = 8000;
  std::uint64_t seed = 0;

  static constexpr const char* kSplitNames[3] = {"train", "dev", "test"};

  static SourceBank synthetic(std::uint64_t seed, std::size_t train_speakers = 12,
                              std::size_t dev_speakers = 4, std::size_t test_speakers = 4,
                              std::size_t utts_per_speaker = 8, int sample_rate = 8000,
                              double min_utt_s = 1.0, double max_utt_s = 1.25) {
    SourceBank bank;
    bank.sample_rate = sample_rate;
    bank.seed = seed;
    std::size_t counts[3] = {train_speakers, dev_speakers, test_speakers};
    std::uint64_t spk_index = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t i = 0; i < counts[s]; ++i, ++spk_index) {
        Speaker spk;
        spk.speaker_id = std::string(kSplitNames[s]) + "_spk" + std::to_string(i);
        spk.speaker_seed = Rng::stream(seed, "speaker-seed", spk_index).next_u64();
        for (std::size_t u = 0; u < utts_per_speaker; ++u) {
          Utterance utt;
          utt.utt_id = "utt" + std::to_string(u);
          Rng r = Rng::stream(spk.speaker_seed, "utt", u);
          utt.synth_seed = r.next_u64();
          utt.duration_s = r.uniform(min_utt_s, max_utt_s);
          spk.utterances.push_back(std::move(utt));
        }
        bank.split[s].push_back(std::move(spk));
      }
    }
    for (std::size_t i = 0; i < 24; ++i)
      bank.noise_seeds.push_back(Rng::stream(seed, "noise-seed", i).next_u64());
    return bank;
  }

  static SourceBank from_dirs(const std::filesystem::path& root, int sample_rate = 8000,
                              std::uint64_t seed = 0) {
    namespace fs = std::filesystem;
    SourceBank bank;
    bank.sample_rate = sample_rate;
    bank.seed = seed;
    for (int s = 0; s < 3; ++s) {
      const fs::path split_dir = root / kSplitNames[s];
      if (!fs::is_directory(split_dir))
        throw IngestError("source bank: missing split directory " + split_dir.string());
      std::vector<fs::path> spk_dirs;
      for (const auto& e : fs::directory_iterator(split_dir))
        if (e.is_directory()) spk_dirs.push_back(e.path());
      std::sort(spk_dirs.begin(), spk_dirs.end());
      for (const auto& sd : spk_dirs) {
        Speaker spk;
        spk.speaker_id = sd.filename().string();
        std::vector<fs::path> wavs;
        for (const auto& e : fs::directory_iterator(sd))
          if (e.path().extension() == ".wav") wavs.push_back(e.path());
        std::sort(wavs.begin(), wavs.end());
        for (const auto& p : wavs) {
          Utterance utt;
          utt.utt_id = p.stem().string();
          utt.wav = p;
          spk.utterances.push_back(std::move(utt));
        }
        bank.split[s].push_back(std::move(spk));
      }
    }
    const fs::path noise_dir = root / "noise";
    if (fs::is_directory(noise_dir)) {
      std::vector<fs::path> wavs;
      for (const auto& e : fs::directory_iterator(noise_dir))
        if (e.path().extension() == ".wav") wavs.push_back(e.path());
      std::sort(wavs.begin(), wavs.end());
      bank.noise_wavs = std::move(wavs);
    }
    if (bank.noise_wavs.empty())
      for (std::size_t i = 0; i < 24; ++i)
        bank.noise_seeds.push_back(Rng::stream(seed, "noise-seed", i).next_u64());
    return bank;
  }

  void validate() const {
    std::set<std::string> seen;
    for (int s = 0; s < 3; ++s) {
      if (split[s].empty())
        throw ConfigError(std::string("source bank: split '") + kSplitNames[s] +
                          "' has no speakers");
      for (const auto& spk : split[s]) {
        if (spk.utterances.size() < 2)
          throw ConfigError("source bank: speaker " + spk.speaker_id +
                            " needs >= 2 utterances (target + enrollment)");
        if (!seen.insert(spk.speaker_id).second)
          throw ConfigError("source bank: speaker " + spk.speaker_id +
                            " appears in more than one split");
      }
    }
  }

  Waveform render(const Speaker& spk, const Utterance& utt) const {
    if (!utt.wav.empty()) return wavio::read(utt.wav);
    return synth::speaker_signal(spk.speaker_seed, utt.duration_s, utt.synth_seed, sample_rate);
  }

  Waveform render_noise(Rng& rng, double duration_s) const {
    if (!noise_wavs.empty()) {
      Waveform w = wavio::read(noise_wavs[rng.below(noise_wavs.size())]);
      return w;
    }
    return synth::noise_signal(noise_seeds[rng.below(noise_seeds.size())], duration_s,
                               sample_rate);
  }
};

struct SnrRange {
  double lo_db;
  double hi_db;
};

struct CorpusSpec {
  std::size_t n_train = 240;
  std::size_t n_dev = 40;
  std::size_t n_test = 40;
  SnrRange interferer_snr{-5.0, 5.0};
  SnrRange noise_snr{-6.0, 3.0};
  std::uint64_t seed = 17;
};

struct CorpusManifests {
  DatasetManifest train;
  DatasetManifest dev;
  DatasetManifest test;
};

namespace corpus_detail {

inline MixtureExample make_example(const SourceBank& bank, int split, std::uint64_t ex_seed,
                                   const SnrRange& snr_i, const SnrRange& snr_n) {
  Rng rng(ex_seed);
  const auto& speakers = bank.split[split];

  const std::size_t tgt_idx = rng.below(speakers.size());
  const auto& tgt_spk = speakers[tgt_idx];
  const std::size_t tgt_utt = rng.below(tgt_spk.utterances.size());
  std::size_t enr_utt = rng.below(tgt_spk.utterances.size() - 1);
  if (enr_utt >= tgt_utt) ++enr_utt;  // enrollment utterance differs from the target's

  std::size_t itf_idx = rng.below(speakers.size() - 1);
  if (itf_idx >= tgt_idx) ++itf_idx;  // interfering speaker differs from the target
  const auto& itf_spk = speakers[itf_idx];
  const std::size_t itf_utt = rng.below(itf_spk.utterances.size());

  const double want_i = rng.uniform(snr_i.lo_db, snr_i.hi_db);
  const double want_n = rng.uniform(snr_n.lo_db, snr_n.hi_db);

  const Waveform target = bank.render(tgt_spk, tgt_spk.utterances[tgt_utt]);
  const Waveform interf = bank.render(itf_spk, itf_spk.utterances[itf_utt]);
  const double dur =
      std::max(target.duration_s(), std::max(interf.duration_s(), 1.0)) + 0.05;
  const Waveform noise = bank.render_noise(rng, dur);

  MixtureExample ex = mix_minimum(target, interf, noise, want_i, want_n);
  ex.enrollment = bank.render(tgt_spk, tgt_spk.utterances[enr_utt]);
  ex.speaker_id = tgt_spk.speaker_id;
  ex.utterance_id = tgt_spk.utterances[tgt_utt].utt_id;
  ex.enrollment_utterance_id = tgt_spk.utterances[enr_utt].utt_id;
  return ex;
}

}  // namespace corpus_detail

// Builds the on-disk corpus: audio under <root>/<split>/{mix,clean_mix,
// target,enroll,noise}/<id>.wav plus one manifest per split. Deterministic
// byte-for-byte under (bank, spec.seed, counts, ranges).
inline CorpusManifests build_corpus(const SourceBank& bank, const CorpusSpec& spec,
                                    const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  bank.validate();

  CorpusManifests out;
  DatasetManifest* manifests[3] = {&out.train, &out.dev, &out.test};
  const std::size_t counts[3] = {spec.n_train, spec.n_dev, spec.n_test};

  for (int s = 0; s < 3; ++s) {
    const std::string split_name = SourceBank::kSplitNames[s];
    for (const char* sub : {"mix", "clean_mix", "target", "enroll", "noise"})
      fs::create_directories(root / split_name / sub);

    DatasetManifest& man = *manifests[s];
    man.seed = spec.seed;
    man.base_dir = root;
    for (std::size_t i = 0; i < counts[s]; ++i) {
      const std::uint64_t ex_seed =
          Rng::stream(spec.seed, std::string("example/") + split_name, i).next_u64();
      MixtureExample ex = corpus_detail::make_example(bank, s, ex_seed, spec.interferer_snr,
                                                      spec.noise_snr);
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "%s_%05zu", split_name.c_str(), i);
      const std::string id = idbuf;

      ManifestRecord r;
      r.id = id;
      r.mixture = split_name + "/mix/" + id + ".wav";
      r.clean_mix = split_name + "/clean_mix/" + id + ".wav";
      r.target = split_name + "/target/" + id + ".wav";
      r.enrollment = split_name + "/enroll/" + id + ".wav";
      r.provenance = "original";
      r.snr_db_interferer = ex.snr_interferer_db;
      r.snr_db_noise = ex.snr_noise_db;
      r.seed = ex_seed;

      wavio::write(man.resolve(r.mixture), ex.mixture);
      wavio::write(man.resolve(r.clean_mix), ex.clean_mixture);
      wavio::write(man.resolve(r.target), ex.target);
      wavio::write(man.resolve(r.enrollment), ex.enrollment);
      wavio::write(root / split_name / "noise" / (id + ".wav"), ex.noise);
      man.entries.push_back(std::move(r));
    }
    manifest_io::save(root / (split_name + ".manifest.jsonl"), man);
  }
  return out;
}

}  // namespace lgtse
