#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgtse/common/error.hpp"

namespace lgtse {

struct UtteranceEval {
  std::string id;
  double si_sdr_db = 0.0;
  double si_sdri_db = 0.0;
  double stoi = 0.0;
  std::optional<double> pesq;
};

struct EvalReport {
  std::vector<UtteranceEval> utterances;
  std::size_t failures = 0;

  std::size_t count() const { return utterances.size(); }
  double mean_si_sdr_db() const { return mean([](const UtteranceEval& u) { return u.si_sdr_db; }); }
  double mean_si_sdri_db() const {
    return mean([](const UtteranceEval& u) { return u.si_sdri_db; });
  }
  double mean_stoi() const { return mean([](const UtteranceEval& u) { return u.stoi; }); }

  template <class F>
  double mean(F f) const {
    if (utterances.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& u : utterances) acc += f(u);
    return acc / static_cast<double>(utterances.size());
  }
};

namespace report_io {

// Flat key-value summary plus one JSON record per utterance.
inline void save(const EvalReport& rep, const std::filesystem::path& summary_path,
                 const std::filesystem::path& records_path) {
  {
    std::ofstream f(summary_path);
    if (!f) throw IoError("report: cannot open " + summary_path.string());
    f << "count = " << rep.count() << "\n";
    f << "failures = " << rep.failures << "\n";
    f << "mean_si_sdr_db = " << rep.mean_si_sdr_db() << "\n";
    f << "mean_si_sdri_db = " << rep.mean_si_sdri_db() << "\n";
    f << "mean_stoi = " << rep.mean_stoi() << "\n";
    bool any_pesq = false;
    double pesq_acc = 0.0;
    std::size_t pesq_n = 0;
    for (const auto& u : rep.utterances)
      if (u.pesq) {
        any_pesq = true;
        pesq_acc += *u.pesq;
        ++pesq_n;
      }
    if (any_pesq)
      f << "mean_pesq = " << pesq_acc / static_cast<double>(pesq_n) << "\n";
    else
      f << "mean_pesq = n/a\n";
  }
  {
    std::ofstream f(records_path);
    if (!f) throw IoError("report: cannot open " + records_path.string());
    for (const auto& u : rep.utterances) {
      nlohmann::ordered_json j;
      j["id"] = u.id;
      j["si_sdr_db"] = u.si_sdr_db;
      j["si_sdri_db"] = u.si_sdri_db;
      j["stoi"] = u.stoi;
      if (u.pesq)
        j["pesq"] = *u.pesq;
      else
        j["pesq"] = "n/a";
      f << j.dump() << "\n";
    }
  }
}

}  // namespace report_io

// External PESQ hook: when LGTSE_PESQ_BIN names an evaluator, it is invoked
// as `<bin> <reference.wav> <estimate.wav>` and the last numeric token of
// its stdout is taken as the score. Never computed in-repo.
inline std::optional<double> run_external_pesq(const std::filesystem::path& reference_wav,
                                               const std::filesystem::path& estimate_wav) {
  const char* bin = std::getenv("LGTSE_PESQ_BIN");
  if (bin == nullptr || bin[0] == '\0') return std::nullopt;
  const std::string cmd = std::string(bin) + " \"" + reference_wav.string() + "\" \"" +
                          estimate_wav.string() + "\" 2>/dev/null";
  std::FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return std::nullopt;
  std::string out;
  char buf[256];
  while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
  if (pclose(pipe) != 0) return std::nullopt;

  double last = 0.0;
  bool found = false;
  std::size_t pos = 0;
  while (pos < out.size()) {
    char* end = nullptr;
    const double v = std::strtod(out.c_str() + pos, &end);
    if (end == out.c_str() + pos) {
      ++pos;
      continue;
    }
    last = v;
    found = true;
    pos = static_cast<std::size_t>(end - out.c_str());
  }
  return found ? std::optional<double>(last) : std::nullopt;
}

}  // namespace lgtse
