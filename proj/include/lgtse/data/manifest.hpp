#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgtse/common/error.hpp"

namespace lgtse {

// One dataset record. Paths are relative to the manifest's directory.
struct ManifestRecord {
  std::string id;
  std::string mixture;
  std::string enrollment;
  std::string target;
  std::string clean_mix;
  std::string provenance = "original";  // "original" | "denoised"
  double snr_db_noise = 0.0;
  double snr_db_interferer = 0.0;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::vector<ManifestRecord> entries;
  std::uint64_t seed = 0;  // shuffle/generation seed
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
  std::size_t size() const { return entries.size(); }
};

namespace manifest_io {

// JSONL, fixed key order so identical manifests are byte-identical.
inline void save(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("manifest save: cannot open " + path.string());
  for (const auto& r : m.entries) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["mixture"] = r.mixture;
    j["enrollment"] = r.enrollment;
    j["target"] = r.target;
    j["clean_mix"] = r.clean_mix;
    j["provenance"] = r.provenance;
    j["snr_db_noise"] = r.snr_db_noise;
    j["snr_db_interferer"] = r.snr_db_interferer;
    j["seed"] = r.seed;
    f << j.dump() << "\n";
  }
  if (!f) throw IoError("manifest save: failed writing " + path.string());
}

inline DatasetManifest load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IngestError("manifest load: cannot open " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw IngestError("manifest load: bad record at " + path.string() + ":" +
                        std::to_string(lineno) + ": " + e.what());
    }
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.mixture = j.at("mixture").get<std::string>();
    r.enrollment = j.at("enrollment").get<std::string>();
    r.target = j.at("target").get<std::string>();
    r.clean_mix = j.at("clean_mix").get<std::string>();
    r.provenance = j.value("provenance", "original");
    r.snr_db_noise = j.value("snr_db_noise", 0.0);
    r.snr_db_interferer = j.value("snr_db_interferer", 0.0);
    r.seed = j.value("seed", std::uint64_t(0));
    m.entries.push_back(std::move(r));
  }
  return m;
}

}  // namespace manifest_io
}  // namespace lgtse
