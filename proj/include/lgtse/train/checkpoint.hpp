#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgtse/common/error.hpp"
#include "lgtse/nets/backbone.hpp"
#include "lgtse/nets/denoiser.hpp"
#include "lgtse/train/adam.hpp"
#include "lgtse/train/plan.hpp"

namespace lgtse {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_si_sdr_db = 0.0;
  double lr = 0.0;
};

// Versioned binary container: JSON header (stage, configs, seed, epoch,
// metric history) followed by named float tensors for model parameters and
// optimizer moments. Loading validates architecture compatibility.
namespace checkpoint {

inline constexpr char kMagic[8] = {'L', 'G', 'T', 'S', 'E', 'C', '0', '1'};

inline nlohmann::json denoiser_config_json(const DenoiserConfig& c) {
  return {{"erb_bands", c.erb_bands},
          {"encoder_channels", c.encoder_channels},
          {"gt_blocks", c.gt_blocks},
          {"dprnn_hidden", c.dprnn_hidden},
          {"dprnn_groups", c.dprnn_groups}};
}

inline DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.erb_bands = j.at("erb_bands").get<std::size_t>();
  c.encoder_channels = j.at("encoder_channels").get<std::vector<std::size_t>>();
  c.gt_blocks = j.at("gt_blocks").get<std::size_t>();
  c.dprnn_hidden = j.at("dprnn_hidden").get<std::size_t>();
  c.dprnn_groups = j.at("dprnn_groups").get<std::size_t>();
  return c;
}

inline nlohmann::json backbone_config_json(const BackboneConfig& c) {
  return {{"in_channels", c.in_channels},
          {"encoder_channels", c.encoder_channels},
          {"tcn_blocks", c.tcn_blocks},
          {"tcn_dilations", c.tcn_dilations},
          {"pyramid_levels", c.pyramid_levels},
          {"bottleneck_channels", c.bottleneck_channels}};
}

inline BackboneConfig backbone_config_from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.encoder_channels = j.at("encoder_channels").get<std::size_t>();
  c.tcn_blocks = j.at("tcn_blocks").get<std::size_t>();
  c.tcn_dilations = j.at("tcn_dilations").get<std::vector<std::size_t>>();
  c.pyramid_levels = j.at("pyramid_levels").get<std::size_t>();
  c.bottleneck_channels = j.at("bottleneck_channels").get<std::size_t>();
  return c;
}

namespace detail {

template <class T>
void write_tensor(std::ofstream& f, const std::string& name, const Tensor<T>& t) {
  const std::uint16_t nlen = static_cast<std::uint16_t>(name.size());
  f.write(reinterpret_cast<const char*>(&nlen), 2);
  f.write(name.data(), nlen);
  const std::uint8_t ndim = static_cast<std::uint8_t>(t.rank());
  f.write(reinterpret_cast<const char*>(&ndim), 1);
  for (std::size_t d : t.shape()) {
    const std::uint64_t dd = d;
    f.write(reinterpret_cast<const char*>(&dd), 8);
  }
  f.write(reinterpret_cast<const char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <class T>
std::pair<std::string, Tensor<T>> read_tensor(std::ifstream& f) {
  std::uint16_t nlen = 0;
  f.read(reinterpret_cast<char*>(&nlen), 2);
  std::string name(nlen, '\0');
  f.read(name.data(), nlen);
  std::uint8_t ndim = 0;
  f.read(reinterpret_cast<char*>(&ndim), 1);
  std::vector<std::size_t> shape(ndim);
  for (auto& d : shape) {
    std::uint64_t dd = 0;
    f.read(reinterpret_cast<char*>(&dd), 8);
    d = static_cast<std::size_t>(dd);
  }
  Tensor<T> t(shape);
  f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!f) throw IoError("checkpoint: truncated tensor block '" + name + "'");
  return {std::move(name), std::move(t)};
}

}  // namespace detail

template <class T>
struct Snapshot {
  Stage stage = Stage::pretrain_denoiser;
  std::size_t epoch = 0;  // epochs completed
  double lr = 0.0;
  std::uint64_t seed = 0;
  std::string strategy = "base";
  std::string denoiser_kind = "gtcrn";
  std::vector<EpochRecord> history;
  std::uint64_t adam_step = 0;
  std::string revision;
};

template <class T>
void save(const std::filesystem::path& path, const Snapshot<T>& snap, const Models<T>& models,
          AdamOptimizer<T>* opt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint save: cannot open " + path.string());

  nlohmann::json hdr;
  hdr["version"] = 1;
  hdr["stage"] = stage_name(snap.stage);
  hdr["epoch"] = snap.epoch;
  hdr["lr"] = snap.lr;
  hdr["seed"] = snap.seed;
  hdr["strategy"] = snap.strategy;
  hdr["denoiser_kind"] = snap.denoiser_kind;
  hdr["adam_step"] = opt ? opt->step_count() : snap.adam_step;
  hdr["revision"] = snap.revision;
  hdr["scalar_bytes"] = sizeof(T);
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : snap.history)
    hist.push_back({{"epoch", h.epoch},
                    {"train_loss", h.train_loss},
                    {"dev_si_sdr_db", h.dev_si_sdr_db},
                    {"lr", h.lr}});
  hdr["history"] = hist;
  if (models.denoiser) {
    hdr["denoiser_config"] = denoiser_config_json(models.denoiser->config());
    hdr["denoiser_bins"] = models.denoiser->bins();
  }
  if (models.backbone) {
    hdr["backbone_config"] = backbone_config_json(models.backbone->config());
    hdr["backbone_bins"] = models.backbone->bins();
  }

  const std::string hs = hdr.dump();
  f.write(kMagic, 8);
  const std::uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));

  std::uint64_t count = 0;
  if (models.denoiser) count += models.denoiser->params().entries().size();
  if (models.backbone) count += models.backbone->params().entries().size();
  if (opt) count += 2 * opt->slots().size();
  f.write(reinterpret_cast<const char*>(&count), 8);

  if (models.denoiser)
    for (const auto& e : models.denoiser->params().entries())
      detail::write_tensor(f, "denoiser/" + e.name, e.var.val());
  if (models.backbone)
    for (const auto& e : models.backbone->params().entries())
      detail::write_tensor(f, "backbone/" + e.name, e.var.val());
  if (opt)
    for (auto& s : opt->slots()) {
      detail::write_tensor(f, "adam_m/" + s.key, s.m);
      detail::write_tensor(f, "adam_v/" + s.key, s.v);
    }
  if (!f) throw IoError("checkpoint save: failed writing " + path.string());
}

template <class T>
struct Loaded {
  Snapshot<T> snap;
  Models<T> models;
  std::unordered_map<std::string, Tensor<T>> adam_moments;
};

template <class T>
Loaded<T> load(const std::filesystem::path& path, std::uint64_t init_seed = 0) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint load: cannot open " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("checkpoint load: bad magic in " + path.string());
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  nlohmann::json hdr = nlohmann::json::parse(hs);
  if (hdr.at("scalar_bytes").get<std::size_t>() != sizeof(T))
    throw ConfigError("checkpoint load: scalar width mismatch in " + path.string());

  Loaded<T> out;
  out.snap.stage = stage_from_name(hdr.at("stage").get<std::string>());
  out.snap.epoch = hdr.at("epoch").get<std::size_t>();
  out.snap.lr = hdr.at("lr").get<double>();
  out.snap.seed = hdr.at("seed").get<std::uint64_t>();
  out.snap.strategy = hdr.value("strategy", "base");
  out.snap.denoiser_kind = hdr.value("denoiser_kind", "gtcrn");
  out.snap.adam_step = hdr.value("adam_step", std::uint64_t(0));
  out.snap.revision = hdr.value("revision", "");
  for (const auto& h : hdr.value("history", nlohmann::json::array())) {
    EpochRecord r;
    r.epoch = h.at("epoch").get<std::size_t>();
    r.train_loss = h.at("train_loss").get<double>();
    r.dev_si_sdr_db = h.at("dev_si_sdr_db").get<double>();
    r.lr = h.at("lr").get<double>();
    out.snap.history.push_back(r);
  }

  if (hdr.contains("denoiser_config"))
    out.models.denoiser = std::make_unique<Denoiser<T>>(
        denoiser_config_from_json(hdr.at("denoiser_config")),
        hdr.at("denoiser_bins").get<std::size_t>(), 8000, init_seed);
  if (hdr.contains("backbone_config"))
    out.models.backbone = std::make_unique<Backbone<T>>(
        backbone_config_from_json(hdr.at("backbone_config")),
        hdr.at("backbone_bins").get<std::size_t>(), init_seed);

  std::uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&count), 8);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto [name, tensor] = detail::read_tensor<T>(f);
    if (name.rfind("adam_m/", 0) == 0 || name.rfind("adam_v/", 0) == 0) {
      out.adam_moments.emplace(std::move(name), std::move(tensor));
      continue;
    }
    ParamStore<T>* store = nullptr;
    std::string pname;
    if (name.rfind("denoiser/", 0) == 0 && out.models.denoiser) {
      store = &out.models.denoiser->params();
      pname = name.substr(9);
    } else if (name.rfind("backbone/", 0) == 0 && out.models.backbone) {
      store = &out.models.backbone->params();
      pname = name.substr(9);
    }
    if (!store) throw ConfigError("checkpoint load: unexpected tensor '" + name + "'");
    ad::Var<T> var = store->get(pname);
    if (var.val().shape() != tensor.shape())
      throw ConfigError("checkpoint load: shape mismatch for '" + name + "'");
    var.mutable_val() = std::move(tensor);
  }
  return out;
}

// Restores optimizer moments saved under save()'s naming scheme.
template <class T>
void restore_optimizer(AdamOptimizer<T>& opt, const Loaded<T>& loaded) {
  opt.set_step_count(loaded.snap.adam_step);
  for (auto& s : opt.slots()) {
    auto m = loaded.adam_moments.find("adam_m/" + s.key);
    auto v = loaded.adam_moments.find("adam_v/" + s.key);
    if (m == loaded.adam_moments.end() || v == loaded.adam_moments.end())
      throw ConfigError("checkpoint: missing optimizer state for '" + s.key + "'");
    if (m->second.shape() != s.m.shape())
      throw ConfigError("checkpoint: optimizer shape mismatch for '" + s.key + "'");
    s.m = m->second;
    s.v = v->second;
  }
}

}  // namespace checkpoint
}  // namespace lgtse
