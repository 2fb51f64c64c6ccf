#include "graphau/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "graphau/errors.hpp"

using nlohmann::json;

namespace graphau {

namespace {

constexpr char kMagic[8] = {'G', 'A', 'U', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IncompatibleCheckpointError("truncated checkpoint");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IncompatibleCheckpointError("truncated checkpoint");
  return s;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["n_au"] = cfg.n_au;
  j["d_au"] = cfg.d_au;
  j["positions"] = cfg.positions;
  j["channels"] = cfg.channels;
  j["proj_dim"] = cfg.proj_dim;
  j["k_neighbors"] = cfg.k_neighbors;
  j["d_pain"] = cfg.d_pain;
  j["backbone"] = cfg.backbone;
  j["image_side"] = cfg.image_side;
  j["conv_channels"] = cfg.conv_channels;
  j["ablation"] = to_string(cfg.ablation);
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw InvalidConfigError(std::string("bad model config json: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.n_au = j.at("n_au").get<int>();
    cfg.d_au = j.at("d_au").get<int>();
    cfg.positions = j.at("positions").get<int>();
    cfg.channels = j.at("channels").get<int>();
    cfg.proj_dim = j.at("proj_dim").get<int>();
    cfg.k_neighbors = j.at("k_neighbors").get<int>();
    cfg.d_pain = j.at("d_pain").get<int>();
    cfg.backbone = j.at("backbone").get<std::string>();
    cfg.image_side = j.at("image_side").get<int>();
    auto cc = j.at("conv_channels").get<std::vector<int>>();
    if (cc.size() != 3) throw InvalidConfigError("conv_channels needs 3 entries");
    std::copy(cc.begin(), cc.end(), cfg.conv_channels.begin());
    cfg.ablation = ablation_from_string(j.at("ablation").get<std::string>());
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw InvalidConfigError(std::string("bad model config json: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  write_pod(out, kVersion);

  json meta;
  meta["config"] = json::parse(model_config_to_json(ckpt.config));
  meta["epoch"] = ckpt.epoch;
  meta["stage_history"] = ckpt.stage_history;
  meta["metrics_jsonl"] = ckpt.metrics_jsonl;
  write_string(out, meta.dump());

  std::uint32_t count = 0;
  for_each_tensor<float>(const_cast<ModelParams<float>&>(ckpt.params),
                         [&](const std::string&, auto&, bool) { ++count; });
  write_pod(out, count);
  for_each_tensor<float>(const_cast<ModelParams<float>&>(ckpt.params),
                         [&](const std::string& name, auto& t, bool) {
                           write_string(out, name);
                           write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows()));
                           write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols()));
                           for (Eigen::Index r = 0; r < t.rows(); ++r)
                             for (Eigen::Index c = 0; c < t.cols(); ++c) {
                               const float v = static_cast<float>(t(r, c));
                               write_pod(out, v);
                             }
                         });
  if (!out) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IncompatibleCheckpointError("bad magic in " + path);
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw IncompatibleCheckpointError("unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  json meta;
  try {
    meta = json::parse(read_string(in));
    ckpt.config = model_config_from_json(meta.at("config").dump());
    ckpt.epoch = meta.at("epoch").get<int>();
    ckpt.stage_history = meta.at("stage_history").get<std::vector<std::string>>();
    ckpt.metrics_jsonl = meta.at("metrics_jsonl").get<std::string>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw IncompatibleCheckpointError(std::string("bad metadata: ") + e.what());
  }

  struct Tensor {
    std::uint32_t rows, cols;
    std::vector<float> data;
  };
  std::map<std::string, Tensor> tensors;
  const auto count = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    Tensor t;
    t.rows = read_pod<std::uint32_t>(in);
    t.cols = read_pod<std::uint32_t>(in);
    t.data.resize(static_cast<std::size_t>(t.rows) * t.cols);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!in) throw IncompatibleCheckpointError("truncated tensor " + name);
    if (!tensors.emplace(name, std::move(t)).second)
      throw IncompatibleCheckpointError("duplicate tensor " + name);
  }

  ckpt.params = zero_params<float>(ckpt.config);
  std::size_t used = 0;
  for_each_tensor<float>(ckpt.params, [&](const std::string& name, auto& t, bool) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw IncompatibleCheckpointError("missing tensor " + name);
    const Tensor& src = it->second;
    if (src.rows != static_cast<std::uint32_t>(t.rows()) ||
        src.cols != static_cast<std::uint32_t>(t.cols()))
      throw IncompatibleCheckpointError("shape mismatch for " + name);
    std::size_t idx = 0;
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = src.data[idx++];
    ++used;
  });
  if (used != tensors.size())
    throw IncompatibleCheckpointError("checkpoint carries unexpected tensors");
  return ckpt;
}

}  // namespace graphau
