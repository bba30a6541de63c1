#pragma once

// Checkpoint container:
//   8 bytes   magic "GEOUNETC"
//   u32       container version
//   u64       header length N
//   N bytes   JSON header {config, scalar, params:[{name, shape}], meta}
//   payload   parameter values in header order, little-endian, `scalar` typed

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "geounet/model.hpp"

namespace geounet {

inline constexpr char kCheckpointMagic[8] = {'G', 'E', 'O', 'U', 'N', 'E', 'T', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json header;
  header["config"] = to_json(model.config());
  header["scalar"] = std::is_same_v<T, float> ? "float32" : "float64";
  header["meta"] = meta;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.params()) params.push_back({{"name", p.name}, {"shape", p.shape}});
  header["params"] = params;
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = text.size();
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.params()) {
    os.write(reinterpret_cast<const char*>(p.value.data()),
             static_cast<std::streamsize>(p.value.size() * sizeof(T)));
  }
  if (!os) throw std::runtime_error("write failed for checkpoint '" + path.string() + "'");
}

struct CheckpointHeader {
  ModelConfig config;
  std::string scalar;
  nlohmann::json meta;
  nlohmann::json params;
};

namespace detail {

inline CheckpointHeader read_checkpoint_header(std::ifstream& is, const std::filesystem::path& path) {
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  is.read(magic, sizeof magic);
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw std::runtime_error("'" + path.string() + "' is not a geounet checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint container version " + std::to_string(version) +
                             " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("truncated checkpoint header in '" + path.string() + "'");
  const auto header = nlohmann::json::parse(text);
  const auto& cfg = header.at("config");
  if (!cfg.contains("config_version") || cfg.at("config_version").get<int>() != kConfigVersion) {
    throw std::runtime_error("checkpoint '" + path.string() + "' has model config version " +
                             cfg.value("config_version", nlohmann::json()).dump() + ", expected " +
                             std::to_string(kConfigVersion));
  }
  return {model_config_from_json(cfg), header.at("scalar").get<std::string>(),
          header.value("meta", nlohmann::json::object()), header.at("params")};
}

}  // namespace detail

inline CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  return detail::read_checkpoint_header(is, path);
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  const CheckpointHeader h = detail::read_checkpoint_header(is, path);
  Model<T> model(h.config);
  if (h.params.size() != model.params().size()) {
    throw std::runtime_error("checkpoint parameter list does not match its config");
  }
  const bool f32 = h.scalar == "float32";
  if (!f32 && h.scalar != "float64") throw std::runtime_error("unknown checkpoint scalar '" + h.scalar + "'");
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    auto& p = model.params()[i];
    if (h.params[i].at("name").get<std::string>() != p.name ||
        h.params[i].at("shape").get<std::vector<std::size_t>>() != p.shape) {
      throw std::runtime_error("checkpoint parameter '" + h.params[i].at("name").get<std::string>() +
                               "' does not match model parameter '" + p.name + "'");
    }
    if (f32) {
      std::vector<float> buf(p.value.size());
      is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
      std::transform(buf.begin(), buf.end(), p.value.begin(), [](float v) { return static_cast<T>(v); });
    } else {
      std::vector<double> buf(p.value.size());
      is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
      std::transform(buf.begin(), buf.end(), p.value.begin(), [](double v) { return static_cast<T>(v); });
    }
    if (!is) throw std::runtime_error("truncated checkpoint payload in '" + path.string() + "'");
  }
  if (meta) *meta = h.meta;
  return model;
}

}  // namespace geounet
