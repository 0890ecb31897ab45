// Versioned checkpoint files: JSON header (design, dims, selection metadata,
// config hash) followed by raw parameter matrices.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "oietd/encoder.hpp"
#include "oietd/errors.hpp"
#include "oietd/model.hpp"

namespace oietd {

constexpr char kCheckpointMagic[8] = {'O', 'I', 'E', 'T', 'D', 'C', 'K', '1'};

struct CheckpointMeta {
  std::string config_hash;
  double source_valid_f1 = 0.0;
  int selected_epoch = -1;
};

inline void save_checkpoint(const std::string& path, ModelBundle& bundle,
                            const CheckpointMeta& meta) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    nlohmann::json header = {{"version", 1},
                             {"design", to_string(bundle.design())},
                             {"rel_embed_dim", bundle.rel_embed_dim()},
                             {"mlm_enabled", bundle.mlm_enabled()},
                             {"config_hash", meta.config_hash},
                             {"source_valid_f1", meta.source_valid_f1},
                             {"selected_epoch", meta.selected_epoch}};
    const std::string hs = header.dump();
    const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    bundle.save_params(out);
    if (!out) throw DataError("short write while saving checkpoint: " + path);
  }
  std::filesystem::rename(tmp, path);
}

struct LoadedCheckpoint {
  std::unique_ptr<ModelBundle> bundle;
  CheckpointMeta meta;
};

// Reconstructs a bundle around a toy encoder stored in the checkpoint.
// Frozen feature-file encoders are not self-contained and must be rebuilt by
// the caller from their feature file.
inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
    throw DataError("not a checkpoint file: " + path);
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  const auto header = nlohmann::json::parse(hs);
  if (header.at("version").get<int>() != 1)
    throw DataError("unsupported checkpoint version in " + path);

  LoadedCheckpoint out;
  out.meta.config_hash = header.at("config_hash").get<std::string>();
  out.meta.source_valid_f1 = header.at("source_valid_f1").get<double>();
  out.meta.selected_epoch = header.at("selected_epoch").get<int>();

  auto encoder = std::make_shared<ToyEncoder>(ToyEncoderConfig{}, 0);
  out.bundle = std::make_unique<ModelBundle>(
      design_from_string(header.at("design").get<std::string>()), encoder,
      header.at("rel_embed_dim").get<int>(), header.at("mlm_enabled").get<bool>(), 0);
  // Re-read all parameters over the freshly constructed bundle.
  out.bundle->load_params(in);
  return out;
}

}  // namespace oietd
