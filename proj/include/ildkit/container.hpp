#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ildkit/common.hpp"
#include "ildkit/nn/network.hpp"

namespace ildkit {

// Versioned binary model container shared by network checkpoints and the
// FV-pipeline models: magic, version, kind string, JSON metadata, then
// little-endian float64 blocks (for networks: W, b per parameterized layer,
// in layer order).
inline constexpr char kContainerMagic[8] = {'I', 'L', 'D', 'K', 'I', 'T', 'C', '1'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  std::string kind;
  nlohmann::json meta;
  std::vector<std::vector<double>> blocks;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace detail

inline void save_container(const std::filesystem::path& path, const Container& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot write model file: " + path.string());
  os.write(kContainerMagic, 8);
  detail::put_u32(os, kContainerVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(c.kind.size()));
  os.write(c.kind.data(), static_cast<std::streamsize>(c.kind.size()));
  std::string j = c.meta.dump();
  detail::put_u64(os, j.size());
  os.write(j.data(), static_cast<std::streamsize>(j.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(c.blocks.size()));
  for (const auto& blk : c.blocks) {
    detail::put_u64(os, blk.size());
    for (double d : blk) detail::put_f64(os, d);
  }
  if (!os) throw data_error("short write: " + path.string());
}

inline Container load_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open model file: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kContainerMagic, 8) != 0)
    throw data_error("not an ildkit model file: " + path.string());
  std::uint32_t version = detail::get_u32(is);
  if (version != kContainerVersion)
    throw data_error("unsupported model version " + std::to_string(version) + " in " +
                     path.string());
  Container c;
  std::uint32_t kind_len = detail::get_u32(is);
  c.kind.resize(kind_len);
  is.read(c.kind.data(), kind_len);
  std::uint64_t json_len = detail::get_u64(is);
  std::string j(json_len, '\0');
  is.read(j.data(), static_cast<std::streamsize>(json_len));
  if (!is) throw data_error("truncated model file: " + path.string());
  c.meta = nlohmann::json::parse(j);
  std::uint32_t n_blocks = detail::get_u32(is);
  c.blocks.resize(n_blocks);
  for (auto& blk : c.blocks) {
    std::uint64_t len = detail::get_u64(is);
    blk.resize(len);
    for (auto& d : blk) d = detail::get_f64(is);
  }
  if (!is) throw data_error("truncated model file: " + path.string());
  return c;
}

// ---- network spec <-> json ----

inline nlohmann::json netspec_to_json(const nn::NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case nn::LayerKind::conv:
        layers.push_back({{"kind", "conv"},
                          {"out", l.out_channels},
                          {"kernel", l.kernel},
                          {"stride", l.stride},
                          {"pad", l.pad}});
        break;
      case nn::LayerKind::relu:
        layers.push_back({{"kind", "relu"}});
        break;
      case nn::LayerKind::maxpool:
        layers.push_back(
            {{"kind", "maxpool"}, {"size", l.pool_size}, {"stride", l.pool_stride}});
        break;
      case nn::LayerKind::fc:
        layers.push_back({{"kind", "fc"}, {"out", l.out_dim}});
        break;
    }
  }
  return {{"input", {spec.input.c, spec.input.h, spec.input.w}}, {"layers", layers}};
}

inline nn::NetworkSpec netspec_from_json(const nlohmann::json& j) {
  nn::NetworkSpec spec;
  spec.input = {j.at("input").at(0).get<int>(), j.at("input").at(1).get<int>(),
                j.at("input").at(2).get<int>()};
  for (const auto& l : j.at("layers")) {
    std::string kind = l.at("kind").get<std::string>();
    if (kind == "conv")
      spec.layers.push_back(nn::LayerSpec::conv(l.at("out").get<int>(),
                                                l.at("kernel").get<int>(),
                                                l.at("stride").get<int>(),
                                                l.at("pad").get<int>()));
    else if (kind == "relu")
      spec.layers.push_back(nn::LayerSpec::relu());
    else if (kind == "maxpool")
      spec.layers.push_back(
          nn::LayerSpec::maxpool(l.at("size").get<int>(), l.at("stride").get<int>()));
    else if (kind == "fc")
      spec.layers.push_back(nn::LayerSpec::fc(l.at("out").get<int>()));
    else
      throw data_error("unknown layer kind in checkpoint: " + kind);
  }
  return spec;
}

inline std::vector<std::vector<double>> network_param_blocks(const nn::Network& net) {
  std::vector<std::vector<double>> blocks;
  for (const auto& p : net.params()) {
    if (p.W.size() == 0) continue;
    blocks.push_back(p.W.data);
    blocks.push_back(p.b.data);
  }
  return blocks;
}

inline void network_load_blocks(nn::Network& net,
                                const std::vector<std::vector<double>>& blocks,
                                std::size_t& cursor) {
  for (auto& p : net.params()) {
    if (p.W.size() == 0) continue;
    if (cursor + 2 > blocks.size())
      throw data_error("checkpoint: missing parameter blocks");
    if (blocks[cursor].size() != p.W.size() || blocks[cursor + 1].size() != p.b.size())
      throw data_error("checkpoint: parameter block size mismatch");
    p.W.data = blocks[cursor++];
    p.b.data = blocks[cursor++];
  }
}

}  // namespace ildkit
