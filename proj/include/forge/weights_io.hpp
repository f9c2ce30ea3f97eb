// Copyright 2026 The forge authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/vae.hpp"

namespace forge::vae {

// Weights container layout:
//   8-byte magic "FORGEVAE"
//   u32 format_version (little endian)
//   u64 header length, then that many bytes of JSON
//     (config, bounds, rng_seed, manifest of {name, shape, offset})
//   raw little-endian f64 arrays, element offsets per the manifest
//   u32 CRC-32 of every byte before it
inline constexpr char kWeightsMagic[8] = {'F', 'O', 'R', 'G', 'E', 'V', 'A', 'E'};
inline constexpr std::uint32_t kWeightsFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "weights container assumes a little-endian host");

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t len,
                           std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int bit = 0; bit < 8; ++bit) {
        c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      }
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) {
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

template <typename T>
inline void append_pod(std::vector<unsigned char>& buf, const T& v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"seq_len", c.seq_len},
          {"in_channels", c.in_channels},
          {"hidden_channels", c.hidden_channels},
          {"latent_dim", c.latent_dim},
          {"beta", c.beta},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"disable_conflux_ema", c.disable_conflux_ema},
          {"disable_conflux_block", c.disable_conflux_block},
          {"disable_beta_kl", c.disable_beta_kl},
          {"disable_sg_filter", c.disable_sg_filter}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.seq_len = j.at("seq_len").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.hidden_channels = j.at("hidden_channels").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.beta = j.at("beta").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.disable_conflux_ema = j.at("disable_conflux_ema").get<bool>();
  c.disable_conflux_block = j.at("disable_conflux_block").get<bool>();
  c.disable_beta_kl = j.at("disable_beta_kl").get<bool>();
  c.disable_sg_filter = j.at("disable_sg_filter").get<bool>();
  return c;
}

inline nlohmann::json bounds_to_json(const geo::Bounds& b) {
  return {{"lat_min", b.lat_min},
          {"lat_max", b.lat_max},
          {"lon_min", b.lon_min},
          {"lon_max", b.lon_max}};
}

inline geo::Bounds bounds_from_json(const nlohmann::json& j) {
  return {j.at("lat_min").get<double>(), j.at("lat_max").get<double>(),
          j.at("lon_min").get<double>(), j.at("lon_max").get<double>()};
}

}  // namespace detail

inline void save_weights(const ModelWeights& w, const std::string& path) {
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : w.params) {
    manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  const nlohmann::json header = {{"config", detail::config_to_json(w.config)},
                                 {"bounds", detail::bounds_to_json(w.bounds)},
                                 {"rng_seed", w.rng_seed},
                                 {"manifest", manifest}};
  const std::string header_text = header.dump();

  std::vector<unsigned char> buf;
  buf.reserve(64 + header_text.size() + offset * sizeof(double));
  buf.insert(buf.end(), std::begin(kWeightsMagic), std::end(kWeightsMagic));
  detail::append_pod(buf, kWeightsFormatVersion);
  detail::append_pod(buf, static_cast<std::uint64_t>(header_text.size()));
  buf.insert(buf.end(), header_text.begin(), header_text.end());
  for (const auto& [name, t] : w.params) {
    const auto* p = reinterpret_cast<const unsigned char*>(t.data());
    buf.insert(buf.end(), p, p + t.size() * sizeof(double));
  }
  const std::uint32_t crc = detail::crc32(buf.data(), buf.size());
  detail::append_pod(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) raise(ErrorCode::IoFailure, "short write to '" + path + "'");
}

inline ModelWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoFailure, "cannot open '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());

  const std::size_t min_len = sizeof(kWeightsMagic) + sizeof(std::uint32_t) +
                              sizeof(std::uint64_t) + sizeof(std::uint32_t);
  if (buf.size() < min_len) raise(ErrorCode::CorruptFile, "weights file truncated");
  if (std::memcmp(buf.data(), kWeightsMagic, sizeof(kWeightsMagic)) != 0) {
    raise(ErrorCode::CorruptFile, "bad magic in '" + path + "'");
  }
  std::size_t pos = sizeof(kWeightsMagic);
  std::uint32_t version;
  std::memcpy(&version, buf.data() + pos, sizeof(version));
  pos += sizeof(version);
  if (version != kWeightsFormatVersion) {
    raise(ErrorCode::FormatVersionMismatch,
          "weights format version " + std::to_string(version) + ", expected " +
              std::to_string(kWeightsFormatVersion));
  }

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - sizeof(stored_crc),
              sizeof(stored_crc));
  const std::uint32_t actual_crc =
      detail::crc32(buf.data(), buf.size() - sizeof(stored_crc));
  if (stored_crc != actual_crc) {
    raise(ErrorCode::CorruptFile, "checksum mismatch in '" + path + "'");
  }

  std::uint64_t header_len;
  std::memcpy(&header_len, buf.data() + pos, sizeof(header_len));
  pos += sizeof(header_len);
  if (pos + header_len + sizeof(std::uint32_t) > buf.size()) {
    raise(ErrorCode::CorruptFile, "weights header overruns file");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                                   buf.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::CorruptFile, std::string("bad weights header: ") + e.what());
  }
  pos += header_len;

  ModelWeights w;
  try {
    w.config = detail::config_from_json(header.at("config"));
    w.bounds = detail::bounds_from_json(header.at("bounds"));
    w.rng_seed = header.at("rng_seed").get<std::uint64_t>();
    const std::size_t blob_len =
        (buf.size() - sizeof(std::uint32_t) - pos) / sizeof(double);
    for (const auto& entry : header.at("manifest")) {
      const std::string name = entry.at("name").get<std::string>();
      const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
      const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
      const std::size_t count = nn::detail::shape_size(shape);
      if (offset + count > blob_len) {
        raise(ErrorCode::CorruptFile, "parameter '" + name + "' overruns blob");
      }
      std::vector<double> data(count);
      std::memcpy(data.data(), buf.data() + pos + offset * sizeof(double),
                  count * sizeof(double));
      w.params.emplace(name, nn::Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::CorruptFile, std::string("bad weights header: ") + e.what());
  }
  return w;
}

}  // namespace forge::vae
