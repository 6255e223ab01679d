#pragma once

// Parameter files: u64 little-endian header length, a JSON header listing
// {"name", "shape"} per tensor (plus optional metadata), then the tensors'
// float32 little-endian data back to back in header order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uodkit/io/image_io.hpp"
#include "uodkit/numcore/param_list.hpp"

namespace uodkit {

static_assert(std::endian::native == std::endian::little, "parameter files assume a little-endian host");

inline void save_params(const std::filesystem::path& path, const NamedTensors<float>& params,
                        const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : params) header["tensors"].push_back({{"name", name}, {"shape", t->shape()}});
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : params)
    out.write(reinterpret_cast<const char*>(t->storage().data()),
              static_cast<std::streamsize>(t->size() * sizeof(float)));
}

/// Fills `params` (names and shapes must match the file exactly) and returns
/// the metadata object.
inline nlohmann::json load_params(const std::filesystem::path& path, const NamedTensors<float>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 26)) throw IoError(path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size())
    throw IoError(path.string() + ": expected " + std::to_string(params.size()) + " tensors, file has " +
                  std::to_string(tensors.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params[i];
    if (tensors[i].at("name").get<std::string>() != name) throw IoError(path.string() + ": tensor order mismatch at " + name);
    if (tensors[i].at("shape").get<Shape>() != t->shape())
      throw IoError(path.string() + ": shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(t->storage().data()), static_cast<std::streamsize>(t->size() * sizeof(float)));
    if (!in) throw IoError(path.string() + ": truncated data for " + name);
  }
  return header.value("meta", nlohmann::json::object());
}

}  // namespace uodkit
