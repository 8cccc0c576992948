#pragma once

// Binary weight container shared by the denoiser (GIDC) and the pose
// predictor (POSC):
//
//   magic[4] | u32 version | u32 len | config text | u32 n_sections |
//   per section: u32 name_len | name | u32 rank | u32 dims[rank] | f32 data[] |
//   u32 crc32 of everything before it
//
// All integers and floats are little-endian.

#include "gid/autodiff.hpp"
#include "gid/textconfig.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gid::io {

constexpr std::uint32_t kCheckpointVersion = 1;

struct Section {
  std::string name;
  nn::Shape shape;
  std::vector<float> data;
  bool operator==(const Section&) const = default;
};

struct Checkpoint {
  std::string magic;
  KeyValueText config;
  std::vector<Section> sections;
};

std::string encode(const Checkpoint& ckpt);
/// Throws FormatError on a wrong magic, version, truncation or CRC mismatch.
Checkpoint decode(const std::string& bytes, const std::string& expected_magic);

void save(const std::string& path, const Checkpoint& ckpt);
Checkpoint load(const std::string& path, const std::string& expected_magic);

template <typename T>
std::vector<Section> pack(const nn::ParameterStore<T>& store);

/// Copies sections into `store`; names, order and shapes must match exactly.
template <typename T>
void unpack(const std::vector<Section>& sections, nn::ParameterStore<T>& store);

/// Keys of the form meta.<key> inside a config block.
void set_meta(KeyValueText& kv, const std::string& key, const std::string& value);
std::string get_meta(const KeyValueText& kv, const std::string& key, const std::string& fallback = "");

}  // namespace gid::io
