#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sessim/session_tensor.hpp"

namespace sessim {

// Binary layout (little-endian):
//   "HLG1" | version u16 = 1 | N u16 | record_count u64
//   per record: label u16, n_real u16, source_id_len u16, source_id UTF-8,
//               N x 256 f32 row-major
inline constexpr std::uint16_t kDatasetVersion = 1;

struct Dataset {
  std::size_t session_len = 0;
  std::vector<SessionTensor> records;
};

// class id -> class name; id 0 is benign.
using LabelManifest = std::map<std::uint16_t, std::string>;

void write_dataset(const std::filesystem::path& path, std::span<const SessionTensor> tensors,
                   std::size_t session_len);
Dataset read_dataset(const std::filesystem::path& path);

// Manifest sidecar is a JSON object {"<class_id>": "<name>"}.
std::filesystem::path manifest_path_for(const std::filesystem::path& dataset);
void write_manifest(const std::filesystem::path& path, const LabelManifest& manifest);
LabelManifest read_manifest(const std::filesystem::path& path);

}  // namespace sessim
