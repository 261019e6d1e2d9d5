#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sessim/autograd.hpp"

namespace sessim {

// On-disk layout (little-endian):
//   "HLGW" | version u16 | metadata_len u32 | metadata (UTF-8 JSON)
//   | param_count u32 | per param: name_len u16, name, rank u8, dims u32..., f32 values
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::string metadata;
  std::vector<NamedTensor> params;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename T>
Checkpoint snapshot(const ad::ParameterStore<T>& store, std::string metadata);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into `store`. The name sets must match exactly and
// every shape must agree; otherwise ShapeMismatch.
template <typename T>
void load_parameters(const Checkpoint& ckpt, ad::ParameterStore<T>& store);

}  // namespace sessim
