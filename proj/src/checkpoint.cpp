#include "sessim/checkpoint.hpp"

#include <fstream>
#include <set>

#include "binary_io.hpp"

namespace sessim {

namespace {
constexpr char kMagic[4] = {'H', 'L', 'G', 'W'};

[[noreturn]] void truncated(const std::string& what) {
  throw Error(ErrorKind::TruncatedRecord, "checkpoint ends inside " + what);
}
}  // namespace

template <typename T>
Checkpoint snapshot(const ad::ParameterStore<T>& store, std::string metadata) {
  Checkpoint ckpt{std::move(metadata), {}};
  for (const auto& p : store) {
    ckpt.params.push_back(NamedTensor{
        p.name, p.value.shape(), std::vector<float>(p.value.values().begin(), p.value.values().end())});
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  binio::put_le<std::uint16_t>(out, kCheckpointVersion);
  binio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  binio::put_bytes(out, ckpt.metadata);
  binio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    binio::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    binio::put_bytes(out, p.name);
    binio::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(p.shape.size()));
    for (auto d : p.shape) binio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : p.values) binio::put_f32(out, v);
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  char magic[4] = {};
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw Error(ErrorKind::BadMagic, path.string() + " is not a checkpoint");
  }
  std::uint16_t version = 0;
  if (!binio::get_le(in, version)) truncated("header");
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  std::uint32_t meta_len = 0;
  if (!binio::get_le(in, meta_len) || !binio::get_bytes(in, ckpt.metadata, meta_len)) truncated("metadata");
  std::uint32_t count = 0;
  if (!binio::get_le(in, count)) truncated("header");
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor p;
    std::uint16_t name_len = 0;
    std::uint8_t rank = 0;
    if (!binio::get_le(in, name_len) || !binio::get_bytes(in, p.name, name_len) || !binio::get_le(in, rank)) {
      truncated("parameter header");
    }
    for (std::uint8_t r = 0; r < rank; ++r) {
      std::uint32_t d = 0;
      if (!binio::get_le(in, d)) truncated("parameter dims");
      p.shape.push_back(d);
    }
    p.values.resize(element_count(p.shape));
    for (auto& v : p.values) {
      if (!binio::get_f32(in, v)) truncated("parameter " + p.name);
    }
    ckpt.params.push_back(std::move(p));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::CountMismatch, "trailing bytes after " + std::to_string(count) + " parameters");
  }
  return ckpt;
}

template <typename T>
void load_parameters(const Checkpoint& ckpt, ad::ParameterStore<T>& store) {
  std::set<std::string> seen;
  for (const auto& p : ckpt.params) {
    if (!store.contains(p.name)) {
      throw Error(ErrorKind::ShapeMismatch, "checkpoint parameter " + p.name + " not in model");
    }
    auto& target = store.get(p.name);
    if (target.value.shape() != p.shape) {
      throw Error(ErrorKind::ShapeMismatch, "parameter " + p.name + ": checkpoint " +
                                                shape_string(p.shape) + " vs model " +
                                                shape_string(target.value.shape()));
    }
    for (std::size_t i = 0; i < p.values.size(); ++i) target.value[i] = static_cast<T>(p.values[i]);
    seen.insert(p.name);
  }
  for (const auto& p : store) {
    if (!seen.count(p.name)) {
      throw Error(ErrorKind::ShapeMismatch, "model parameter " + p.name + " missing from checkpoint");
    }
  }
}

template Checkpoint snapshot(const ad::ParameterStore<float>&, std::string);
template Checkpoint snapshot(const ad::ParameterStore<double>&, std::string);
template void load_parameters(const Checkpoint&, ad::ParameterStore<float>&);
template void load_parameters(const Checkpoint&, ad::ParameterStore<double>&);

}  // namespace sessim
