#include "sessim/dataset.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "binary_io.hpp"

namespace sessim {

namespace {
constexpr char kMagic[4] = {'H', 'L', 'G', '1'};
}

void write_dataset(const std::filesystem::path& path, std::span<const SessionTensor> tensors,
                   std::size_t session_len) {
  if (session_len == 0 || session_len > 0xFFFF) {
    throw Error(ErrorKind::ShapeMismatch, "session length " + std::to_string(session_len) + " out of range");
  }
  for (const auto& t : tensors) {
    if (t.rows != session_len || t.data.size() != session_len * kPacketBytes) {
      throw Error(ErrorKind::ShapeMismatch, "record " + t.source_id + " has " + std::to_string(t.rows) +
                                                " rows, dataset N is " + std::to_string(session_len));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  binio::put_le<std::uint16_t>(out, kDatasetVersion);
  binio::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(session_len));
  binio::put_le<std::uint64_t>(out, tensors.size());
  for (const auto& t : tensors) {
    binio::put_le<std::uint16_t>(out, t.label);
    binio::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.n_real));
    binio::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.source_id.size()));
    binio::put_bytes(out, t.source_id);
    for (float v : t.data) binio::put_f32(out, v);
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  char magic[4] = {};
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw Error(ErrorKind::BadMagic, path.string() + " is not a session dataset");
  }
  std::uint16_t version = 0, n = 0;
  std::uint64_t count = 0;
  if (!binio::get_le(in, version)) throw Error(ErrorKind::CountMismatch, "header truncated");
  if (version != kDatasetVersion) {
    throw Error(ErrorKind::VersionMismatch, "dataset version " + std::to_string(version));
  }
  if (!binio::get_le(in, n) || !binio::get_le(in, count)) {
    throw Error(ErrorKind::CountMismatch, "header truncated");
  }
  if (n == 0) throw Error(ErrorKind::ShapeMismatch, "dataset declares N = 0");

  Dataset ds;
  ds.session_len = n;
  auto short_read = [&](std::uint64_t idx) {
    return Error(ErrorKind::CountMismatch, "header declares " + std::to_string(count) +
                                               " records, data ends inside record " + std::to_string(idx));
  };
  for (std::uint64_t k = 0; k < count; ++k) {
    SessionTensor t;
    t.rows = n;
    std::uint16_t n_real = 0, id_len = 0;
    if (!binio::get_le(in, t.label) || !binio::get_le(in, n_real) || !binio::get_le(in, id_len) ||
        !binio::get_bytes(in, t.source_id, id_len)) {
      throw short_read(k);
    }
    if (n_real > n) {
      throw Error(ErrorKind::ShapeMismatch, "record " + std::to_string(k) + " has n_real " +
                                                std::to_string(n_real) + " > N " + std::to_string(n));
    }
    t.n_real = n_real;
    t.data.resize(static_cast<std::size_t>(n) * kPacketBytes);
    for (auto& v : t.data) {
      if (!binio::get_f32(in, v)) throw short_read(k);
    }
    ds.records.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::CountMismatch, "trailing bytes after " + std::to_string(count) + " records");
  }
  return ds;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset) {
  auto p = dataset;
  p += ".manifest.json";
  return p;
}

void write_manifest(const std::filesystem::path& path, const LabelManifest& manifest) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [id, name] : manifest) j[std::to_string(id)] = name;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

LabelManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  LabelManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& [key, value] : j.items()) {
      m.emplace(static_cast<std::uint16_t>(std::stoul(key)), value.get<std::string>());
    }
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Io, path.string() + ": malformed manifest (" + e.what() + ")");
  }
  return m;
}

}  // namespace sessim
