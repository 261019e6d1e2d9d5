#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sessim/dataset.hpp"

namespace sessim {

struct PreprocessOptions {
  std::filesystem::path input;                  // a capture file or a directory tree
  std::optional<std::filesystem::path> label_csv;  // `path,label` rows, paths relative to input
  std::optional<std::string> default_label;     // for files with no directory/CSV label
  std::size_t session_len = 16;
  AnonymizeMode anonymize = AnonymizeMode::AllPackets;
  unsigned jobs = 1;
};

struct PreprocessResult {
  std::vector<SessionTensor> tensors;
  LabelManifest manifest;
  SessionizeStats stats;
  std::vector<std::string> warnings;
};

// Class names map to ids with "benign" (any case) fixed at 0 and all other
// names numbered 1.. in lexicographic order.
LabelManifest assign_class_ids(const std::vector<std::string>& names);

// Parses every capture (*.pcap, *.cap) under `input`, sessionizes, anonymizes
// and converts each session into an N x 256 tensor. Files are processed in
// sorted path order so output is deterministic for any job count.
PreprocessResult preprocess(const PreprocessOptions& options);

// Convenience for a single capture already in memory order.
std::vector<SessionTensor> sessions_to_tensors(const std::vector<Session>& sessions, std::size_t session_len,
                                               std::uint16_t label, const std::string& source,
                                               AnonymizeMode mode = AnonymizeMode::AllPackets);

}  // namespace sessim
