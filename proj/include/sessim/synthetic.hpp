#pragma once

#include <cstdint>
#include <vector>

#include "sessim/dataset.hpp"

namespace sessim {

// Labelled toy corpus: benign sessions with random endpoints, sizes and
// high-entropy payloads, plus malicious families that each repeat a fixed
// payload signature, byte alphabet, port, TTL and direction/size rhythm.
struct SyntheticOptions {
  std::size_t families = 2;
  std::size_t sessions_per_family = 60;
  std::size_t benign_sessions = 120;
  std::size_t session_len = 16;
  std::uint64_t seed = 0;
  AnonymizeMode anonymize = AnonymizeMode::AllPackets;
};

struct SyntheticCorpus {
  std::vector<SessionTensor> tensors;  // family f has label f, benign 0
  LabelManifest manifest;
};

// Raw sessions before anonymisation and tensor conversion.
struct SyntheticSession {
  Session session;
  std::uint16_t label = 0;
};

std::vector<SyntheticSession> make_synthetic_sessions(const SyntheticOptions& options);
SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options);

}  // namespace sessim
