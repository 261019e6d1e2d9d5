#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sessim/flow.hpp"

namespace sessim {

// Per-packet byte layout: ip | tcp-or-placeholder | udp-or-placeholder | payload.
inline constexpr std::size_t kPacketBytes = 256;
inline constexpr std::size_t kIpField = 60;
inline constexpr std::size_t kTcpField = 60;
inline constexpr std::size_t kUdpField = 8;
inline constexpr std::size_t kTransportOffset = kIpField;                 // 60
inline constexpr std::size_t kUdpOffset = kTransportOffset + kTcpField;   // 120
inline constexpr std::size_t kPayloadOffset = kUdpOffset + kUdpField;     // 128
inline constexpr std::size_t kPayloadField = kPacketBytes - kPayloadOffset;  // 128

using PacketVector = std::array<std::uint8_t, kPacketBytes>;

enum class AnonymizeMode { AllPackets, FirstPacketOnly };

inline constexpr std::uint32_t kInitiatorPlaceholder = 0x00000000;  // 0.0.0.0
inline constexpr std::uint32_t kResponderPlaceholder = 0xFFFFFFFF;  // 255.255.255.255

// Strips link-layer bytes and rewrites IPv4 addresses: the initiator endpoint
// becomes 0.0.0.0 and the responder 255.255.255.255. Checksums are left stale.
Session anonymize(Session session, AnonymizeMode mode = AnonymizeMode::AllPackets);

PacketVector align_packet(const RawPacket& pkt);

struct SessionTensor {
  std::size_t rows = 0;     // N
  std::size_t n_real = 0;   // rows holding real packets
  std::uint16_t label = 0;  // 0 = benign
  std::string source_id;
  std::vector<float> data;  // rows x 256, row-major, values in [0, 1]

  std::span<const float> row(std::size_t r) const { return {data.data() + r * kPacketBytes, kPacketBytes}; }
  float at(std::size_t r, std::size_t c) const { return data[r * kPacketBytes + c]; }
  bool operator==(const SessionTensor&) const = default;
};

SessionTensor build_tensor(const Session& session, std::size_t n, std::uint16_t label = 0,
                           std::string source_id = {});

// Same, from already aligned packet vectors (synthetic corpora).
SessionTensor build_tensor(std::span<const PacketVector> packets, std::size_t n, std::uint16_t label = 0,
                           std::string source_id = {});

}  // namespace sessim
