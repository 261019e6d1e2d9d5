#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "sessim/pcap.hpp"

namespace sessim {

// Direction-insensitive five-tuple. `lo`/`hi` are the endpoints in canonical
// order; `initiator` records who sent the first packet and is not part of
// equality or hashing.
struct FlowKey {
  Endpoint lo;
  Endpoint hi;
  TransportProto proto = TransportProto::Other;
  Endpoint initiator;

  static FlowKey from(const FiveTuple& t);

  bool operator==(const FlowKey& o) const noexcept {
    return lo == o.lo && hi == o.hi && proto == o.proto;
  }
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept;
};

struct FlowGroup {
  FlowKey key;
  std::vector<RawPacket> packets;  // capture order
};

struct Session {
  FlowKey key;
  std::vector<RawPacket> packets;
  Endpoint initiator;
  std::size_t cycle_index = 0;
};

struct SessionizeStats {
  std::uint64_t parsed = 0;
  std::uint64_t filtered_icmp_arp = 0;
  std::uint64_t retransmissions_dropped = 0;
  std::uint64_t short_sessions_dropped = 0;
  std::uint64_t short_session_packets = 0;
  std::uint64_t sessions_emitted = 0;
  std::uint64_t sessionized_packets = 0;

  SessionizeStats& operator+=(const SessionizeStats& o);
};

inline constexpr std::size_t kMinSessionPackets = 3;
inline constexpr std::int64_t kUdpIdleGapMicros = 60'000'000;
inline constexpr std::int64_t kUdpMaxSpanMicros = 120'000'000;

// Groups in order of first appearance; within a group, capture order.
std::vector<FlowGroup> group_by_five_tuple(std::vector<RawPacket> packets);

std::vector<Session> split_tcp_cycles(const FlowGroup& group, SessionizeStats* stats = nullptr);
std::vector<Session> split_udp_cycles(const FlowGroup& group, SessionizeStats* stats = nullptr);

// group_by_five_tuple followed by the protocol-specific split.
std::vector<Session> sessionize(std::vector<RawPacket> packets, SessionizeStats* stats = nullptr);

// Signed distance a - b in 32-bit sequence space.
inline std::int32_t seq_distance(std::uint32_t a, std::uint32_t b) noexcept {
  return static_cast<std::int32_t>(a - b);
}

}  // namespace sessim
