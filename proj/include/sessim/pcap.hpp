#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <vector>

#include "sessim/error.hpp"

namespace sessim {

enum class TransportProto : std::uint8_t { Other = 0, Tcp = 6, Udp = 17 };

namespace tcp_flag {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flag

// Capture time with microsecond resolution.
struct Timestamp {
  std::int64_t sec = 0;
  std::int32_t usec = 0;

  std::int64_t micros() const noexcept { return sec * 1'000'000 + usec; }
  double seconds() const noexcept { return static_cast<double>(sec) + usec * 1e-6; }
  auto operator<=>(const Timestamp&) const = default;
};

struct Endpoint {
  std::uint32_t ip = 0;  // host order
  std::uint16_t port = 0;
  auto operator<=>(const Endpoint&) const = default;
};

struct FiveTuple {
  Endpoint src;
  Endpoint dst;
  TransportProto proto = TransportProto::Other;
  bool operator==(const FiveTuple&) const = default;
};

struct RawPacket {
  Timestamp ts;
  std::vector<std::uint8_t> link_header;  // bytes preceding the IP header as captured
  std::vector<std::uint8_t> ip_header;    // 20..60 bytes
  TransportProto proto = TransportProto::Other;
  std::vector<std::uint8_t> transport_header;
  std::vector<std::uint8_t> payload;
  FiveTuple tuple;
  std::uint8_t tcp_flags = 0;
  std::uint32_t tcp_seq = 0;
  std::uint32_t tcp_ack = 0;

  bool has_flag(std::uint8_t f) const noexcept { return (tcp_flags & f) != 0; }
};

struct ParseStats {
  std::uint64_t records = 0;
  std::uint64_t parsed = 0;             // TCP/UDP over IPv4 packets yielded
  std::uint64_t filtered_icmp_arp = 0;
  std::uint64_t ipv6_skipped = 0;
  std::uint64_t other_skipped = 0;      // non-IP frames, other protocols, fragments, cut headers
};

enum class LinkType : std::uint32_t { Null = 0, Ethernet = 1, Raw = 101, LinuxSll = 113, Ipv4 = 228 };

// Streaming reader for classic libpcap files (either byte order, microsecond
// or nanosecond timestamps).
class PcapReader {
 public:
  explicit PcapReader(const std::filesystem::path& path);
  explicit PcapReader(std::unique_ptr<std::istream> in, std::string name = "<stream>");

  // Next TCP/UDP IPv4 packet; std::nullopt at clean end of file.
  std::optional<RawPacket> next();

  const ParseStats& stats() const noexcept { return stats_; }
  LinkType link_type() const noexcept { return link_type_; }
  bool nanosecond() const noexcept { return nanos_; }

 private:
  void read_global_header();
  std::optional<RawPacket> decode(const std::vector<std::uint8_t>& frame, Timestamp ts);

  std::unique_ptr<std::istream> in_;
  std::string name_;
  bool swapped_ = false;
  bool nanos_ = false;
  LinkType link_type_ = LinkType::Ethernet;
  ParseStats stats_;
};

std::vector<RawPacket> parse_pcap(const std::filesystem::path& path, ParseStats* stats = nullptr);

}  // namespace sessim
