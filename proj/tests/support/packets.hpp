#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sessim/pcap.hpp"

namespace testpkt {

inline std::uint32_t ip(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
  return (std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d;
}

inline void put32(std::vector<std::uint8_t>& v, std::size_t off, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) v[off + i] = static_cast<std::uint8_t>(x >> (24 - 8 * i));
}
inline void put16(std::vector<std::uint8_t>& v, std::size_t off, std::uint16_t x) {
  v[off] = static_cast<std::uint8_t>(x >> 8);
  v[off + 1] = static_cast<std::uint8_t>(x);
}

// Well-formed IPv4 + TCP/UDP packet with fields mirrored into the header bytes.
inline sessim::RawPacket make(double t, std::uint32_t src, std::uint16_t sport, std::uint32_t dst,
                              std::uint16_t dport, sessim::TransportProto proto, std::uint8_t flags = 0,
                              std::uint32_t seq = 0, std::vector<std::uint8_t> payload = {}) {
  sessim::RawPacket p;
  p.ts.sec = static_cast<std::int64_t>(t);
  p.ts.usec = static_cast<std::int32_t>((t - static_cast<double>(p.ts.sec)) * 1e6 + 0.5);
  p.proto = proto;
  p.tuple = {{src, sport}, {dst, dport}, proto};
  p.tcp_flags = flags;
  p.tcp_seq = seq;
  p.ip_header.assign(20, 0);
  p.ip_header[0] = 0x45;
  p.ip_header[8] = 64;
  p.ip_header[9] = static_cast<std::uint8_t>(proto);
  put32(p.ip_header, 12, src);
  put32(p.ip_header, 16, dst);
  if (proto == sessim::TransportProto::Tcp) {
    p.transport_header.assign(20, 0);
    put32(p.transport_header, 4, seq);
    p.transport_header[12] = 0x50;
    p.transport_header[13] = flags;
  } else {
    p.transport_header.assign(8, 0);
    put16(p.transport_header, 4, static_cast<std::uint16_t>(8 + payload.size()));
  }
  put16(p.transport_header, 0, sport);
  put16(p.transport_header, 2, dport);
  p.payload = std::move(payload);
  p.link_header.assign(14, 0xAB);
  return p;
}

inline const std::uint32_t kA = ip(10, 0, 0, 1);
inline const std::uint32_t kB = ip(10, 0, 0, 2);

inline sessim::RawPacket tcp(double t, bool from_a, std::uint8_t flags, std::uint32_t seq,
                             std::size_t payload = 0, std::uint16_t port_a = 40000, std::uint16_t port_b = 80) {
  std::vector<std::uint8_t> data(payload, 0x41);
  return from_a ? make(t, kA, port_a, kB, port_b, sessim::TransportProto::Tcp, flags, seq, data)
                : make(t, kB, port_b, kA, port_a, sessim::TransportProto::Tcp, flags, seq, data);
}

inline sessim::RawPacket udp(double t, bool from_a, std::size_t payload = 4, std::uint16_t port_a = 5000,
                             std::uint16_t port_b = 53) {
  std::vector<std::uint8_t> data(payload, 0x55);
  return from_a ? make(t, kA, port_a, kB, port_b, sessim::TransportProto::Udp, 0, 0, data)
                : make(t, kB, port_b, kA, port_a, sessim::TransportProto::Udp, 0, 0, data);
}

}  // namespace testpkt
