#include "sessim/session_tensor.hpp"

#include <algorithm>

namespace sessim {

namespace {

void put_ip(std::vector<std::uint8_t>& hdr, std::size_t off, std::uint32_t ip) {
  hdr[off] = static_cast<std::uint8_t>(ip >> 24);
  hdr[off + 1] = static_cast<std::uint8_t>(ip >> 16);
  hdr[off + 2] = static_cast<std::uint8_t>(ip >> 8);
  hdr[off + 3] = static_cast<std::uint8_t>(ip);
}

}  // namespace

Session anonymize(Session session, AnonymizeMode mode) {
  if (session.packets.empty()) return session;
  const Endpoint initiator = session.packets.front().tuple.src;
  const std::size_t limit = mode == AnonymizeMode::FirstPacketOnly ? 1 : session.packets.size();
  for (std::size_t i = 0; i < session.packets.size(); ++i) {
    RawPacket& p = session.packets[i];
    p.link_header.clear();
    if (i >= limit) continue;
    const bool forward = p.tuple.src == initiator;
    const std::uint32_t src = forward ? kInitiatorPlaceholder : kResponderPlaceholder;
    const std::uint32_t dst = forward ? kResponderPlaceholder : kInitiatorPlaceholder;
    if (p.ip_header.size() >= 20) {
      put_ip(p.ip_header, 12, src);
      put_ip(p.ip_header, 16, dst);
    }
    p.tuple.src.ip = src;
    p.tuple.dst.ip = dst;
  }
  return session;
}

PacketVector align_packet(const RawPacket& pkt) {
  PacketVector v{};
  if (pkt.ip_header.size() > kIpField) {
    throw Error(ErrorKind::HeaderOverflow,
                "IP header of " + std::to_string(pkt.ip_header.size()) + " bytes exceeds 60");
  }
  std::copy(pkt.ip_header.begin(), pkt.ip_header.end(), v.begin());
  if (pkt.proto == TransportProto::Tcp) {
    if (pkt.transport_header.size() > kTcpField) {
      throw Error(ErrorKind::HeaderOverflow, "TCP header of " +
                                                 std::to_string(pkt.transport_header.size()) +
                                                 " bytes exceeds 60");
    }
    std::copy(pkt.transport_header.begin(), pkt.transport_header.end(), v.begin() + kTransportOffset);
  } else if (pkt.proto == TransportProto::Udp) {
    if (pkt.transport_header.size() > kUdpField) {
      throw Error(ErrorKind::HeaderOverflow, "UDP header of " +
                                                 std::to_string(pkt.transport_header.size()) +
                                                 " bytes exceeds 8");
    }
    std::copy(pkt.transport_header.begin(), pkt.transport_header.end(), v.begin() + kUdpOffset);
  }
  const std::size_t n = std::min(pkt.payload.size(), kPayloadField);
  std::copy_n(pkt.payload.begin(), n, v.begin() + kPayloadOffset);
  return v;
}

SessionTensor build_tensor(std::span<const PacketVector> packets, std::size_t n, std::uint16_t label,
                           std::string source_id) {
  SessionTensor t;
  t.rows = n;
  t.n_real = std::min(packets.size(), n);
  t.label = label;
  t.source_id = std::move(source_id);
  t.data.assign(n * kPacketBytes, 0.0f);
  for (std::size_t r = 0; r < t.n_real; ++r) {
    for (std::size_t c = 0; c < kPacketBytes; ++c) {
      t.data[r * kPacketBytes + c] = static_cast<float>(packets[r][c]) / 255.0f;
    }
  }
  return t;
}

SessionTensor build_tensor(const Session& session, std::size_t n, std::uint16_t label,
                           std::string source_id) {
  std::vector<PacketVector> rows;
  const std::size_t take = std::min(session.packets.size(), n);
  rows.reserve(take);
  for (std::size_t i = 0; i < take; ++i) rows.push_back(align_packet(session.packets[i]));
  return build_tensor(rows, n, label, std::move(source_id));
}

}  // namespace sessim
