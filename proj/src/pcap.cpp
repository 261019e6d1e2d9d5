#include "sessim/pcap.hpp"

#include <array>

namespace sessim {

namespace {

constexpr std::uint32_t kMagicMicros = 0xA1B2C3D4;
constexpr std::uint32_t kMagicNanos = 0xA1B23C4D;
constexpr std::uint32_t kMaxRecordBytes = 256u * 1024u * 1024u;

constexpr std::uint16_t kEtherIpv4 = 0x0800;
constexpr std::uint16_t kEtherArp = 0x0806;
constexpr std::uint16_t kEtherRarp = 0x8035;
constexpr std::uint16_t kEtherIpv6 = 0x86DD;
constexpr std::uint16_t kEtherVlan = 0x8100;
constexpr std::uint16_t kEtherQinQ = 0x88A8;

constexpr std::uint8_t kIpProtoIcmp = 1;

std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00) | ((v << 8) & 0xFF0000) | (v << 24);
}

std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }
std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace

PcapReader::PcapReader(const std::filesystem::path& path)
    : in_(std::make_unique<std::ifstream>(path, std::ios::binary)), name_(path.string()) {
  if (!*in_) throw Error(ErrorKind::Io, "cannot open " + name_);
  read_global_header();
}

PcapReader::PcapReader(std::unique_ptr<std::istream> in, std::string name)
    : in_(std::move(in)), name_(std::move(name)) {
  read_global_header();
}

void PcapReader::read_global_header() {
  std::array<unsigned char, 24> hdr{};
  if (!in_->read(reinterpret_cast<char*>(hdr.data()), hdr.size())) {
    throw Error(ErrorKind::BadMagic, name_ + ": shorter than a pcap global header");
  }
  const std::uint32_t magic = le32(hdr.data());
  if (magic == kMagicMicros || magic == kMagicNanos) {
    swapped_ = false;
  } else if (bswap32(magic) == kMagicMicros || bswap32(magic) == kMagicNanos) {
    swapped_ = true;
  } else {
    throw Error(ErrorKind::BadMagic, name_ + ": not a pcap file");
  }
  nanos_ = (swapped_ ? bswap32(magic) : magic) == kMagicNanos;
  std::uint32_t network = le32(hdr.data() + 20);
  if (swapped_) network = bswap32(network);
  switch (network) {
    case 0: case 1: case 101: case 113: case 228:
      link_type_ = static_cast<LinkType>(network);
      break;
    default:
      throw Error(ErrorKind::UnsupportedLinkType, name_ + ": link type " + std::to_string(network));
  }
}

std::optional<RawPacket> PcapReader::next() {
  for (;;) {
    std::array<unsigned char, 16> rec{};
    in_->read(reinterpret_cast<char*>(rec.data()), rec.size());
    const auto got = in_->gcount();
    if (got == 0) return std::nullopt;
    if (got != static_cast<std::streamsize>(rec.size())) {
      throw Error(ErrorKind::TruncatedRecord, name_ + ": partial record header at record " +
                                                  std::to_string(stats_.records + 1));
    }
    auto field = [&](std::size_t off) {
      const std::uint32_t v = le32(rec.data() + off);
      return swapped_ ? bswap32(v) : v;
    };
    const std::uint32_t ts_sec = field(0);
    const std::uint32_t ts_frac = field(4);
    const std::uint32_t incl_len = field(8);
    if (incl_len > kMaxRecordBytes) {
      throw Error(ErrorKind::TruncatedRecord,
                  name_ + ": implausible record length " + std::to_string(incl_len));
    }
    std::vector<std::uint8_t> frame(incl_len);
    if (incl_len > 0 && !in_->read(reinterpret_cast<char*>(frame.data()), incl_len)) {
      throw Error(ErrorKind::TruncatedRecord, name_ + ": record " + std::to_string(stats_.records + 1) +
                                                  " declares " + std::to_string(incl_len) + " bytes");
    }
    ++stats_.records;
    Timestamp ts{static_cast<std::int64_t>(ts_sec),
                 static_cast<std::int32_t>(nanos_ ? ts_frac / 1000 : ts_frac)};
    if (auto pkt = decode(frame, ts)) {
      ++stats_.parsed;
      return pkt;
    }
  }
}

std::optional<RawPacket> PcapReader::decode(const std::vector<std::uint8_t>& frame, Timestamp ts) {
  const std::uint8_t* data = frame.data();
  const std::size_t len = frame.size();
  std::size_t ip_off = 0;

  switch (link_type_) {
    case LinkType::Ethernet: {
      if (len < 14) { ++stats_.other_skipped; return std::nullopt; }
      std::size_t off = 12;
      std::uint16_t ether = be16(data + off);
      while ((ether == kEtherVlan || ether == kEtherQinQ) && off + 6 <= len) {
        off += 4;
        ether = be16(data + off);
      }
      if (ether == kEtherArp || ether == kEtherRarp) { ++stats_.filtered_icmp_arp; return std::nullopt; }
      if (ether == kEtherIpv6) { ++stats_.ipv6_skipped; return std::nullopt; }
      if (ether != kEtherIpv4) { ++stats_.other_skipped; return std::nullopt; }
      ip_off = off + 2;
      break;
    }
    case LinkType::LinuxSll: {
      if (len < 16) { ++stats_.other_skipped; return std::nullopt; }
      const std::uint16_t proto = be16(data + 14);
      if (proto == kEtherArp || proto == kEtherRarp) { ++stats_.filtered_icmp_arp; return std::nullopt; }
      if (proto == kEtherIpv6) { ++stats_.ipv6_skipped; return std::nullopt; }
      if (proto != kEtherIpv4) { ++stats_.other_skipped; return std::nullopt; }
      ip_off = 16;
      break;
    }
    case LinkType::Null: {
      if (len < 4) { ++stats_.other_skipped; return std::nullopt; }
      // Address family in the capturing host's byte order.
      const std::uint32_t family = le32(data);
      const std::uint32_t af = family > 0xFFFF ? bswap32(family) : family;
      if (af != 2) {
        if (af == 10 || af == 24 || af == 28 || af == 30) ++stats_.ipv6_skipped;
        else ++stats_.other_skipped;
        return std::nullopt;
      }
      ip_off = 4;
      break;
    }
    case LinkType::Raw:
    case LinkType::Ipv4:
      ip_off = 0;
      break;
  }

  if (ip_off >= len) { ++stats_.other_skipped; return std::nullopt; }
  const std::uint8_t* ip = data + ip_off;
  const std::size_t ip_avail = len - ip_off;
  const unsigned version = ip[0] >> 4;
  if (version == 6) { ++stats_.ipv6_skipped; return std::nullopt; }
  if (version != 4 || ip_avail < 20) { ++stats_.other_skipped; return std::nullopt; }
  const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0F) * 4;
  const std::size_t total_len = be16(ip + 2);
  if (ihl < 20 || ihl > ip_avail || total_len < ihl) { ++stats_.other_skipped; return std::nullopt; }
  const std::uint8_t proto = ip[9];
  if (proto == kIpProtoIcmp) { ++stats_.filtered_icmp_arp; return std::nullopt; }
  if (proto != 6 && proto != 17) { ++stats_.other_skipped; return std::nullopt; }
  const std::uint16_t frag = be16(ip + 6);
  if ((frag & 0x1FFF) != 0) { ++stats_.other_skipped; return std::nullopt; }

  // Ethernet trailers past the IP total length are not payload.
  const std::size_t ip_end = std::min(ip_avail, total_len);
  const std::uint8_t* l4 = ip + ihl;
  const std::size_t l4_avail = ip_end - ihl;

  RawPacket pkt;
  pkt.ts = ts;
  pkt.link_header.assign(data, data + ip_off);
  pkt.ip_header.assign(ip, ip + ihl);
  pkt.tuple.src.ip = be32(ip + 12);
  pkt.tuple.dst.ip = be32(ip + 16);

  std::size_t l4_len = 0;
  if (proto == 6) {
    if (l4_avail < 20) { ++stats_.other_skipped; return std::nullopt; }
    l4_len = static_cast<std::size_t>(l4[12] >> 4) * 4;
    if (l4_len < 20 || l4_len > l4_avail) { ++stats_.other_skipped; return std::nullopt; }
    pkt.proto = TransportProto::Tcp;
    pkt.tcp_seq = be32(l4 + 4);
    pkt.tcp_ack = be32(l4 + 8);
    pkt.tcp_flags = l4[13];
  } else {
    if (l4_avail < 8) { ++stats_.other_skipped; return std::nullopt; }
    l4_len = 8;
    pkt.proto = TransportProto::Udp;
  }
  pkt.tuple.proto = pkt.proto;
  pkt.tuple.src.port = be16(l4);
  pkt.tuple.dst.port = be16(l4 + 2);
  pkt.transport_header.assign(l4, l4 + l4_len);
  pkt.payload.assign(l4 + l4_len, ip + ip_end);
  return pkt;
}

std::vector<RawPacket> parse_pcap(const std::filesystem::path& path, ParseStats* stats) {
  PcapReader reader(path);
  std::vector<RawPacket> out;
  while (auto pkt = reader.next()) out.push_back(std::move(*pkt));
  if (stats) *stats = reader.stats();
  return out;
}

}  // namespace sessim
