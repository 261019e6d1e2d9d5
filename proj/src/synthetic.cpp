#include "sessim/synthetic.hpp"

#include <array>

#include "sessim/rng.hpp"

namespace sessim {

namespace {

struct FamilyProfile {
  std::uint16_t server_port = 0;
  std::uint8_t ttl = 64;
  std::uint16_t window = 0;
  std::vector<bool> rhythm;            // true = client to server
  std::vector<std::size_t> lengths;    // payload length per rhythm slot
  std::array<std::uint8_t, 12> signature{};
  std::array<std::uint8_t, 4> alphabet{};
  std::size_t min_packets = 10;
  std::size_t max_packets = 20;
};

FamilyProfile make_profile(std::uint64_t seed, std::size_t family) {
  Rng rng(seed * 0x100000001B3ull + family * 0x9E3779B97F4A7C15ull + 17);
  FamilyProfile p;
  p.server_port = static_cast<std::uint16_t>(1024 + rng.below(60000));
  p.ttl = static_cast<std::uint8_t>(30 + rng.below(200));
  p.window = static_cast<std::uint16_t>(1024 + rng.below(60000));
  const std::size_t slots = 3 + rng.below(4);
  p.rhythm.push_back(true);
  for (std::size_t i = 1; i < slots; ++i) p.rhythm.push_back(rng.below(2) == 0);
  for (std::size_t i = 0; i < slots; ++i) p.lengths.push_back(12 + rng.below(60));
  for (auto& b : p.signature) b = static_cast<std::uint8_t>(rng.below(256));
  // Beacon bodies share a printable band across families; benign bodies are
  // long and uniformly random.
  for (auto& b : p.alphabet) b = static_cast<std::uint8_t>(0x30 + rng.below(0x2B));
  p.min_packets = 8 + rng.below(6);
  p.max_packets = p.min_packets + 4 + rng.below(6);
  return p;
}

void put16(std::vector<std::uint8_t>& b, std::size_t off, std::uint16_t v) {
  b[off] = static_cast<std::uint8_t>(v >> 8);
  b[off + 1] = static_cast<std::uint8_t>(v);
}

void put32(std::vector<std::uint8_t>& b, std::size_t off, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (24 - 8 * i));
}

std::uint16_t ip_checksum(const std::vector<std::uint8_t>& h) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < h.size(); i += 2) sum += static_cast<std::uint32_t>((h[i] << 8) | h[i + 1]);
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

struct Conversation {
  Endpoint client, server;
  TransportProto proto = TransportProto::Tcp;
  std::uint8_t ttl_client = 64, ttl_server = 64;
  std::uint16_t window = 65535;
  std::uint32_t seq_client = 0, seq_server = 0;
  std::uint16_t ip_id = 0;
  Timestamp clock{1'600'000'000, 0};
  std::vector<RawPacket> packets;

  void emit(bool from_client, std::uint8_t flags, std::vector<std::uint8_t> payload, std::int64_t gap_us) {
    RawPacket pkt;
    const std::int64_t t = clock.micros() + gap_us;
    clock = {t / 1'000'000, static_cast<std::int32_t>(t % 1'000'000)};
    pkt.ts = clock;
    pkt.proto = proto;
    pkt.tuple = {from_client ? client : server, from_client ? server : client, proto};

    const std::size_t l4_len = proto == TransportProto::Tcp ? 20 : 8;
    std::vector<std::uint8_t> ip(20, 0);
    ip[0] = 0x45;
    put16(ip, 2, static_cast<std::uint16_t>(20 + l4_len + payload.size()));
    put16(ip, 4, ip_id++);
    put16(ip, 6, 0x4000);
    ip[8] = from_client ? ttl_client : ttl_server;
    ip[9] = static_cast<std::uint8_t>(proto);
    put32(ip, 12, pkt.tuple.src.ip);
    put32(ip, 16, pkt.tuple.dst.ip);
    put16(ip, 10, ip_checksum(ip));
    pkt.ip_header = std::move(ip);

    std::vector<std::uint8_t> l4(l4_len, 0);
    put16(l4, 0, pkt.tuple.src.port);
    put16(l4, 2, pkt.tuple.dst.port);
    if (proto == TransportProto::Tcp) {
      std::uint32_t& seq = from_client ? seq_client : seq_server;
      const std::uint32_t ack = from_client ? seq_server : seq_client;
      put32(l4, 4, seq);
      put32(l4, 8, (flags & tcp_flag::kAck) ? ack : 0);
      l4[12] = 0x50;
      l4[13] = flags;
      put16(l4, 14, window);
      pkt.tcp_seq = seq;
      pkt.tcp_ack = (flags & tcp_flag::kAck) ? ack : 0;
      pkt.tcp_flags = flags;
      seq += static_cast<std::uint32_t>(payload.size()) + ((flags & (tcp_flag::kSyn | tcp_flag::kFin)) ? 1 : 0);
    } else {
      put16(l4, 4, static_cast<std::uint16_t>(8 + payload.size()));
    }
    pkt.transport_header = std::move(l4);
    pkt.payload = std::move(payload);
    packets.push_back(std::move(pkt));
  }

  void handshake(Rng& rng) {
    emit(true, tcp_flag::kSyn, {}, 0);
    emit(false, tcp_flag::kSyn | tcp_flag::kAck, {}, 1000 + static_cast<std::int64_t>(rng.below(50000)));
    emit(true, tcp_flag::kAck, {}, 200 + static_cast<std::int64_t>(rng.below(1000)));
  }

  Session finish() {
    Session s;
    s.key = FlowKey::from(packets.front().tuple);
    s.initiator = packets.front().tuple.src;
    s.packets = std::move(packets);
    return s;
  }
};

std::uint32_t random_host(Rng& rng) { return static_cast<std::uint32_t>(0x0A000000u + rng.below(0x00FFFFFFu)); }

Session make_family_session(const FamilyProfile& p, Rng& rng) {
  Conversation c;
  c.client = {random_host(rng), static_cast<std::uint16_t>(32768 + rng.below(28000))};
  c.server = {random_host(rng), p.server_port};
  c.proto = TransportProto::Tcp;
  c.ttl_client = p.ttl;
  c.ttl_server = static_cast<std::uint8_t>(p.ttl ^ 0x40);
  c.window = p.window;
  c.seq_client = static_cast<std::uint32_t>(rng.next());
  c.seq_server = static_cast<std::uint32_t>(rng.next());
  c.handshake(rng);
  const std::size_t count = p.min_packets + rng.below(p.max_packets - p.min_packets + 1);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t slot = i % p.rhythm.size();
    const std::size_t jitter = rng.below(7);
    const std::size_t len = p.lengths[slot] + jitter >= 3 ? p.lengths[slot] + jitter - 3 : 0;
    std::vector<std::uint8_t> payload(len);
    for (std::size_t k = 0; k < len; ++k) {
      if (k < p.signature.size()) payload[k] = p.signature[k];
      else payload[k] = p.alphabet[rng.below(p.alphabet.size())];
      if (rng.below(100) < 3) payload[k] = static_cast<std::uint8_t>(rng.below(256));
    }
    c.emit(p.rhythm[slot], tcp_flag::kAck | tcp_flag::kPsh, std::move(payload),
           5000 + static_cast<std::int64_t>(rng.below(20000)));
  }
  return c.finish();
}

Session make_benign_session(Rng& rng) {
  static constexpr std::array<std::uint16_t, 6> kPorts = {53, 80, 123, 443, 8080, 993};
  Conversation c;
  c.proto = rng.below(3) == 0 ? TransportProto::Udp : TransportProto::Tcp;
  c.client = {random_host(rng), static_cast<std::uint16_t>(1024 + rng.below(64000))};
  const std::uint16_t port = rng.below(4) == 0 ? static_cast<std::uint16_t>(1 + rng.below(65535))
                                               : kPorts[rng.below(kPorts.size())];
  c.server = {random_host(rng), port};
  c.ttl_client = rng.below(2) ? 64 : 128;
  c.ttl_server = static_cast<std::uint8_t>(32 + rng.below(224));
  c.window = static_cast<std::uint16_t>(rng.below(65536));
  c.seq_client = static_cast<std::uint32_t>(rng.next());
  c.seq_server = static_cast<std::uint32_t>(rng.next());
  if (c.proto == TransportProto::Tcp) c.handshake(rng);
  const std::size_t count = 3 + rng.below(22);
  for (std::size_t i = 0; i < count; ++i) {
    const bool from_client = i == 0 || rng.below(2) == 0;
    std::vector<std::uint8_t> payload(rng.below(7) == 0 ? 0 : 100 + rng.below(1300));
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng.below(256));
    c.emit(from_client, tcp_flag::kAck | (payload.empty() ? 0 : tcp_flag::kPsh), std::move(payload),
           static_cast<std::int64_t>(rng.below(2'000'000)));
  }
  return c.finish();
}

}  // namespace

std::vector<SyntheticSession> make_synthetic_sessions(const SyntheticOptions& options) {
  std::vector<SyntheticSession> out;
  Rng rng(options.seed);
  for (std::size_t i = 0; i < options.benign_sessions; ++i) out.push_back({make_benign_session(rng), 0});
  for (std::size_t f = 1; f <= options.families; ++f) {
    const FamilyProfile profile = make_profile(options.seed, f);
    for (std::size_t i = 0; i < options.sessions_per_family; ++i) {
      out.push_back({make_family_session(profile, rng), static_cast<std::uint16_t>(f)});
    }
  }
  return out;
}

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options) {
  if (options.families + 1 > 65535) throw Error(ErrorKind::InvalidConfig, "too many synthetic families");
  SyntheticCorpus corpus;
  corpus.manifest[0] = "benign";
  for (std::size_t f = 1; f <= options.families; ++f) {
    corpus.manifest[static_cast<std::uint16_t>(f)] = "family_" + std::to_string(f);
  }
  std::size_t index = 0;
  for (auto& s : make_synthetic_sessions(options)) {
    corpus.tensors.push_back(build_tensor(anonymize(std::move(s.session), options.anonymize), options.session_len,
                                          s.label, "synthetic#" + std::to_string(index++)));
  }
  return corpus;
}

}  // namespace sessim
