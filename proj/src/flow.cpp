#include "sessim/flow.hpp"

#include <algorithm>
#include <set>
#include <tuple>
#include <unordered_map>

namespace sessim {

FlowKey FlowKey::from(const FiveTuple& t) {
  FlowKey k;
  k.lo = std::min(t.src, t.dst);
  k.hi = std::max(t.src, t.dst);
  k.proto = t.proto;
  k.initiator = t.src;
  return k;
}

std::size_t FlowKeyHash::operator()(const FlowKey& k) const noexcept {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  mix(k.lo.ip);
  mix(k.lo.port);
  mix(k.hi.ip);
  mix(k.hi.port);
  mix(static_cast<std::uint64_t>(k.proto));
  return static_cast<std::size_t>(h);
}

SessionizeStats& SessionizeStats::operator+=(const SessionizeStats& o) {
  parsed += o.parsed;
  filtered_icmp_arp += o.filtered_icmp_arp;
  retransmissions_dropped += o.retransmissions_dropped;
  short_sessions_dropped += o.short_sessions_dropped;
  short_session_packets += o.short_session_packets;
  sessions_emitted += o.sessions_emitted;
  sessionized_packets += o.sessionized_packets;
  return *this;
}

std::vector<FlowGroup> group_by_five_tuple(std::vector<RawPacket> packets) {
  std::vector<FlowGroup> groups;
  std::unordered_map<FlowKey, std::size_t, FlowKeyHash> index;
  for (auto& pkt : packets) {
    const FlowKey key = FlowKey::from(pkt.tuple);
    auto [it, inserted] = index.try_emplace(key, groups.size());
    if (inserted) groups.push_back(FlowGroup{key, {}});
    groups[it->second].packets.push_back(std::move(pkt));
  }
  return groups;
}

namespace {

bool emit_or_drop(Session&& s, std::vector<Session>& out, SessionizeStats* stats) {
  if (s.packets.size() < kMinSessionPackets) {
    if (stats) {
      ++stats->short_sessions_dropped;
      stats->short_session_packets += s.packets.size();
    }
    return false;
  }
  if (stats) {
    ++stats->sessions_emitted;
    stats->sessionized_packets += s.packets.size();
  }
  out.push_back(std::move(s));
  return true;
}

struct TcpCycle {
  std::vector<RawPacket> packets;
  Endpoint initiator;
  bool syn_anchored = false;
  std::uint32_t syn_seq = 0;
  bool fin_from_initiator = false;
  bool fin_from_responder = false;
  bool reset = false;

  bool closed() const { return reset || (fin_from_initiator && fin_from_responder); }
};

// Drops repeated sequence-consuming segments keyed by (direction, seq, payload
// length), keeping the first copy. Zero-length pure ACKs consume no sequence
// space and are never treated as retransmissions.
std::size_t drop_retransmissions(std::vector<RawPacket>& pkts, const Endpoint& initiator) {
  std::set<std::tuple<bool, std::uint32_t, std::size_t>> seen;
  std::size_t dropped = 0;
  std::vector<RawPacket> kept;
  kept.reserve(pkts.size());
  for (auto& p : pkts) {
    const bool consumes = !p.payload.empty() || p.has_flag(tcp_flag::kSyn) || p.has_flag(tcp_flag::kFin);
    if (consumes) {
      const bool forward = p.tuple.src == initiator;
      if (!seen.emplace(forward, p.tcp_seq, p.payload.size()).second) {
        ++dropped;
        continue;
      }
    }
    kept.push_back(std::move(p));
  }
  pkts = std::move(kept);
  return dropped;
}

// Stable per-direction sort by sequence number. Each direction keeps the
// capture slots it occupied, so the interleaving pattern is preserved.
void reorder_by_sequence(std::vector<RawPacket>& pkts, const Endpoint& initiator) {
  for (bool forward : {true, false}) {
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < pkts.size(); ++i) {
      if ((pkts[i].tuple.src == initiator) == forward) slots.push_back(i);
    }
    if (slots.size() < 2) continue;
    const std::uint32_t base = pkts[slots.front()].tcp_seq;
    std::vector<std::size_t> order = slots;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return seq_distance(pkts[a].tcp_seq, base) < seq_distance(pkts[b].tcp_seq, base);
    });
    std::vector<RawPacket> sorted;
    sorted.reserve(order.size());
    for (auto i : order) sorted.push_back(pkts[i]);
    for (std::size_t k = 0; k < slots.size(); ++k) pkts[slots[k]] = std::move(sorted[k]);
  }
}

}  // namespace

std::vector<Session> split_tcp_cycles(const FlowGroup& group, SessionizeStats* stats) {
  std::vector<TcpCycle> cycles;
  for (const auto& p : group.packets) {
    const bool pure_syn = p.has_flag(tcp_flag::kSyn) && !p.has_flag(tcp_flag::kAck);
    bool start = cycles.empty();
    if (!start && pure_syn) {
      const TcpCycle& cur = cycles.back();
      const bool syn_repeat = cur.syn_anchored && !cur.closed() && p.tuple.src == cur.initiator &&
                              p.tcp_seq == cur.syn_seq;
      start = !syn_repeat;
    }
    if (start) {
      TcpCycle c;
      c.initiator = p.tuple.src;
      c.syn_anchored = pure_syn;
      c.syn_seq = p.tcp_seq;
      cycles.push_back(std::move(c));
    }
    TcpCycle& cur = cycles.back();
    if (p.has_flag(tcp_flag::kFin)) {
      (p.tuple.src == cur.initiator ? cur.fin_from_initiator : cur.fin_from_responder) = true;
    }
    if (p.has_flag(tcp_flag::kRst)) cur.reset = true;
    cur.packets.push_back(p);
  }

  std::vector<Session> out;
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    TcpCycle& c = cycles[i];
    const std::size_t dropped = drop_retransmissions(c.packets, c.initiator);
    if (stats) stats->retransmissions_dropped += dropped;
    reorder_by_sequence(c.packets, c.initiator);
    FlowKey key = group.key;
    key.initiator = c.initiator;
    emit_or_drop(Session{key, std::move(c.packets), c.initiator, i}, out, stats);
  }
  return out;
}

std::vector<Session> split_udp_cycles(const FlowGroup& group, SessionizeStats* stats) {
  std::vector<Session> out;
  Session cur;
  std::size_t cycle = 0;
  auto flush = [&] {
    if (cur.packets.empty()) return;
    emit_or_drop(std::move(cur), out, stats);
    cur = Session{};
    ++cycle;
  };
  for (const auto& p : group.packets) {
    if (!cur.packets.empty()) {
      const std::int64_t gap = p.ts.micros() - cur.packets.back().ts.micros();
      const std::int64_t span = p.ts.micros() - cur.packets.front().ts.micros();
      if (gap > kUdpIdleGapMicros || span > kUdpMaxSpanMicros) flush();
    }
    if (cur.packets.empty()) {
      cur.key = group.key;
      cur.key.initiator = p.tuple.src;
      cur.initiator = p.tuple.src;
      cur.cycle_index = cycle;
    }
    cur.packets.push_back(p);
  }
  flush();
  return out;
}

std::vector<Session> sessionize(std::vector<RawPacket> packets, SessionizeStats* stats) {
  if (stats) stats->parsed += packets.size();
  std::vector<Session> out;
  for (const auto& group : group_by_five_tuple(std::move(packets))) {
    auto sessions = group.key.proto == TransportProto::Tcp ? split_tcp_cycles(group, stats)
                                                           : split_udp_cycles(group, stats);
    for (auto& s : sessions) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sessim
