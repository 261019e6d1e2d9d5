#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sessim/flow.hpp"
#include "sessim/pcap.hpp"
#include "sessim/session_tensor.hpp"

namespace fixtures {

inline std::filesystem::path dir() { return SESSIM_FIXTURE_DIR; }
inline std::filesystem::path path(const std::string& name) { return dir() / (name + ".pcap"); }

inline const nlohmann::json& expected() {
  static const nlohmann::json j = [] {
    std::ifstream in(dir() / "expected.json");
    return nlohmann::json::parse(in);
  }();
  return j;
}

inline std::vector<std::uint8_t> unhex(const std::string& s) {
  std::vector<std::uint8_t> out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(std::stoi(s.substr(2 * i, 2), nullptr, 16));
  return out;
}

struct PipelineOutput {
  std::vector<sessim::Session> sessions;
  std::vector<sessim::SessionTensor> tensors;
  sessim::SessionizeStats stats;
};

inline PipelineOutput run(const std::string& name, std::size_t n = 16) {
  PipelineOutput out;
  sessim::ParseStats ps;
  auto packets = sessim::parse_pcap(path(name), &ps);
  out.stats.filtered_icmp_arp = ps.filtered_icmp_arp;
  out.sessions = sessim::sessionize(std::move(packets), &out.stats);
  for (const auto& s : out.sessions) out.tensors.push_back(sessim::build_tensor(sessim::anonymize(s), n));
  return out;
}

// Empty string on match, otherwise the first difference.
inline std::string compare_with_expected(const std::string& name, const PipelineOutput& got) {
  const auto& exp = expected().at(name);
  const auto& sessions = exp.at("sessions");
  if (sessions.size() != got.tensors.size()) {
    return name + ": " + std::to_string(got.tensors.size()) + " sessions, expected " + std::to_string(sessions.size());
  }
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    const auto& t = got.tensors[s];
    const std::size_t n_real = sessions[s].at("n_real").get<std::size_t>();
    if (t.n_real != n_real) return name + ": session " + std::to_string(s) + " n_real mismatch";
    const auto& rows = sessions[s].at("rows");
    for (std::size_t r = 0; r < t.rows; ++r) {
      const std::vector<std::uint8_t> want =
          r < rows.size() ? unhex(rows[r].get<std::string>()) : std::vector<std::uint8_t>(256, 0);
      for (std::size_t c = 0; c < 256; ++c) {
        const float expect = static_cast<float>(want[c]) / 255.0f;
        if (t.at(r, c) != expect) {
          return name + ": session " + std::to_string(s) + " row " + std::to_string(r) + " byte " +
                 std::to_string(c) + " differs";
        }
      }
    }
  }
  const auto& st = exp.at("stats");
  const auto check = [&](const char* key, std::uint64_t v) -> std::string {
    return st.at(key).get<std::uint64_t>() == v ? "" : name + ": stat " + key + " = " + std::to_string(v);
  };
  for (auto msg : {check("parsed", got.stats.parsed), check("filtered_icmp_arp", got.stats.filtered_icmp_arp),
                   check("retransmissions_dropped", got.stats.retransmissions_dropped),
                   check("short_sessions_dropped", got.stats.short_sessions_dropped),
                   check("sessions_emitted", got.stats.sessions_emitted)}) {
    if (!msg.empty()) return msg;
  }
  return {};
}

}  // namespace fixtures
