#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "sessim/fewshot.hpp"
#include "sessim/model.hpp"

namespace sessim {

enum class Precision { F32, F64 };

struct RunConfig {
  std::size_t session_len = 16;  // N
  std::size_t window = 2;        // Q
  std::size_t hidden = 64;       // d
  std::size_t layers = 2;        // l
  std::size_t d_k = 32;
  CellType cell = CellType::Gru;
  std::size_t way = 2;
  std::size_t shot = 5;
  std::size_t n_query = 15;
  std::size_t episodes = 1000;
  double lr = 0.001;
  std::uint64_t seed = 0;
  Precision precision = Precision::F32;
  AttentionMode attention = AttentionMode::Token;
  bool symmetrize = true;
  bool double_sigmoid = false;
  std::size_t fusion_hidden = 256;
  std::size_t fusion_out = 128;
  std::size_t score_hidden = 64;

  // Sets one tunable from text. Keys are matched on their last dotted
  // component, so "model.d" and "d" are the same key.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  ModelConfig model() const;
  EpisodeSpec episode() const { return {way, shot, n_query}; }

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

// `key = value` lines; `[section]` headers prefix keys; `#` and `;` start comments.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

}  // namespace sessim
