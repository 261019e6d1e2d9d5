#include "sessim/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

namespace sessim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

template <typename U>
U parse_number(const std::string& key, const std::string& value) {
  U v{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
    throw Error(ErrorKind::InvalidConfig, "bad value '" + value + "' for " + key);
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = lower(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorKind::InvalidConfig, "bad boolean '" + value + "' for " + key);
}

Precision parse_precision(const std::string& value) {
  const std::string v = lower(value);
  if (v == "f32" || v == "float" || v == "32") return Precision::F32;
  if (v == "f64" || v == "double" || v == "64") return Precision::F64;
  throw Error(ErrorKind::InvalidConfig, "bad precision '" + value + "'");
}

}  // namespace

void RunConfig::set(const std::string& full_key, const std::string& raw) {
  const auto dot = full_key.rfind('.');
  const std::string key = lower(trim(dot == std::string::npos ? full_key : full_key.substr(dot + 1)));
  const std::string value = trim(raw);
  if (key == "n" || key == "session_len") session_len = parse_number<std::size_t>(key, value);
  else if (key == "q" || key == "window") window = parse_number<std::size_t>(key, value);
  else if (key == "d" || key == "hidden") hidden = parse_number<std::size_t>(key, value);
  else if (key == "l" || key == "layers") layers = parse_number<std::size_t>(key, value);
  else if (key == "d_k") d_k = parse_number<std::size_t>(key, value);
  else if (key == "cell") cell = parse_cell_type(value);
  else if (key == "way") way = parse_number<std::size_t>(key, value);
  else if (key == "shot") shot = parse_number<std::size_t>(key, value);
  else if (key == "n_query") n_query = parse_number<std::size_t>(key, value);
  else if (key == "episodes") episodes = parse_number<std::size_t>(key, value);
  else if (key == "lr") lr = parse_number<double>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "precision") precision = parse_precision(value);
  else if (key == "attention_mode") attention = parse_attention_mode(value);
  else if (key == "symmetrize") symmetrize = parse_bool(key, value);
  else if (key == "double_sigmoid") double_sigmoid = parse_bool(key, value);
  else if (key == "fusion_hidden") fusion_hidden = parse_number<std::size_t>(key, value);
  else if (key == "fusion_out") fusion_out = parse_number<std::size_t>(key, value);
  else if (key == "score_hidden") score_hidden = parse_number<std::size_t>(key, value);
  else throw Error(ErrorKind::InvalidConfig, "unknown config key '" + full_key + "'");
}

void RunConfig::validate() const {
  model().validate();
  episode().validate();
  if (session_len > 65535) throw Error(ErrorKind::InvalidConfig, "N must fit the dataset header (<= 65535)");
  if (!(lr > 0)) throw Error(ErrorKind::InvalidConfig, "lr must be > 0");
}

ModelConfig RunConfig::model() const {
  ModelConfig m;
  m.encoder.session_len = session_len;
  m.encoder.window = window;
  m.encoder.hidden = hidden;
  m.encoder.layers = layers;
  m.encoder.cell = cell;
  m.d_k = d_k;
  m.attention = attention;
  m.symmetrize = symmetrize;
  m.fusion_hidden = fusion_hidden;
  m.fusion_out = fusion_out;
  m.score_hidden = score_hidden;
  return m;
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"N", session_len},
      {"Q", window},
      {"d", hidden},
      {"l", layers},
      {"d_k", d_k},
      {"cell", to_string(cell)},
      {"way", way},
      {"shot", shot},
      {"n_query", n_query},
      {"episodes", episodes},
      {"lr", lr},
      {"seed", seed},
      {"precision", precision == Precision::F32 ? "f32" : "f64"},
      {"attention_mode", to_string(attention)},
      {"symmetrize", symmetrize},
      {"double_sigmoid", double_sigmoid},
      {"fusion_hidden", fusion_hidden},
      {"fusion_out", fusion_out},
      {"score_hidden", score_hidden},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (value.is_string()) cfg.set(key, value.get<std::string>());
    else if (value.is_boolean()) cfg.set(key, value.get<bool>() ? "true" : "false");
    else if (value.is_number_float()) {
      char buf[64];
      const auto res = std::to_chars(buf, buf + sizeof(buf), value.get<double>());
      cfg.set(key, std::string(buf, res.ptr));
    } else {
      cfg.set(key, value.dump());
    }
  }
  return cfg;
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorKind::InvalidConfig, path.string() + ":" + std::to_string(line_no) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig, path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    cfg.set(section.empty() ? key : section + "." + key, line.substr(eq + 1));
  }
}

}  // namespace sessim
