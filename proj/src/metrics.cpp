#include "sessim/metrics.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sessim/error.hpp"

namespace sessim {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

void put_optional(nlohmann::json& obj, const char* key, const std::optional<double>& v) {
  if (v) obj[key] = *v;
}

template <typename Int>
Int parse_int(const std::string& s, std::size_t line) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::CountMismatch, "predictions line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

}  // namespace

void write_predictions_csv(const std::filesystem::path& path, std::span<const PredictionRecord> records,
                           std::size_t way) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "episode,query_idx,true_label,pred_label";
  for (std::size_t j = 0; j < way; ++j) out << ",logit_" << j;
  out << '\n';
  for (const auto& r : records) {
    if (r.logits.size() != way) {
      throw Error(ErrorKind::ShapeMismatch, "prediction has " + std::to_string(r.logits.size()) + " logits, way is " +
                                                std::to_string(way));
    }
    out << r.episode << ',' << r.query_idx << ',' << r.true_label << ',' << r.pred_label;
    for (double v : r.logits) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("episode,query_idx,true_label,pred_label", 0) != 0) {
    throw Error(ErrorKind::BadMagic, path.string() + ": missing predictions header");
  }
  std::vector<PredictionRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() < 5) {
      throw Error(ErrorKind::CountMismatch, "predictions line " + std::to_string(line_no) + " has too few fields");
    }
    PredictionRecord r;
    r.episode = parse_int<std::size_t>(cells[0], line_no);
    r.query_idx = parse_int<std::size_t>(cells[1], line_no);
    r.true_label = parse_int<std::size_t>(cells[2], line_no);
    r.pred_label = parse_int<std::size_t>(cells[3], line_no);
    for (std::size_t i = 4; i < cells.size(); ++i) {
      double v = 0;
      const auto res = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v);
      if (res.ec != std::errc{}) {
        throw Error(ErrorKind::CountMismatch, "predictions line " + std::to_string(line_no) + ": bad logit");
      }
      r.logits.push_back(v);
    }
    if (r.true_label >= r.logits.size() || r.pred_label >= r.logits.size()) {
      throw Error(ErrorKind::CountMismatch, "predictions line " + std::to_string(line_no) + ": label out of range");
    }
    out.push_back(std::move(r));
  }
  return out;
}

BinaryMetrics binary_metrics(const BinaryCounts& c) {
  return {ratio(c.tp + c.tn, c.total()), ratio(c.tp, c.tp + c.fn), ratio(c.fp, c.fp + c.tn)};
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
  if (truth >= n_ || predicted >= n_) {
    throw Error(ErrorKind::ShapeMismatch, "confusion index out of range for " + std::to_string(n_) + " classes");
  }
  counts_[truth * n_ + predicted] += count;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < n_; ++j) s += at(c, j);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < n_; ++i) s += at(i, c);
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < n_; ++i) s += at(i, i);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto v : counts_) s += v;
  return s;
}

MulticlassMetrics multiclass_metrics(const ConfusionMatrix& m) {
  MulticlassMetrics out;
  out.accuracy = ratio(m.trace(), m.total());
  double sum_p = 0, sum_r = 0, sum_f = 0;
  std::size_t n_p = 0, n_r = 0, n_f = 0;
  for (std::size_t c = 0; c < m.classes(); ++c) {
    ClassMetrics cm;
    cm.precision = ratio(m.at(c, c), m.col_sum(c));
    cm.recall = ratio(m.at(c, c), m.row_sum(c));
    if (cm.precision && cm.recall) {
      const double p = *cm.precision, r = *cm.recall;
      cm.f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    if (cm.precision) { sum_p += *cm.precision; ++n_p; } else { ++out.undefined_precision; }
    if (cm.recall) { sum_r += *cm.recall; ++n_r; } else { ++out.undefined_recall; }
    if (cm.f1) { sum_f += *cm.f1; ++n_f; } else { ++out.undefined_f1; }
    out.per_class.push_back(cm);
  }
  if (n_p) out.macro_precision = sum_p / static_cast<double>(n_p);
  if (n_r) out.macro_recall = sum_r / static_cast<double>(n_r);
  if (n_f) out.macro_f1 = sum_f / static_cast<double>(n_f);
  return out;
}

BinaryCounts binary_counts(std::span<const PredictionRecord> records) {
  BinaryCounts c;
  for (const auto& r : records) {
    const bool truth_mal = r.true_label != 0;
    const bool pred_mal = r.pred_label != 0;
    if (truth_mal && pred_mal) ++c.tp;
    else if (truth_mal) ++c.fn;
    else if (pred_mal) ++c.fp;
    else ++c.tn;
  }
  return c;
}

ConfusionMatrix confusion_matrix(std::span<const PredictionRecord> records, std::size_t way) {
  ConfusionMatrix m(way);
  for (const auto& r : records) m.add(r.true_label, r.pred_label);
  return m;
}

std::string ReportInfo::protocol() const {
  return std::to_string(way) + "-way-" + std::to_string(shot) + "-shot";
}

nlohmann::json make_report(const ReportInfo& info, std::span<const PredictionRecord> records) {
  const BinaryCounts bc = binary_counts(records);
  const BinaryMetrics bm = binary_metrics(bc);
  const MulticlassMetrics mm = multiclass_metrics(confusion_matrix(records, info.way));

  nlohmann::json metrics = nlohmann::json::object();
  metrics["averaging"] = "macro";
  put_optional(metrics, "accuracy", bm.accuracy);
  put_optional(metrics, "recall", bm.recall);
  put_optional(metrics, "fpr", bm.fpr);
  put_optional(metrics, "multiclass_accuracy", mm.accuracy);
  put_optional(metrics, "macro_precision", mm.macro_precision);
  put_optional(metrics, "macro_recall", mm.macro_recall);
  put_optional(metrics, "macro_f1", mm.macro_f1);
  metrics["undefined_precision_classes"] = mm.undefined_precision;
  metrics["undefined_recall_classes"] = mm.undefined_recall;
  metrics["undefined_f1_classes"] = mm.undefined_f1;
  metrics["binary_counts"] = {{"tp", bc.tp}, {"fp", bc.fp}, {"tn", bc.tn}, {"fn", bc.fn}};

  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 0; c < mm.per_class.size(); ++c) {
    nlohmann::json entry = nlohmann::json::object();
    put_optional(entry, "precision", mm.per_class[c].precision);
    put_optional(entry, "recall", mm.per_class[c].recall);
    put_optional(entry, "f1", mm.per_class[c].f1);
    per_class[std::to_string(c)] = std::move(entry);
  }

  nlohmann::json report;
  report["protocol"] = info.protocol();
  report["way"] = info.way;
  report["shot"] = info.shot;
  report["n_episodes"] = info.n_episodes;
  report["n_queries"] = records.size();
  report["metrics"] = std::move(metrics);
  report["per_class"] = std::move(per_class);
  report["config"] = info.config;
  return report;
}

std::string report_csv_header() {
  return "protocol,way,shot,n_episodes,n_queries,accuracy,recall,fpr,macro_precision,macro_recall,macro_f1";
}

std::string report_csv_row(const nlohmann::json& report) {
  std::ostringstream os;
  os << report.at("protocol").get<std::string>() << ',' << report.at("way").get<std::size_t>() << ','
     << report.at("shot").get<std::size_t>() << ',' << report.at("n_episodes").get<std::size_t>() << ','
     << report.at("n_queries").get<std::size_t>();
  const auto& m = report.at("metrics");
  for (const char* key : {"accuracy", "recall", "fpr", "macro_precision", "macro_recall", "macro_f1"}) {
    os << ',';
    if (m.contains(key)) os << format_double(m.at(key).get<double>());
  }
  return os.str();
}

}  // namespace sessim
