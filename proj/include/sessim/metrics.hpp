#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sessim {

// One classified query. Labels are episode class positions; 0 is benign.
struct PredictionRecord {
  std::size_t episode = 0;
  std::size_t query_idx = 0;
  std::size_t true_label = 0;
  std::size_t pred_label = 0;
  std::vector<double> logits;

  bool operator==(const PredictionRecord&) const = default;
};

// CSV: episode,query_idx,true_label,pred_label,logit_0..logit_{J-1}
void write_predictions_csv(const std::filesystem::path& path, std::span<const PredictionRecord> records,
                           std::size_t way);
std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path);

// Positive = malicious.
struct BinaryCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
};

// Undefined values (zero denominator) are absent.
struct BinaryMetrics {
  std::optional<double> accuracy, recall, fpr;
};

BinaryMetrics binary_metrics(const BinaryCounts& c);

// counts(truth, predicted)
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : n_(classes), counts_(classes * classes, 0) {}

  void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }
  std::size_t classes() const noexcept { return n_; }
  std::uint64_t row_sum(std::size_t c) const;
  std::uint64_t col_sum(std::size_t c) const;
  std::uint64_t trace() const;
  std::uint64_t total() const;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
  std::optional<double> precision, recall, f1;
};

// Macro means skip undefined per-class values; the skip counts are kept.
struct MulticlassMetrics {
  std::vector<ClassMetrics> per_class;
  std::optional<double> accuracy;
  std::optional<double> macro_precision, macro_recall, macro_f1;
  std::size_t undefined_precision = 0, undefined_recall = 0, undefined_f1 = 0;
};

MulticlassMetrics multiclass_metrics(const ConfusionMatrix& m);

BinaryCounts binary_counts(std::span<const PredictionRecord> records);
ConfusionMatrix confusion_matrix(std::span<const PredictionRecord> records, std::size_t way);

struct ReportInfo {
  std::size_t way = 2;
  std::size_t shot = 5;
  std::size_t n_episodes = 0;
  nlohmann::json config = nlohmann::json::object();

  std::string protocol() const;
};

// {protocol, way, shot, n_episodes, n_queries, metrics{...}, per_class{...}, config}
nlohmann::json make_report(const ReportInfo& info, std::span<const PredictionRecord> records);

std::string report_csv_header();
std::string report_csv_row(const nlohmann::json& report);

}  // namespace sessim
