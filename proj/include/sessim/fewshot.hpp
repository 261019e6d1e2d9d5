#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "sessim/adam.hpp"
#include "sessim/metrics.hpp"
#include "sessim/model.hpp"

namespace sessim {

struct EpisodeSpec {
  std::size_t way = 2;
  std::size_t shot = 5;
  std::size_t n_query = 15;

  void validate() const;
};

struct ClassSplit {
  std::vector<std::uint16_t> train_malicious;
  std::vector<std::uint16_t> test_malicious;
  std::vector<std::size_t> train_benign;  // dataset indices
  std::vector<std::size_t> test_benign;
};

// Random disjoint split of malicious class ids (n_train to training, the rest
// to test) and a 50/50 split of benign samples. Both id lists are sorted.
ClassSplit split_classes(std::span<const SessionTensor> data, std::size_t n_train_malicious, std::uint64_t seed);

// Dataset indices grouped by class id; id 0 is benign.
struct ClassPool {
  std::map<std::uint16_t, std::vector<std::size_t>> members;

  static ClassPool from_dataset(std::span<const SessionTensor> data);
  // Restricted to the given benign indices and malicious classes.
  static ClassPool from_subset(std::span<const SessionTensor> data, std::span<const std::size_t> benign,
                               std::span<const std::uint16_t> malicious);

  std::vector<std::uint16_t> malicious_classes() const;
};

// Class-major layout: support[c * shot + k], query[c * n_query + q].
struct Episode {
  std::size_t way = 0, shot = 0, n_query = 0;
  std::vector<std::uint16_t> class_ids;  // position 0 is benign
  std::vector<std::size_t> support;
  std::vector<std::size_t> query;

  std::size_t support_class(std::size_t i) const { return i / shot; }
  std::size_t query_class(std::size_t i) const { return i / n_query; }
};

// Benign plus way-1 malicious classes drawn without replacement; shot +
// n_query distinct samples per class, the first `shot` going to support.
Episode sample_episode(const ClassPool& pool, const EpisodeSpec& spec, Rng& rng);

struct Classification {
  std::size_t predicted = 0;
  std::vector<double> logits;  // class-average similarity
};

// `similarities[j]` scores the query against support sample j of class
// `support_class[j]`. Ties go to the lowest class index.
Classification classify(std::span<const double> similarities, std::span<const std::size_t> support_class,
                        std::size_t way);

struct EpisodeLogits {
  std::vector<std::vector<double>> predicted;  // per query, length J
  std::vector<std::size_t> truth;              // per query, class position
};

// Mean over queries of the squared distance between logits and one-hot truth.
double episode_loss(const EpisodeLogits& logits);

// Tape forms used for training: logits = sims x class-averaging matrix,
// loss = sum_sq(logits - onehot) / n_queries.
template <typename T>
ad::Var<T> episode_logits(ad::Var<T> similarities, const Episode& episode, bool double_sigmoid);
template <typename T>
ad::Var<T> episode_loss(ad::Var<T> logits, const Episode& episode);

struct TrainOptions {
  EpisodeSpec spec;
  std::size_t episodes = 1000;
  AdamOptions adam;
  std::uint64_t seed = 0;
  bool double_sigmoid = false;
  std::function<void(std::size_t episode, double loss)> on_episode;
};

struct TrainResult {
  std::vector<double> losses;
};

// One Adam step per sampled episode. A non-finite loss aborts with
// NumericFailure before the parameters are touched.
template <typename T>
TrainResult train(SessionSimilarityModel<T>& model, std::span<const SessionTensor> data, const ClassPool& pool,
                  const TrainOptions& options);

std::uint64_t episode_stream_seed(std::uint64_t seed);

// Similarity source for evaluation; must be safe to call concurrently.
class EpisodeScorer {
 public:
  virtual ~EpisodeScorer() = default;
  // Row-major |queries| x |support| similarities.
  virtual std::vector<double> score(std::span<const SessionTensor* const> queries,
                                    std::span<const SessionTensor* const> support) const = 0;
};

template <typename T>
class ModelScorer final : public EpisodeScorer {
 public:
  explicit ModelScorer(const SessionSimilarityModel<T>& model) : model_(model) {}
  std::vector<double> score(std::span<const SessionTensor* const> queries,
                            std::span<const SessionTensor* const> support) const override;

 private:
  const SessionSimilarityModel<T>& model_;
};

struct EvalOptions {
  EpisodeSpec spec;
  std::size_t episodes = 1000;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::set<std::uint16_t> training_classes;
};

struct EvalResult {
  std::vector<PredictionRecord> predictions;
  std::size_t episodes = 0;
};

// Throws ProtocolViolation if support and query share a sample, a sample's
// label disagrees with its class slot, position 0 is not benign, or a
// malicious class is in `training_classes`.
void check_episode(const Episode& episode, std::span<const SessionTensor> data,
                   const std::set<std::uint16_t>& training_classes);

// Episodes are drawn up front from one seeded stream, then scored on up to
// `jobs` threads; output order is independent of the job count.
EvalResult evaluate(const EpisodeScorer& scorer, std::span<const SessionTensor> data, const ClassPool& pool,
                    const EvalOptions& options);

}  // namespace sessim
