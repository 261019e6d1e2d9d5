#include "sessim/fewshot.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_set>

namespace sessim {

using ad::Var;

void EpisodeSpec::validate() const {
  if (way < 2) throw Error(ErrorKind::InvalidConfig, "way must be >= 2 (benign plus one malicious class)");
  if (shot < 1) throw Error(ErrorKind::InvalidConfig, "shot must be >= 1");
  if (n_query < 1) throw Error(ErrorKind::InvalidConfig, "n_query must be >= 1");
}

ClassSplit split_classes(std::span<const SessionTensor> data, std::size_t n_train_malicious, std::uint64_t seed) {
  std::set<std::uint16_t> classes;
  std::vector<std::size_t> benign;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].label == 0) benign.push_back(i);
    else classes.insert(data[i].label);
  }
  if (n_train_malicious < 1 || classes.size() < n_train_malicious + 1) {
    throw Error(ErrorKind::NotEnoughClasses, "need at least " + std::to_string(n_train_malicious + 1) +
                                                 " malicious classes to train on " +
                                                 std::to_string(n_train_malicious) + ", dataset has " +
                                                 std::to_string(classes.size()));
  }
  Rng rng(seed);
  std::vector<std::uint16_t> ids(classes.begin(), classes.end());
  rng.shuffle(ids);
  rng.shuffle(benign);
  ClassSplit split;
  split.train_malicious.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train_malicious));
  split.test_malicious.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train_malicious), ids.end());
  const auto half = static_cast<std::ptrdiff_t>(benign.size() / 2);
  split.train_benign.assign(benign.begin(), benign.begin() + half);
  split.test_benign.assign(benign.begin() + half, benign.end());
  std::sort(split.train_malicious.begin(), split.train_malicious.end());
  std::sort(split.test_malicious.begin(), split.test_malicious.end());
  std::sort(split.train_benign.begin(), split.train_benign.end());
  std::sort(split.test_benign.begin(), split.test_benign.end());
  return split;
}

ClassPool ClassPool::from_dataset(std::span<const SessionTensor> data) {
  ClassPool pool;
  for (std::size_t i = 0; i < data.size(); ++i) pool.members[data[i].label].push_back(i);
  return pool;
}

ClassPool ClassPool::from_subset(std::span<const SessionTensor> data, std::span<const std::size_t> benign,
                                 std::span<const std::uint16_t> malicious) {
  ClassPool pool;
  for (std::size_t i : benign) {
    if (i >= data.size() || data[i].label != 0) {
      throw Error(ErrorKind::ProtocolViolation, "benign index " + std::to_string(i) + " is not a benign sample");
    }
    pool.members[0].push_back(i);
  }
  const std::set<std::uint16_t> wanted(malicious.begin(), malicious.end());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].label != 0 && wanted.count(data[i].label)) pool.members[data[i].label].push_back(i);
  }
  return pool;
}

std::vector<std::uint16_t> ClassPool::malicious_classes() const {
  std::vector<std::uint16_t> out;
  for (const auto& [id, idx] : members) {
    if (id != 0 && !idx.empty()) out.push_back(id);
  }
  return out;
}

Episode sample_episode(const ClassPool& pool, const EpisodeSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<std::uint16_t> malicious = pool.malicious_classes();
  if (malicious.size() < spec.way - 1) {
    throw Error(ErrorKind::NotEnoughClasses, std::to_string(spec.way) + "-way episodes need " +
                                                 std::to_string(spec.way - 1) + " malicious classes, pool has " +
                                                 std::to_string(malicious.size()));
  }
  for (std::size_t i = 0; i + 1 < spec.way; ++i) {
    std::swap(malicious[i], malicious[i + rng.below(malicious.size() - i)]);
  }
  Episode ep;
  ep.way = spec.way;
  ep.shot = spec.shot;
  ep.n_query = spec.n_query;
  ep.class_ids.push_back(0);
  ep.class_ids.insert(ep.class_ids.end(), malicious.begin(), malicious.begin() + static_cast<std::ptrdiff_t>(spec.way - 1));

  const std::size_t need = spec.shot + spec.n_query;
  ep.support.reserve(spec.way * spec.shot);
  ep.query.reserve(spec.way * spec.n_query);
  for (std::uint16_t id : ep.class_ids) {
    const auto it = pool.members.find(id);
    const std::size_t have = it == pool.members.end() ? 0 : it->second.size();
    if (have < need) {
      throw Error(ErrorKind::InsufficientSamples, "class " + std::to_string(id) + " has " + std::to_string(have) +
                                                      " samples, episode needs " + std::to_string(need));
    }
    std::vector<std::size_t> members = it->second;
    for (std::size_t i = 0; i < need; ++i) std::swap(members[i], members[i + rng.below(members.size() - i)]);
    ep.support.insert(ep.support.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(spec.shot));
    ep.query.insert(ep.query.end(), members.begin() + static_cast<std::ptrdiff_t>(spec.shot),
                    members.begin() + static_cast<std::ptrdiff_t>(need));
  }
  return ep;
}

Classification classify(std::span<const double> similarities, std::span<const std::size_t> support_class,
                        std::size_t way) {
  if (similarities.size() != support_class.size()) {
    throw Error(ErrorKind::ShapeMismatch, "classify: " + std::to_string(similarities.size()) +
                                              " similarities for " + std::to_string(support_class.size()) +
                                              " support samples");
  }
  std::vector<double> sum(way, 0.0);
  std::vector<std::size_t> count(way, 0);
  for (std::size_t j = 0; j < similarities.size(); ++j) {
    if (support_class[j] >= way) throw Error(ErrorKind::ShapeMismatch, "classify: support class out of range");
    sum[support_class[j]] += similarities[j];
    ++count[support_class[j]];
  }
  Classification out;
  out.logits.resize(way);
  for (std::size_t c = 0; c < way; ++c) {
    if (count[c] == 0) throw Error(ErrorKind::InsufficientSamples, "classify: class " + std::to_string(c) + " has no support");
    out.logits[c] = sum[c] / static_cast<double>(count[c]);
  }
  for (std::size_t c = 1; c < way; ++c) {
    if (out.logits[c] > out.logits[out.predicted]) out.predicted = c;
  }
  return out;
}

double episode_loss(const EpisodeLogits& logits) {
  const std::size_t n = logits.predicted.size();
  if (n == 0 || logits.truth.size() != n) {
    throw Error(ErrorKind::ShapeMismatch, "episode_loss needs one truth per query and at least one query");
  }
  double total = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const auto& y = logits.predicted[q];
    if (logits.truth[q] >= y.size()) throw Error(ErrorKind::ShapeMismatch, "episode_loss: truth out of range");
    double s = 0;
    for (std::size_t c = 0; c < y.size(); ++c) {
      const double diff = (c == logits.truth[q] ? 1.0 : 0.0) - y[c];
      s += diff * diff;
    }
    total += s;
  }
  return total / static_cast<double>(n);
}

template <typename T>
Var<T> episode_logits(Var<T> similarities, const Episode& episode, bool double_sigmoid) {
  const std::size_t ns = episode.support.size();
  if (similarities.cols() != ns || similarities.rows() != episode.query.size()) {
    throw Error(ErrorKind::ShapeMismatch, "similarity matrix " + shape_string(similarities.shape()) +
                                              " does not match the episode");
  }
  Tensor<T> avg(ns, episode.way);
  const T w = static_cast<T>(1.0 / static_cast<double>(episode.shot));
  for (std::size_t j = 0; j < ns; ++j) avg(j, episode.support_class(j)) = w;
  Var<T> logits = ad::matmul(similarities, similarities.tape->constant(std::move(avg)));
  return double_sigmoid ? ad::sigmoid(logits) : logits;
}

template <typename T>
Var<T> episode_loss(Var<T> logits, const Episode& episode) {
  const std::size_t nq = episode.query.size();
  Tensor<T> y(nq, episode.way);
  for (std::size_t q = 0; q < nq; ++q) y(q, episode.query_class(q)) = T{1};
  const Var<T> diff = ad::sub(logits, logits.tape->constant(std::move(y)));
  return ad::scale(ad::sum_sq(diff), static_cast<T>(1.0 / static_cast<double>(nq)));
}

std::uint64_t episode_stream_seed(std::uint64_t seed) {
  // splitmix64 finaliser keeps the episode stream distinct from the init stream.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

std::vector<const SessionTensor*> pick(std::span<const SessionTensor> data, const std::vector<std::size_t>& idx) {
  std::vector<const SessionTensor*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&data[i]);
  return out;
}

}  // namespace

template <typename T>
TrainResult train(SessionSimilarityModel<T>& model, std::span<const SessionTensor> data, const ClassPool& pool,
                  const TrainOptions& options) {
  options.spec.validate();
  auto& store = model.parameters();
  Adam<T> adam(store, options.adam);
  Rng rng(episode_stream_seed(options.seed));
  TrainResult result;
  result.losses.reserve(options.episodes);
  for (std::size_t e = 0; e < options.episodes; ++e) {
    const Episode ep = sample_episode(pool, options.spec, rng);
    const auto queries = pick(data, ep.query);
    const auto support = pick(data, ep.support);
    ad::Tape<T> tape;
    const Var<T> sims = model.similarity_matrix(tape, queries, support);
    const Var<T> loss = episode_loss(episode_logits(sims, ep, options.double_sigmoid), ep);
    const double value = static_cast<double>(loss.value()[0]);
    if (!std::isfinite(value)) {
      throw Error(ErrorKind::NumericFailure, "loss is " + std::to_string(value) + " at episode " +
                                                 std::to_string(e) + " (classes " +
                                                 std::to_string(ep.class_ids.front()) + ".." +
                                                 std::to_string(ep.class_ids.back()) + ")");
    }
    store.zero_grad();
    tape.backward(loss);
    adam.step(store);
    result.losses.push_back(value);
    if (options.on_episode) options.on_episode(e, value);
  }
  return result;
}

template <typename T>
std::vector<double> ModelScorer<T>::score(std::span<const SessionTensor* const> queries,
                                          std::span<const SessionTensor* const> support) const {
  ad::Tape<T> tape;
  const Var<T> sims = model_.similarity_matrix(tape, queries, support);
  const auto v = sims.value().values();
  return std::vector<double>(v.begin(), v.end());
}

void check_episode(const Episode& episode, std::span<const SessionTensor> data,
                   const std::set<std::uint16_t>& training_classes) {
  if (episode.class_ids.size() != episode.way || episode.support.size() != episode.way * episode.shot ||
      episode.query.size() != episode.way * episode.n_query) {
    throw Error(ErrorKind::ProtocolViolation, "episode sizes do not match its way/shot/query counts");
  }
  if (episode.class_ids.empty() || episode.class_ids[0] != 0) {
    throw Error(ErrorKind::ProtocolViolation, "episode class position 0 is not benign");
  }
  std::set<std::uint16_t> seen_classes;
  for (std::size_t c = 0; c < episode.way; ++c) {
    const std::uint16_t id = episode.class_ids[c];
    if (!seen_classes.insert(id).second) {
      throw Error(ErrorKind::ProtocolViolation, "class " + std::to_string(id) + " appears twice in an episode");
    }
    if (id != 0 && training_classes.count(id)) {
      throw Error(ErrorKind::ProtocolViolation,
                  "test episode uses malicious class " + std::to_string(id) + " from the training manifest");
    }
  }
  std::unordered_set<std::size_t> seen;
  auto visit = [&](std::size_t idx, std::size_t cls) {
    if (idx >= data.size()) throw Error(ErrorKind::ProtocolViolation, "episode sample index out of range");
    if (!seen.insert(idx).second) {
      throw Error(ErrorKind::ProtocolViolation, "sample " + std::to_string(idx) + " used twice in one episode");
    }
    if (data[idx].label != episode.class_ids[cls]) {
      throw Error(ErrorKind::ProtocolViolation, "sample " + std::to_string(idx) + " has label " +
                                                    std::to_string(data[idx].label) + " but fills class slot " +
                                                    std::to_string(episode.class_ids[cls]));
    }
  };
  for (std::size_t i = 0; i < episode.support.size(); ++i) visit(episode.support[i], episode.support_class(i));
  for (std::size_t i = 0; i < episode.query.size(); ++i) visit(episode.query[i], episode.query_class(i));
}

EvalResult evaluate(const EpisodeScorer& scorer, std::span<const SessionTensor> data, const ClassPool& pool,
                    const EvalOptions& options) {
  options.spec.validate();
  for (std::uint16_t id : pool.malicious_classes()) {
    if (options.training_classes.count(id)) {
      throw Error(ErrorKind::ProtocolViolation,
                  "test pool contains malicious class " + std::to_string(id) + " from the training manifest");
    }
  }
  EvalResult result;
  result.episodes = options.episodes;
  if (options.episodes == 0) return result;

  Rng rng(options.seed);
  std::vector<Episode> episodes;
  episodes.reserve(options.episodes);
  for (std::size_t e = 0; e < options.episodes; ++e) {
    episodes.push_back(sample_episode(pool, options.spec, rng));
    check_episode(episodes.back(), data, options.training_classes);
  }

  std::vector<std::vector<PredictionRecord>> per_episode(episodes.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t e = next.fetch_add(1);
      if (e >= episodes.size()) return;
      try {
        const Episode& ep = episodes[e];
        const auto queries = pick(data, ep.query);
        const auto support = pick(data, ep.support);
        const std::vector<double> sims = scorer.score(queries, support);
        std::vector<std::size_t> support_class(ep.support.size());
        for (std::size_t j = 0; j < support_class.size(); ++j) support_class[j] = ep.support_class(j);
        auto& out = per_episode[e];
        for (std::size_t q = 0; q < queries.size(); ++q) {
          const std::span<const double> row(sims.data() + q * support.size(), support.size());
          Classification c = classify(row, support_class, ep.way);
          out.push_back({e, q, ep.query_class(q), c.predicted, std::move(c.logits)});
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(episodes.size());
        return;
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(episodes.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (unsigned j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  for (auto& recs : per_episode) {
    result.predictions.insert(result.predictions.end(), std::make_move_iterator(recs.begin()),
                              std::make_move_iterator(recs.end()));
  }
  return result;
}

#define SESSIM_INSTANTIATE(T)                                                                         \
  template Var<T> episode_logits<T>(Var<T>, const Episode&, bool);                                    \
  template Var<T> episode_loss<T>(Var<T>, const Episode&);                                            \
  template TrainResult train<T>(SessionSimilarityModel<T>&, std::span<const SessionTensor>,           \
                                const ClassPool&, const TrainOptions&);                               \
  template class ModelScorer<T>;

SESSIM_INSTANTIATE(float)
SESSIM_INSTANTIATE(double)

}  // namespace sessim
