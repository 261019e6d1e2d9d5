#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sessim/autograd.hpp"
#include "sessim/rng.hpp"

namespace sessim {

enum class AttentionMode { Token, Literal };
// Euclidean is reserved; constructing a network with it throws InvalidConfig.
enum class LocalSimilarityKind { Cosine, Euclidean };

std::string to_string(AttentionMode mode);
AttentionMode parse_attention_mode(const std::string& s);

struct SimNetConfig {
  std::size_t phases = 8;   // L
  std::size_t hidden = 64;  // d
  std::size_t layers = 2;   // l
  std::size_t d_k = 32;
  AttentionMode attention = AttentionMode::Token;
  LocalSimilarityKind local = LocalSimilarityKind::Cosine;
  bool symmetrize = true;
  std::size_t fusion_hidden = 256;
  std::size_t fusion_out = 128;
  std::size_t score_hidden = 64;

  void validate() const;
  std::size_t global_width() const { return 2 * layers * hidden; }
  std::size_t attention_width() const {
    return attention == AttentionMode::Token ? 2 * layers * d_k : d_k;
  }
  std::size_t fusion_in() const { return attention_width() + phases * phases; }
};

// Per-session inputs to pair scoring, computed once per forward pass.
template <typename T>
struct SessionFeatures {
  std::vector<ad::Var<T>> local_unit;  // per session: L x W rows scaled to unit norm
  std::vector<ad::Var<T>> attended;    // per session: 1 x attention_width
};

template <typename T>
class SimilarityNet {
 public:
  SimilarityNet(const SimNetConfig& cfg, ad::ParameterStore<T>& store, Rng& rng);

  // softmax over all L^2 cosine similarities, then squared element-wise.
  ad::Var<T> local_similarity(ad::Var<T> local_a, ad::Var<T> local_b) const;

  // Self-attention over the rows of `global` (S x 2ld), one session per row.
  // Returns S x attention_width.
  ad::Var<T> self_attention(ad::Tape<T>& tape, ad::Var<T> global) const;

  // Shared-weight fusion MLP over rows of [attended, flat(local sim)].
  ad::Var<T> fuse_rows(ad::Tape<T>& tape, ad::Var<T> inputs) const;
  // (Z_A, Z_B) for one pair: 1 x fusion_out each.
  std::pair<ad::Var<T>, ad::Var<T>> fuse(ad::Tape<T>& tape, ad::Var<T> attended_a, ad::Var<T> attended_b,
                                         ad::Var<T> local_sim) const;

  // sigmoid(score MLP) over rows of [Z_first, Z_second].
  ad::Var<T> raw_score_rows(ad::Tape<T>& tape, ad::Var<T> z_first, ad::Var<T> z_second) const;

  SessionFeatures<T> prepare(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& locals, ad::Var<T> globals) const;

  // P x 1 scores for the given (a, b) session index pairs.
  ad::Var<T> pair_scores(ad::Tape<T>& tape, const SessionFeatures<T>& features,
                         std::span<const std::pair<std::size_t, std::size_t>> pairs) const;

  // Convenience single-pair score (1 x 1) from raw encoder outputs.
  ad::Var<T> similarity(ad::Tape<T>& tape, ad::Var<T> local_a, ad::Var<T> global_a, ad::Var<T> local_b,
                        ad::Var<T> global_b) const;

  const SimNetConfig& config() const noexcept { return cfg_; }

 private:
  struct Dense {
    ad::Parameter<T>* w = nullptr;
    ad::Parameter<T>* b = nullptr;
  };
  ad::Var<T> dense(ad::Tape<T>& tape, const Dense& layer, ad::Var<T> x) const;

  SimNetConfig cfg_;
  ad::Parameter<T>* wq_;
  ad::Parameter<T>* wk_;
  ad::Parameter<T>* wv_;
  Dense fuse1_, fuse2_, score1_, score2_;
};

}  // namespace sessim
