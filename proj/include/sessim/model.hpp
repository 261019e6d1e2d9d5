#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sessim/encoder.hpp"
#include "sessim/simnet.hpp"

namespace sessim {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t d_k = 32;
  AttentionMode attention = AttentionMode::Token;
  bool symmetrize = true;
  std::size_t fusion_hidden = 256;
  std::size_t fusion_out = 128;
  std::size_t score_hidden = 64;

  void validate() const;
  SimNetConfig simnet() const;
};

// Encoder and similarity network with one shared parameter store.
// Parameter pointers are held internally, so the model is not movable.
template <typename T>
class SessionSimilarityModel {
 public:
  SessionSimilarityModel(const ModelConfig& cfg, std::uint64_t seed);
  SessionSimilarityModel(const SessionSimilarityModel&) = delete;
  SessionSimilarityModel& operator=(const SessionSimilarityModel&) = delete;

  // nQ x nS matrix of sim(query_i, support_j). Every session is encoded once.
  ad::Var<T> similarity_matrix(ad::Tape<T>& tape, std::span<const SessionTensor* const> queries,
                               std::span<const SessionTensor* const> support) const;

  ad::ParameterStore<T>& parameters() noexcept { return params_; }
  const ad::ParameterStore<T>& parameters() const noexcept { return params_; }
  const HierarchicalEncoder<T>& encoder() const noexcept { return encoder_; }
  const SimilarityNet<T>& simnet() const noexcept { return simnet_; }
  const ModelConfig& config() const noexcept { return cfg_; }

 private:
  ModelConfig cfg_;
  ad::ParameterStore<T> params_;
  Rng init_rng_;
  HierarchicalEncoder<T> encoder_;
  SimilarityNet<T> simnet_;
};

}  // namespace sessim
