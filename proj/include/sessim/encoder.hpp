#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sessim/autograd.hpp"
#include "sessim/rng.hpp"
#include "sessim/session_tensor.hpp"

namespace sessim {

enum class CellType { Gru, Lstm, Rnn };

std::string to_string(CellType cell);
CellType parse_cell_type(const std::string& s);

struct EncoderConfig {
  std::size_t window = 2;       // Q, packets per phase
  std::size_t session_len = 16;  // N
  std::size_t hidden = 64;      // d, units per direction
  std::size_t layers = 2;       // l
  CellType cell = CellType::Gru;

  void validate() const;
  std::size_t phases() const { return (session_len + window - 1) / window; }
  std::size_t summary_width() const { return 2 * layers * hidden; }
};

// Splits the N x 256 session into ceil(N/Q) consecutive Q x 256 windows; the
// last window is zero-padded when Q does not divide N.
template <typename T>
std::vector<Tensor<T>> segment_phases(const SessionTensor& session, std::size_t window);

// Parameters of one direction of one recurrent layer. Gate order:
// GRU {z, r, n}; LSTM {i, f, g, o}; RNN {h}.
template <typename T>
struct CellParams {
  CellType type = CellType::Gru;
  std::vector<ad::Parameter<T>*> input;      // in_width x d
  std::vector<ad::Parameter<T>*> recurrent;  // d x d
  std::vector<ad::Parameter<T>*> bias;       // 1 x d
};

template <typename T>
struct BoundCell {
  CellType type = CellType::Gru;
  std::vector<ad::Var<T>> input, recurrent, bias;
};

template <typename T>
BoundCell<T> bind(ad::Tape<T>& tape, const CellParams<T>& p);

// One GRU step: z, r = sigmoid(x W + h U + b); n = tanh(x Wn + r * (h Un) + bn);
// h' = (1 - z) * n + z * h. Rows of x/h are independent batch entries.
template <typename T>
ad::Var<T> gru_cell_step(ad::Var<T> x, ad::Var<T> h, const BoundCell<T>& cell);

template <typename T>
struct BiEncoding {
  std::vector<ad::Var<T>> outputs;  // top-layer [fwd_t ; bwd_t] per step, B x 2d
  ad::Var<T> summary;               // B x 2ld: [fwd_T, bwd_1] of every layer
};

// Stacked bidirectional recurrent encoder.
template <typename T>
class BiRecurrentEncoder {
 public:
  BiRecurrentEncoder(std::string prefix, std::size_t input_width, std::size_t hidden, std::size_t layers,
                     CellType cell, ad::ParameterStore<T>& store, Rng& rng);

  // `sequence[t]` is B x input_width; all steps share B.
  BiEncoding<T> encode(ad::Tape<T>& tape, std::span<const ad::Var<T>> sequence) const;

  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t layers() const noexcept { return layers_.size(); }
  std::size_t input_width() const noexcept { return input_width_; }
  // layers_[k][0] is forward, [1] backward.
  const std::array<CellParams<T>, 2>& layer(std::size_t k) const { return layers_.at(k); }

 private:
  std::size_t input_width_;
  std::size_t hidden_;
  std::vector<std::array<CellParams<T>, 2>> layers_;
};

template <typename T>
struct EncodedBatch {
  ad::Var<T> local;   // (L * S) x W, row i * S + s is phase i of session s
  ad::Var<T> global;  // S x W
  std::size_t sessions = 0;
  std::size_t phases = 0;
};

// Local encoder over each phase independently, then a global encoder with its
// own parameters over the phase-feature sequence.
template <typename T>
class HierarchicalEncoder {
 public:
  HierarchicalEncoder(const EncoderConfig& cfg, ad::ParameterStore<T>& store, Rng& rng);

  EncodedBatch<T> encode(ad::Tape<T>& tape, std::span<const SessionTensor* const> sessions) const;

  // Z_local of one session: L x W.
  ad::Var<T> encode_local(ad::Tape<T>& tape, const SessionTensor& session) const;
  // Z_global from an L x W phase-feature matrix: 1 x W.
  ad::Var<T> encode_global(ad::Tape<T>& tape, ad::Var<T> local_features) const;

  // Rows of `batch.local` belonging to session `s`, in phase order.
  ad::Var<T> local_rows(const EncodedBatch<T>& batch, std::size_t s) const;

  const EncoderConfig& config() const noexcept { return cfg_; }
  const BiRecurrentEncoder<T>& local() const noexcept { return local_; }
  const BiRecurrentEncoder<T>& global() const noexcept { return global_; }

 private:
  EncoderConfig cfg_;
  BiRecurrentEncoder<T> local_;
  BiRecurrentEncoder<T> global_;
};

}  // namespace sessim
