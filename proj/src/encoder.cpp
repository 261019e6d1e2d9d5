#include "sessim/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace sessim {

using ad::Var;

std::string to_string(CellType cell) {
  switch (cell) {
    case CellType::Gru: return "gru";
    case CellType::Lstm: return "lstm";
    case CellType::Rnn: return "rnn";
  }
  return "gru";
}

CellType parse_cell_type(const std::string& s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "gru") return CellType::Gru;
  if (lower == "lstm") return CellType::Lstm;
  if (lower == "rnn") return CellType::Rnn;
  throw Error(ErrorKind::InvalidConfig, "unknown cell type '" + s + "'");
}

void EncoderConfig::validate() const {
  if (window < 1) throw Error(ErrorKind::InvalidConfig, "Q must be >= 1");
  if (session_len < window) throw Error(ErrorKind::InvalidConfig, "N must be >= Q");
  if (hidden < 1) throw Error(ErrorKind::InvalidConfig, "d must be >= 1");
  if (layers < 1) throw Error(ErrorKind::InvalidConfig, "l must be >= 1");
}

template <typename T>
std::vector<Tensor<T>> segment_phases(const SessionTensor& session, std::size_t window) {
  if (window < 1) throw Error(ErrorKind::InvalidConfig, "Q must be >= 1");
  const std::size_t phases = (session.rows + window - 1) / window;
  std::vector<Tensor<T>> out;
  out.reserve(phases);
  for (std::size_t i = 0; i < phases; ++i) {
    Tensor<T> p(window, kPacketBytes);
    for (std::size_t r = 0; r < window && i * window + r < session.rows; ++r) {
      const auto src = session.row(i * window + r);
      std::copy(src.begin(), src.end(), p.row_span(r).begin());
    }
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::vector<std::string> gate_names(CellType type) {
  switch (type) {
    case CellType::Gru: return {"z", "r", "n"};
    case CellType::Lstm: return {"i", "f", "g", "o"};
    case CellType::Rnn: return {"h"};
  }
  return {};
}

template <typename T>
Tensor<T> uniform_tensor(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Tensor<T> t(rows, cols);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
CellParams<T> make_cell(const std::string& prefix, CellType type, std::size_t in_width, std::size_t hidden,
                        ad::ParameterStore<T>& store, Rng& rng) {
  CellParams<T> p;
  p.type = type;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  const auto gates = gate_names(type);
  for (const auto& g : gates) {
    p.input.push_back(&store.add(prefix + ".W" + g, uniform_tensor<T>(in_width, hidden, bound, rng)));
  }
  for (const auto& g : gates) {
    p.recurrent.push_back(&store.add(prefix + ".U" + g, uniform_tensor<T>(hidden, hidden, bound, rng)));
  }
  for (const auto& g : gates) {
    p.bias.push_back(&store.add(prefix + ".b" + g, uniform_tensor<T>(1, hidden, bound, rng)));
  }
  return p;
}

// Gate pre-activation from an already projected input: xW + hU + b.
template <typename T>
Var<T> gate(Var<T> xw, Var<T> h, Var<T> u, Var<T> b, bool h_is_zero) {
  Var<T> pre = h_is_zero ? xw : ad::add(xw, ad::matmul(h, u));
  return ad::add_bias(pre, b);
}

struct State {
  std::size_t h = 0;
  std::size_t c = 0;
};

// One step for any cell type given projected inputs xw[g]. `h`/`c` are
// updated in place; `first` means the incoming state is the zero vector.
template <typename T>
void cell_step(const BoundCell<T>& cell, const std::vector<Var<T>>& xw, Var<T>& h, Var<T>& c, bool first) {
  switch (cell.type) {
    case CellType::Gru: {
      const Var<T> z = ad::sigmoid(gate(xw[0], h, cell.recurrent[0], cell.bias[0], first));
      const Var<T> r = ad::sigmoid(gate(xw[1], h, cell.recurrent[1], cell.bias[1], first));
      Var<T> pre_n = xw[2];
      if (!first) pre_n = ad::add(pre_n, ad::mul(r, ad::matmul(h, cell.recurrent[2])));
      const Var<T> n = ad::tanh(ad::add_bias(pre_n, cell.bias[2]));
      // (1 - z) * n + z * h  ==  n + z * (h - n); with h = 0 it is n - z * n.
      h = first ? ad::sub(n, ad::mul(z, n)) : ad::add(n, ad::mul(z, ad::sub(h, n)));
      break;
    }
    case CellType::Lstm: {
      const Var<T> i = ad::sigmoid(gate(xw[0], h, cell.recurrent[0], cell.bias[0], first));
      const Var<T> f = ad::sigmoid(gate(xw[1], h, cell.recurrent[1], cell.bias[1], first));
      const Var<T> g = ad::tanh(gate(xw[2], h, cell.recurrent[2], cell.bias[2], first));
      const Var<T> o = ad::sigmoid(gate(xw[3], h, cell.recurrent[3], cell.bias[3], first));
      c = first ? ad::mul(i, g) : ad::add(ad::mul(f, c), ad::mul(i, g));
      h = ad::mul(o, ad::tanh(c));
      break;
    }
    case CellType::Rnn:
      h = ad::tanh(gate(xw[0], h, cell.recurrent[0], cell.bias[0], first));
      break;
  }
}

template <typename T>
void check_width(Var<T> x, const BoundCell<T>& cell) {
  if (x.cols() != cell.input[0].rows()) {
    throw Error(ErrorKind::ShapeMismatch, "recurrent input width " + std::to_string(x.cols()) +
                                              " but cell expects " + std::to_string(cell.input[0].rows()));
  }
}

}  // namespace

template <typename T>
BoundCell<T> bind(ad::Tape<T>& tape, const CellParams<T>& p) {
  BoundCell<T> b;
  b.type = p.type;
  for (auto* w : p.input) b.input.push_back(tape.parameter(*w));
  for (auto* u : p.recurrent) b.recurrent.push_back(tape.parameter(*u));
  for (auto* v : p.bias) b.bias.push_back(tape.parameter(*v));
  return b;
}

template <typename T>
Var<T> gru_cell_step(Var<T> x, Var<T> h, const BoundCell<T>& cell) {
  if (cell.type != CellType::Gru) throw Error(ErrorKind::InvalidConfig, "gru_cell_step on a non-GRU cell");
  check_width(x, cell);
  if (h.cols() != cell.recurrent[0].rows() || h.rows() != x.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "hidden state " + shape_string(h.shape()) + " does not match input " +
                                              shape_string(x.shape()));
  }
  std::vector<Var<T>> xw;
  for (const auto& w : cell.input) xw.push_back(ad::matmul(x, w));
  Var<T> c{};
  cell_step(cell, xw, h, c, false);
  return h;
}

template <typename T>
BiRecurrentEncoder<T>::BiRecurrentEncoder(std::string prefix, std::size_t input_width, std::size_t hidden,
                                          std::size_t layers, CellType cell, ad::ParameterStore<T>& store,
                                          Rng& rng)
    : input_width_(input_width), hidden_(hidden) {
  if (hidden < 1 || layers < 1 || input_width < 1) {
    throw Error(ErrorKind::InvalidConfig, prefix + ": widths and layer count must be >= 1");
  }
  for (std::size_t k = 0; k < layers; ++k) {
    const std::size_t in = k == 0 ? input_width : 2 * hidden;
    const std::string base = prefix + ".layer" + std::to_string(k + 1);
    auto fwd = make_cell<T>(base + ".fwd", cell, in, hidden, store, rng);
    auto bwd = make_cell<T>(base + ".bwd", cell, in, hidden, store, rng);
    layers_.push_back({std::move(fwd), std::move(bwd)});
  }
}

template <typename T>
BiEncoding<T> BiRecurrentEncoder<T>::encode(ad::Tape<T>& tape, std::span<const Var<T>> sequence) const {
  if (sequence.empty()) throw Error(ErrorKind::ShapeMismatch, "recurrent encoder needs at least one step");
  const std::size_t steps = sequence.size();
  const std::size_t batch = sequence[0].rows();
  for (const auto& x : sequence) {
    if (x.rows() != batch || x.cols() != input_width_) {
      throw Error(ErrorKind::ShapeMismatch, "sequence step " + shape_string(x.shape()) + ", expected " +
                                                std::to_string(batch) + "x" + std::to_string(input_width_));
    }
  }

  std::vector<Var<T>> inputs(sequence.begin(), sequence.end());
  std::vector<Var<T>> summary_parts;
  for (const auto& layer : layers_) {
    // Project every step at once: one (steps*batch) x in matmul per gate.
    const Var<T> stacked = steps == 1 ? inputs[0] : ad::concat_rows(inputs);
    std::array<std::vector<Var<T>>, 2> outputs;
    for (int dir = 0; dir < 2; ++dir) {
      const BoundCell<T> cell = bind(tape, layer[dir]);
      std::vector<Var<T>> projected;
      for (const auto& w : cell.input) projected.push_back(ad::matmul(stacked, w));
      auto step_input = [&](std::size_t t) {
        std::vector<Var<T>> xw;
        for (const auto& p : projected) xw.push_back(steps == 1 ? p : ad::slice_rows(p, t * batch, batch));
        return xw;
      };
      outputs[dir].resize(steps);
      Var<T> h{}, c{};
      for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = dir == 0 ? s : steps - 1 - s;
        cell_step(cell, step_input(t), h, c, s == 0);
        outputs[dir][t] = h;
      }
    }
    summary_parts.push_back(outputs[0][steps - 1]);
    summary_parts.push_back(outputs[1][0]);
    for (std::size_t t = 0; t < steps; ++t) inputs[t] = ad::concat_cols({outputs[0][t], outputs[1][t]});
  }
  return {std::move(inputs), ad::concat_cols(summary_parts)};
}

template <typename T>
HierarchicalEncoder<T>::HierarchicalEncoder(const EncoderConfig& cfg, ad::ParameterStore<T>& store, Rng& rng)
    : cfg_((cfg.validate(), cfg)),
      local_("local", kPacketBytes, cfg.hidden, cfg.layers, cfg.cell, store, rng),
      global_("global", cfg.summary_width(), cfg.hidden, cfg.layers, cfg.cell, store, rng) {}

template <typename T>
EncodedBatch<T> HierarchicalEncoder<T>::encode(ad::Tape<T>& tape,
                                               std::span<const SessionTensor* const> sessions) const {
  const std::size_t S = sessions.size();
  const std::size_t L = cfg_.phases();
  const std::size_t Q = cfg_.window;
  if (S == 0) throw Error(ErrorKind::ShapeMismatch, "encode needs at least one session");
  for (const auto* s : sessions) {
    if (s->rows != cfg_.session_len || s->data.size() != s->rows * kPacketBytes) {
      throw Error(ErrorKind::ShapeMismatch, "session '" + s->source_id + "' has " + std::to_string(s->rows) +
                                                " rows; encoder expects N=" + std::to_string(cfg_.session_len));
    }
  }
  // Step t of the local sequence holds packet t of every phase of every
  // session; row i*S + s is phase i of session s.
  std::vector<Var<T>> steps;
  steps.reserve(Q);
  for (std::size_t t = 0; t < Q; ++t) {
    Tensor<T> x(L * S, kPacketBytes);
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t packet = i * Q + t;
      if (packet >= cfg_.session_len) continue;
      for (std::size_t s = 0; s < S; ++s) {
        const auto src = sessions[s]->row(packet);
        std::copy(src.begin(), src.end(), x.row_span(i * S + s).begin());
      }
    }
    steps.push_back(tape.constant(std::move(x)));
  }
  const Var<T> local = local_.encode(tape, steps).summary;

  std::vector<Var<T>> phase_seq;
  phase_seq.reserve(L);
  for (std::size_t i = 0; i < L; ++i) phase_seq.push_back(L == 1 ? local : ad::slice_rows(local, i * S, S));
  const Var<T> global = global_.encode(tape, phase_seq).summary;
  return {local, global, S, L};
}

template <typename T>
Var<T> HierarchicalEncoder<T>::encode_local(ad::Tape<T>& tape, const SessionTensor& session) const {
  const SessionTensor* one[] = {&session};
  const EncodedBatch<T> b = encode(tape, one);
  return b.local;
}

template <typename T>
Var<T> HierarchicalEncoder<T>::encode_global(ad::Tape<T>& tape, Var<T> local_features) const {
  std::vector<Var<T>> seq;
  for (std::size_t i = 0; i < local_features.rows(); ++i) seq.push_back(ad::slice_rows(local_features, i, 1));
  return global_.encode(tape, seq).summary;
}

template <typename T>
Var<T> HierarchicalEncoder<T>::local_rows(const EncodedBatch<T>& batch, std::size_t s) const {
  if (batch.sessions == 1) return batch.local;
  std::vector<std::size_t> rows(batch.phases);
  for (std::size_t i = 0; i < batch.phases; ++i) rows[i] = i * batch.sessions + s;
  return ad::gather_rows(batch.local, std::span<const std::size_t>(rows));
}

#define SESSIM_INSTANTIATE(T)                                                                  \
  template std::vector<Tensor<T>> segment_phases<T>(const SessionTensor&, std::size_t);        \
  template BoundCell<T> bind<T>(ad::Tape<T>&, const CellParams<T>&);                           \
  template Var<T> gru_cell_step<T>(Var<T>, Var<T>, const BoundCell<T>&);                       \
  template class BiRecurrentEncoder<T>;                                                        \
  template class HierarchicalEncoder<T>;

SESSIM_INSTANTIATE(float)
SESSIM_INSTANTIATE(double)

}  // namespace sessim
