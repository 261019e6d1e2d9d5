#include "sessim/simnet.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace sessim {

using ad::Var;

std::string to_string(AttentionMode mode) { return mode == AttentionMode::Token ? "token" : "literal"; }

AttentionMode parse_attention_mode(const std::string& s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "token") return AttentionMode::Token;
  if (lower == "literal") return AttentionMode::Literal;
  throw Error(ErrorKind::InvalidConfig, "unknown attention mode '" + s + "'");
}

void SimNetConfig::validate() const {
  if (phases < 1 || hidden < 1 || layers < 1) throw Error(ErrorKind::InvalidConfig, "L, d and l must be >= 1");
  if (d_k < 1) throw Error(ErrorKind::InvalidConfig, "d_k must be >= 1");
  if (fusion_hidden < 1 || fusion_out < 1 || score_hidden < 1) {
    throw Error(ErrorKind::InvalidConfig, "MLP widths must be >= 1");
  }
  if (local == LocalSimilarityKind::Euclidean) {
    throw Error(ErrorKind::InvalidConfig, "euclidean local similarity is not implemented");
  }
}

namespace {

template <typename T>
Tensor<T> uniform_tensor(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Tensor<T> t(rows, cols);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
ad::Parameter<T>* weight(ad::ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                         Rng& rng) {
  return &store.add(name, uniform_tensor<T>(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

}  // namespace

template <typename T>
SimilarityNet<T>::SimilarityNet(const SimNetConfig& cfg, ad::ParameterStore<T>& store, Rng& rng)
    : cfg_((cfg.validate(), cfg)) {
  const std::size_t token = cfg.attention == AttentionMode::Token ? cfg.hidden : cfg.global_width();
  wq_ = weight(store, "sim.attn.Wq", token, cfg.d_k, rng);
  wk_ = weight(store, "sim.attn.Wk", token, cfg.d_k, rng);
  wv_ = weight(store, "sim.attn.Wv", token, cfg.d_k, rng);
  auto make = [&](const std::string& prefix, const std::string& idx, std::size_t in, std::size_t out) {
    Dense d;
    d.w = weight(store, prefix + ".W" + idx, in, out, rng);
    d.b = &store.add(prefix + ".b" + idx, uniform_tensor<T>(1, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
    return d;
  };
  fuse1_ = make("sim.fuse", "1", cfg.fusion_in(), cfg.fusion_hidden);
  fuse2_ = make("sim.fuse", "2", cfg.fusion_hidden, cfg.fusion_out);
  score1_ = make("sim.score", "1", 2 * cfg.fusion_out, cfg.score_hidden);
  score2_ = make("sim.score", "2", cfg.score_hidden, 1);
}

template <typename T>
Var<T> SimilarityNet<T>::dense(ad::Tape<T>& tape, const Dense& layer, Var<T> x) const {
  return ad::add_bias(ad::matmul(x, tape.parameter(*layer.w)), tape.parameter(*layer.b));
}

template <typename T>
Var<T> SimilarityNet<T>::local_similarity(Var<T> local_a, Var<T> local_b) const {
  if (local_a.cols() != local_b.cols() || local_a.rows() != local_b.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "local features " + shape_string(local_a.shape()) + " vs " +
                                              shape_string(local_b.shape()));
  }
  const Var<T> cos = ad::matmul(ad::normalize_rows(local_a), ad::transpose(ad::normalize_rows(local_b)));
  return ad::square(ad::softmax_all(cos));
}

template <typename T>
Var<T> SimilarityNet<T>::self_attention(ad::Tape<T>& tape, Var<T> global) const {
  const std::size_t S = global.rows();
  if (global.cols() != cfg_.global_width()) {
    throw Error(ErrorKind::ShapeMismatch, "global feature width " + std::to_string(global.cols()) + ", expected " +
                                              std::to_string(cfg_.global_width()));
  }
  const Var<T> wq = tape.parameter(*wq_);
  const Var<T> wk = tape.parameter(*wk_);
  const Var<T> wv = tape.parameter(*wv_);
  const T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg_.d_k)));

  if (cfg_.attention == AttentionMode::Literal) {
    // One token per session: the 1 x 1 softmax is identically 1.
    const Var<T> q = ad::matmul(global, wq);
    const Var<T> k = ad::matmul(global, wk);
    const Var<T> v = ad::matmul(global, wv);
    std::vector<Var<T>> rows;
    for (std::size_t s = 0; s < S; ++s) {
      const Var<T> qs = ad::slice_rows(q, s, 1), ks = ad::slice_rows(k, s, 1), vs = ad::slice_rows(v, s, 1);
      const Var<T> w = ad::softmax_rows(ad::scale(ad::matmul(qs, ad::transpose(ks)), inv_sqrt_dk));
      rows.push_back(ad::matmul(w, vs));
    }
    return S == 1 ? rows[0] : ad::concat_rows(rows);
  }

  const std::size_t tokens = 2 * cfg_.layers;
  const Var<T> x = ad::reshape(global, S * tokens, cfg_.hidden);
  const Var<T> q = ad::matmul(x, wq);
  const Var<T> k = ad::matmul(x, wk);
  const Var<T> v = ad::matmul(x, wv);
  std::vector<Var<T>> rows;
  for (std::size_t s = 0; s < S; ++s) {
    const Var<T> qs = ad::slice_rows(q, s * tokens, tokens);
    const Var<T> ks = ad::slice_rows(k, s * tokens, tokens);
    const Var<T> vs = ad::slice_rows(v, s * tokens, tokens);
    const Var<T> w = ad::softmax_rows(ad::scale(ad::matmul(qs, ad::transpose(ks)), inv_sqrt_dk));
    rows.push_back(ad::flatten(ad::matmul(w, vs)));
  }
  return S == 1 ? rows[0] : ad::concat_rows(rows);
}

template <typename T>
Var<T> SimilarityNet<T>::fuse_rows(ad::Tape<T>& tape, Var<T> inputs) const {
  if (inputs.cols() != cfg_.fusion_in()) {
    throw Error(ErrorKind::ShapeMismatch, "fusion input width " + std::to_string(inputs.cols()) + ", expected " +
                                              std::to_string(cfg_.fusion_in()));
  }
  return dense(tape, fuse2_, ad::tanh(dense(tape, fuse1_, inputs)));
}

template <typename T>
std::pair<Var<T>, Var<T>> SimilarityNet<T>::fuse(ad::Tape<T>& tape, Var<T> attended_a, Var<T> attended_b,
                                                 Var<T> local_sim) const {
  const Var<T> in_a = ad::concat_cols({attended_a, ad::flatten(local_sim)});
  const Var<T> in_b = ad::concat_cols({attended_b, ad::flatten(ad::transpose(local_sim))});
  const Var<T> z = fuse_rows(tape, ad::concat_rows({in_a, in_b}));
  return {ad::slice_rows(z, 0, 1), ad::slice_rows(z, 1, 1)};
}

template <typename T>
Var<T> SimilarityNet<T>::raw_score_rows(ad::Tape<T>& tape, Var<T> z_first, Var<T> z_second) const {
  const Var<T> in = ad::concat_cols({z_first, z_second});
  return ad::sigmoid(dense(tape, score2_, ad::tanh(dense(tape, score1_, in))));
}

template <typename T>
SessionFeatures<T> SimilarityNet<T>::prepare(ad::Tape<T>& tape, const std::vector<Var<T>>& locals,
                                             Var<T> globals) const {
  SessionFeatures<T> f;
  const Var<T> attended = self_attention(tape, globals);
  for (std::size_t s = 0; s < locals.size(); ++s) {
    if (locals[s].rows() != cfg_.phases) {
      throw Error(ErrorKind::ShapeMismatch, "local features have " + std::to_string(locals[s].rows()) +
                                                " phases, expected " + std::to_string(cfg_.phases));
    }
    f.local_unit.push_back(ad::normalize_rows(locals[s]));
    f.attended.push_back(locals.size() == 1 ? attended : ad::slice_rows(attended, s, 1));
  }
  return f;
}

template <typename T>
Var<T> SimilarityNet<T>::pair_scores(ad::Tape<T>& tape, const SessionFeatures<T>& features,
                                     std::span<const std::pair<std::size_t, std::size_t>> pairs) const {
  const std::size_t P = pairs.size();
  if (P == 0) throw Error(ErrorKind::ShapeMismatch, "pair_scores needs at least one pair");
  std::vector<Var<T>> transposed(features.local_unit.size());
  auto unit_t = [&](std::size_t s) {
    if (transposed[s].tape == nullptr) transposed[s] = ad::transpose(features.local_unit[s]);
    return transposed[s];
  };
  std::vector<Var<T>> fusion_inputs(2 * P);
  for (std::size_t p = 0; p < P; ++p) {
    const auto [a, b] = pairs[p];
    const Var<T> sim = ad::square(ad::softmax_all(ad::matmul(features.local_unit[a], unit_t(b))));
    fusion_inputs[p] = ad::concat_cols({features.attended[a], ad::flatten(sim)});
    fusion_inputs[P + p] = ad::concat_cols({features.attended[b], ad::flatten(ad::transpose(sim))});
  }
  const Var<T> z = fuse_rows(tape, ad::concat_rows(fusion_inputs));
  const Var<T> za = ad::slice_rows(z, 0, P);
  const Var<T> zb = ad::slice_rows(z, P, P);
  if (!cfg_.symmetrize) return raw_score_rows(tape, za, zb);
  const Var<T> both = raw_score_rows(tape, ad::concat_rows({za, zb}), ad::concat_rows({zb, za}));
  return ad::scale(ad::add(ad::slice_rows(both, 0, P), ad::slice_rows(both, P, P)), static_cast<T>(0.5));
}

template <typename T>
Var<T> SimilarityNet<T>::similarity(ad::Tape<T>& tape, Var<T> local_a, Var<T> global_a, Var<T> local_b,
                                    Var<T> global_b) const {
  const SessionFeatures<T> f = prepare(tape, {local_a, local_b}, ad::concat_rows({global_a, global_b}));
  const std::pair<std::size_t, std::size_t> pair{0, 1};
  return pair_scores(tape, f, std::span(&pair, 1));
}

template class SimilarityNet<float>;
template class SimilarityNet<double>;

}  // namespace sessim
