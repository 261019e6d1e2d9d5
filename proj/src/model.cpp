#include "sessim/model.hpp"

namespace sessim {

void ModelConfig::validate() const {
  encoder.validate();
  simnet().validate();
}

SimNetConfig ModelConfig::simnet() const {
  SimNetConfig s;
  s.phases = encoder.phases();
  s.hidden = encoder.hidden;
  s.layers = encoder.layers;
  s.d_k = d_k;
  s.attention = attention;
  s.symmetrize = symmetrize;
  s.fusion_hidden = fusion_hidden;
  s.fusion_out = fusion_out;
  s.score_hidden = score_hidden;
  return s;
}

template <typename T>
SessionSimilarityModel<T>::SessionSimilarityModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      init_rng_(seed),
      encoder_(cfg.encoder, params_, init_rng_),
      simnet_(cfg.simnet(), params_, init_rng_) {}

template <typename T>
ad::Var<T> SessionSimilarityModel<T>::similarity_matrix(ad::Tape<T>& tape,
                                                        std::span<const SessionTensor* const> queries,
                                                        std::span<const SessionTensor* const> support) const {
  const std::size_t nq = queries.size();
  const std::size_t ns = support.size();
  if (nq == 0 || ns == 0) throw Error(ErrorKind::ShapeMismatch, "similarity matrix needs queries and support");
  std::vector<const SessionTensor*> all(queries.begin(), queries.end());
  all.insert(all.end(), support.begin(), support.end());
  const EncodedBatch<T> enc = encoder_.encode(tape, all);
  std::vector<ad::Var<T>> locals;
  locals.reserve(all.size());
  for (std::size_t s = 0; s < all.size(); ++s) locals.push_back(encoder_.local_rows(enc, s));
  const SessionFeatures<T> f = simnet_.prepare(tape, locals, enc.global);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(nq * ns);
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t s = 0; s < ns; ++s) pairs.emplace_back(q, nq + s);
  }
  return ad::reshape(simnet_.pair_scores(tape, f, pairs), nq, ns);
}

template class SessionSimilarityModel<float>;
template class SessionSimilarityModel<double>;

}  // namespace sessim
