#include <cmath>

#include "doctest.h"
#include "reference.hpp"
#include "sessim/simnet.hpp"

using namespace sessim;
using namespace sessim::ad;
using T64 = Tensor<double>;

namespace {

SimNetConfig toy(AttentionMode mode = AttentionMode::Token, std::size_t L = 4, std::size_t d = 4, std::size_t l = 2) {
  SimNetConfig c;
  c.phases = L;
  c.hidden = d;
  c.layers = l;
  c.d_k = 3;
  c.attention = mode;
  c.fusion_hidden = 6;
  c.fusion_out = 5;
  c.score_hidden = 4;
  return c;
}

T64 random_tensor(Rng& rng, std::size_t r, std::size_t c) {
  T64 t(r, c);
  for (auto& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

T64 mat(std::size_t r, std::size_t c, std::vector<double> v) { return T64({r, c}, std::move(v)); }

}  // namespace

TEST_CASE("local similarity of orthonormal phases") {
  Rng rng(1);
  ParameterStore<double> store;
  SimilarityNet<double> net(toy(AttentionMode::Token, 2, 1, 1), store, rng);
  Tape<double> tape;
  const auto eye = tape.constant(mat(2, 2, {1, 0, 0, 1}));
  const auto m = net.local_similarity(eye, eye).value();
  const double e = std::exp(1.0);
  const double diag = e / (2 * e + 2), off = 1 / (2 * e + 2);
  CHECK(std::abs(m(0, 0) - diag * diag) < 1e-15);
  CHECK(std::abs(m(0, 1) - off * off) < 1e-15);
  CHECK(m(0, 0) == doctest::Approx(0.13360).epsilon(2e-4));
  CHECK(m(1, 0) == doctest::Approx(0.018082).epsilon(1e-4));
  CHECK(m(1, 1) == m(0, 0));
}

TEST_CASE("equal cosines give a uniform matrix") {
  Rng rng(1);
  ParameterStore<double> store;
  SimilarityNet<double> net(toy(AttentionMode::Token, 2, 1, 1), store, rng);
  Tape<double> tape;
  const auto a = tape.constant(mat(2, 3, {1, 2, 3, 2, 4, 6}));
  const auto b = tape.constant(mat(2, 3, {-1, 0, 2, -3, 0, 6}));
  for (double v : net.local_similarity(a, b).value().values()) CHECK(v == 0.0625);
}

TEST_CASE("zero phases have cosine zero") {
  Rng rng(1);
  ParameterStore<double> store;
  SimilarityNet<double> net(toy(AttentionMode::Token, 2, 1, 1), store, rng);
  Tape<double> tape;
  const auto a = tape.constant(mat(2, 2, {0, 0, 1, 0}));
  const auto b = tape.constant(mat(2, 2, {1, 0, 0, 1}));
  const auto m = net.local_similarity(a, b).value();
  // cos entries [[0,0],[1,0]]
  const double e = std::exp(1.0);
  CHECK(std::abs(m(1, 0) - std::pow(e / (e + 3), 2)) < 1e-15);
  CHECK(std::abs(m(0, 0) - std::pow(1 / (e + 3), 2)) < 1e-15);
  CHECK_THROWS_AS(net.local_similarity(a, tape.constant(T64(3, 2))), Error);
}

TEST_CASE("literal attention is exactly the value projection") {
  Rng rng(2);
  ParameterStore<double> store;
  const auto cfg = toy(AttentionMode::Literal);
  SimilarityNet<double> net(cfg, store, rng);
  CHECK(cfg.attention_width() == 3);
  Tape<double> tape;
  const auto g = tape.constant(random_tensor(rng, 3, 16));
  const auto got = net.self_attention(tape, g).value();
  const auto want = matmul(g, tape.constant(store.get("sim.attn.Wv").value)).value();
  CHECK(got == want);
}

TEST_CASE("token attention with zero query/key weights averages the values") {
  Rng rng(3);
  ParameterStore<double> store;
  SimilarityNet<double> net(toy(), store, rng);
  store.get("sim.attn.Wq").value.fill(0.0);
  store.get("sim.attn.Wk").value.fill(0.0);
  Tape<double> tape;
  const auto g = random_tensor(rng, 1, 16);
  const auto got = net.self_attention(tape, tape.constant(g)).value();
  REQUIRE(got.shape() == Shape{1, 12});
  const auto v = matmul(tape.constant(T64({4, 4}, std::vector<double>(g.values().begin(), g.values().end()))),
                        tape.constant(store.get("sim.attn.Wv").value))
                     .value();
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double mean = (v(0, c) + v(1, c) + v(2, c) + v(3, c)) / 4;
      CHECK(std::abs(got[t * 3 + c] - mean) <= 1e-15);
    }
  }
}

TEST_CASE("token attention matches direct matrix arithmetic") {
  Rng rng(4);
  ParameterStore<double> store;
  SimilarityNet<double> net(toy(), store, rng);
  Tape<double> tape;
  const auto g = random_tensor(rng, 2, 16);
  const auto got = net.self_attention(tape, tape.constant(g)).value();
  REQUIRE(got.shape() == Shape{2, 12});
  const auto wq = ref::to_mat(store.get("sim.attn.Wq").value);
  const auto wk = ref::to_mat(store.get("sim.attn.Wk").value);
  const auto wv = ref::to_mat(store.get("sim.attn.Wv").value);
  for (std::size_t s = 0; s < 2; ++s) {
    ref::Mat tokens(4, ref::Vec(4));
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t c = 0; c < 4; ++c) tokens[t][c] = g(s, t * 4 + c);
    }
    const auto want = ref::attention(tokens, wq, wk, wv);
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(got(s, t * 3 + c) - want[t][c]) <= 1e-10);
    }
  }
  CHECK_THROWS_AS(net.self_attention(tape, tape.constant(T64(1, 15))), Error);
}

TEST_CASE("fusion properties") {
  Rng rng(5);
  ParameterStore<double> store;
  SimilarityNet<double> net(toy(), store, rng);
  Tape<double> tape;
  const auto att_a = tape.constant(random_tensor(rng, 1, 12));
  const auto att_b = tape.constant(random_tensor(rng, 1, 12));

  SUBCASE("identical sessions with a symmetric matrix") {
    auto m = random_tensor(rng, 4, 4);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i);
    }
    const auto [za, zb] = net.fuse(tape, att_a, att_a, tape.constant(m));
    CHECK(za.value() == zb.value());
    CHECK(za.shape() == Shape{1, 5});
  }

  SUBCASE("swap consistency") {
    const auto m = tape.constant(random_tensor(rng, 4, 4));
    const auto [za, zb] = net.fuse(tape, att_a, att_b, m);
    const auto [zb2, za2] = net.fuse(tape, att_b, att_a, transpose(m));
    CHECK(za.value() == za2.value());
    CHECK(zb.value() == zb2.value());
  }

  SUBCASE("zero inputs map to the bias image") {
    const auto zero_att = tape.constant(T64(1, 12));
    const auto [za, zb] = net.fuse(tape, zero_att, zero_att, tape.constant(T64(4, 4)));
    const auto& b1 = store.get("sim.fuse.b1").value;
    const auto& w2 = store.get("sim.fuse.W2").value;
    const auto& b2 = store.get("sim.fuse.b2").value;
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = b2[j];
      for (std::size_t i = 0; i < 6; ++i) acc += std::tanh(b1[i]) * w2(i, j);
      CHECK(std::abs(za.value()[j] - acc) <= 1e-12);
      CHECK(za.value()[j] == zb.value()[j]);
    }
  }
}

TEST_CASE("similarity score is symmetric, bounded, and 0.5 with zero parameters") {
  Rng rng(6);
  for (AttentionMode mode : {AttentionMode::Token, AttentionMode::Literal}) {
    ParameterStore<double> store;
    SimilarityNet<double> net(toy(mode), store, rng);
    Tape<double> tape;
    for (int trial = 0; trial < 20; ++trial) {
      const auto la = tape.constant(random_tensor(rng, 4, 16)), lb = tape.constant(random_tensor(rng, 4, 16));
      const auto ga = tape.constant(random_tensor(rng, 1, 16)), gb = tape.constant(random_tensor(rng, 1, 16));
      const double ab = net.similarity(tape, la, ga, lb, gb).value()[0];
      const double ba = net.similarity(tape, lb, gb, la, ga).value()[0];
      CHECK(ab == ba);
      CHECK(ab > 0.0);
      CHECK(ab < 1.0);
      const double aa = net.similarity(tape, la, ga, la, ga).value()[0];
      CHECK(aa > 0.0);
      CHECK(aa < 1.0);
    }
    for (auto& p : store) p.value.fill(0.0);
    Tape<double> fresh;
    const auto x = fresh.constant(random_tensor(rng, 4, 16)), g = fresh.constant(random_tensor(rng, 1, 16));
    const auto y = fresh.constant(random_tensor(rng, 4, 16)), h = fresh.constant(random_tensor(rng, 1, 16));
    CHECK(net.similarity(fresh, x, g, y, h).value()[0] == 0.5);
  }
}

TEST_CASE("literal single-order scoring when symmetrisation is off") {
  Rng rng(7);
  auto cfg = toy();
  cfg.symmetrize = false;
  ParameterStore<double> store;
  SimilarityNet<double> net(cfg, store, rng);
  Tape<double> tape;
  const auto la = tape.constant(random_tensor(rng, 4, 16)), lb = tape.constant(random_tensor(rng, 4, 16));
  const auto ga = tape.constant(random_tensor(rng, 1, 16)), gb = tape.constant(random_tensor(rng, 1, 16));
  const auto f = net.prepare(tape, {la, lb}, concat_rows({ga, gb}));
  const auto [za, zb] = net.fuse(tape, f.attended[0], f.attended[1], net.local_similarity(la, lb));
  const double raw = net.raw_score_rows(tape, za, zb).value()[0];
  const double got = net.similarity(tape, la, ga, lb, gb).value()[0];
  CHECK(std::abs(got - raw) <= 1e-15);
  CHECK(got != net.similarity(tape, lb, gb, la, ga).value()[0]);
}

TEST_CASE("batched pair scores equal single-pair scores") {
  Rng rng(8);
  ParameterStore<double> store;
  SimilarityNet<double> net(toy(), store, rng);
  Tape<double> tape;
  std::vector<Var<double>> locals;
  for (int s = 0; s < 3; ++s) locals.push_back(tape.constant(random_tensor(rng, 4, 16)));
  const auto globals = random_tensor(rng, 3, 16);
  const auto f = net.prepare(tape, locals, tape.constant(globals));
  const std::vector<std::pair<std::size_t, std::size_t>> pairs = {{0, 1}, {2, 0}, {1, 2}, {1, 1}};
  const auto scores = net.pair_scores(tape, f, pairs).value();
  REQUIRE(scores.shape() == Shape{4, 1});
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [a, b] = pairs[p];
    auto row = [&](std::size_t s) { return slice_rows(tape.constant(globals), s, 1); };
    CHECK(scores[p] == net.similarity(tape, locals[a], row(a), locals[b], row(b)).value()[0]);
  }
}

TEST_CASE("gradient check through the similarity network") {
  Rng rng(9);
  ParameterStore<double> store;
  SimilarityNet<double> net(toy(), store, rng);
  const auto la = random_tensor(rng, 4, 16), lb = random_tensor(rng, 4, 16);
  const auto ga = random_tensor(rng, 1, 16), gb = random_tensor(rng, 1, 16);
  const double err = grad_check_parameters(store, [&](Tape<double>& t) {
    return net.similarity(t, t.constant(la), t.constant(ga), t.constant(lb), t.constant(gb));
  });
  CHECK(err < 1e-4);
  CHECK(grad_check([&](Tape<double>& t, Var<double> x) {
    return net.similarity(t, x, t.constant(ga), t.constant(lb), t.constant(gb));
  }, la) < 1e-4);
}

TEST_CASE("configuration") {
  Rng rng(1);
  ParameterStore<double> store;
  auto cfg = toy();
  cfg.local = LocalSimilarityKind::Euclidean;
  CHECK_THROWS_AS(SimilarityNet<double>(cfg, store, rng), Error);
  CHECK(parse_attention_mode("Literal") == AttentionMode::Literal);
  CHECK_THROWS_AS(parse_attention_mode("heads"), Error);
  const auto t = toy();
  CHECK(t.attention_width() == 12);
  CHECK(t.fusion_in() == 28);
}
