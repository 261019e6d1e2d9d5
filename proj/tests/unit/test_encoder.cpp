#include <cmath>

#include "doctest.h"
#include "reference.hpp"
#include "sessim/encoder.hpp"

using namespace sessim;
using namespace sessim::ad;
using T64 = Tensor<double>;

namespace {

SessionTensor random_session(Rng& rng, std::size_t n) {
  SessionTensor s;
  s.rows = n;
  s.n_real = n;
  s.data.resize(n * kPacketBytes);
  for (auto& v : s.data) v = static_cast<float>(rng.below(256)) / 255.0f;
  return s;
}

void zero_all(ParameterStore<double>& store, bool biases_too = true) {
  for (auto& p : store) {
    const auto dot = p.name.rfind('.');
    if (biases_too || p.name[dot + 1] != 'b') p.value.fill(0.0);
  }
}

void zero_biases(ParameterStore<double>& store) {
  for (auto& p : store) {
    if (p.name[p.name.rfind('.') + 1] == 'b') p.value.fill(0.0);
  }
}

double max_abs_diff(const T64& a, const T64& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

ref::Mat phase_rows(const SessionTensor& s, std::size_t first, std::size_t count) {
  ref::Mat m;
  for (std::size_t r = first; r < first + count; ++r) {
    ref::Vec row(kPacketBytes, 0.0);
    if (r < s.rows) {
      for (std::size_t c = 0; c < kPacketBytes; ++c) row[c] = s.at(r, c);
    }
    m.push_back(row);
  }
  return m;
}

}  // namespace

TEST_CASE("phase segmentation") {
  Rng rng(1);
  const auto s16 = random_session(rng, 16);
  const auto p = segment_phases<double>(s16, 2);
  REQUIRE(p.size() == 8);
  CHECK(p[3].shape() == Shape{2, 256});
  CHECK(p[3](1, 7) == static_cast<double>(s16.at(7, 7)));

  const auto s5 = random_session(rng, 5);
  const auto q = segment_phases<double>(s5, 2);
  REQUIRE(q.size() == 3);
  CHECK(q[2](0, 9) == static_cast<double>(s5.at(4, 9)));
  for (std::size_t c = 0; c < 256; ++c) CHECK(q[2](1, c) == 0.0);

  const auto whole = segment_phases<double>(s5, 5);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].shape() == Shape{5, 256});
}

TEST_CASE("config validation") {
  EncoderConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.phases() == 8);
  CHECK(c.summary_width() == 256);
  c.window = 17;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(parse_cell_type("lstm") == CellType::Lstm);
  CHECK(to_string(CellType::Rnn) == "rnn");
  CHECK_THROWS_AS(parse_cell_type("transformer"), Error);
}

TEST_CASE("GRU step examples") {
  Rng rng(2);
  ParameterStore<double> store;
  BiRecurrentEncoder<double> enc("t", 3, 4, 1, CellType::Gru, store, rng);
  const auto& cell = enc.layer(0)[0];
  Tape<double> tape;

  SUBCASE("zero weights are a fixed point at zero and halve the previous state") {
    zero_all(store);
    const auto bound = bind(tape, cell);
    auto x = tape.constant(T64::row({0.3, -0.2, 0.9}));
    auto h0 = gru_cell_step(x, tape.constant(T64(1, 4)), bound).value();
    for (double v : h0.values()) CHECK(v == 0.0);
    auto h1 = gru_cell_step(x, tape.constant(T64::row({1.0, -2.0, 0.5, 4.0})), bound).value();
    CHECK(h1 == T64::row({0.5, -1.0, 0.25, 2.0}));
  }

  SUBCASE("random step matches the reference") {
    const auto bound = bind(tape, cell);
    const ref::Gru p = ref::load_gru(store, "t.layer1.fwd");
    for (int trial = 0; trial < 10; ++trial) {
      ref::Vec x(3), h(4);
      for (auto& v : x) v = rng.uniform(-1, 1);
      for (auto& v : h) v = rng.uniform(-1, 1);
      const auto got = gru_cell_step(tape.constant(T64::row(x)), tape.constant(T64::row(h)), bound).value();
      const auto want = ref::gru_step(x, h, p);
      for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(got[j] - want[j]) <= 1e-10);
    }
  }

  SUBCASE("width mismatch") {
    const auto bound = bind(tape, cell);
    CHECK_THROWS_AS(gru_cell_step(tape.constant(T64(1, 5)), tape.constant(T64(1, 4)), bound), Error);
  }
}

TEST_CASE("bidirectional encoder matches the reference for small shapes") {
  Rng rng(3);
  for (std::size_t d = 1; d <= 3; ++d) {
    for (std::size_t l = 1; l <= 3; ++l) {
      for (std::size_t steps = 1; steps <= 4; ++steps) {
        ParameterStore<double> store;
        const std::size_t in = 1 + rng.below(4);
        BiRecurrentEncoder<double> enc("e", in, d, l, CellType::Gru, store, rng);
        ref::Mat seq(steps, ref::Vec(in));
        std::vector<Var<double>> vars;
        Tape<double> tape;
        for (auto& row : seq) {
          for (auto& v : row) v = rng.uniform(-1, 1);
          vars.push_back(tape.constant(T64::row(row)));
        }
        const auto got = enc.encode(tape, vars).summary.value();
        const auto want = ref::bigru_summary(store, "e", l, d, seq);
        REQUIRE(got.size() == 2 * l * d);
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-10);
      }
    }
  }
}

TEST_CASE("single step and all-zero parameters") {
  Rng rng(4);
  ParameterStore<double> store;
  BiRecurrentEncoder<double> enc("e", 3, 2, 2, CellType::Gru, store, rng);
  Tape<double> tape;
  std::vector<Var<double>> one = {tape.constant(T64::row({0.1, 0.2, 0.3}))};
  const auto enc1 = enc.encode(tape, one);
  REQUIRE(enc1.outputs.size() == 1);
  // With one step the top layer's output is its own summary slice.
  const auto out = enc1.outputs[0].value();
  const auto sum = enc1.summary.value();
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == sum[4 + i]);

  // Leaves snapshot parameter values, so zeroed weights need a fresh tape.
  zero_all(store);
  Tape<double> fresh;
  std::vector<Var<double>> seq = {fresh.constant(T64::row({1, 2, 3})), fresh.constant(T64::row({-1, 0, 5}))};
  for (double v : enc.encode(fresh, seq).summary.value().values()) CHECK(v == 0.0);
}

TEST_CASE("reversal duality") {
  Rng rng(5);
  for (std::size_t l : {1u, 2u}) {
    ParameterStore<double> store, swapped;
    const std::size_t d = 3, in = 4;
    BiRecurrentEncoder<double> enc("e", in, d, l, CellType::Gru, store, rng);
    Rng unused(0);
    BiRecurrentEncoder<double> rev("e", in, d, l, CellType::Gru, swapped, unused);
    for (auto& p : swapped) {
      std::string src = p.name;
      const auto f = src.find(".fwd."), b = src.find(".bwd.");
      if (f != std::string::npos) src.replace(f, 5, ".bwd.");
      if (b != std::string::npos) src.replace(b, 5, ".fwd.");
      p.value = store.get(src).value;
      // Deeper layers read [fwd | bwd] columns; their halves trade places.
      const bool deep = p.name.find(".layer1.") == std::string::npos;
      if (deep && p.name[p.name.rfind('.') + 1] == 'W') {
        for (std::size_t r = 0; r < d; ++r) {
          for (std::size_t c = 0; c < d; ++c) std::swap(p.value(r, c), p.value(r + d, c));
        }
      }
    }
    Tape<double> tape;
    std::vector<Var<double>> seq, back;
    for (int t = 0; t < 4; ++t) {
      T64 row(1, in);
      for (auto& v : row.values()) v = rng.uniform(-1, 1);
      seq.push_back(tape.constant(row));
    }
    back.assign(seq.rbegin(), seq.rend());
    const auto a = enc.encode(tape, seq).summary.value();
    const auto b = rev.encode(tape, back).summary.value();
    for (std::size_t k = 0; k < l; ++k) {
      for (std::size_t j = 0; j < d; ++j) {
        CHECK(std::abs(a[2 * k * d + j] - b[2 * k * d + d + j]) <= 1e-10);
        CHECK(std::abs(a[2 * k * d + d + j] - b[2 * k * d + j]) <= 1e-10);
      }
    }
  }
}

TEST_CASE("hierarchical toy matches a flat trace of two phase encoders") {
  Rng rng(6);
  EncoderConfig cfg{2, 4, 2, 1, CellType::Gru};
  ParameterStore<double> store;
  HierarchicalEncoder<double> enc(cfg, store, rng);
  const auto s = random_session(rng, 4);
  Tape<double> tape;
  const auto local = enc.encode_local(tape, s);
  const auto z = local.value();
  REQUIRE(z.shape() == Shape{2, 4});
  ref::Mat zref;
  for (std::size_t i = 0; i < 2; ++i) zref.push_back(ref::bigru_summary(store, "local", 1, 2, phase_rows(s, 2 * i, 2)));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(z(i, c) - zref[i][c]) <= 1e-10);
  }
  const auto g = enc.encode_global(tape, local).value();
  const auto gref = ref::bigru_summary(store, "global", 1, 2, zref);
  REQUIRE(g.shape() == Shape{1, 4});
  for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(g[c] - gref[c]) <= 1e-10);
}

TEST_CASE("local encoding properties") {
  Rng rng(7);
  EncoderConfig cfg{2, 8, 3, 2, CellType::Gru};
  ParameterStore<double> store;
  HierarchicalEncoder<double> enc(cfg, store, rng);
  Tape<double> tape;

  SUBCASE("shape contract") {
    const auto s = random_session(rng, 8);
    CHECK(enc.encode_local(tape, s).shape() == Shape{4, 12});
    CHECK(enc.encode_global(tape, enc.encode_local(tape, s)).shape() == Shape{1, 12});
  }

  SUBCASE("identical phases give identical rows") {
    auto s = random_session(rng, 8);
    for (std::size_t c = 0; c < kPacketBytes; ++c) {
      s.data[2 * kPacketBytes + c] = s.at(0, c);
      s.data[3 * kPacketBytes + c] = s.at(1, c);
    }
    const auto z = enc.encode_local(tape, s).value();
    for (std::size_t c = 0; c < 12; ++c) CHECK(z(0, c) == z(1, c));
  }

  SUBCASE("phase independence") {
    const auto s = random_session(rng, 8);
    auto t = s;
    t.data[5 * kPacketBytes + 100] = 1.0f - t.data[5 * kPacketBytes + 100];
    const auto a = enc.encode_local(tape, s).value();
    const auto b = enc.encode_local(tape, t).value();
    for (std::size_t i = 0; i < 4; ++i) {
      double diff = 0;
      for (std::size_t c = 0; c < 12; ++c) diff = std::max(diff, std::abs(a(i, c) - b(i, c)));
      if (i == 2) CHECK(diff > 0.0);
      else CHECK(diff == 0.0);
    }
  }

  SUBCASE("zero session with zero biases encodes to zero") {
    zero_biases(store);
    SessionTensor s;
    s.rows = 8;
    s.data.assign(8 * kPacketBytes, 0.0f);
    const auto z = enc.encode_local(tape, s);
    for (double v : z.value().values()) CHECK(v == 0.0);
    for (double v : enc.encode_global(tape, z).value().values()) CHECK(v == 0.0);
  }

  SUBCASE("global encoder is order sensitive and degenerates to one step for L = 1") {
    T64 rows(3, 12);
    for (auto& v : rows.values()) v = rng.uniform(-1, 1);
    T64 perm(3, 12);
    for (std::size_t c = 0; c < 12; ++c) {
      perm(0, c) = rows(2, c);
      perm(1, c) = rows(0, c);
      perm(2, c) = rows(1, c);
    }
    const auto a = enc.encode_global(tape, tape.constant(rows)).value();
    const auto b = enc.encode_global(tape, tape.constant(perm)).value();
    CHECK(max_abs_diff(a, b) > 1e-6);

    T64 one(1, 12);
    for (auto& v : one.values()) v = rng.uniform(-1, 1);
    std::vector<Var<double>> seq = {tape.constant(one)};
    const auto g = enc.encode_global(tape, tape.constant(one)).value();
    CHECK(g == enc.global().encode(tape, seq).summary.value());
  }

  SUBCASE("batched encoding equals per-session encoding bit for bit") {
    const auto s1 = random_session(rng, 8), s2 = random_session(rng, 8), s3 = random_session(rng, 8);
    std::vector<const SessionTensor*> batch = {&s1, &s2, &s3};
    const auto b = enc.encode(tape, batch);
    CHECK(b.sessions == 3);
    CHECK(b.phases == 4);
    for (std::size_t s = 0; s < 3; ++s) {
      const auto single = enc.encode_local(tape, *batch[s]);
      CHECK(enc.local_rows(b, s).value() == single.value());
      const auto g = enc.encode_global(tape, single).value();
      for (std::size_t c = 0; c < 12; ++c) CHECK(b.global.value()(s, c) == g[c]);
    }
  }
}

TEST_CASE("every encoder parameter receives gradient") {
  Rng rng(8);
  EncoderConfig cfg{2, 6, 3, 2, CellType::Gru};
  ParameterStore<double> store;
  HierarchicalEncoder<double> enc(cfg, store, rng);
  const auto s = random_session(rng, 6);
  Tape<double> tape;
  const auto z = enc.encode_local(tape, s);
  T64 w(1, 12);
  for (auto& v : w.values()) v = rng.uniform(-1, 1);
  auto loss = add(sum(mul(enc.encode_global(tape, z), tape.constant(w))), mean(square(z)));
  store.zero_grad();
  tape.backward(loss);
  for (const auto& p : store) {
    CAPTURE(p.name);
    std::size_t zero = 0;
    for (double g : p.grad.values()) zero += g == 0.0;
    // Input weights of the packet encoder only see zero gradient on all-zero byte columns.
    CHECK(zero < p.grad.size());
  }
}

TEST_CASE("LSTM and plain RNN cells keep the summary contract") {
  Rng rng(9);
  for (CellType cell : {CellType::Lstm, CellType::Rnn}) {
    EncoderConfig cfg{2, 4, 3, 2, cell};
    ParameterStore<double> store;
    HierarchicalEncoder<double> enc(cfg, store, rng);
    const auto s = random_session(rng, 4);
    Tape<double> tape;
    const auto z = enc.encode_local(tape, s);
    CHECK(z.shape() == Shape{2, 12});
    const auto g = enc.encode_global(tape, z);
    CHECK(g.shape() == Shape{1, 12});
    const double err = grad_check_parameters(store, [&](Tape<double>& t) {
      return sum_sq(enc.encode_global(t, enc.encode_local(t, s)));
    }, 1e-5, 3);
    CHECK(err < 1e-6);
  }
}
