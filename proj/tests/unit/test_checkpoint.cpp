#include <fstream>

#include "doctest.h"
#include "sessim/checkpoint.hpp"
#include "sessim/model.hpp"
#include "tempdir.hpp"

using namespace sessim;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.encoder.session_len = 4;
  c.encoder.window = 2;
  c.encoder.hidden = 3;
  c.encoder.layers = 1;
  c.d_k = 2;
  c.fusion_hidden = 5;
  c.fusion_out = 4;
  c.score_hidden = 3;
  return c;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("checkpoint round-trips names, shapes, values and metadata") {
  TempDir dir;
  SessionSimilarityModel<float> a(tiny(), 1);
  write_checkpoint(dir / "m.ckpt", snapshot(a.parameters(), R"({"k":1})"));
  const auto ck = read_checkpoint(dir / "m.ckpt");
  CHECK(ck.metadata == R"({"k":1})");
  CHECK(ck.params.size() == a.parameters().size());

  SessionSimilarityModel<float> b(tiny(), 2);
  load_parameters(ck, b.parameters());
  auto it = b.parameters().begin();
  for (const auto& p : a.parameters()) {
    CHECK(p.name == it->name);
    CHECK(p.value == it->value);
    ++it;
  }

  SessionSimilarityModel<double> c(tiny(), 3);
  load_parameters(ck, c.parameters());
  CHECK(c.parameters().get("sim.attn.Wq").value[0] == static_cast<double>(a.parameters().get("sim.attn.Wq").value[0]));
}

TEST_CASE("header starts with magic and version") {
  TempDir dir;
  write_checkpoint(dir / "m.ckpt", Checkpoint{"{}", {NamedTensor{"w", {2, 1}, {1.5f, -2.0f}}}});
  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), {});
  CHECK(std::string(b.begin(), b.begin() + 4) == "HLGW");
  CHECK(b[4] == kCheckpointVersion);
  // magic 4 + version 2 + meta len 4 + "{}" + count 4 + name len 2 + "w" + rank 1 + dims 8 + values 8
  CHECK(b.size() == 4 + 2 + 4 + 2 + 4 + 2 + 1 + 1 + 8 + 8);
  const auto ck = read_checkpoint(dir / "m.ckpt");
  REQUIRE(ck.params.size() == 1);
  CHECK(ck.params[0].shape == Shape{2, 1});
  CHECK(ck.params[0].values == std::vector<float>{1.5f, -2.0f});
}

TEST_CASE("mismatched shapes or names fail with ShapeMismatch") {
  SessionSimilarityModel<float> a(tiny(), 1);
  auto bigger = tiny();
  bigger.encoder.hidden = 4;
  SessionSimilarityModel<float> b(bigger, 1);
  const auto ck = snapshot(a.parameters(), "{}");
  CHECK(kind_of([&] { load_parameters(ck, b.parameters()); }) == ErrorKind::ShapeMismatch);

  auto missing = ck;
  missing.params.pop_back();
  CHECK(kind_of([&] { load_parameters(missing, b.parameters()); }) == ErrorKind::ShapeMismatch);
  SessionSimilarityModel<float> c(tiny(), 1);
  CHECK(kind_of([&] { load_parameters(missing, c.parameters()); }) == ErrorKind::ShapeMismatch);
  auto extra = ck;
  extra.params.push_back(NamedTensor{"bogus", {1, 1}, {0.0f}});
  CHECK(kind_of([&] { load_parameters(extra, c.parameters()); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("corrupt checkpoint files are rejected") {
  TempDir dir;
  SessionSimilarityModel<float> a(tiny(), 1);
  write_checkpoint(dir / "m.ckpt", snapshot(a.parameters(), "{}"));
  std::filesystem::resize_file(dir / "m.ckpt", std::filesystem::file_size(dir / "m.ckpt") - 3);
  CHECK(kind_of([&] { read_checkpoint(dir / "m.ckpt"); }) == ErrorKind::TruncatedRecord);
  {
    std::ofstream f(dir / "x.ckpt", std::ios::binary);
    f << "HLG1xxxxxxxxxxxx";
  }
  CHECK(kind_of([&] { read_checkpoint(dir / "x.ckpt"); }) == ErrorKind::BadMagic);
}
