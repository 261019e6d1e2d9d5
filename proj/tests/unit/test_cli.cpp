#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "fixtures.hpp"
#include "sessim/dataset.hpp"
#include "tempdir.hpp"

namespace fs = std::filesystem;
using namespace sessim;

namespace {

struct RunResult {
  int code = -1;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

RunResult cli(const TempDir& dir, const std::string& args) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = quote(SESSIM_CLI) + " " + args + " >/dev/null 2>" + quote(err.string());
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err);
  std::ostringstream os;
  os << in.rdbuf();
  r.err = os.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Small model so the end-to-end runs stay quick.
const std::string kTinyModel =
    "--set N=8 --set d=4 --set l=1 --set d_k=4 --set fusion_hidden=8 --set fusion_out=6 --set score_hidden=4 "
    "--shot 2 --n-query 2";

}  // namespace

TEST_CASE("preprocess labels by directory and counts sessions") {
  TempDir dir;
  fs::create_directories(dir / "in/benign");
  fs::create_directories(dir / "in/scan");
  fs::copy_file(fixtures::path("tcp_handshake"), dir / "in/benign/a.pcap");
  fs::copy_file(fixtures::path("udp_splits"), dir / "in/benign/b.pcap");
  fs::copy_file(fixtures::path("fig2_flows"), dir / "in/scan/c.pcap");
  const std::string out = (dir / "out.ds").string();
  const auto r = cli(dir, "preprocess --input " + quote((dir / "in").string()) + " --output " + quote(out) +
                              " --stats-out " + quote((dir / "stats.json").string()));
  REQUIRE_MESSAGE(r.code == 0, r.err);

  std::size_t expected_benign = 0;
  for (const char* f : {"tcp_handshake", "udp_splits"}) expected_benign += fixtures::run(f).tensors.size();
  const std::size_t expected_scan = fixtures::run("fig2_flows").tensors.size();

  const Dataset ds = read_dataset(out);
  CHECK(ds.session_len == 16);
  REQUIRE(ds.records.size() == expected_benign + expected_scan);
  std::size_t benign = 0, scan = 0;
  for (const auto& t : ds.records) (t.label == 0 ? benign : scan) += 1;
  CHECK(benign == expected_benign);
  CHECK(scan == expected_scan);
  const auto manifest = read_manifest(manifest_path_for(out));
  CHECK(manifest.at(0) == "benign");
  CHECK(manifest.at(1) == "scan");
  const auto stats = read_json(dir / "stats.json");
  CHECK(stats.at("sessions_emitted") == ds.records.size());
}

TEST_CASE("preprocess of an empty directory writes an empty dataset") {
  TempDir dir;
  fs::create_directories(dir / "in");
  const std::string out = (dir / "out.ds").string();
  const auto r = cli(dir, "preprocess --input " + quote((dir / "in").string()) + " --output " + quote(out));
  CHECK(r.code == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  CHECK(read_dataset(out).records.empty());
}

TEST_CASE("preprocess reports malformed captures") {
  TempDir dir;
  const auto r = cli(dir, "preprocess --input " + quote(fixtures::path("bad_magic").string()) +
                              " --label x --output " + quote((dir / "out.ds").string()));
  CHECK(r.code == 2);
  CHECK(r.err.find("BadMagic") != std::string::npos);
  const auto usage = cli(dir, "preprocess --output x.ds");
  CHECK(usage.code == 1);
}

TEST_CASE("synth, split, train, eval and metrics") {
  TempDir dir;
  const std::string ds = (dir / "corpus.ds").string();
  REQUIRE(cli(dir, "synth --output " + quote(ds) +
                       " --families 4 --per-family 8 --benign 24 --session-len 8 --seed 5").code == 0);

  const std::string split = "split --dataset " + quote(ds) + " --train-classes 2 --seed 11";
  REQUIRE(cli(dir, split).code == 0);
  const std::string first = slurp(dir / "corpus.split.json");
  REQUIRE(cli(dir, split).code == 0);
  CHECK(slurp(dir / "corpus.split.json") == first);
  const auto sm = read_json(dir / "corpus.split.json");
  CHECK(sm.at("train_malicious").size() == 2);
  CHECK(sm.at("test_malicious").size() == 2);
  CHECK(cli(dir, "split --dataset " + quote(ds) + " --train-classes 4").code != 0);

  const std::string train_ds = (dir / "corpus.train.ds").string();
  const std::string test_ds = (dir / "corpus.test.ds").string();
  const std::string ckpt = (dir / "model.ckpt").string();
  const auto tr = cli(dir, "train --train-dataset " + quote(train_ds) + " --out " + quote(ckpt) + " " + kTinyModel +
                               " --episodes 4 --seed 2 --loss-csv " + quote((dir / "loss.csv").string()));
  REQUIRE_MESSAGE(tr.code == 0, tr.err);
  std::istringstream loss(slurp(dir / "loss.csv"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(loss, line)) ++lines;
  CHECK(lines == 5);

  const std::string report = (dir / "report.json").string();
  const std::string preds = (dir / "preds.csv").string();
  const auto ev = cli(dir, "eval --checkpoint " + quote(ckpt) + " --test-dataset " + quote(test_ds) + " --report " +
                               quote(report) + " --predictions " + quote(preds) +
                               " --episodes 3 --shot 2 --n-query 2");
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  const auto rep = read_json(report);
  CHECK(rep.at("n_episodes") == 3);
  CHECK(rep.at("n_queries") == 12);
  CHECK(rep.at("metrics").contains("accuracy"));
  CHECK(rep.at("config").at("d") == 4);

  const std::string again = (dir / "report2.json").string();
  REQUIRE(cli(dir, "metrics --predictions " + quote(preds) + " --shot 2 --report " + quote(again)).code == 0);
  CHECK(read_json(again).at("metrics") == rep.at("metrics"));

  // Training data overlaps its own classes: the evaluator refuses.
  const auto leak = cli(dir, "eval --checkpoint " + quote(ckpt) + " --test-dataset " + quote(train_ds) +
                                 " --report " + quote(report) + " --episodes 1 --shot 2 --n-query 2");
  CHECK(leak.code == 2);
  CHECK(leak.err.find("ProtocolViolation") != std::string::npos);

  const auto none = cli(dir, "eval --checkpoint " + quote(ckpt) + " --test-dataset " + quote(test_ds) +
                                 " --report " + quote(report) + " --episodes 0");
  REQUIRE(none.code == 0);
  CHECK(read_json(report).at("n_queries") == 0);
  CHECK_FALSE(read_json(report).at("metrics").contains("accuracy"));

  const auto wrong = cli(dir, "eval --checkpoint " + quote(ckpt) + " --test-dataset " + quote(test_ds) +
                                  " --report " + quote(report) + " --episodes 1 --set d=8");
  CHECK(wrong.code == 2);
  CHECK(wrong.err.find("ShapeMismatch") != std::string::npos);

  const auto bad_key = cli(dir, "train --train-dataset " + quote(train_ds) + " --out " + quote(ckpt) +
                                    " --set colour=red");
  CHECK(bad_key.code == 1);
}
