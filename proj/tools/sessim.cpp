// Command-line front end: preprocess, split, synth, train, eval, metrics.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>

#include "sessim/checkpoint.hpp"
#include "sessim/config.hpp"
#include "sessim/dataset.hpp"
#include "sessim/fewshot.hpp"
#include "sessim/metrics.hpp"
#include "sessim/preprocess.hpp"
#include "sessim/synthetic.hpp"

namespace fs = std::filesystem;
using namespace sessim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig: return kExitUsage;
    case ErrorKind::NumericFailure: return kExitNumeric;
    default: return kExitData;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

LabelManifest manifest_or_empty(const fs::path& dataset) {
  const fs::path m = manifest_path_for(dataset);
  return fs::exists(m) ? read_manifest(m) : LabelManifest{};
}

// Tunables shared by train and eval; unset options leave the config alone.
struct ConfigFlags {
  std::optional<fs::path> config_file;
  std::vector<std::string> sets;  // key=value
  std::optional<std::size_t> episodes;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<std::size_t> way, shot, n_query;
  bool no_symmetrize = false;
  bool double_sigmoid = false;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_file, "Config file (key = value, [section] headers)");
    cmd.add_option("--set", sets, "Override one key, e.g. --set d=32 (repeatable)");
    cmd.add_option("--episodes", episodes, "Number of episodes");
    cmd.add_option("--seed", seed, "Random seed");
    cmd.add_option("--lr", lr, "Adam learning rate");
    cmd.add_option("--way", way, "Classes per episode (benign included)");
    cmd.add_option("--shot", shot, "Support samples per class");
    cmd.add_option("--n-query", n_query, "Query samples per class");
    cmd.add_flag("--no-symmetrize", no_symmetrize, "Score pairs in one order only");
    cmd.add_flag("--double-sigmoid", double_sigmoid, "Apply sigmoid to class averages before the loss");
  }

  void apply(RunConfig& cfg) const {
    if (config_file) apply_config_file(cfg, *config_file);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::InvalidConfig, "--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (episodes) cfg.episodes = *episodes;
    if (seed) cfg.seed = *seed;
    if (lr) cfg.lr = *lr;
    if (way) cfg.way = *way;
    if (shot) cfg.shot = *shot;
    if (n_query) cfg.n_query = *n_query;
    if (no_symmetrize) cfg.symmetrize = false;
    if (double_sigmoid) cfg.double_sigmoid = true;
    cfg.validate();
  }
};

// ---------------------------------------------------------------- preprocess

struct PreprocessArgs {
  fs::path input, output;
  std::size_t session_len = 16;
  std::optional<fs::path> label_csv;
  std::optional<std::string> label;
  bool stats = false;
  std::optional<fs::path> stats_out;
  bool first_only = false;
  unsigned jobs = 1;
};

int run_preprocess(const PreprocessArgs& a) {
  PreprocessOptions opt;
  opt.input = a.input;
  opt.label_csv = a.label_csv;
  opt.default_label = a.label;
  opt.session_len = a.session_len;
  opt.anonymize = a.first_only ? AnonymizeMode::FirstPacketOnly : AnonymizeMode::AllPackets;
  opt.jobs = a.jobs;
  if (a.session_len < 1 || a.session_len > 65535) throw Error(ErrorKind::InvalidConfig, "--session-len must be in [1, 65535]");
  const PreprocessResult r = preprocess(opt);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  write_dataset(a.output, r.tensors, a.session_len);
  write_manifest(manifest_path_for(a.output), r.manifest);
  const nlohmann::json stats = {
      {"parsed", r.stats.parsed},
      {"filtered_icmp_arp", r.stats.filtered_icmp_arp},
      {"retransmissions_dropped", r.stats.retransmissions_dropped},
      {"short_sessions_dropped", r.stats.short_sessions_dropped},
      {"sessions_emitted", r.stats.sessions_emitted},
      {"short_session_packets", r.stats.short_session_packets},
      {"sessionized_packets", r.stats.sessionized_packets},
  };
  if (a.stats) std::cout << stats.dump(2) << '\n';
  if (a.stats_out) write_text(*a.stats_out, stats.dump(2) + "\n");
  std::cerr << "wrote " << r.tensors.size() << " sessions to " << a.output.string() << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------- split

struct SplitArgs {
  fs::path dataset;
  std::size_t train_classes = 0;
  std::uint64_t seed = 0;
  std::optional<fs::path> train_out, test_out, manifest_out;
};

int run_split(const SplitArgs& a) {
  const Dataset ds = read_dataset(a.dataset);
  const LabelManifest labels = manifest_or_empty(a.dataset);
  const ClassSplit split = split_classes(ds.records, a.train_classes, a.seed);

  auto sibling = [&](const char* suffix) {
    fs::path p = a.dataset;
    p.replace_extension();
    return fs::path(p.string() + suffix);
  };
  const fs::path train_out = a.train_out.value_or(sibling(".train.ds"));
  const fs::path test_out = a.test_out.value_or(sibling(".test.ds"));
  const fs::path manifest_out = a.manifest_out.value_or(sibling(".split.json"));

  auto subset = [&](const std::vector<std::size_t>& benign, const std::vector<std::uint16_t>& malicious) {
    std::vector<SessionTensor> out;
    const std::set<std::size_t> keep(benign.begin(), benign.end());
    const std::set<std::uint16_t> classes(malicious.begin(), malicious.end());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      const auto& r = ds.records[i];
      if (r.label == 0 ? keep.count(i) > 0 : classes.count(r.label) > 0) out.push_back(r);
    }
    return out;
  };
  auto sub_manifest = [&](const std::vector<std::uint16_t>& ids) {
    LabelManifest m;
    if (auto it = labels.find(0); it != labels.end()) m[0] = it->second;
    for (auto id : ids) {
      if (auto it = labels.find(id); it != labels.end()) m[id] = it->second;
    }
    return m;
  };
  write_dataset(train_out, subset(split.train_benign, split.train_malicious), ds.session_len);
  write_manifest(manifest_path_for(train_out), sub_manifest(split.train_malicious));
  write_dataset(test_out, subset(split.test_benign, split.test_malicious), ds.session_len);
  write_manifest(manifest_path_for(test_out), sub_manifest(split.test_malicious));

  auto named = [&](const std::vector<std::uint16_t>& ids) {
    nlohmann::json arr = nlohmann::json::array();
    for (auto id : ids) {
      const auto it = labels.find(id);
      arr.push_back({{"id", id}, {"name", it == labels.end() ? std::to_string(id) : it->second}});
    }
    return arr;
  };
  const nlohmann::json manifest = {
      {"seed", a.seed},
      {"train_malicious", named(split.train_malicious)},
      {"test_malicious", named(split.test_malicious)},
      {"train_benign_count", split.train_benign.size()},
      {"test_benign_count", split.test_benign.size()},
      {"train_dataset", train_out.filename().string()},
      {"test_dataset", test_out.filename().string()},
  };
  write_text(manifest_out, manifest.dump(2) + "\n");
  std::cerr << "train: " << split.train_malicious.size() << " malicious classes, test: "
            << split.test_malicious.size() << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------- synth

struct SynthArgs {
  fs::path output;
  SyntheticOptions opt;
};

int run_synth(const SynthArgs& a) {
  const SyntheticCorpus c = make_synthetic_corpus(a.opt);
  write_dataset(a.output, c.tensors, a.opt.session_len);
  write_manifest(manifest_path_for(a.output), c.manifest);
  std::cerr << "wrote " << c.tensors.size() << " synthetic sessions to " << a.output.string() << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  ConfigFlags flags;
  fs::path dataset, out;
  std::optional<fs::path> loss_csv;
};

std::set<std::uint16_t> malicious_labels(const std::vector<SessionTensor>& data) {
  std::set<std::uint16_t> out;
  for (const auto& t : data) {
    if (t.label != 0) out.insert(t.label);
  }
  return out;
}

template <typename T>
int train_with(const RunConfig& cfg, const Dataset& ds, const TrainArgs& a) {
  SessionSimilarityModel<T> model(cfg.model(), cfg.seed);
  const ClassPool pool = ClassPool::from_dataset(ds.records);

  std::ofstream loss_out;
  if (a.loss_csv) {
    loss_out.open(*a.loss_csv, std::ios::binary);
    if (!loss_out) throw Error(ErrorKind::Io, "cannot write " + a.loss_csv->string());
    loss_out << "episode,loss\n";
  }
  TrainOptions opt;
  opt.spec = cfg.episode();
  opt.episodes = cfg.episodes;
  opt.adam.lr = cfg.lr;
  opt.seed = cfg.seed;
  opt.double_sigmoid = cfg.double_sigmoid;
  opt.on_episode = [&](std::size_t e, double loss) {
    if (loss_out.is_open()) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", loss);
      loss_out << e << ',' << buf << '\n';
    }
    if ((e + 1) % 50 == 0 || e + 1 == cfg.episodes) {
      std::cerr << "episode " << e + 1 << "/" << cfg.episodes << " loss " << loss << '\n';
    }
  };
  train(model, ds.records, pool, opt);

  const auto classes = malicious_labels(ds.records);
  const nlohmann::json meta = {
      {"config", cfg.to_json()},
      {"training_classes", std::vector<std::uint16_t>(classes.begin(), classes.end())},
  };
  write_checkpoint(a.out, snapshot(model.parameters(), meta.dump()));
  return kExitOk;
}

int run_train(const TrainArgs& a) {
  RunConfig cfg;
  a.flags.apply(cfg);
  const Dataset ds = read_dataset(a.dataset);
  if (ds.session_len != cfg.session_len) {
    throw Error(ErrorKind::ShapeMismatch, "dataset has N=" + std::to_string(ds.session_len) + ", config has N=" +
                                              std::to_string(cfg.session_len));
  }
  return cfg.precision == Precision::F64 ? train_with<double>(cfg, ds, a) : train_with<float>(cfg, ds, a);
}

// ---------------------------------------------------------------------- eval

struct EvalArgs {
  ConfigFlags flags;
  fs::path checkpoint, dataset, report;
  std::optional<fs::path> predictions, csv_row;
  unsigned jobs = 1;
};

template <typename T>
int eval_with(const RunConfig& cfg, const Checkpoint& ckpt, const std::set<std::uint16_t>& training_classes,
              const Dataset& ds, const EvalArgs& a) {
  SessionSimilarityModel<T> model(cfg.model(), cfg.seed);
  load_parameters(ckpt, model.parameters());
  const ModelScorer<T> scorer(model);

  EvalOptions opt;
  opt.spec = cfg.episode();
  opt.episodes = cfg.episodes;
  opt.seed = cfg.seed;
  opt.jobs = a.jobs;
  opt.training_classes = training_classes;
  const EvalResult r = evaluate(scorer, ds.records, ClassPool::from_dataset(ds.records), opt);

  ReportInfo info;
  info.way = cfg.way;
  info.shot = cfg.shot;
  info.n_episodes = r.episodes;
  info.config = cfg.to_json();
  const nlohmann::json report = make_report(info, r.predictions);
  write_text(a.report, report.dump(2) + "\n");
  if (a.predictions) write_predictions_csv(*a.predictions, r.predictions, cfg.way);
  if (a.csv_row) write_text(*a.csv_row, report_csv_header() + "\n" + report_csv_row(report) + "\n");
  std::cerr << report.at("metrics").dump() << '\n';
  return kExitOk;
}

int run_eval(const EvalArgs& a) {
  const Checkpoint ckpt = read_checkpoint(a.checkpoint);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ckpt.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadMagic, "checkpoint metadata is not JSON: " + std::string(e.what()));
  }
  RunConfig cfg = meta.contains("config") ? RunConfig::from_json(meta.at("config")) : RunConfig{};
  // Evaluation defaults differ from training: only the model shape carries over.
  cfg.episodes = 1000;
  a.flags.apply(cfg);
  std::set<std::uint16_t> training_classes;
  if (meta.contains("training_classes")) {
    for (const auto& id : meta.at("training_classes")) training_classes.insert(id.get<std::uint16_t>());
  }
  const Dataset ds = read_dataset(a.dataset);
  if (ds.session_len != cfg.session_len) {
    throw Error(ErrorKind::ShapeMismatch, "dataset has N=" + std::to_string(ds.session_len) + ", model has N=" +
                                              std::to_string(cfg.session_len));
  }
  return cfg.precision == Precision::F64 ? eval_with<double>(cfg, ckpt, training_classes, ds, a)
                                         : eval_with<float>(cfg, ckpt, training_classes, ds, a);
}

// ------------------------------------------------------------------- metrics

struct MetricsArgs {
  fs::path predictions, report;
  std::size_t shot = 0;
  std::optional<fs::path> csv_row;
};

int run_metrics(const MetricsArgs& a) {
  const auto records = read_predictions_csv(a.predictions);
  ReportInfo info;
  info.way = records.empty() ? 2 : records.front().logits.size();
  info.shot = a.shot;
  std::set<std::size_t> episodes;
  for (const auto& r : records) {
    if (r.logits.size() != info.way) throw Error(ErrorKind::CountMismatch, "predictions mix different way counts");
    episodes.insert(r.episode);
  }
  info.n_episodes = episodes.size();
  const nlohmann::json report = make_report(info, records);
  write_text(a.report, report.dump(2) + "\n");
  if (a.csv_row) write_text(*a.csv_row, report_csv_header() + "\n" + report_csv_row(report) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Session-level few-shot traffic classification toolkit"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Turn captures into a session tensor dataset");
  c_pre->add_option("--input", pre.input, "Capture file or directory (class subdirectories)")->required();
  c_pre->add_option("--output", pre.output, "Dataset file to write")->required();
  c_pre->add_option("--session-len", pre.session_len, "Packets per session tensor (N)");
  c_pre->add_option("--label-csv", pre.label_csv, "CSV of path,label rows relative to --input");
  c_pre->add_option("--label", pre.label, "Label for files without a directory or CSV label");
  c_pre->add_flag("--stats", pre.stats, "Print sessionization counters as JSON");
  c_pre->add_option("--stats-out", pre.stats_out, "Also write the counters to this file");
  c_pre->add_flag("--anonymize-first-only", pre.first_only, "Rewrite addresses in the first packet only");
  c_pre->add_option("--jobs", pre.jobs, "Worker threads")->check(CLI::Range(1u, 1024u));

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Partition classes into disjoint train/test datasets");
  c_split->add_option("--dataset", split.dataset, "Dataset to split")->required();
  c_split->add_option("--train-classes", split.train_classes, "Malicious classes for training")->required();
  c_split->add_option("--seed", split.seed, "Random seed");
  c_split->add_option("--train-out", split.train_out, "Training dataset path");
  c_split->add_option("--test-out", split.test_out, "Test dataset path");
  c_split->add_option("--manifest-out", split.manifest_out, "Split manifest JSON path");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a labelled synthetic dataset");
  c_synth->add_option("--output", synth.output, "Dataset file to write")->required();
  c_synth->add_option("--families", synth.opt.families, "Malicious families");
  c_synth->add_option("--per-family", synth.opt.sessions_per_family, "Sessions per family");
  c_synth->add_option("--benign", synth.opt.benign_sessions, "Benign sessions");
  c_synth->add_option("--session-len", synth.opt.session_len, "Packets per session tensor (N)");
  c_synth->add_option("--seed", synth.opt.seed, "Random seed");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Episodic training");
  tr.flags.attach(*c_train);
  c_train->add_option("--train-dataset", tr.dataset, "Training dataset")->required();
  c_train->add_option("--out", tr.out, "Checkpoint to write")->required();
  c_train->add_option("--loss-csv", tr.loss_csv, "Per-episode loss trace (episode,loss)");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Episodic evaluation of a checkpoint");
  ev.flags.attach(*c_eval);
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint from train")->required();
  c_eval->add_option("--test-dataset", ev.dataset, "Test dataset")->required();
  c_eval->add_option("--report", ev.report, "Report JSON to write")->required();
  c_eval->add_option("--predictions", ev.predictions, "Per-query prediction CSV");
  c_eval->add_option("--csv-row", ev.csv_row, "One-row CSV summary for sweeps");
  c_eval->add_option("--jobs", ev.jobs, "Worker threads")->check(CLI::Range(1u, 1024u));

  MetricsArgs met;
  auto* c_met = app.add_subcommand("metrics", "Recompute a report from a prediction CSV");
  c_met->add_option("--predictions", met.predictions, "Prediction CSV")->required();
  c_met->add_option("--report", met.report, "Report JSON to write")->required();
  c_met->add_option("--shot", met.shot, "Shot count to record in the report");
  c_met->add_option("--csv-row", met.csv_row, "One-row CSV summary for sweeps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_pre->parsed()) return run_preprocess(pre);
    if (c_split->parsed()) return run_split(split);
    if (c_synth->parsed()) return run_synth(synth);
    if (c_train->parsed()) return run_train(tr);
    if (c_eval->parsed()) return run_eval(ev);
    if (c_met->parsed()) return run_metrics(met);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
