#include "sessim/preprocess.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <set>
#include <thread>
#include <unordered_map>

namespace sessim {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool is_capture(const fs::path& p) {
  const auto ext = lower(p.extension().string());
  return ext == ".pcap" || ext == ".cap";
}

std::unordered_map<std::string, std::string> read_label_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open label CSV " + path.string());
  std::unordered_map<std::string, std::string> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(lineno) + ": expected path,label");
    }
    std::string file = trim(line.substr(0, comma));
    std::string label = trim(line.substr(comma + 1));
    if (lineno == 1 && lower(file) == "path" && lower(label) == "label") continue;
    labels[fs::path(file).lexically_normal().generic_string()] = label;
  }
  return labels;
}

struct FileJob {
  fs::path path;
  std::string rel;
  std::string class_name;
};

struct FileOutput {
  std::vector<Session> sessions;
  SessionizeStats stats;
  std::optional<Error> error;
};

}  // namespace

LabelManifest assign_class_ids(const std::vector<std::string>& names) {
  std::set<std::string> others;
  bool has_benign = false;
  for (const auto& n : names) {
    if (lower(n) == "benign") has_benign = true;
    else others.insert(n);
  }
  LabelManifest m;
  if (has_benign) m.emplace(0, "benign");
  std::uint16_t next = 1;
  for (const auto& n : others) m.emplace(next++, n);
  return m;
}

std::vector<SessionTensor> sessions_to_tensors(const std::vector<Session>& sessions, std::size_t session_len,
                                               std::uint16_t label, const std::string& source,
                                               AnonymizeMode mode) {
  std::vector<SessionTensor> out;
  out.reserve(sessions.size());
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    out.push_back(build_tensor(anonymize(sessions[i], mode), session_len, label,
                               source + "#" + std::to_string(i)));
  }
  return out;
}

PreprocessResult preprocess(const PreprocessOptions& options) {
  if (options.session_len == 0) throw Error(ErrorKind::InvalidConfig, "session length must be >= 1");
  PreprocessResult result;
  std::vector<FileJob> jobs;

  std::unordered_map<std::string, std::string> csv;
  if (options.label_csv) csv = read_label_csv(*options.label_csv);

  auto label_for = [&](const std::string& rel) -> std::string {
    if (auto it = csv.find(rel); it != csv.end()) return it->second;
    const fs::path rp(rel);
    if (std::distance(rp.begin(), rp.end()) > 1) return rp.begin()->string();
    if (options.default_label) return *options.default_label;
    throw Error(ErrorKind::InvalidConfig,
                "no label for " + rel + " (use a class subdirectory, a label CSV or --label)");
  };

  if (fs::is_regular_file(options.input)) {
    const std::string rel = options.input.filename().generic_string();
    jobs.push_back(FileJob{options.input, rel, label_for(rel)});
  } else if (fs::is_directory(options.input)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(options.input)) {
      if (e.is_regular_file() && is_capture(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string rel = fs::relative(f, options.input).lexically_normal().generic_string();
      jobs.push_back(FileJob{f, rel, label_for(rel)});
    }
    if (files.empty()) result.warnings.push_back("no capture files under " + options.input.string());
  } else {
    throw Error(ErrorKind::Io, "input " + options.input.string() + " does not exist");
  }

  std::vector<std::string> names;
  for (const auto& j : jobs) names.push_back(j.class_name);
  result.manifest = assign_class_ids(names);
  std::unordered_map<std::string, std::uint16_t> id_of;
  for (const auto& [id, name] : result.manifest) id_of[name] = id;
  auto class_id = [&](const std::string& name) {
    if (lower(name) == "benign") return std::uint16_t{0};
    return id_of.at(name);
  };

  std::vector<FileOutput> outputs(jobs.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (std::size_t i = cursor++; i < jobs.size(); i = cursor++) {
      try {
        ParseStats ps;
        auto packets = parse_pcap(jobs[i].path, &ps);
        outputs[i].stats.filtered_icmp_arp = ps.filtered_icmp_arp;
        outputs[i].sessions = sessionize(std::move(packets), &outputs[i].stats);
      } catch (const Error& e) {
        outputs[i].error = e;
      }
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (outputs[i].error) throw *outputs[i].error;
    result.stats += outputs[i].stats;
    auto tensors = sessions_to_tensors(outputs[i].sessions, options.session_len,
                                       class_id(jobs[i].class_name), jobs[i].rel, options.anonymize);
    for (auto& t : tensors) result.tensors.push_back(std::move(t));
  }
  return result;
}

}  // namespace sessim
