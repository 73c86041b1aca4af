#include "safenav/pipeline/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <mutex>
#include <sstream>
#include <thread>

#include "safenav/common/io.hpp"
#include "safenav/netcore/serialization.hpp"

namespace safenav::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string stem(train::Method method, std::uint64_t seed) {
  return train::to_string(method) + "_seed" + std::to_string(seed);
}

// Serializes log calls coming from worker threads.
class SyncLogger {
 public:
  explicit SyncLogger(const Logger& log) : log_(log) {}
  void operator()(const std::string& message) {
    if (!log_) return;
    std::lock_guard<std::mutex> lock(mutex_);
    log_(message);
  }

 private:
  const Logger& log_;
  std::mutex mutex_;
};

void remove_if_present(const fs::path& path) {
  std::error_code ec;
  fs::remove(path, ec);
}

json cell_to_json(const EvalCell& c) {
  return {{"success_rate", c.success_rate},
          {"mean_episodic_cost", c.mean_episodic_cost},
          {"mean_distance_traveled", c.mean_distance_traveled},
          {"mean_return", c.mean_return}};
}

EvalCell cell_from_json(const json& j) {
  EvalCell c;
  c.success_rate = j.at("success_rate").get<double>();
  c.mean_episodic_cost = j.at("mean_episodic_cost").get<double>();
  c.mean_distance_traveled = j.at("mean_distance_traveled").get<double>();
  c.mean_return = j.at("mean_return").get<double>();
  return c;
}

std::string to_upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

std::string to_string(SafetyClass c) {
  switch (c) {
    case SafetyClass::kSafe:
      return "safe";
    case SafetyClass::kUnsafe:
      return "unsafe";
    case SafetyClass::kUnresolved:
      return "unresolved";
  }
  return "unresolved";
}

// Left-aligned first column, right-aligned others, two spaces between.
std::string format_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) line += "  ";
      const std::string pad(widths[c] - row[c].size(), ' ');
      line += c == 0 ? row[c] + pad : pad + row[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
  return out.str();
}

}  // namespace

fs::path RunLayout::net_file(train::Method method, std::uint64_t seed) const {
  return nets() / (stem(method, seed) + ".json");
}
fs::path RunLayout::record_file(train::Method method, std::uint64_t seed) const {
  return records() / (stem(method, seed) + ".csv");
}
fs::path RunLayout::train_error_file(train::Method method, std::uint64_t seed) const {
  return records() / (stem(method, seed) + ".error");
}
fs::path RunLayout::eval_file(train::Method method, std::uint64_t seed) const {
  return records() / (stem(method, seed) + ".eval.json");
}
fs::path RunLayout::verification_file(train::Method method, std::uint64_t seed) const {
  return verification() / (stem(method, seed) + ".json");
}
fs::path RunLayout::verification_error_file(train::Method method, std::uint64_t seed) const {
  return verification() / (stem(method, seed) + ".error");
}

void RunLayout::create_directories() const {
  for (const auto& dir : {nets(), records(), verification(), report()}) fs::create_directories(dir);
}

std::string model_id(train::Method method, std::uint64_t seed) {
  return train::to_string(method) + "-seed" + std::to_string(seed);
}

SafetyClass PolicyRecord::safety() const {
  if (verification_failed || verdicts.empty()) return SafetyClass::kUnresolved;
  bool unknown = false;
  for (const auto& v : verdicts) {
    if (v.verdict == verify::Verdict::kSat) return SafetyClass::kUnsafe;
    if (v.verdict == verify::Verdict::kUnknown) unknown = true;
  }
  return unknown ? SafetyClass::kUnresolved : SafetyClass::kSafe;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w)
    threads.emplace_back([&] {
      for (int i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : threads) t.join();
}

std::vector<PolicyRecord> run_training(const RunManifest& manifest, train::Method method,
                                       const RunLayout& layout, const PipelineOptions& options,
                                       StageOutcome& outcome) {
  const sim::TubeModel tube = sim::resolve_tube(manifest.train_tube);
  train::TrainConfig config = manifest.train;
  config.method = method;
  const int n = static_cast<int>(manifest.seeds.size());
  std::vector<PolicyRecord> records(n);
  std::atomic<int> failed{0}, skipped{0};
  SyncLogger log(options.log);

  parallel_for(n, options.jobs, [&](int i) {
    const std::uint64_t seed = manifest.seeds[i];
    PolicyRecord& r = records[i];
    r.method = method;
    r.seed = seed;
    r.network_file = fs::relative(layout.net_file(method, seed), layout.root).generic_string();
    const fs::path net_path = layout.net_file(method, seed);
    const fs::path record_path = layout.record_file(method, seed);
    const fs::path error_path = layout.train_error_file(method, seed);
    try {
      train::TrainRecord record;
      if (fs::exists(net_path) && fs::exists(record_path)) {
        record = train::train_record_from_csv(read_text_file(record_path), record_path.string());
        ++skipped;
      } else {
        remove_if_present(error_path);
        if (options.before_job) options.before_job("train", method, seed);
        train::TrainResult result = train::train_policy(tube, manifest.env, config, seed);
        net::save_network(result.policy, net_path);
        write_file_atomic(record_path, train::train_record_csv(result.record));
        record = std::move(result.record);
      }
      r.trailing_success_rate = record.trailing_success_rate();
      r.trailing_mean_cost = record.trailing_mean_cost();
      r.trailing_mean_return = record.trailing_mean_return();
      r.failed = record.failed;
      r.failure = record.failure;
      if (r.failed) {
        ++failed;
        log("train " + model_id(method, seed) + " failed: " + r.failure);
      } else {
        log("train " + model_id(method, seed) + ": trailing success " + format_fixed(r.trailing_success_rate, 2) +
            ", mean cost " + format_fixed(r.trailing_mean_cost, 1));
      }
    } catch (const std::exception& e) {
      r.failed = true;
      r.failure = e.what();
      ++failed;
      try {
        write_file_atomic(error_path, r.failure + "\n");
      } catch (const std::exception&) {
      }
      log("train " + model_id(method, seed) + " failed: " + r.failure);
    }
  });
  outcome.failed_jobs += failed;
  outcome.skipped_jobs += skipped;
  return records;
}

std::vector<PolicyRecord> screen_policies(const std::vector<PolicyRecord>& records, int top_m,
                                          const Logger& log) {
  std::vector<PolicyRecord> pool;
  for (const auto& r : records)
    if (!r.failed) pool.push_back(r);
  std::sort(pool.begin(), pool.end(), [](const PolicyRecord& a, const PolicyRecord& b) {
    if (a.trailing_success_rate != b.trailing_success_rate) return a.trailing_success_rate > b.trailing_success_rate;
    if (a.trailing_mean_cost != b.trailing_mean_cost) return a.trailing_mean_cost < b.trailing_mean_cost;
    return a.seed < b.seed;
  });
  if (top_m > static_cast<int>(pool.size())) {
    if (log)
      log("warning: top_m = " + std::to_string(top_m) + " exceeds the " + std::to_string(pool.size()) +
          " available policies; screening all of them");
  } else {
    pool.resize(static_cast<std::size_t>(std::max(0, top_m)));
  }
  return pool;
}

void run_evaluation(std::vector<PolicyRecord>& subset, const std::vector<sim::TubeModel>& tubes,
                    int episodes, const sim::EnvConfig& env, std::uint64_t eval_seed,
                    const RunLayout& layout, const PipelineOptions& options, StageOutcome& outcome) {
  std::atomic<int> failed{0}, skipped{0};
  SyncLogger log(options.log);
  parallel_for(static_cast<int>(subset.size()), options.jobs, [&](int i) {
    PolicyRecord& r = subset[i];
    const fs::path path = layout.eval_file(r.method, r.seed);
    r.evaluation.clear();
    for (const auto& tube : tubes) r.evaluation[tube.id()] = std::nullopt;
    try {
      if (fs::exists(path)) {
        const json doc = json::parse(read_text_file(path));
        bool complete = true;
        for (const auto& tube : tubes) {
          const auto it = doc.at("tubes").find(tube.id());
          if (it == doc.at("tubes").end() || it->is_null()) {
            complete = false;
            break;
          }
          r.evaluation[tube.id()] = cell_from_json(*it);
        }
        if (complete) {
          ++skipped;
          return;
        }
      }
      if (options.before_job) options.before_job("evaluate", r.method, r.seed);
      const net::Mlp policy = net::load_network(layout.root / r.network_file);
      json cells = json::object();
      bool complete = true;
      for (const auto& tube : tubes) {
        try {
          const auto s = train::evaluate_policy(policy, tube, episodes, env, eval_seed);
          EvalCell c{s.success_rate, s.mean_episodic_cost, s.mean_distance_traveled, s.mean_return};
          r.evaluation[tube.id()] = c;
          cells[tube.id()] = cell_to_json(c);
        } catch (const std::exception& e) {
          complete = false;
          cells[tube.id()] = nullptr;
          log("evaluate " + model_id(r.method, r.seed) + " on " + tube.id() + " failed: " + e.what());
        }
      }
      if (complete) {
        write_file_atomic(path, json{{"tubes", cells}}.dump(2) + "\n");
      } else {
        r.evaluation_failed = true;
        ++failed;
      }
    } catch (const std::exception& e) {
      r.evaluation_failed = true;
      ++failed;
      log("evaluate " + model_id(r.method, r.seed) + " failed: " + e.what());
    }
  });
  outcome.failed_jobs += failed;
  outcome.skipped_jobs += skipped;
}

void run_verification(std::vector<PolicyRecord>& subset,
                      const std::vector<verify::SafetyProperty>& properties,
                      const verify::VerifierConfig& config, const RunLayout& layout,
                      const PipelineOptions& options, StageOutcome& outcome) {
  std::atomic<int> failed{0}, skipped{0};
  SyncLogger log(options.log);
  parallel_for(static_cast<int>(subset.size()), options.jobs, [&](int i) {
    PolicyRecord& r = subset[i];
    const fs::path path = layout.verification_file(r.method, r.seed);
    const fs::path error_path = layout.verification_error_file(r.method, r.seed);
    r.verdicts.clear();
    r.verification_failed = false;
    try {
      if (fs::exists(path)) {
        auto stored = verify::verification_from_json(read_text_file(path), path.string());
        bool matches = stored.results.size() == properties.size();
        for (std::size_t k = 0; matches && k < properties.size(); ++k)
          matches = stored.results[k].property == properties[k].name;
        if (matches) {
          r.verdicts = std::move(stored.results);
          ++skipped;
          return;
        }
      }
      remove_if_present(error_path);
      if (options.before_job) options.before_job("verify", r.method, r.seed);
      const net::Mlp policy = net::load_network(layout.root / r.network_file);
      auto result = verify::verify_all(policy, properties, config);
      write_file_atomic(path, verify::verification_to_json(result));
      r.verdicts = std::move(result.results);
      std::string summary;
      for (const auto& v : r.verdicts) summary += " " + v.property + "=" + verify::to_string(v.verdict);
      log("verify " + model_id(r.method, r.seed) + ":" + summary);
    } catch (const std::exception& e) {
      r.verdicts.clear();
      r.verification_failed = true;
      r.verification_failure = e.what();
      ++failed;
      try {
        write_file_atomic(error_path, r.verification_failure + "\n");
      } catch (const std::exception&) {
      }
      log("verify " + model_id(r.method, r.seed) + " failed: " + r.verification_failure);
    }
  });
  outcome.failed_jobs += failed;
  outcome.skipped_jobs += skipped;
}

MethodReport build_method_report(train::Method method, std::vector<PolicyRecord> trained,
                                 std::vector<PolicyRecord> screened,
                                 const std::vector<verify::SafetyProperty>& properties,
                                 const RunLayout& layout) {
  MethodReport m;
  m.method = method;
  std::sort(trained.begin(), trained.end(),
            [](const PolicyRecord& a, const PolicyRecord& b) { return a.seed < b.seed; });
  for (const auto& p : properties) {
    m.sat_counts[p.name] = 0;
    m.unknown_counts[p.name] = 0;
  }
  for (const auto& r : trained)
    if (r.failed) m.failed_seeds.push_back(r.seed);

  for (const auto& r : screened) {
    for (const auto& v : r.verdicts) {
      if (v.verdict == verify::Verdict::kSat) ++m.sat_counts[v.property];
      if (v.verdict == verify::Verdict::kUnknown) ++m.unknown_counts[v.property];
    }
    switch (r.safety()) {
      case SafetyClass::kSafe:
        m.safe_models.push_back(model_id(r.method, r.seed));
        break;
      case SafetyClass::kUnsafe:
        ++m.unsafe_count;
        break;
      case SafetyClass::kUnresolved:
        ++m.unresolved_count;
        break;
    }
    if (r.safety() != SafetyClass::kUnsafe) continue;
    const net::Mlp policy = net::load_network(layout.root / r.network_file);
    for (const auto& v : r.verdicts) {
      if (v.verdict != verify::Verdict::kSat || !v.witness) continue;
      const auto prop = std::find_if(properties.begin(), properties.end(),
                                     [&](const verify::SafetyProperty& p) { return p.name == v.property; });
      if (prop == properties.end()) continue;
      auto pair = verify::find_sensitivity_pair(policy, *prop, *v.witness);
      if (pair && verify::replay_sensitivity_pair(policy, *prop, *pair))
        m.sensitivity.push_back({model_id(r.method, r.seed), v.property, std::move(*pair)});
    }
  }

  // Learning curves over the seeds that trained successfully.
  std::vector<double> ret_sum, cost_sum;
  std::vector<int> count;
  for (const auto& r : trained) {
    if (r.failed) continue;
    const auto record = train::train_record_from_csv(read_text_file(layout.record_file(r.method, r.seed)),
                                                     layout.record_file(r.method, r.seed).string());
    for (std::size_t e = 0; e < record.episodes.size(); ++e) {
      if (ret_sum.size() <= e) {
        ret_sum.resize(e + 1, 0.0);
        cost_sum.resize(e + 1, 0.0);
        count.resize(e + 1, 0);
      }
      ret_sum[e] += record.episodes[e].episode_return;
      cost_sum[e] += record.episodes[e].cost;
      ++count[e];
    }
  }
  for (std::size_t e = 0; e < count.size(); ++e) {
    m.mean_return_curve.push_back(ret_sum[e] / count[e]);
    m.mean_cost_curve.push_back(cost_sum[e] / count[e]);
  }
  m.trained = std::move(trained);
  m.screened = std::move(screened);
  return m;
}

std::string report_to_json(const SelectionReport& report) {
  json methods = json::array();
  for (const auto& m : report.methods) {
    json training = json::array();
    for (const auto& r : m.trained)
      training.push_back({{"model", model_id(r.method, r.seed)},
                          {"seed", r.seed},
                          {"failed", r.failed},
                          {"trailing_success_rate", r.trailing_success_rate},
                          {"trailing_mean_cost", r.trailing_mean_cost},
                          {"trailing_mean_return", r.trailing_mean_return}});
    json screened = json::array();
    for (std::size_t rank = 0; rank < m.screened.size(); ++rank) {
      const auto& r = m.screened[rank];
      json evaluation = json::object();
      for (const auto& tube : report.tubes) {
        const auto it = r.evaluation.find(tube);
        evaluation[tube] = it != r.evaluation.end() && it->second ? cell_to_json(*it->second) : json(nullptr);
      }
      json verdicts = json::object();
      json witnesses = json::object();
      for (const auto& v : r.verdicts) {
        verdicts[v.property] = verify::to_string(v.verdict);
        if (v.witness)
          witnesses[v.property] = std::vector<double>(v.witness->data(), v.witness->data() + v.witness->size());
      }
      screened.push_back({{"rank", rank + 1},
                          {"model", model_id(r.method, r.seed)},
                          {"seed", r.seed},
                          {"network", r.network_file},
                          {"trailing_success_rate", r.trailing_success_rate},
                          {"trailing_mean_cost", r.trailing_mean_cost},
                          {"evaluation", evaluation},
                          {"verdicts", verdicts},
                          {"witnesses", witnesses},
                          {"verification_failed", r.verification_failed},
                          {"class", to_string(r.safety())}});
    }
    json sensitivity = json::array();
    for (const auto& d : m.sensitivity) {
      const auto& p = d.pair;
      sensitivity.push_back(
          {{"model", d.model},
           {"property", d.property},
           {"cell", p.cell},
           {"delta", p.delta},
           {"unsafe_input", std::vector<double>(p.unsafe_input.data(), p.unsafe_input.data() + p.unsafe_input.size())},
           {"safe_input", std::vector<double>(p.safe_input.data(), p.safe_input.data() + p.safe_input.size())},
           {"unsafe_action", p.unsafe_action},
           {"safe_action", p.safe_action},
           {"inside_box", p.inside_box}});
    }
    methods.push_back({{"method", train::to_string(m.method)},
                       {"trained", m.trained.size()},
                       {"failed_seeds", m.failed_seeds},
                       {"screened_count", m.screened.size()},
                       {"sat_counts", m.sat_counts},
                       {"unknown_counts", m.unknown_counts},
                       {"safe_count", m.safe_models.size()},
                       {"unsafe_count", m.unsafe_count},
                       {"unresolved_count", m.unresolved_count},
                       {"safe_models", m.safe_models},
                       {"training", training},
                       {"screened", screened},
                       {"sensitivity", sensitivity}});
  }
  json doc = {{"version", 1},
              {"run_id", report.run_id},
              {"train_tube", report.train_tube},
              {"tubes", report.tubes},
              {"properties", report.properties},
              {"cost_threshold", report.cost_threshold},
              {"methods", methods}};
  return doc.dump(2) + "\n";
}

std::string report_to_text(const SelectionReport& report) {
  std::ostringstream out;
  out << "Model selection report: " << report.run_id << "\n";
  out << "Training tube: " << report.train_tube << "\n\n";

  out << "Safety properties (SAT counts over screened policies)\n";
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"Method", "Trained", "Failed", "Screened"};
  for (const auto& p : report.properties) header.push_back(p);
  header.insert(header.end(), {"Unknown", "Unresolved", "Safe"});
  rows.push_back(header);
  for (const auto& m : report.methods) {
    std::vector<std::string> row = {to_upper(train::to_string(m.method)), std::to_string(m.trained.size()),
                                    std::to_string(m.failed_seeds.size()), std::to_string(m.screened.size())};
    int unknown = 0;
    for (const auto& p : report.properties) {
      row.push_back(std::to_string(m.sat_counts.at(p)));
      unknown += m.unknown_counts.at(p);
    }
    row.push_back(std::to_string(unknown));
    row.push_back(std::to_string(m.unresolved_count));
    row.push_back(std::to_string(m.safe_models.size()));
    rows.push_back(row);
  }
  out << format_table(rows) << "\n";

  out << "Completely safe models\n";
  for (const auto& m : report.methods) {
    out << "  " << to_upper(train::to_string(m.method)) << ": ";
    if (m.safe_models.empty()) {
      out << "none";
    } else {
      for (std::size_t i = 0; i < m.safe_models.size(); ++i) out << (i ? ", " : "") << m.safe_models[i];
    }
    out << "\n";
  }
  out << "\n";

  auto eval_table = [&](const std::string& title, auto value, int decimals) {
    out << title << "\n";
    std::vector<std::vector<std::string>> t;
    std::vector<std::string> h = {"Model"};
    h.insert(h.end(), report.tubes.begin(), report.tubes.end());
    t.push_back(h);
    for (const auto& m : report.methods)
      for (const auto& r : m.screened) {
        std::vector<std::string> row = {model_id(r.method, r.seed)};
        for (const auto& tube : report.tubes) {
          const auto it = r.evaluation.find(tube);
          row.push_back(it != r.evaluation.end() && it->second ? format_fixed(value(*it->second), decimals) : "-");
        }
        t.push_back(row);
      }
    out << format_table(t) << "\n";
  };
  eval_table("Average distance traveled (fraction of tube length)",
             [](const EvalCell& c) { return c.mean_distance_traveled; }, 2);
  eval_table("Success rate (greedy evaluation)", [](const EvalCell& c) { return c.success_rate; }, 2);

  out << "Screening (trailing 100 training episodes)\n";
  std::vector<std::vector<std::string>> s = {{"Model", "Rank", "Success", "Mean cost", "Class"}};
  for (const auto& m : report.methods)
    for (std::size_t rank = 0; rank < m.screened.size(); ++rank) {
      const auto& r = m.screened[rank];
      s.push_back({model_id(r.method, r.seed), std::to_string(rank + 1), format_fixed(r.trailing_success_rate, 2),
                   format_fixed(r.trailing_mean_cost, 1), to_string(r.safety())});
    }
  out << format_table(s);

  bool any_pair = false;
  for (const auto& m : report.methods) any_pair = any_pair || !m.sensitivity.empty();
  if (any_pair) {
    out << "\nSensitivity example\n";
    for (const auto& m : report.methods) {
      if (m.sensitivity.empty()) continue;
      const auto& d = m.sensitivity.front();
      out << "  " << d.model << " " << d.property << ": cell " << d.pair.cell << " changed by "
          << format_fixed(d.pair.delta, 4) << " moves the greedy action from " << d.pair.unsafe_action << " to "
          << d.pair.safe_action << "\n";
    }
  }
  return out.str();
}

std::string returns_csv(const SelectionReport& report) {
  std::ostringstream out;
  out << "episode";
  std::size_t episodes = 0;
  for (const auto& m : report.methods) {
    out << ',' << train::to_string(m.method);
    episodes = std::max(episodes, m.mean_return_curve.size());
  }
  out << '\n';
  for (std::size_t e = 0; e < episodes; ++e) {
    out << e;
    for (const auto& m : report.methods) {
      out << ',';
      if (e < m.mean_return_curve.size()) out << format_exact(m.mean_return_curve[e]);
    }
    out << '\n';
  }
  return out.str();
}

std::string costs_csv(const SelectionReport& report) {
  std::ostringstream out;
  out << "episode";
  std::size_t episodes = 0;
  for (const auto& m : report.methods) {
    out << ',' << train::to_string(m.method);
    episodes = std::max(episodes, m.mean_cost_curve.size());
  }
  out << ",threshold\n";
  for (std::size_t e = 0; e < episodes; ++e) {
    out << e;
    for (const auto& m : report.methods) {
      out << ',';
      if (e < m.mean_cost_curve.size()) out << format_exact(m.mean_cost_curve[e]);
    }
    out << ',' << format_exact(report.cost_threshold) << '\n';
  }
  return out.str();
}

void emit_report(const SelectionReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  write_file_atomic(dir / "report.json", report_to_json(report));
  write_file_atomic(dir / "report.txt", report_to_text(report));
  write_file_atomic(dir / "returns.csv", returns_csv(report));
  write_file_atomic(dir / "costs.csv", costs_csv(report));
}

std::vector<verify::SafetyProperty> resolve_properties(const std::string& spec) {
  if (spec == "builtin") return verify::builtin_properties();
  return verify::load_properties(spec);
}

PipelineResult run_pipeline(const RunManifest& manifest, const PipelineOptions& options,
                            const fs::path& output_root) {
  manifest.validate();
  PipelineResult result;
  const fs::path base = output_root.empty() ? fs::path(manifest.output_dir) : output_root;
  result.layout.root = base / manifest.run_id;
  const RunLayout& layout = result.layout;

  // The run directory remembers its manifest; resuming with a different one
  // would mix incompatible artifacts.
  RunManifest canonical = manifest;
  canonical.output_dir.clear();
  const std::string manifest_text = manifest_to_json(canonical);
  const fs::path stored = layout.root / "manifest.json";
  if (fs::exists(stored)) {
    if (read_text_file(stored) != manifest_text)
      throw PipelineError("run directory " + layout.root.string() +
                          " was created from a different manifest; choose another run_id");
  }
  layout.create_directories();
  write_file_atomic(stored, manifest_text);

  const auto properties = resolve_properties(manifest.properties);
  std::vector<sim::TubeModel> tubes;
  for (const auto& id : manifest.eval_tubes) tubes.push_back(sim::resolve_tube(id));
  const sim::TubeModel train_tube = sim::resolve_tube(manifest.train_tube);

  SelectionReport& report = result.report;
  report.run_id = manifest.run_id;
  report.train_tube = train_tube.id();
  for (const auto& t : tubes) report.tubes.push_back(t.id());
  for (const auto& p : properties) report.properties.push_back(p.name);
  report.cost_threshold = manifest.train.cost_threshold;

  StageOutcome outcome;
  for (const auto method : manifest.methods) {
    if (options.log) options.log("stage 1: training " + train::to_string(method) + " on " + report.train_tube);
    auto trained = run_training(manifest, method, layout, options, outcome);
    if (options.log) options.log("stage 2: screening " + train::to_string(method) + " policies, top " +
                                 std::to_string(manifest.top_m));
    auto screened = screen_policies(trained, manifest.top_m, options.log);
    if (options.log) options.log("stage 3: evaluating " + std::to_string(screened.size()) + " screened policies");
    run_evaluation(screened, tubes, manifest.eval_episodes, manifest.env, manifest.eval_seed, layout, options,
                   outcome);
    if (options.log) options.log("stage 4: verifying " + std::to_string(screened.size()) + " screened policies");
    run_verification(screened, properties, manifest.verifier, layout, options, outcome);
    report.methods.push_back(build_method_report(method, std::move(trained), std::move(screened), properties, layout));
  }
  emit_report(report, layout.report());
  result.failed_jobs = outcome.failed_jobs;
  return result;
}

}  // namespace safenav::pipeline
