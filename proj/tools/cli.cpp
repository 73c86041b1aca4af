#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "safenav/common/io.hpp"
#include "safenav/crltrain/trainer.hpp"
#include "safenav/netcore/serialization.hpp"
#include "safenav/pipeline/config_io.hpp"
#include "safenav/pipeline/manifest.hpp"
#include "safenav/pipeline/pipeline.hpp"
#include "safenav/reluverify/verifier.hpp"
#include "safenav/tubesim/simulator.hpp"
#include "safenav/tubesim/tube.hpp"

#ifndef SAFENAV_VERSION
#define SAFENAV_VERSION "unknown"
#endif
#ifndef SAFENAV_BUILD_TYPE
#define SAFENAV_BUILD_TYPE "unknown"
#endif

namespace safenav::cli {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config;
  int jobs = 1;
  int verbose = 0;
  bool quiet = false;
};

struct TrainOptions {
  std::string method;
  std::string tube = "tube3";
  std::uint64_t seed = 0;
  std::string out;
  std::optional<int> episodes;
  std::optional<double> cost_threshold;
};

struct EvaluateOptions {
  std::string net;
  std::vector<std::string> tubes;
  int episodes = 20;
  std::uint64_t eval_seed = 0;
  std::string trajectory;
};

struct VerifyOptions {
  std::string net;
  std::string props = "builtin";
  std::optional<int> max_depth;
  std::optional<std::string> split;
  std::string out;
};

struct SelectOptions {
  std::string manifest;
  std::string out;
};

struct RenderOptions {
  std::string tube = "tube0";
  std::vector<double> pose;
};

std::string version_string() {
  return std::string("safenav ") + SAFENAV_VERSION + " (" + SAFENAV_BUILD_TYPE + ", " + __VERSION__ + ")";
}

int default_jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

std::string output_root_from_env() {
  const char* value = std::getenv(kOutputRootEnv);
  return value && *value ? value : "";
}

pipeline::ToolkitConfig load_config(const GlobalOptions& g) {
  if (g.config.empty()) return {};
  return pipeline::load_toolkit_config(g.config);
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string format_vector(const Eigen::VectorXd& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_exact(v[i]);
  return s + "]";
}

int cmd_train(const GlobalOptions& g, const TrainOptions& o, std::ostream& out, std::ostream& err) {
  auto config = load_config(g);
  train::TrainConfig tc = config.train;
  tc.method = train::method_from_string(o.method);
  if (o.episodes) tc.total_episodes = *o.episodes;
  if (o.cost_threshold) tc.cost_threshold = *o.cost_threshold;
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("train settings: ") + e.what());
  }
  const sim::TubeModel tube = sim::resolve_tube(o.tube);

  fs::path dir = o.out;
  if (dir.empty()) dir = output_root_from_env();
  if (dir.empty()) dir = "runs";
  const std::string stem = train::to_string(tc.method) + "_seed" + std::to_string(o.seed);

  train::EpisodeCallback progress;
  if (g.verbose > 0 && !g.quiet) {
    progress = [&err, total = tc.total_episodes](const train::EpisodeRecord& e) {
      if ((e.episode + 1) % 100 == 0 || e.episode + 1 == total)
        err << "episode " << e.episode + 1 << "/" << total << ": return " << format_fixed(e.episode_return, 3)
            << ", cost " << format_fixed(e.cost, 2) << ", lambda " << format_fixed(e.lambda, 3) << "\n";
    };
  }
  const auto result = train::train_policy(tube, config.env, tc, o.seed, progress);
  net::save_network(result.policy, dir / (stem + ".json"));
  write_file_atomic(dir / (stem + ".csv"), train::train_record_csv(result.record));

  out << "network: " << (dir / (stem + ".json")).string() << "\n";
  out << "record:  " << (dir / (stem + ".csv")).string() << "\n";
  out << "episodes " << result.record.episodes.size() << ", trailing success "
      << format_fixed(result.record.trailing_success_rate(), 3) << ", trailing cost "
      << format_fixed(result.record.trailing_mean_cost(), 2) << ", trailing return "
      << format_fixed(result.record.trailing_mean_return(), 3) << "\n";
  if (result.record.failed) {
    err << "safenav: error: training " << stem << " failed: " << result.record.failure << "\n";
    return kExitDomainError;
  }
  return kExitOk;
}

int cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o, std::ostream& out) {
  const auto config = load_config(g);
  const net::Mlp policy = net::load_network(o.net);
  std::vector<std::string> ids = o.tubes;
  if (ids.empty()) ids = sim::builtin_tube_ids();
  std::vector<sim::TubeModel> tubes;
  for (const auto& id : ids) tubes.push_back(sim::resolve_tube(id));

  out << pad("tube", 12) << pad("success", 10) << pad("cost", 10) << pad("distance", 10) << "return\n";
  for (std::size_t i = 0; i < tubes.size(); ++i) {
    const auto s = train::evaluate_policy(policy, tubes[i], o.episodes, config.env, o.eval_seed);
    out << pad(ids[i], 12) << pad(format_fixed(s.success_rate, 3), 10) << pad(format_fixed(s.mean_episodic_cost, 2), 10)
        << pad(format_fixed(s.mean_distance_traveled, 3), 10) << format_fixed(s.mean_return, 3) << "\n";
  }
  if (!o.trajectory.empty()) {
    const auto trace =
        train::run_greedy_episode(policy, tubes.front(), config.env, derive_seed(o.eval_seed, 0));
    write_file_atomic(o.trajectory, sim::trajectory_csv(trace.rows));
    if (!g.quiet) out << "trajectory (" << ids.front() << ", episode 0): " << o.trajectory << "\n";
  }
  return kExitOk;
}

int cmd_verify(const GlobalOptions& g, const VerifyOptions& o, std::ostream& out) {
  auto config = load_config(g).verifier;
  if (o.max_depth) config.max_depth = *o.max_depth;
  if (o.split) config.split_heuristic = verify::split_heuristic_from_string(*o.split);
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("verifier settings: ") + e.what());
  }
  const net::Mlp policy = net::load_network(o.net);
  const auto properties = pipeline::resolve_properties(o.props);
  const auto result = verify::verify_all(policy, properties, config);

  std::size_t width = 10;
  for (const auto& p : properties) width = std::max(width, p.name.size() + 2);
  for (const auto& r : result.results) {
    out << pad(r.property, width) << pad(verify::to_string(r.verdict), 9) << "subproblems " << r.stats.subproblems
        << ", depth " << r.stats.max_depth << "\n";
    if (r.witness) out << pad("", width) << "witness " << format_vector(*r.witness) << "\n";
  }
  out << "policy: " << (result.sat_count() > 0 ? "unsafe" : result.safe ? "safe" : "unresolved") << "\n";
  if (!o.out.empty()) write_file_atomic(o.out, verify::verification_to_json(result));
  return kExitOk;
}

int cmd_select(const GlobalOptions& g, const SelectOptions& o, std::ostream& out, std::ostream& err) {
  const auto config = load_config(g);
  const auto manifest = pipeline::load_manifest(o.manifest, config);
  fs::path root = o.out;
  if (root.empty()) root = output_root_from_env();

  pipeline::PipelineOptions options;
  options.jobs = g.jobs;
  if (!g.quiet) options.log = [&err](const std::string& message) { err << message << "\n"; };
  const auto result = pipeline::run_pipeline(manifest, options, root);
  out << pipeline::report_to_text(result.report);
  if (!g.quiet) err << "report written to " << result.layout.report().string() << "\n";
  if (result.failed_jobs > 0) {
    err << "safenav: error: run '" << manifest.run_id << "' finished with " << result.failed_jobs
        << " failed job(s); see the .error files under " << result.layout.root.string() << "\n";
    return kExitDomainError;
  }
  return kExitOk;
}

int cmd_render(const GlobalOptions& g, const RenderOptions& o, std::ostream& out) {
  const auto config = load_config(g);
  const sim::TubeModel tube = sim::resolve_tube(o.tube);
  const sim::Vec3 position(o.pose[0], o.pose[1], o.pose[2]);
  const sim::Vec3 forward(o.pose[3], o.pose[4], o.pose[5]);
  sim::CapsuleState state;
  try {
    state = sim::pose_capsule(tube, position, forward, config.env);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("--pose: ") + e.what());
  }
  out << sim::render_observation(sim::observe(tube, state, config.env));
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Safe navigation toolkit: train, evaluate and verify capsule navigation policies."};
  app.name("safenav");
  app.set_version_flag("--version", version_string(), "Print the build identifier and exit");
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  g.jobs = default_jobs();
  app.add_option("--config", g.config,
                 "Settings file with optional env/train/verifier sections; flags override it");
  app.add_option("-j,--jobs", g.jobs, "Worker threads for the pipeline (default: logical cores)")
      ->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", g.verbose, "More progress output on stderr (repeatable)");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  TrainOptions train_o;
  auto* train_cmd = app.add_subcommand("train", "Train one policy and write its network and record CSV");
  train_cmd->add_option("--method", train_o.method, "Training method")
      ->required()
      ->check(CLI::IsMember({"ppo", "lppo"}));
  train_cmd->add_option("--tube", train_o.tube, "Builtin tube id or tube spec file")->capture_default_str();
  train_cmd->add_option("--seed", train_o.seed, "Training seed")->capture_default_str();
  train_cmd->add_option("--out", train_o.out,
                        std::string("Output directory (default: $") + kOutputRootEnv + ", then 'runs')");
  train_cmd->add_option("--episodes", train_o.episodes, "Override train.total_episodes")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--cost-threshold", train_o.cost_threshold, "Override train.cost_threshold");

  EvaluateOptions eval_o;
  auto* eval_cmd = app.add_subcommand("evaluate", "Greedy rollouts of a stored policy");
  eval_cmd->add_option("--net", eval_o.net, "Network file")->required();
  eval_cmd->add_option("--tube", eval_o.tubes, "Tube id or spec file; repeatable (default: all builtin tubes)");
  eval_cmd->add_option("--episodes", eval_o.episodes, "Episodes per tube")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval_cmd->add_option("--eval-seed", eval_o.eval_seed, "Seed for the reset jitter")->capture_default_str();
  eval_cmd->add_option("--trajectory", eval_o.trajectory,
                       "Write the trajectory CSV of episode 0 on the first tube to this file");

  VerifyOptions verify_o;
  auto* verify_cmd = app.add_subcommand("verify", "Check a policy against safety properties");
  verify_cmd->add_option("--net", verify_o.net, "Network file")->required();
  verify_cmd->add_option("--props", verify_o.props, "Property file, or 'builtin'")->capture_default_str();
  verify_cmd->add_option("--max-depth", verify_o.max_depth, "Override verifier.max_depth")
      ->check(CLI::NonNegativeNumber);
  verify_cmd->add_option("--split", verify_o.split, "Override verifier.split_heuristic")
      ->check(CLI::IsMember({"widest_input", "smallest_margin"}));
  verify_cmd->add_option("--out", verify_o.out, "Write the result file here");

  SelectOptions select_o;
  auto* select_cmd = app.add_subcommand("select", "Run the full train/screen/evaluate/verify pipeline");
  select_cmd->add_option("--manifest", select_o.manifest, "Run manifest file")->required();
  select_cmd->add_option("--out", select_o.out,
                         std::string("Output root (overrides $") + kOutputRootEnv + " and the manifest)");

  RenderOptions render_o;
  auto* render_cmd = app.add_subcommand("render-obs", "Print the 4x4 observation at a pose");
  render_cmd->add_option("--tube", render_o.tube, "Tube id or spec file")->capture_default_str();
  render_cmd->add_option("--pose", render_o.pose, "Position x y z and forward direction fx fy fz (mm)")
      ->required()
      ->expected(6);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(g, train_o, out, err);
    if (*eval_cmd) return cmd_evaluate(g, eval_o, out);
    if (*verify_cmd) return cmd_verify(g, verify_o, out);
    if (*select_cmd) return cmd_select(g, select_o, out, err);
    if (*render_cmd) return cmd_render(g, render_o, out);
  } catch (const std::exception& e) {
    err << "safenav: error: " << e.what() << "\n";
    return kExitDomainError;
  }
  return kExitUsage;
}

}  // namespace safenav::cli
