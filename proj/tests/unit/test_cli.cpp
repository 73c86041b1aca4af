#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "safenav/common/io.hpp"
#include "safenav/netcore/serialization.hpp"
#include "safenav/reluverify/property.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "safenav");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = safenav::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string net(const std::string& name) { return testing::data_path("nets/" + name).string(); }

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

// Small settings so training and evaluation finish quickly.
fs::path write_fast_config(const fs::path& dir) {
  const fs::path p = dir / "fast.json";
  safenav::write_file_atomic(
      p, R"({"env": {"horizon": 60}, "train": {"rollout_steps": 64, "minibatch_size": 32, "epochs_per_update": 1}})");
  return p;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run_cli({}).code == safenav::cli::kExitUsage);
  CHECK(run_cli({"frobnicate"}).code == safenav::cli::kExitUsage);
  CHECK(run_cli({"verify", "--net", net("canonical_16-2-5.json"), "--bogus"}).code == safenav::cli::kExitUsage);
  CHECK(run_cli({"train"}).code == safenav::cli::kExitUsage);
  CHECK(run_cli({"train", "--method", "sac"}).code == safenav::cli::kExitUsage);
  CHECK(run_cli({"render-obs", "--pose", "1", "2", "3"}).code == safenav::cli::kExitUsage);
  CHECK(run_cli({"-j", "0", "render-obs", "--pose", "0", "0", "10", "0", "0", "1"}).code ==
        safenav::cli::kExitUsage);
}

TEST_CASE("help and version exit with 0") {
  const auto help = run_cli({"--help"});
  CHECK(help.code == 0);
  CHECK(contains(help.out, "select"));
  const auto v = run_cli({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.rfind("safenav ", 0) == 0);
}

TEST_CASE("domain errors exit with 1 and name the file") {
  const auto missing = run_cli({"select", "--manifest", "/no/such/run.json"});
  CHECK(missing.code == safenav::cli::kExitDomainError);
  CHECK(contains(missing.err, "/no/such/run.json"));

  const auto bad_net = run_cli({"verify", "--net", "/no/such/net.json"});
  CHECK(bad_net.code == safenav::cli::kExitDomainError);
  CHECK(contains(bad_net.err, "/no/such/net.json"));

  const auto bad_tube = run_cli({"render-obs", "--tube", "tube9", "--pose", "0", "0", "10", "0", "0", "1"});
  CHECK(bad_tube.code == safenav::cli::kExitDomainError);
  CHECK(contains(bad_tube.err, "tube9"));

  const auto bad_pose = run_cli({"render-obs", "--pose", "0", "0", "10", "0", "0", "0"});
  CHECK(bad_pose.code == safenav::cli::kExitDomainError);

  const auto bad_config = run_cli({"--config", "/no/such/cfg.json", "render-obs", "--pose", "0", "0", "10", "0", "0", "1"});
  CHECK(bad_config.code == safenav::cli::kExitDomainError);
  CHECK(contains(bad_config.err, "/no/such/cfg.json"));
}

TEST_CASE("verify reports verdicts and a witness") {
  const auto sat = run_cli({"verify", "--net", net("constant_violation.json")});
  CHECK(sat.code == 0);
  CHECK(contains(sat.out, "theta_up"));
  CHECK(contains(sat.out, "SAT"));
  CHECK(contains(sat.out, "witness ["));
  CHECK(contains(sat.out, "policy: unsafe"));

  const auto safe = run_cli({"verify", "--net", net("constant_safe.json"), "--split", "smallest_margin"});
  CHECK(safe.code == 0);
  CHECK(contains(safe.out, "policy: safe"));
  CHECK_FALSE(contains(safe.out, "witness"));

  testing::TempDir dir("cli-verify");
  const auto out_file = dir.path() / "v.json";
  const auto props = (dir.path() / "right.json").string();
  safenav::write_file_atomic(props, safenav::verify::properties_to_json({safenav::verify::builtin_properties()[3]}));
  const auto unresolved = run_cli({"verify", "--net", net("canonical_16-2-5.json"), "--props", props, "--max-depth",
                                   "3", "--out", out_file.string()});
  CHECK(unresolved.code == 0);
  CHECK(contains(unresolved.out, "UNKNOWN"));
  CHECK(contains(unresolved.out, "policy: unresolved"));
  CHECK(fs::exists(out_file));

  CHECK(run_cli({"verify", "--net", net("constant_safe.json"), "--max-depth", "0"}).code != 0);
}

TEST_CASE("render-obs is left-right symmetric on the centerline") {
  const auto r = run_cli({"render-obs", "--tube", "tube0", "--pose", "0", "0", "100", "0", "0", "1"});
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::vector<double> v;
    double x;
    while (cells >> x) v.push_back(x);
    if (v.size() != 4) continue;
    ++rows;
    CHECK(v[0] == doctest::Approx(v[3]).epsilon(1e-9));
    CHECK(v[1] == doctest::Approx(v[2]).epsilon(1e-9));
    CHECK(v[0] >= v[1]);
  }
  CHECK(rows == 4);
}

TEST_CASE("train then evaluate") {
  testing::TempDir dir("cli-train");
  const auto config = write_fast_config(dir.path()).string();
  const auto t = run_cli({"--config", config, "-q", "train", "--method", "lppo", "--tube", "tube0", "--seed", "4",
                          "--episodes", "3", "--out", dir.path().string()});
  REQUIRE(t.code == 0);
  const auto net_file = dir.path() / "lppo_seed4.json";
  CHECK(fs::exists(net_file));
  CHECK(fs::exists(dir.path() / "lppo_seed4.csv"));
  CHECK(safenav::net::load_network(net_file).input_width() == 16);

  const auto traj = dir.path() / "traj.csv";
  const auto e = run_cli({"--config", config, "evaluate", "--net", net_file.string(), "--tube", "tube0", "--tube",
                          "tube1", "--episodes", "2", "--trajectory", traj.string()});
  REQUIRE(e.code == 0);
  CHECK(contains(e.out, "tube0"));
  CHECK(contains(e.out, "tube1"));
  CHECK_FALSE(contains(e.out, "tube2"));
  CHECK(fs::exists(traj));

  // Same seed, same bytes.
  testing::TempDir again("cli-train-again");
  REQUIRE(run_cli({"--config", config, "-q", "train", "--method", "lppo", "--tube", "tube0", "--seed", "4",
                   "--episodes", "3", "--out", again.path().string()})
              .code == 0);
  CHECK(safenav::read_text_file(net_file) == safenav::read_text_file(again.path() / "lppo_seed4.json"));
}

TEST_CASE("output root from the environment") {
  testing::TempDir dir("cli-env");
  const auto config = write_fast_config(dir.path()).string();
  ::setenv(safenav::cli::kOutputRootEnv, dir.path().c_str(), 1);
  const auto t = run_cli({"--config", config, "-q", "train", "--method", "ppo", "--tube", "tube0", "--episodes", "2"});
  ::unsetenv(safenav::cli::kOutputRootEnv);
  CHECK(t.code == 0);
  CHECK(fs::exists(dir.path() / "ppo_seed0.json"));
}

TEST_CASE("select writes the report and honours the output root") {
  testing::TempDir dir("cli-select");
  const auto manifest = dir.path() / "m.json";
  safenav::write_file_atomic(manifest, R"({
    "run_id": "clirun", "seeds": [0], "train_tube": "tube0", "eval_tubes": ["tube0"],
    "top_m": 1, "eval_episodes": 1, "output_dir": "ignored",
    "env": {"horizon": 60},
    "train": {"total_episodes": 2, "rollout_steps": 64, "minibatch_size": 32, "epochs_per_update": 1},
    "verifier": {"max_depth": 4, "max_subproblems": 500}
  })");
  const auto env_root = dir.path() / "from_env";
  ::setenv(safenav::cli::kOutputRootEnv, env_root.c_str(), 1);
  const auto viaenv = run_cli({"-q", "select", "--manifest", manifest.string()});
  CHECK(viaenv.code == 0);
  CHECK(fs::exists(env_root / "clirun" / "report" / "report.txt"));

  const auto flag_root = dir.path() / "from_flag";
  const auto viaflag = run_cli({"select", "--manifest", manifest.string(), "--out", flag_root.string()});
  ::unsetenv(safenav::cli::kOutputRootEnv);
  CHECK(viaflag.code == 0);
  CHECK(contains(viaflag.out, "Model selection report: clirun"));
  CHECK(contains(viaflag.err, "stage 1"));
  CHECK(safenav::read_text_file(flag_root / "clirun" / "report" / "report.txt") == viaflag.out);
  CHECK_FALSE(fs::exists(dir.path() / "ignored"));
}
