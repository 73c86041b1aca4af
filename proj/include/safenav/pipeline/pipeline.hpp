#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "safenav/crltrain/trainer.hpp"
#include "safenav/pipeline/manifest.hpp"
#include "safenav/reluverify/property.hpp"
#include "safenav/reluverify/sensitivity.hpp"
#include "safenav/reluverify/verifier.hpp"

namespace safenav::pipeline {

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// <output>/<run_id>/{nets,records,verification,report}
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path nets() const { return root / "nets"; }
  std::filesystem::path records() const { return root / "records"; }
  std::filesystem::path verification() const { return root / "verification"; }
  std::filesystem::path report() const { return root / "report"; }

  std::filesystem::path net_file(train::Method method, std::uint64_t seed) const;
  std::filesystem::path record_file(train::Method method, std::uint64_t seed) const;
  std::filesystem::path train_error_file(train::Method method, std::uint64_t seed) const;
  std::filesystem::path eval_file(train::Method method, std::uint64_t seed) const;
  std::filesystem::path verification_file(train::Method method, std::uint64_t seed) const;
  std::filesystem::path verification_error_file(train::Method method, std::uint64_t seed) const;

  void create_directories() const;
};

// "<method>-seed<k>"
std::string model_id(train::Method method, std::uint64_t seed);

struct EvalCell {
  double success_rate = 0.0;
  double mean_episodic_cost = 0.0;
  double mean_distance_traveled = 0.0;
  double mean_return = 0.0;
};

enum class SafetyClass { kSafe, kUnsafe, kUnresolved };

struct PolicyRecord {
  train::Method method = train::Method::kPpo;
  std::uint64_t seed = 0;
  std::string network_file;  // relative to the run directory
  double trailing_success_rate = 0.0;
  double trailing_mean_cost = 0.0;
  double trailing_mean_return = 0.0;
  bool failed = false;
  std::string failure;

  // One entry per evaluation tube id; missing when that evaluation failed.
  std::map<std::string, std::optional<EvalCell>> evaluation;
  bool evaluation_failed = false;

  std::vector<verify::VerificationResult> verdicts;
  bool verification_failed = false;
  std::string verification_failure;

  SafetyClass safety() const;
  // True iff every verdict is UNSAT.
  bool safe() const { return safety() == SafetyClass::kSafe; }
};

// Hook run before every job; tests throw from it to inject faults.
// stage is "train", "evaluate" or "verify".
using JobHook = std::function<void(const std::string& stage, train::Method method, std::uint64_t seed)>;
using Logger = std::function<void(const std::string& message)>;

struct PipelineOptions {
  int jobs = 1;
  JobHook before_job;
  Logger log;
};

struct StageOutcome {
  int failed_jobs = 0;
  int skipped_jobs = 0;  // already complete on disk
};

// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

std::vector<PolicyRecord> run_training(const RunManifest& manifest, train::Method method,
                                       const RunLayout& layout, const PipelineOptions& options,
                                       StageOutcome& outcome);

// Successful records by trailing success (desc), mean cost (asc), seed (asc);
// at most top_m of them.
std::vector<PolicyRecord> screen_policies(const std::vector<PolicyRecord>& records, int top_m,
                                          const Logger& log = {});

void run_evaluation(std::vector<PolicyRecord>& subset, const std::vector<sim::TubeModel>& tubes,
                    int episodes, const sim::EnvConfig& env, std::uint64_t eval_seed,
                    const RunLayout& layout, const PipelineOptions& options, StageOutcome& outcome);

void run_verification(std::vector<PolicyRecord>& subset,
                      const std::vector<verify::SafetyProperty>& properties,
                      const verify::VerifierConfig& config, const RunLayout& layout,
                      const PipelineOptions& options, StageOutcome& outcome);

struct SensitivityDemo {
  std::string model;
  std::string property;
  verify::SensitivityPair pair;
};

struct MethodReport {
  train::Method method = train::Method::kPpo;
  std::vector<PolicyRecord> trained;   // every seed, ascending
  std::vector<PolicyRecord> screened;  // screening order
  std::map<std::string, int> sat_counts;
  std::map<std::string, int> unknown_counts;
  std::vector<std::string> safe_models;
  int unsafe_count = 0;
  int unresolved_count = 0;
  std::vector<std::uint64_t> failed_seeds;
  std::vector<SensitivityDemo> sensitivity;
  // Mean over successful seeds, indexed by episode.
  std::vector<double> mean_return_curve;
  std::vector<double> mean_cost_curve;
};

struct SelectionReport {
  std::string run_id;
  std::string train_tube;
  std::vector<std::string> tubes;
  std::vector<std::string> properties;
  double cost_threshold = 500.0;
  std::vector<MethodReport> methods;
};

// Aggregates records into the report; computes a sensitivity pair for every
// SAT witness using the stored networks under `layout`.
MethodReport build_method_report(train::Method method, std::vector<PolicyRecord> trained,
                                 std::vector<PolicyRecord> screened,
                                 const std::vector<verify::SafetyProperty>& properties,
                                 const RunLayout& layout);

// report.json, report.txt, returns.csv, costs.csv in `dir`. Byte-stable: no
// timings and no absolute paths.
void emit_report(const SelectionReport& report, const std::filesystem::path& dir);
std::string report_to_json(const SelectionReport& report);
std::string report_to_text(const SelectionReport& report);
std::string returns_csv(const SelectionReport& report);
std::string costs_csv(const SelectionReport& report);

struct PipelineResult {
  SelectionReport report;
  RunLayout layout;
  int failed_jobs = 0;
};

// S1-S4 for every method of the manifest, then the report. `output_root`
// overrides manifest.output_dir when non-empty.
PipelineResult run_pipeline(const RunManifest& manifest, const PipelineOptions& options,
                            const std::filesystem::path& output_root = {});

std::vector<verify::SafetyProperty> resolve_properties(const std::string& spec);

}  // namespace safenav::pipeline
