#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "icl/al.hpp"
#include "icl/fl.hpp"
#include "icl/mab.hpp"
#include "icl/mechanism.hpp"

namespace icl::harness {

enum class Backend { fl, pal, mab, oracle };

// Config file problems, split so the CLI can map them to exit codes.
// `errors` carries every problem found, not only the first.
struct ConfigError : std::runtime_error {
  explicit ConfigError(std::vector<std::string> errs);
  std::vector<std::string> errors;
};

struct SeedMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class EmitMode { csv, json, both };

struct ExperimentConfig {
  Backend backend = Backend::mab;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "out";
  EmitMode emit = EmitMode::both;

  // Backend parameter blocks; only the one matching `backend` is used.
  fl::FlConfig fl_params;
  al::AlConfig pal_params;
  mab::MabConfig mab_params;
  bool incentivized = true;   // fl / mab comparison switch
  int oracle_instances = 200; // oracle backend batch size

  // Canonical digest of the parsed config, for summary provenance.
  std::string digest;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin);

struct SeedResult {
  std::uint64_t seed = 0;
  double final_gain = 0.0;      // backend terminal metric, higher is better
  double system_profit = 0.0;   // cumulative over rounds
  double balance = 0.0;         // cumulative cost balance
};

struct RunSummary {
  Backend backend = Backend::mab;
  std::string config_digest;
  std::vector<SeedResult> per_seed;
  double aggregate_mean = 0.0;
  double aggregate_stddev = 0.0;
  std::map<std::string, bool> checks;
  bool all_checks_pass() const;
};

// Executes every seed (optionally on `jobs` threads), writes one per-round
// CSV per seed plus summary.json under config.out_dir, and returns the
// summary. All numeric output uses shortest round-trip formatting, so a
// repeated invocation reproduces the files byte for byte.
RunSummary run_batch(const ExperimentConfig& config, int jobs = 1,
                     bool quiet = true);

std::string summary_to_json(const RunSummary& summary);
RunSummary summary_from_json(const std::string& text);

struct CompareReport {
  std::vector<std::uint64_t> seeds;
  std::vector<double> deltas;  // a minus b on final_gain
  double win_fraction = 0.0;   // ties count half
};

CompareReport compare_runs(const RunSummary& a, const RunSummary& b);
std::string compare_to_json(const CompareReport& report);

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

}  // namespace icl::harness
