// Experiment driver: `icl run` executes a config across seeds, `icl compare`
// diffs two summaries, `icl oracle` spot-checks the equilibrium verifier.
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "icl/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;

icl::harness::RunSummary load_summary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return icl::harness::summary_from_json(buf.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incentivized collaborative learning simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seeds_csv;
  bool quiet = false;
  int jobs = 1;
  auto* run = app.add_subcommand("run", "run a config across its seeds");
  run->add_option("--config", config_path, "config file (JSON)")->required();
  run->add_option("--out", out_dir, "output directory override");
  run->add_option("--seeds", seeds_csv, "comma-separated seed override");
  run->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  run->add_flag("--quiet", quiet, "suppress the one-line report");

  std::string summary_a, summary_b;
  auto* compare = app.add_subcommand("compare", "paired-seed comparison");
  compare->add_option("--a", summary_a, "first summary.json")->required();
  compare->add_option("--b", summary_b, "second summary.json")->required();

  int instances = 200;
  std::uint64_t oracle_seed = 1;
  std::string oracle_out;
  auto* oracle =
      app.add_subcommand("oracle", "equilibrium verifier agreement check");
  oracle->add_option("--instances", instances, "random instances to draw");
  oracle->add_option("--seed", oracle_seed, "instance-generator seed");
  oracle->add_option("--out", oracle_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      icl::harness::ExperimentConfig cfg;
      try {
        cfg = icl::harness::load_config(config_path);
      } catch (const icl::harness::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitConfigError;
      }
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (!seeds_csv.empty()) {
        cfg.seeds.clear();
        std::stringstream ss(seeds_csv);
        std::string tok;
        while (std::getline(ss, tok, ','))
          cfg.seeds.push_back(std::stoull(tok));
        if (cfg.seeds.empty()) {
          std::fprintf(stderr, "--seeds: no seeds given\n");
          return kExitConfigError;
        }
      }
      const auto summary = icl::harness::run_batch(cfg, jobs, quiet);
      return summary.all_checks_pass() ? kExitOk : kExitCheckFailed;
    }
    if (compare->parsed()) {
      const auto report =
          icl::harness::compare_runs(load_summary(summary_a),
                                     load_summary(summary_b));
      std::printf("%s\n", icl::harness::compare_to_json(report).c_str());
      return kExitOk;
    }
    // oracle
    icl::harness::ExperimentConfig cfg;
    cfg.backend = icl::harness::Backend::oracle;
    cfg.seeds = {oracle_seed};
    cfg.oracle_instances = instances;
    cfg.out_dir = oracle_out.empty() ? "out" : oracle_out;
    const auto summary = icl::harness::run_batch(cfg, 1, true);
    std::printf("agreement %s over %d instances\n",
                icl::harness::format_double(summary.aggregate_mean).c_str(),
                instances);
    return summary.all_checks_pass() ? kExitOk : kExitCheckFailed;
  } catch (const icl::harness::SeedMismatch& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitRuntimeError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntimeError;
  }
}
