#include "icl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace icl::harness {

using nlohmann::json;

namespace {

std::string join_errors(const std::vector<std::string>& errs) {
  std::string out = "config rejected:";
  for (const auto& e : errs) {
    out += "\n  - ";
    out += e;
  }
  return out;
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::fl: return "fl";
    case Backend::pal: return "pal";
    case Backend::mab: return "mab";
    case Backend::oracle: return "oracle";
  }
  return "?";
}

// 64-bit FNV-1a over the canonical JSON dump; stable across platforms.
std::string fnv_digest(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

class FieldReader {
 public:
  FieldReader(const json& obj, std::string prefix,
              std::vector<std::string>& errs)
      : obj_(obj), prefix_(std::move(prefix)), errs_(errs) {}

  template <typename T>
  void get(const char* key, T& out) {
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      errs_.push_back(prefix_ + key + ": wrong type");
    }
    seen_.insert(key);
  }

  void range(const char* key, double value, double lo, double hi) {
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (!(value >= lo && value <= hi)) {
      std::ostringstream os;
      os << prefix_ << key << ": value " << value << " outside [" << lo
         << ", " << hi << "]";
      errs_.push_back(os.str());
    }
  }

  void finish() {
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key) && !value.is_object())
        errs_.push_back(prefix_ + key + ": unknown field");
  }

  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& errs_;
  std::set<std::string> seen_;
};

void read_fl_params(const json& p, fl::FlConfig& cfg,
                    std::vector<std::string>& errs) {
  FieldReader r(p, "params.", errs);
  r.get("rounds", cfg.rounds);
  r.get("clients", cfg.clients);
  r.get("dim", cfg.dim);
  r.get("lambda", cfg.lambda);
  r.get("local_samples", cfg.local_samples);
  r.get("noise_sigma", cfg.noise_sigma);
  r.get("local_blend", cfg.local_blend);
  r.get("byzantine_ratio", cfg.byzantine_ratio);
  r.get("incentivized", cfg.incentivized);
  r.get("belief_bias", cfg.belief_bias);
  r.get("grad_clip", cfg.grad_clip);
  r.get("utility_u", cfg.utility_u);
  r.range("local_blend", cfg.local_blend, 0.0, 1.0);
  r.range("byzantine_ratio", cfg.byzantine_ratio, 0.0, 1.0);
  std::string kind;
  r.get("byzantine", kind);
  if (kind == "random_modification")
    cfg.byzantine = fl::ByzantineKind::random_modification;
  else if (kind == "label_flip")
    cfg.byzantine = fl::ByzantineKind::label_flip;
  else if (kind == "none" || kind.empty())
    cfg.byzantine = fl::ByzantineKind::none;
  else
    errs.push_back("params.byzantine: unknown kind '" + kind + "'");
  std::string task;
  r.get("task", task);
  if (task == "logistic")
    cfg.task = fl::TaskKind::logistic;
  else if (!task.empty() && task != "quadratic")
    errs.push_back("params.task: unknown task '" + task + "'");
  if (p.contains("pricing") && p["pricing"].is_object()) {
    FieldReader pr(p["pricing"], "params.pricing.", errs);
    pr.get("theta1", cfg.pricing.theta1);
    pr.get("theta2", cfg.pricing.theta2);
    pr.get("gamma", cfg.pricing.gamma);
    pr.get("rho", cfg.pricing.rho);
    pr.get("s", cfg.pricing.s);
    pr.get("eta", cfg.pricing.eta);
    pr.range("rho", cfg.pricing.rho, 0.0, 1.0);
    pr.finish();
  }
  // Accept rho at the top level too; it is the most edited knob.
  if (p.contains("rho")) {
    r.get("rho", cfg.pricing.rho);
    r.range("rho", cfg.pricing.rho, 0.0, 1.0);
  }
  r.finish();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    errs.push_back(std::string("params: ") + e.what());
  }
}

void read_pal_params(const json& p, al::AlConfig& cfg,
                     std::vector<std::string>& errs) {
  FieldReader r(p, "params.", errs);
  r.get("entities", cfg.entities);
  r.get("subjects", cfg.subjects);
  r.get("features_per_entity", cfg.features_per_entity);
  r.get("rounds", cfg.rounds);
  r.get("u", cfg.u);
  r.get("price_coeffs", cfg.price_coeffs);
  r.get("tau", cfg.tau);
  r.get("noise_sigma", cfg.noise_sigma);
  r.get("stop_patience", cfg.stop_patience);
  r.get("collaborate", cfg.collaborate);
  r.get("lambda", cfg.lambda);
  r.range("tau", cfg.tau, 0.0, 1.0);
  std::string learner;
  r.get("learner", learner);
  if (learner == "boosted_stumps")
    cfg.learner = al::AlLearnerKind::boosted_stumps;
  else if (!learner.empty() && learner != "ridge")
    errs.push_back("params.learner: unknown learner '" + learner + "'");
  r.finish();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    errs.push_back(std::string("params: ") + e.what());
  }
}

void read_mab_params(const json& p, mab::MabConfig& cfg,
                     std::vector<std::string>& errs) {
  FieldReader r(p, "params.", errs);
  r.get("arms", cfg.arms);
  r.get("rounds", cfg.rounds);
  r.get("epsilon", cfg.epsilon);
  r.get("mu_mean", cfg.mu_mean);
  r.get("mu_sigma", cfg.mu_sigma);
  r.get("s_noise", cfg.s_noise);
  r.get("charge_nonactive_b0", cfg.charge_nonactive_b0);
  r.get("lambda", cfg.lambda);
  r.range("epsilon", cfg.epsilon, 0.0, 1.0);
  std::string schedule;
  r.get("schedule", schedule);
  if (schedule == "cube_root_decay")
    cfg.schedule = mab::EpsilonSchedule::cube_root_decay;
  else if (!schedule.empty() && schedule != "constant")
    errs.push_back("params.schedule: unknown schedule '" + schedule + "'");
  if (p.contains("pricing") && p["pricing"].is_object()) {
    FieldReader pr(p["pricing"], "params.pricing.", errs);
    pr.get("b0", cfg.pricing.b0);
    pr.get("b1", cfg.pricing.b1);
    pr.get("b2", cfg.pricing.b2);
    pr.get("kappa1", cfg.pricing.kappa1);
    pr.get("kappa2", cfg.pricing.kappa2);
    pr.finish();
  }
  r.finish();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    errs.push_back(std::string("params: ") + e.what());
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errs)
    : std::runtime_error(join_errors(errs)), errors(std::move(errs)) {}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    std::ostringstream os;
    os << origin << ":" << line << ":" << col << ": " << e.what();
    throw ConfigError({os.str()});
  }
  if (!doc.is_object()) throw ConfigError({origin + ": top level must be an object"});

  std::vector<std::string> errs;
  ExperimentConfig cfg;
  cfg.digest = fnv_digest(doc.dump());

  const std::string backend = doc.value("backend", std::string{});
  if (backend == "fl")
    cfg.backend = Backend::fl;
  else if (backend == "pal")
    cfg.backend = Backend::pal;
  else if (backend == "mab")
    cfg.backend = Backend::mab;
  else if (backend == "oracle")
    cfg.backend = Backend::oracle;
  else if (backend.empty())
    errs.push_back("backend: required field is missing");
  else
    errs.push_back("backend: unknown backend '" + backend + "'");

  if (!doc.contains("seeds")) {
    errs.push_back("seeds: required field is missing");
  } else {
    try {
      cfg.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
    } catch (const json::exception&) {
      errs.push_back("seeds: must be an array of unsigned integers");
    }
    if (cfg.seeds.empty() && doc["seeds"].is_array())
      errs.push_back("seeds: must be nonempty");
    std::set<std::uint64_t> uniq(cfg.seeds.begin(), cfg.seeds.end());
    if (uniq.size() != cfg.seeds.size())
      errs.push_back("seeds: must be distinct");
  }

  cfg.out_dir = doc.value("out_dir", cfg.out_dir);
  const std::string emit = doc.value("emit", std::string{"both"});
  if (emit == "csv")
    cfg.emit = EmitMode::csv;
  else if (emit == "json")
    cfg.emit = EmitMode::json;
  else if (emit == "both")
    cfg.emit = EmitMode::both;
  else
    errs.push_back("emit: must be one of csv, json, both");

  if (doc.contains("incentivized")) {
    try {
      cfg.incentivized = doc["incentivized"].get<bool>();
    } catch (const json::exception&) {
      errs.push_back("incentivized: wrong type");
    }
  }
  if (doc.contains("instances")) {
    try {
      cfg.oracle_instances = doc["instances"].get<int>();
    } catch (const json::exception&) {
      errs.push_back("instances: wrong type");
    }
    if (cfg.oracle_instances < 1) errs.push_back("instances: must be >= 1");
  }

  const json params = doc.value("params", json::object());
  switch (cfg.backend) {
    case Backend::fl: read_fl_params(params, cfg.fl_params, errs); break;
    case Backend::pal: read_pal_params(params, cfg.pal_params, errs); break;
    case Backend::mab: read_mab_params(params, cfg.mab_params, errs); break;
    case Backend::oracle: break;
  }

  if (!errs.empty()) throw ConfigError(std::move(errs));
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({path + ": cannot open file"});
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

namespace {

bool ledger_identity_holds(const GameLedger& ledger) {
  for (const auto& rec : ledger.rounds) {
    double sum_costs = 0.0, sum_profits = 0.0, sum_um = 0.0;
    for (int id : rec.participants) {
      sum_costs += rec.costs.at(id);
      sum_profits += rec.profits.at(id);
      sum_um += ledger.utility_u * rec.gains.at(id);
    }
    const double ua = ledger.utility_u * rec.collab_gain;
    const double n = static_cast<double>(rec.participants.size());
    const double lhs = rec.system_profit + sum_profits;
    const double rhs =
        (ledger.lambda - 1.0) * sum_costs + (n + 1.0) * ua - sum_um;
    if (std::abs(lhs - rhs) >= 1e-9) return false;
  }
  return true;
}

struct SeedOutput {
  SeedResult result;
  std::map<std::string, bool> checks;
  std::string csv;
};

SeedOutput run_fl_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  fl::FlConfig params = cfg.fl_params;
  params.incentivized = cfg.incentivized && params.incentivized;
  const auto r = fl::run_fl(params, seed);
  SeedOutput out;
  out.result.seed = seed;
  out.result.final_gain = r.final_collab_gain;
  std::ostringstream csv;
  csv << "round,n_participants,n_active,collab_gain,system_profit,"
         "sum_costs,theta1,theta2\n";
  for (std::size_t t = 0; t < r.rounds.size(); ++t) {
    const auto& s = r.rounds[t];
    out.result.system_profit += s.system_profit;
    out.result.balance += s.sum_costs;
    csv << t << ',' << s.n_participants << ',' << s.n_active << ','
        << format_double(s.collab_gain) << ','
        << format_double(s.system_profit) << ','
        << format_double(s.sum_costs) << ',' << format_double(s.theta1)
        << ',' << format_double(s.theta2) << '\n';
  }
  out.csv = csv.str();
  out.checks["profit_identity"] = ledger_identity_holds(r.ledger);
  return out;
}

SeedOutput run_pal_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto r = al::run_pal(cfg.pal_params, seed);
  SeedOutput out;
  out.result.seed = seed;
  double err_sum = 0.0;
  for (const auto& curve : r.test_error) err_sum += curve.back();
  // Terminal metric oriented so that larger is better across backends.
  out.result.final_gain =
      -err_sum / static_cast<double>(r.test_error.size());
  bool zero_balance = true;
  std::ostringstream csv;
  csv << "round,pair_a,pair_b,entity_id,test_error,cost\n";
  for (std::size_t t = 0; t < r.ledger.rounds.size(); ++t) {
    const auto& rec = r.ledger.rounds[t];
    double balance = 0.0;
    for (const auto& [id, cost] : rec.costs) balance += cost;
    if (balance != 0.0) zero_balance = false;
    out.result.system_profit += rec.system_profit;
    out.result.balance += balance;
    for (int i = 0; i < cfg.pal_params.entities; ++i) {
      int pa = -1, pb = -1;
      for (const auto& [a, b] : r.pairings[t])
        if (a == i || b == i) {
          pa = a;
          pb = b;
        }
      const auto cost_it = rec.costs.find(i);
      csv << (t + 1) << ',' << pa << ',' << pb << ',' << i << ','
          << format_double(r.test_error[static_cast<std::size_t>(i)][t + 1])
          << ','
          << format_double(cost_it == rec.costs.end() ? 0.0
                                                      : cost_it->second)
          << '\n';
    }
  }
  out.csv = csv.str();
  out.checks["zero_balance_exact"] = zero_balance;
  out.checks["profit_identity"] = ledger_identity_holds(r.ledger);
  return out;
}

SeedOutput run_mab_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto r = mab::run_mab(cfg.mab_params, seed, cfg.incentivized);
  SeedOutput out;
  out.result.seed = seed;
  out.result.final_gain = r.cum_reward;
  out.result.balance = r.cum_balance;
  std::ostringstream csv;
  csv << "round,n_participants,active_arm,reward,cum_reward,cum_balance\n";
  for (std::size_t t = 0; t < r.rounds.size(); ++t) {
    const auto& s = r.rounds[t];
    csv << (t + 1) << ',' << s.n_participants << ',' << s.active << ','
        << format_double(s.reward) << ',' << format_double(s.cum_reward)
        << ',' << format_double(s.cum_balance) << '\n';
  }
  for (const auto& rec : r.ledger.rounds)
    out.result.system_profit += rec.system_profit;
  out.csv = csv.str();
  out.checks["profit_identity"] = ledger_identity_holds(r.ledger);
  if (cfg.incentivized)
    out.checks["balance_nonnegative"] = r.cum_balance >= 0.0;
  return out;
}

// Independent expected-income enumeration for the oracle backend: recurse
// over each member's support and activation instead of the library's
// bitmask-product scan.
double oracle_income(const NashInstance& inst, const std::vector<int>& members,
                     std::size_t idx, double active_sum, int active_count,
                     double prob) {
  if (idx == members.size()) {
    if (active_count == 0) return 0.0;
    return prob * inst.utility(active_sum / active_count);
  }
  const NashCandidate& c = inst.candidates[members[idx]];
  double total = oracle_income(inst, members, idx + 1, active_sum,
                               active_count, prob * (1.0 - inst.rho));
  for (std::size_t i = 0; i < c.gain.values.size(); ++i)
    total += oracle_income(inst, members, idx + 1,
                           active_sum + c.gain.values[i], active_count + 1,
                           prob * inst.rho * c.gain.probs[i]);
  return total;
}

bool oracle_equilibrium(const NashInstance& inst) {
  std::set<int> profile(inst.participants.begin(), inst.participants.end());
  for (int m = 0; m < static_cast<int>(inst.candidates.size()); ++m) {
    std::vector<int> without;
    for (int id : profile)
      if (id != m) without.push_back(id);
    std::vector<int> with = without;
    with.push_back(m);
    const NashCandidate& cand = inst.candidates[m];
    const double inc_with = oracle_income(inst, with, 0, 0.0, 0, 1.0);
    const double inc_without = oracle_income(inst, without, 0, 0.0, 0, 1.0);
    double own = 0.0;
    for (std::size_t i = 0; i < cand.gain.values.size(); ++i)
      own += cand.gain.probs[i] * inst.utility(cand.gain.values[i]);
    const bool parti = cand.cost <= inc_with - own;
    const bool sys = inst.lambda_cost_only
                         ? cand.cost >= 0.0
                         : inst.lambda * cand.cost + inc_with - inc_without >=
                               0.0;
    if ((parti && sys) != (profile.count(m) > 0)) return false;
  }
  return true;
}

NashInstance random_instance(Rng& rng) {
  NashInstance inst;
  const int n = 1 + static_cast<int>(rng.below(4));
  for (int i = 0; i < n; ++i) {
    NashCandidate c;
    c.cost = rng.uniform(-0.5, 0.5);
    const int k = 1 + static_cast<int>(rng.below(3));
    double psum = 0.0;
    for (int j = 0; j < k; ++j) {
      c.gain.values.push_back(rng.uniform(-1.0, 2.0));
      const double p = rng.uniform(0.1, 1.0);
      c.gain.probs.push_back(p);
      psum += p;
    }
    for (double& p : c.gain.probs) p /= psum;
    inst.candidates.push_back(c);
  }
  for (int i = 0; i < n; ++i)
    if (rng.uniform() < 0.5) inst.participants.push_back(i);
  inst.lambda = rng.uniform(0.0, 2.0);
  inst.rho = rng.uniform(0.1, 0.9);
  return inst;
}

SeedOutput run_oracle_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  int agree = 0;
  std::ostringstream csv;
  csv << "instance,library_equilibrium,oracle_equilibrium,agree\n";
  for (int i = 0; i < cfg.oracle_instances; ++i) {
    const NashInstance inst = random_instance(rng);
    const bool lib = nash_check(inst).equilibrium;
    const bool ora = oracle_equilibrium(inst);
    agree += lib == ora;
    csv << i << ',' << lib << ',' << ora << ',' << (lib == ora) << '\n';
  }
  SeedOutput out;
  out.result.seed = seed;
  out.result.final_gain =
      static_cast<double>(agree) / cfg.oracle_instances;
  out.csv = csv.str();
  out.checks["nash_agreement"] = agree == cfg.oracle_instances;
  return out;
}

SeedOutput run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  switch (cfg.backend) {
    case Backend::fl: return run_fl_seed(cfg, seed);
    case Backend::pal: return run_pal_seed(cfg, seed);
    case Backend::mab: return run_mab_seed(cfg, seed);
    case Backend::oracle: return run_oracle_seed(cfg, seed);
  }
  throw std::logic_error("unreachable backend");
}

}  // namespace

bool RunSummary::all_checks_pass() const {
  for (const auto& [name, ok] : checks)
    if (!ok) return false;
  return true;
}

RunSummary run_batch(const ExperimentConfig& config, int jobs, bool quiet) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);

  const std::size_t n = config.seeds.size();
  std::vector<SeedOutput> outputs(n);
  std::vector<std::exception_ptr> failures(n);
  std::atomic<std::size_t> next{0};

  const int workers =
      std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        outputs[i] = run_seed(config, config.seeds[i]);
        if (config.emit != EmitMode::json) {
          std::ostringstream name;
          name << backend_name(config.backend) << "_seed_"
               << config.seeds[i] << ".csv";
          std::ofstream f(fs::path(config.out_dir) / name.str(),
                          std::ios::binary);
          f << outputs[i].csv;
        }
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!failures[i]) continue;
    try {
      std::rethrow_exception(failures[i]);
    } catch (const std::exception& e) {
      throw std::runtime_error("seed " + std::to_string(config.seeds[i]) +
                               ": " + e.what());
    }
  }

  RunSummary summary;
  summary.backend = config.backend;
  summary.config_digest = config.digest;
  double sum = 0.0;
  for (const auto& o : outputs) {
    summary.per_seed.push_back(o.result);
    sum += o.result.final_gain;
    for (const auto& [name, ok] : o.checks) {
      const auto it = summary.checks.find(name);
      summary.checks[name] = (it == summary.checks.end() || it->second) && ok;
    }
  }
  summary.aggregate_mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto& o : outputs) {
    const double d = o.result.final_gain - summary.aggregate_mean;
    var += d * d;
  }
  summary.aggregate_stddev =
      n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;

  if (config.emit != EmitMode::csv) {
    std::ofstream f(fs::path(config.out_dir) / "summary.json",
                    std::ios::binary);
    f << summary_to_json(summary) << '\n';
  }
  if (!quiet) {
    std::printf("%s: %zu seeds, mean %s, checks %s\n",
                backend_name(config.backend), n,
                format_double(summary.aggregate_mean).c_str(),
                summary.all_checks_pass() ? "pass" : "FAIL");
  }
  return summary;
}

std::string summary_to_json(const RunSummary& summary) {
  json doc;
  doc["backend"] = backend_name(summary.backend);
  doc["config_digest"] = summary.config_digest;
  doc["per_seed"] = json::array();
  for (const auto& s : summary.per_seed) {
    json row;
    row["seed"] = s.seed;
    row["final_gain"] = s.final_gain;
    row["system_profit"] = s.system_profit;
    row["balance"] = s.balance;
    doc["per_seed"].push_back(row);
  }
  doc["aggregate"] = {{"mean", summary.aggregate_mean},
                      {"stddev", summary.aggregate_stddev}};
  doc["checks"] = summary.checks;
  return doc.dump(2);
}

RunSummary summary_from_json(const std::string& text) {
  const json doc = json::parse(text);
  RunSummary s;
  const std::string backend = doc.at("backend");
  if (backend == "fl") s.backend = Backend::fl;
  else if (backend == "pal") s.backend = Backend::pal;
  else if (backend == "mab") s.backend = Backend::mab;
  else s.backend = Backend::oracle;
  s.config_digest = doc.value("config_digest", std::string{});
  for (const auto& row : doc.at("per_seed")) {
    SeedResult r;
    r.seed = row.at("seed");
    r.final_gain = row.at("final_gain");
    r.system_profit = row.value("system_profit", 0.0);
    r.balance = row.value("balance", 0.0);
    s.per_seed.push_back(r);
  }
  s.aggregate_mean = doc.at("aggregate").at("mean");
  s.aggregate_stddev = doc.at("aggregate").at("stddev");
  if (doc.contains("checks"))
    s.checks = doc["checks"].get<std::map<std::string, bool>>();
  return s;
}

CompareReport compare_runs(const RunSummary& a, const RunSummary& b) {
  if (a.per_seed.size() != b.per_seed.size())
    throw SeedMismatch("summaries cover different numbers of seeds");
  CompareReport report;
  double wins = 0.0;
  for (std::size_t i = 0; i < a.per_seed.size(); ++i) {
    if (a.per_seed[i].seed != b.per_seed[i].seed)
      throw SeedMismatch("summaries cover different seed lists");
    const double d = a.per_seed[i].final_gain - b.per_seed[i].final_gain;
    report.seeds.push_back(a.per_seed[i].seed);
    report.deltas.push_back(d);
    wins += d > 0.0 ? 1.0 : (d == 0.0 ? 0.5 : 0.0);
  }
  report.win_fraction = wins / static_cast<double>(report.deltas.size());
  return report;
}

std::string compare_to_json(const CompareReport& report) {
  json doc;
  doc["seeds"] = report.seeds;
  doc["deltas"] = report.deltas;
  doc["win_fraction"] = report.win_fraction;
  return doc.dump(2);
}

}  // namespace icl::harness
