#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "icl/rng.hpp"

namespace icl {

// Thrown when an exact-enumeration routine would exceed its term budget.
struct InstanceTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a selection vector violates the feasibility constraints.
struct InvalidSelectionVector : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Monetary income as a function of collaboration gain. Either linear with a
// nonnegative coefficient, or a tabulated nondecreasing piecewise-linear map
// (extrapolated flat outside the table).
class UtilityIncome {
 public:
  static UtilityIncome linear(double u);
  static UtilityIncome tabulated(std::vector<std::pair<double, double>> pts);

  double operator()(double z) const;
  bool is_linear() const { return linear_; }
  double coefficient() const { return u_; }

 private:
  UtilityIncome() = default;
  bool linear_ = true;
  double u_ = 1.0;
  std::vector<std::pair<double, double>> pts_;
};

// ---------------------------------------------------------------------------
// Profit accounting.

struct SystemObjectiveParams {
  double lambda = 0.0;
  // Limit regime where only collected payments matter: the objective
  // degenerates to the sum of costs and the income term is dropped.
  bool cost_only = false;
};

// Net profit of one entity for one round: zero for non-participants,
// otherwise income from the collaboration model minus income it could get
// from its own model, minus the price charged.
double participant_profit(bool is_participant, double cost,
                          double collab_income, double local_income);

// Platform objective: lambda * sum(costs) + income(collab gain), or just the
// sum of costs in the cost-only regime.
double system_profit(const SystemObjectiveParams& params,
                     const std::vector<double>& costs, double collab_income);

// Weight at which the system objective becomes proportional to the social
// welfare of the whole game: (lambda - 1) / (n_participants + 1).
double social_welfare_lambda(double lambda, int n_participants);

// Participation incentive: expected profit of joining is nonnegative.
bool incent_parti(double expected_cost, double expected_collab_income,
                  double expected_local_income);

// Platform-side incentive for keeping an entity: lambda-weighted payment plus
// its marginal contribution to the collaboration income is nonnegative.
bool incent_sys(double lambda, double expected_cost, double income_with,
                double income_without);

// ---------------------------------------------------------------------------
// Per-round ledger shared by the simulation backends.

struct RoundRecord {
  std::vector<int> participants;
  std::vector<int> active;
  // Individual gain booked per participant (realized for active entities,
  // last known otherwise).
  std::map<int, double> gains;
  double collab_gain = 0.0;
  std::map<int, double> costs;
  std::map<int, double> profits;
  double system_profit = 0.0;
};

struct GameLedger {
  double lambda = 0.0;
  bool lambda_cost_only = false;
  double utility_u = 1.0;  // linear income coefficient used for the run
  std::vector<RoundRecord> rounds;
};

// ---------------------------------------------------------------------------
// Finitely supported scalar gain distributions and equilibrium checking.

struct GainSupport {
  std::vector<double> values;
  std::vector<double> probs;
  double mean() const;
  void validate() const;
};

struct NashCandidate {
  double cost = 0.0;
  GainSupport gain;
};

// A small game: candidates with fixed participation costs and independent
// finitely-supported gains, independent activation with probability rho for
// each participant, collaboration gain equal to the average of active
// realized gains (an empty active round yields zero income).
struct NashInstance {
  std::vector<NashCandidate> candidates;
  std::vector<int> participants;  // proposed profile, indices into candidates
  double lambda = 0.0;
  bool lambda_cost_only = false;
  UtilityIncome utility = UtilityIncome::linear(1.0);
  double rho = 0.5;
  std::uint64_t enumeration_budget = 4'000'000;
};

struct NashReport {
  struct PerCandidate {
    int id = 0;
    bool in_profile = false;
    bool parti_ok = false;  // candidate-side incentive at P^(-m) + {m}
    bool sys_ok = false;    // platform-side incentive at P^(-m) + {m}
  };
  std::vector<PerCandidate> candidates;
  bool equilibrium = false;
};

// Expected income of the collaboration model when `members` all participate
// and activate independently with probability rho. Exact enumeration; throws
// InstanceTooLarge past the term budget.
double expected_collab_income(const NashInstance& inst,
                              const std::vector<int>& members);

NashReport nash_check(const NashInstance& inst);

// ---------------------------------------------------------------------------
// Activation plans.

struct SelectionVector {
  std::map<int, double> q;  // entity id -> activation probability
  double rho = 0.0;
  // Feasibility: q in [0,1], ids match the participant set, and
  // sum(q) == rho * |P| within 1e-9.
  void validate(const std::vector<int>& participants) const;
};

std::set<int> sample_active(const SelectionVector& sel,
                            const std::vector<int>& participants, Rng& rng);

struct SelectionOptimum {
  std::vector<double> q;
  double objective = 0.0;
  bool exhaustive = false;  // full lattice scan vs. pairwise ascent
};

// Maximize expected_income(q) over the lattice {q_i in step*Z, 0<=q_i<=1,
// sum(q_i) = rho*n}. Scans the whole lattice when it fits in the budget,
// otherwise runs monotone pairwise mass-transfer ascent from the uniform
// point (a lattice-local optimum either way).
SelectionOptimum optimize_selection(
    double rho, std::size_t n,
    const std::function<double(const std::vector<double>&)>& expected_income,
    std::uint64_t enumeration_budget = 200'000, double step = 0.05);

// Expected income functor for the finite-support game above: members activate
// independently with q, collaboration gain is the mean of active realized
// gains, zero income on an empty round.
std::function<double(const std::vector<double>&)> bernoulli_mean_gain_income(
    std::vector<GainSupport> gains, UtilityIncome utility,
    std::uint64_t enumeration_budget);

}  // namespace icl
