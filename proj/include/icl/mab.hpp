#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "icl/mechanism.hpp"
#include "icl/rng.hpp"

namespace icl::mab {

// Piecewise participation price: the baseline b0, a surcharge b1 below
// kappa1, and a reward b2 above kappa2. Boundary values pay the baseline.
struct MabPricing {
  double b0 = 1.0;
  double b1 = 5.0;
  double b2 = 10.0;
  double kappa1 = 2.0;
  double kappa2 = 4.0;
  void validate() const;
};

double mab_cost(double z, const MabPricing& pricing);

// Centered Gaussian CDF with scale s.
double gaussian_cdf(double x, double s);

// Expected net benefit of participating for an arm with private mean mu_m:
// expected selection income minus the smoothed expected price.
bool participation_condition(double mu_m,
                             const std::vector<double>& empirical_means,
                             double epsilon, const MabPricing& pricing,
                             double s_noise);

// Epsilon-greedy over the participant set; empty set selects nobody.
std::optional<int> select_arm(const std::vector<int>& participants,
                              const std::vector<double>& empirical_means,
                              double epsilon, Rng& rng);

// mu1 - mu - expected price of an arm with mean mu; the design quantity
// whose monotonicity yields threshold-structured participation.
double profit_performance(double mu, double mu1, const MabPricing& pricing,
                          double s_noise);

enum class EpsilonSchedule { constant, cube_root_decay };

struct MabConfig {
  int arms = 50;
  int rounds = 150;
  double epsilon = 0.1;
  EpsilonSchedule schedule = EpsilonSchedule::constant;
  MabPricing pricing;
  double mu_mean = 3.0;   // arm means drawn from N(mu_mean, mu_sigma^2)
  double mu_sigma = 1.0;
  double s_noise = 1.0;   // Gaussian reward noise scale
  // Interpretation switch: non-active participants pay the baseline b0.
  bool charge_nonactive_b0 = true;
  double lambda = 0.1;    // ledger bookkeeping weight
  void validate() const;
};

struct MabRoundStats {
  int n_participants = 0;
  int active = -1;  // -1 = empty round
  double reward = 0.0;
  double cum_reward = 0.0;
  double cum_balance = 0.0;
};

struct MabRunResult {
  GameLedger ledger;
  std::vector<MabRoundStats> rounds;
  double cum_reward = 0.0;
  double cum_balance = 0.0;
  std::vector<double> mu;              // true arm means drawn for the run
  std::vector<double> empirical_means; // final estimates
};

// T pricing rounds after a one-pull-per-arm burn-in pass (burn-in rewards
// are excluded from the cumulative totals). Reward noise and selection
// draws come from per-round streams shared between the incentivized and
// baseline modes, so paired seeds are directly comparable.
MabRunResult run_mab(const MabConfig& config, std::uint64_t seed,
                     bool incentivized);

}  // namespace icl::mab
