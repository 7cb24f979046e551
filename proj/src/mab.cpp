#include "icl/mab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace icl::mab {

void MabPricing::validate() const {
  if (!(b0 >= 0.0 && b1 >= 0.0 && b2 >= 0.0))
    throw std::invalid_argument("pricing levels b0, b1, b2 must be >= 0");
  if (!(kappa1 <= kappa2))
    throw std::invalid_argument("kappa1 must not exceed kappa2");
}

double mab_cost(double z, const MabPricing& pricing) {
  double c = pricing.b0;
  if (z < pricing.kappa1) c += pricing.b1;
  if (z > pricing.kappa2) c -= pricing.b2;
  return c;
}

double gaussian_cdf(double x, double s) {
  return 0.5 * std::erfc(-x / (s * std::sqrt(2.0)));
}

namespace {

double expected_price(double mu_m, const MabPricing& pricing, double s_noise) {
  return pricing.b0 + pricing.b1 * gaussian_cdf(pricing.kappa1 - mu_m, s_noise) -
         pricing.b2 * gaussian_cdf(mu_m - pricing.kappa2, s_noise);
}

}  // namespace

bool participation_condition(double mu_m,
                             const std::vector<double>& empirical_means,
                             double epsilon, const MabPricing& pricing,
                             double s_noise) {
  const double best =
      *std::max_element(empirical_means.begin(), empirical_means.end());
  double mean = 0.0;
  for (double v : empirical_means) mean += v;
  mean /= static_cast<double>(empirical_means.size());
  const double income = (1.0 - epsilon) * best + epsilon * mean - mu_m;
  return expected_price(mu_m, pricing, s_noise) <= income;
}

std::optional<int> select_arm(const std::vector<int>& participants,
                              const std::vector<double>& empirical_means,
                              double epsilon, Rng& rng) {
  if (participants.empty()) return std::nullopt;
  if (rng.uniform() < epsilon)
    return participants[rng.below(participants.size())];
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> leaders;
  for (int id : participants) {
    const double v = empirical_means[static_cast<std::size_t>(id)];
    if (v > best) {
      best = v;
      leaders.assign(1, id);
    } else if (v == best) {
      leaders.push_back(id);
    }
  }
  return leaders[rng.below(leaders.size())];
}

double profit_performance(double mu, double mu1, const MabPricing& pricing,
                          double s_noise) {
  return mu1 - mu - expected_price(mu, pricing, s_noise);
}

void MabConfig::validate() const {
  if (arms < 1) throw std::invalid_argument("arms must be >= 1");
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("epsilon must be in [0, 1]");
  if (!(mu_sigma >= 0.0))
    throw std::invalid_argument("mu_sigma must be >= 0");
  if (!(s_noise > 0.0)) throw std::invalid_argument("s_noise must be > 0");
  pricing.validate();
}

MabRunResult run_mab(const MabConfig& config, std::uint64_t seed,
                     bool incentivized) {
  config.validate();
  const int m = config.arms;
  Rng root(seed);

  MabRunResult result;
  result.ledger.lambda = config.lambda;
  result.ledger.utility_u = 1.0;

  result.mu.resize(m);
  {
    Rng mu_rng = root.stream(1);
    for (double& v : result.mu)
      v = mu_rng.normal(config.mu_mean, config.mu_sigma);
  }

  // Burn-in: one forced pull per arm so every empirical mean is defined.
  // These pulls are bookkeeping only and stay out of the cumulative totals.
  std::vector<double> emp(m);
  std::vector<int> pulls(m, 1);
  {
    Rng burn = root.stream(2);
    for (int i = 0; i < m; ++i)
      emp[i] = result.mu[i] + config.s_noise * burn.normal();
  }

  for (int t = 1; t <= config.rounds; ++t) {
    const double eps =
        config.schedule == EpsilonSchedule::constant
            ? config.epsilon
            : config.epsilon / std::cbrt(static_cast<double>(t));

    std::vector<int> participants;
    for (int i = 0; i < m; ++i) {
      if (!incentivized ||
          participation_condition(result.mu[i], emp, eps, config.pricing,
                                  config.s_noise))
        participants.push_back(i);
    }

    // Shared per-round streams keep paired incentivized/baseline runs on
    // common random numbers for selection and reward noise.
    Rng select_rng = root.stream(3, static_cast<std::uint64_t>(t));
    const double noise =
        root.stream(4, static_cast<std::uint64_t>(t)).normal();

    MabRoundStats stats;
    stats.n_participants = static_cast<int>(participants.size());
    RoundRecord rec;
    rec.participants = participants;

    const std::optional<int> active =
        select_arm(participants, emp, eps, select_rng);
    if (active) {
      const int a = *active;
      const double z = result.mu[a] + config.s_noise * noise;
      emp[a] = (emp[a] * pulls[a] + z) / (pulls[a] + 1);
      ++pulls[a];
      result.cum_reward += z;
      stats.active = a;
      stats.reward = z;

      rec.active.push_back(a);
      rec.collab_gain = z;
      std::vector<double> costs;
      for (int id : participants) {
        const double booked = id == a ? z : emp[id];
        double cost = 0.0;
        if (incentivized)
          cost = id == a ? mab_cost(z, config.pricing)
                         : (config.charge_nonactive_b0 ? config.pricing.b0
                                                       : 0.0);
        rec.gains[id] = booked;
        rec.costs[id] = cost;
        rec.profits[id] = participant_profit(true, cost, z, booked);
        costs.push_back(cost);
        result.cum_balance += cost;
      }
      SystemObjectiveParams sp;
      sp.lambda = config.lambda;
      rec.system_profit = system_profit(sp, costs, z);
    }

    stats.cum_reward = result.cum_reward;
    stats.cum_balance = result.cum_balance;
    result.rounds.push_back(stats);
    result.ledger.rounds.push_back(std::move(rec));
  }
  result.empirical_means = emp;
  return result;
}

}  // namespace icl::mab
