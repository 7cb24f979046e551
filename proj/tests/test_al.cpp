#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "icl/al.hpp"
#include "icl/rng.hpp"

using namespace icl;
using namespace icl::al;

namespace {

// A small vertically-split linear task: y depends on both entities' features.
struct PairFixture {
  AlEntity a, b;
};

PairFixture make_pair_fixture(std::uint64_t seed, bool b_is_noise) {
  Rng rng(seed);
  const int n = 200, n_val = 50, n_test = 50;
  PairFixture fx;
  fx.a.id = 0;
  fx.b.id = 1;
  auto push = [&](AlEntity& e, const std::vector<double>& feats, double y,
                  int row) {
    if (row < n) {
      e.train_x.push_back(feats);
      e.train_y.push_back(y);
    } else if (row < n + n_val) {
      e.val_x.push_back(feats);
      e.val_y.push_back(y);
    } else {
      e.test_x.push_back(feats);
      e.test_y.push_back(y);
    }
  };
  for (int row = 0; row < n + n_val + n_test; ++row) {
    const double xa = rng.normal(), xb = rng.normal(), noise_f = rng.normal();
    const double y = 2.0 * xa + 3.0 * xb + 0.1 * rng.normal();
    push(fx.a, {xa}, y, row);
    // When B holds pure noise its features carry nothing about y.
    push(fx.b, {b_is_noise ? noise_f : xb}, b_is_noise ? noise_f : y, row);
  }
  AlFitParams fit;
  init_entity(fx.a, fit);
  init_entity(fx.b, fit);
  return fx;
}

double sum_in_map_order(const std::map<int, double>& costs) {
  double s = 0.0;
  for (const auto& [id, c] : costs) s += c;
  return s;
}

void check_profit_identity(const GameLedger& ledger) {
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
    const double rhs = (ledger.lambda - 1.0) * sum_costs + (n + 1.0) * ua -
                       sum_um;
    CHECK(std::abs(lhs - rhs) < 1e-9);
  }
}

}  // namespace

TEST_CASE("ridge fit recovers a linear relationship") {
  Rng rng(7);
  Matrix x;
  std::vector<double> y;
  for (int i = 0; i < 300; ++i) {
    const double a = rng.normal(), b = rng.normal();
    x.push_back({a, b});
    y.push_back(1.5 * a - 2.0 * b + 0.5);
  }
  AlFitParams fit;
  const LocalModel m = fit_model(x, y, AlLearnerKind::ridge, fit);
  CHECK(m.weights[0] == doctest::Approx(1.5).epsilon(1e-3));
  CHECK(m.weights[1] == doctest::Approx(-2.0).epsilon(1e-3));
  CHECK(m.weights[2] == doctest::Approx(0.5).epsilon(1e-2));
}

TEST_CASE("boosted stumps fit a step function") {
  Matrix x;
  std::vector<double> y;
  for (int i = 0; i < 100; ++i) {
    const double v = i / 100.0;
    x.push_back({v});
    y.push_back(v < 0.5 ? -1.0 : 1.0);
  }
  AlFitParams fit;
  const LocalModel m = fit_model(x, y, AlLearnerKind::boosted_stumps, fit);
  CHECK(m.predict(std::vector<double>{0.1}) == doctest::Approx(-1.0).epsilon(0.05));
  CHECK(m.predict(std::vector<double>{0.9}) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("exchange with a pure-noise partner brings nothing") {
  auto fx = make_pair_fixture(11, /*b_is_noise=*/true);
  const double baseline = fx.a.val_loss();
  const AlFitParams fit;
  const PalRoundGains g = run_pal_round(fx.a, fx.b, 0.5, fit);
  CHECK(std::abs(g.mu_a_from_b) < 0.1 * baseline);
}

TEST_CASE("exchange with the holder of the missing predictor helps") {
  auto fx = make_pair_fixture(12, /*b_is_noise=*/false);
  const AlFitParams fit;
  const PalRoundGains g = run_pal_round(fx.a, fx.b, 0.5, fit);
  CHECK(g.mu_a_from_b > 0.0);
  CHECK(g.mu_ab > 0.0);
}

TEST_CASE("self-pairing and misaligned subjects are rejected") {
  auto fx = make_pair_fixture(13, false);
  const AlFitParams fit;
  CHECK_THROWS_AS(run_pal_round(fx.a, fx.a, 0.5, fit), MisalignedSubjects);
  AlEntity truncated = fx.b;
  truncated.train_x.pop_back();
  truncated.train_y.pop_back();
  truncated.residual.pop_back();
  CHECK_THROWS_AS(run_pal_round(fx.a, truncated, 0.5, fit),
                  MisalignedSubjects);
}

TEST_CASE("favor scores") {
  GainEstimates est;
  est.mu_pair[{1, 2}] = 5.0;
  est.mu_assist[{1, 2}] = 3.0;

  SUBCASE("direct evaluation") {
    const FavorScore s = favor_score(1, 2, 1.0, 0.0, 0.0, est);
    CHECK_FALSE(s.unexplored);
    CHECK(s.value == doctest::Approx(5.0));
  }
  SUBCASE("no history sorts above any finite score") {
    const FavorScore fresh = favor_score(1, 3, 1.0, 0.0, 0.0, est);
    CHECK(fresh.unexplored);
    const FavorScore huge{false, 1e18};
    CHECK(favor_less(huge, fresh));
    CHECK_FALSE(favor_less(fresh, huge));
  }
  SUBCASE("price at u leaves only the assist term") {
    const FavorScore s = favor_score(1, 2, 1.0, 1.0, 0.5, est);
    CHECK(s.value == doctest::Approx(0.5 * 3.0));
  }
}

TEST_CASE("mutual-favor detection") {
  CHECK(consensus_pair({{1, 2}, {2, 1}, {3, 1}}) ==
        std::pair<int, int>{1, 2});
  CHECK_FALSE(consensus_pair({{1, 2}, {2, 3}, {3, 1}}).has_value());
  CHECK(consensus_pair({{4, 9}, {9, 4}}) == std::pair<int, int>{4, 9});
}

namespace {

// Straightforward consensus existence by simulating favors for every entity
// and scanning the mutual edges, used to cross-check consensus_exists.
bool consensus_by_simulation(double u, const std::vector<double>& c,
                             const std::vector<std::vector<double>>& mu_pair,
                             const std::vector<std::vector<double>>& mu_ass) {
  // Favor sets may be ambiguous under ties, so enumerate every choice of
  // argmax favors and accept if any assignment yields a mutual pair.
  std::vector<std::vector<int>> choices(3);
  for (int i = 0; i < 3; ++i) {
    double best = -1e300;
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const double q = (u - c[i]) * mu_pair[i][j] + c[j] * mu_ass[i][j];
      best = std::max(best, q);
    }
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const double q = (u - c[i]) * mu_pair[i][j] + c[j] * mu_ass[i][j];
      if (q >= best) choices[i].push_back(j);
    }
  }
  for (int f0 : choices[0])
    for (int f1 : choices[1])
      for (int f2 : choices[2]) {
        const int favors[3] = {f0, f1, f2};
        for (int i = 0; i < 3; ++i)
          for (int j = i + 1; j < 3; ++j)
            if (favors[i] == j && favors[j] == i) return true;
      }
  return false;
}

}  // namespace

TEST_CASE("three-entity consensus existence") {
  SUBCASE("symmetric gains and equal prices always pair") {
    const std::vector<std::vector<double>> mu{
        {0, 2, 2}, {2, 0, 2}, {2, 2, 0}};
    CHECK(consensus_exists(1.0, {0.3, 0.3, 0.3}, mu, mu));
  }
  SUBCASE("cyclic preferences admit no pair") {
    // Entity i strictly prefers i+1 (mod 3); no mutual edge exists.
    const std::vector<std::vector<double>> mu{
        {0, 5, 1}, {1, 0, 5}, {5, 1, 0}};
    const std::vector<std::vector<double>> zero(3,
                                                std::vector<double>(3, 0.0));
    CHECK_FALSE(consensus_exists(1.0, {0.0, 0.0, 0.0}, mu, zero));
  }
  SUBCASE("matches direct simulation on random instances") {
    Rng rng(2024);
    int agree = 0;
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<std::vector<double>> mu(3, std::vector<double>(3));
      std::vector<std::vector<double>> ass(3, std::vector<double>(3));
      std::vector<double> c(3);
      const double u = rng.uniform(0.2, 2.0);
      for (int i = 0; i < 3; ++i) {
        c[i] = rng.uniform(0.0, u);
        for (int j = 0; j < 3; ++j) {
          mu[i][j] = rng.uniform(-1.0, 3.0);
          ass[i][j] = rng.uniform(-1.0, 3.0);
        }
      }
      if (consensus_exists(u, c, mu, ass) ==
          consensus_by_simulation(u, c, mu, ass))
        ++agree;
    }
    CHECK(agree == 500);
  }
}

TEST_CASE("pricing threshold for the non-competing case") {
  CHECK(consensus_price_threshold(1.0, {2.0, 1.0}, 2) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(consensus_price_threshold(1.0, {2.0, 2.0, 1.0}, 3) == doctest::Approx(0.0));
  CHECK_THROWS_AS(consensus_price_threshold(1.0, {0.0, 0.0}, 2),
                  DegenerateDenominator);
}

TEST_CASE("pricing threshold boundary is tight") {
  Rng rng(555);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(5));
    const double u = rng.uniform(0.5, 3.0);
    std::vector<double> mu(k);
    for (double& v : mu) v = rng.uniform(0.1, 4.0);
    std::sort(mu.rbegin(), mu.rend());
    const double c_star = consensus_price_threshold(u, mu, k);
    // Consensus condition per entity j: (u-c)*mu_0 >= mu_j*(u + c*(K-1)).
    auto slack = [&](double c) {
      double worst = 1e300;
      for (int j = 1; j < k; ++j)
        worst = std::min(worst, (u - c) * mu[0] -
                                    mu[j] * (u + c * (k - 1)));
      return worst;
    };
    CHECK(std::abs(slack(c_star)) < 1e-9);
    CHECK(slack(c_star + 1e-6) < 0.0);
  }
}

TEST_CASE("zero-balance costs") {
  ZeroBalancePricing pricing{1.0, 3};
  SUBCASE("worked example") {
    const auto costs = zero_balance_costs(2.0, 1, {1, 2, 3}, pricing);
    CHECK(costs.at(1) == -4.0);
    CHECK(costs.at(2) == 2.0);
    CHECK(costs.at(3) == 2.0);
    CHECK(sum_in_map_order(costs) == 0.0);
  }
  SUBCASE("zero gain prices nothing") {
    const auto costs = zero_balance_costs(0.0, 2, {1, 2, 3}, pricing);
    for (const auto& [id, c] : costs) CHECK(c == 0.0);
  }
  SUBCASE("two participants transfer the charge") {
    ZeroBalancePricing two{0.7, 2};
    const auto costs = zero_balance_costs(1.3, 5, {4, 5}, two);
    CHECK(costs.at(4) == doctest::Approx(0.7 * 1.3));
    CHECK(costs.at(5) == -costs.at(4));
    CHECK(sum_in_map_order(costs) == 0.0);
  }
  SUBCASE("sum is exactly zero on random instances") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
      const int k = 2 + static_cast<int>(rng.below(9));
      std::vector<int> ids(static_cast<std::size_t>(k));
      std::iota(ids.begin(), ids.end(), 10);
      ZeroBalancePricing p{rng.uniform(0.0, 5.0), k};
      const int active = ids[rng.below(ids.size())];
      const auto costs =
          zero_balance_costs(rng.uniform(-3.0, 3.0), active, ids, p);
      double others = 0.0;
      for (const auto& [id, c] : costs)
        if (id != active) others += c;
      CHECK(others + costs.at(active) == 0.0);
    }
  }
  SUBCASE("active outside the participant set is rejected") {
    CHECK_THROWS_AS(zero_balance_costs(1.0, 9, {1, 2, 3}, pricing),
                    ActiveNotParticipant);
  }
}

TEST_CASE("single entity never pairs and boosts locally") {
  AlConfig cfg;
  cfg.entities = 1;
  cfg.rounds = 10;
  const auto ridge = run_pal(cfg, 3);
  for (const auto& round : ridge.pairings) CHECK(round.empty());
  // With a boosting learner the extra local rounds genuinely keep training.
  cfg.learner = AlLearnerKind::boosted_stumps;
  const auto r = run_pal(cfg, 3);
  for (const auto& round : r.pairings) CHECK(round.empty());
  CHECK(r.entities[0].train_f.size() == r.entities[0].residual.size());
  CHECK(mse(r.entities[0].train_y, r.entities[0].train_f) <
        mse(ridge.entities[0].train_y, ridge.entities[0].train_f));
}

TEST_CASE("all-pay collaboration beats the local-only baseline") {
  int wins = 0;
  for (int s = 0; s < 10; ++s) {
    AlConfig coop;
    AlConfig base = coop;
    base.collaborate = false;
    const auto rc = run_pal(coop, 100 + static_cast<std::uint64_t>(s));
    const auto rb = run_pal(base, 100 + static_cast<std::uint64_t>(s));
    bool all = true;
    for (int i = 0; i < coop.entities; ++i)
      if (rc.test_error[i].back() >= rb.test_error[i].back()) all = false;
    wins += all;
  }
  CHECK(wins >= 9);
}

TEST_CASE("a free-riding entity gains less than when it pays") {
  int smaller = 0;
  for (int s = 0; s < 10; ++s) {
    AlConfig coop;
    AlConfig base = coop;
    base.collaborate = false;
    AlConfig zero = coop;
    zero.price_coeffs = {0.0, coop.u, coop.u};
    const std::uint64_t seed = 100 + static_cast<std::uint64_t>(s);
    const auto rc = run_pal(coop, seed);
    const auto rb = run_pal(base, seed);
    const auto rz = run_pal(zero, seed);
    const double paid = rb.test_error[0].back() - rc.test_error[0].back();
    const double free_ride = rb.test_error[0].back() - rz.test_error[0].back();
    smaller += (free_ride < paid);
  }
  CHECK(smaller >= 8);
}

TEST_CASE("ledger costs balance exactly and the profit identity holds") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r = run_pal(AlConfig{}, seed);
    for (const auto& rec : r.ledger.rounds)
      CHECK(sum_in_map_order(rec.costs) == 0.0);
    check_profit_identity(r.ledger);
  }
}

TEST_CASE("final predictions decompose into per-round contributions") {
  const auto r = run_pal(AlConfig{}, 17);
  for (const auto& e : r.entities) {
    std::vector<double> rebuilt(e.test_f.size(), 0.0);
    for (const auto& part : e.test_contrib)
      for (std::size_t i = 0; i < rebuilt.size(); ++i) rebuilt[i] += part[i];
    for (std::size_t i = 0; i < rebuilt.size(); ++i)
      CHECK(rebuilt[i] == e.test_f[i]);
  }
}

TEST_CASE("first-round pairing is symmetric across entity labels") {
  // All pairs start unexplored, so with exchangeable entities each unordered
  // pair should be picked a fair share of the time.
  std::map<std::pair<int, int>, int> counts;
  int paired_rounds = 0;
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    AlConfig cfg;
    cfg.rounds = 1;
    const auto r = run_pal(cfg, 9000 + seed);
    if (r.pairings[0].empty()) continue;
    ++paired_rounds;
    ++counts[r.pairings[0][0]];
  }
  CHECK(paired_rounds > 100);
  for (const auto& [pair, n] : counts) {
    CHECK(n > paired_rounds / 6);
    CHECK(n < paired_rounds * 2 / 3);
  }
  CHECK(counts.size() == 3);
}

TEST_CASE("stumps learner also profits from collaboration") {
  AlConfig coop;
  coop.learner = AlLearnerKind::boosted_stumps;
  coop.rounds = 15;
  AlConfig base = coop;
  base.collaborate = false;
  const auto rc = run_pal(coop, 21);
  const auto rb = run_pal(base, 21);
  int improved = 0;
  for (int i = 0; i < coop.entities; ++i)
    improved += rc.test_error[i].back() < rb.test_error[i].back();
  CHECK(improved >= 2);
}

TEST_CASE("config validation rejects bad settings") {
  AlConfig cfg;
  cfg.tau = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = AlConfig{};
  cfg.price_coeffs = {1.0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = AlConfig{};
  cfg.entities = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
