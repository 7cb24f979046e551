#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "icl/fl.hpp"

using namespace icl;
using namespace icl::fl;

namespace {

SyntheticTask quadratic_at(std::vector<double> mu) {
  SyntheticTask t;
  t.kind = TaskKind::quadratic;
  t.mu_star = std::move(mu);
  return t;
}

// A random but smooth server state (large sigmoid scale) for gradient tests.
struct SmoothState {
  SyntheticTask task;
  ServerState state;
  FlPricingParams pricing;
};

SmoothState random_state(Rng& rng, int clients, int dim) {
  SmoothState s;
  std::vector<double> mu(dim);
  for (auto& v : mu) v = rng.normal();
  s.task = quadratic_at(mu);
  s.state.task = &s.task;
  s.state.utility_u = 1.0;
  s.state.zbar_prev = rng.uniform(-2, 0);
  for (int m = 0; m < clients; ++m) {
    ClientHistory h;
    h.last_active = 0;
    h.collab_gain = rng.uniform(-2, 0);
    h.own_gain = rng.uniform(-3, 0);
    h.global_model.resize(dim);
    h.own_model.resize(dim);
    for (int k = 0; k < dim; ++k) {
      h.global_model[k] = mu[k] + 0.3 * rng.normal();
      h.own_model[k] = mu[k] + 0.6 * rng.normal();
    }
    h.active_weight_sum = clients * 1.0;
    s.state.history.push_back(h);
    s.state.weights.push_back(1.0);
  }
  s.pricing.s = 0.5;  // smooth regime
  s.pricing.gamma = 3.0;
  s.pricing.rho = 0.4;
  s.pricing.theta1 = rng.uniform(-0.5, 0.5);
  s.pricing.theta2 = rng.uniform(-0.5, 0.5);
  return s;
}

}  // namespace

TEST_CASE("aggregate") {
  CHECK(aggregate({{1.0}, {3.0}}, {1.0, 1.0}, {0, 1})[0] ==
        doctest::Approx(2.0));
  CHECK(aggregate({{1.0}, {3.0}}, {3.0, 1.0}, {0, 1})[0] ==
        doctest::Approx(1.5));
  auto single = aggregate({{1.0, 2.0}, {9.0, 9.0}}, {1.0, 1.0}, {0});
  CHECK(single[0] == 1.0);
  CHECK(single[1] == 2.0);
  CHECK_THROWS_AS(aggregate({{1.0}}, {1.0}, {}), std::invalid_argument);
}

TEST_CASE("task gain") {
  auto t = quadratic_at({1.0, -2.0});
  CHECK(t.gain({1.0, -2.0}) == 0.0);
  CHECK(t.gain({2.0, -2.0}) == doctest::Approx(-1.0));

  auto lt = make_logistic_task(3, 300, Rng(5));
  std::vector<double> separator = lt.mu_star;  // blob axis separates classes
  for (auto& v : separator) v *= 3.0;
  std::vector<double> random_model = {0.3, -0.2, 0.1};
  CHECK(lt.gain(random_model) < lt.gain(separator));
}

TEST_CASE("sigmoid") {
  CHECK(fl::sigmoid(0.0, 0.005) == doctest::Approx(0.5));
  CHECK(fl::sigmoid(0.0, 2.0) == doctest::Approx(0.5));
  CHECK(fl::sigmoid(0.01, 0.005) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-9));
  CHECK(fl::sigmoid(-3.0, 0.1) + fl::sigmoid(3.0, 0.1) == doctest::Approx(1.0));
  // saturates without overflow
  CHECK(fl::sigmoid(1e6, 0.005) == doctest::Approx(1.0));
  CHECK(fl::sigmoid(-1e6, 0.005) == doctest::Approx(0.0));
}

TEST_CASE("fl_cost") {
  FlPricingParams p;
  p.theta1 = 0.5;
  p.theta2 = 0.0;
  p.gamma = 2.0;
  p.s = 0.005;
  CHECK(fl_cost(2.0, 0.0, false, p) == doctest::Approx(1.0));
  // active with zero gain shortfall: sigma = 0.5 cancels the correction
  CHECK(fl_cost(2.0, 2.0, true, p) == doctest::Approx(1.0));
  // saturated laggard penalty approaches theta1*zbar*gamma
  p.gamma = 1000.0;
  const double c = fl_cost(2.0, -50.0, true, p);
  CHECK(c == doctest::Approx(0.5 * 2.0 * 1000.0).epsilon(1e-6));
}

TEST_CASE("expected cost weights the active correction by rho") {
  FlPricingParams p;
  p.theta1 = 0.5;
  p.theta2 = 0.0;
  p.gamma = 2.0;
  p.s = 0.005;
  p.rho = 0.3;
  const double sig = fl::sigmoid(2.0 - 1.0, 0.005);
  CHECK(expected_cost(2.0, 1.0, p) ==
        doctest::Approx(0.5 * 2.0 * (1.0 + 0.3 * (-1.0 + 2.0 * sig))));
}

TEST_CASE("client decision") {
  CHECK(client_decide(0.5));
  CHECK_FALSE(client_decide(0.0));
  CHECK_FALSE(client_decide(-0.1));
  // A positive-prospect marginal client flips with belief bias: delta is
  // bias*U(zbar) - U(z_m) - C with U(zbar) = 3, U(z_m) = 4, C = 1.
  const double u_zbar = 3.0, u_zm = 4.0, cost = 1.0;
  CHECK_FALSE(client_decide(1.0 * u_zbar - u_zm - cost));
  CHECK(client_decide(2.0 * u_zbar - u_zm - cost));
}

TEST_CASE("server objective structure") {
  Rng rng(3);
  auto s = random_state(rng, 6, 3);

  SUBCASE("zero deviation reduces to priced participation mass") {
    for (auto& h : s.state.history) h.own_model = h.global_model;
    const double lambda = 0.7;
    const double o =
        server_objective(s.state, s.pricing.theta1, s.pricing.theta2, lambda,
                         s.pricing);
    double expect = 0.0;
    for (const auto& h : s.state.history) {
      const double C = expected_cost(h.collab_gain, h.own_gain, s.pricing);
      const double delta = s.state.zbar_prev - h.own_gain - C;
      expect += fl::sigmoid(delta, s.pricing.s) * lambda * C;
    }
    CHECK(o == doctest::Approx(expect).epsilon(1e-12));
  }

  SUBCASE("lambda=0 keeps only deviation terms") {
    const double o0 =
        server_objective(s.state, s.pricing.theta1, s.pricing.theta2, 0.0,
                         s.pricing);
    // doubling the cost scale must not change the deviation-only objective's
    // cost contribution (it has none), only the sigmoid weights
    double manual = 0.0;
    for (std::size_t m = 0; m < s.state.history.size(); ++m) {
      const auto& h = s.state.history[m];
      const double C = expected_cost(h.collab_gain, h.own_gain, s.pricing);
      const double delta = s.state.zbar_prev - h.own_gain - C;
      auto grad = s.task.gain_gradient(h.global_model);
      double inner = 0.0;
      for (std::size_t k = 0; k < grad.size(); ++k)
        inner += grad[k] * (h.global_model[k] - h.own_model[k]);
      manual -= fl::sigmoid(delta, s.pricing.s) *
                (s.state.weights[m] / h.active_weight_sum) * inner;
    }
    CHECK(o0 == doctest::Approx(manual).epsilon(1e-12));
  }

  SUBCASE("uninitialized history is rejected") {
    s.state.history[2].last_active = -1;
    CHECK_THROWS_WITH_AS(
        server_objective(s.state, 0.0, 0.0, 0.1, s.pricing),
        "uninitialized history", std::runtime_error);
  }
}

TEST_CASE("gradient estimator Richardson consistency") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_state(rng, 5, 3);
    auto f = [&](double a, double b) {
      return server_objective(s.state, a, b, 0.3, s.pricing);
    };
    auto g_fine = objective_gradient(f, s.pricing.theta1, s.pricing.theta2,
                                     1e-5);
    auto g_coarse = objective_gradient(f, s.pricing.theta1, s.pricing.theta2,
                                       1e-3);
    const double scale =
        std::max({std::abs(g_fine.first), std::abs(g_fine.second), 1.0});
    CHECK(std::abs(g_fine.first - g_coarse.first) / scale < 1e-4);
    CHECK(std::abs(g_fine.second - g_coarse.second) / scale < 1e-4);
  }
}

TEST_CASE("server update") {
  CHECK(server_update({1.0, 2.0}, {0.0, 0.0}, 0.5) ==
        std::pair<double, double>{1.0, 2.0});
  CHECK(server_update({1.0, 2.0}, {3.0, -1.0}, 0.0) ==
        std::pair<double, double>{1.0, 2.0});
  CHECK_THROWS_AS(server_update({0.0, 0.0}, {std::nan(""), 0.0}, 0.1),
                  std::runtime_error);

  // ascent property on random smooth states
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_state(rng, 5, 3);
    auto f = [&](double a, double b) {
      return server_objective(s.state, a, b, 0.3, s.pricing);
    };
    auto g = objective_gradient(f, s.pricing.theta1, s.pricing.theta2);
    auto t2 = server_update({s.pricing.theta1, s.pricing.theta2}, g, 1e-5);
    CHECK(f(t2.first, t2.second) >=
          f(s.pricing.theta1, s.pricing.theta2) - 1e-8);
  }
}

TEST_CASE("two-class break") {
  CHECK(jenks_two_class_break({1.0, 1.1, 0.9, 5.0, 5.2, 4.9}) ==
        doctest::Approx(0.5 * (1.1 + 4.9)));
  CHECK(jenks_two_class_break({2.0, 2.0, 2.0}) == 2.0);
  CHECK(jenks_two_class_break({3.0}) == 3.0);
}

TEST_CASE("run_fl degenerate single client") {
  FlConfig cfg;
  cfg.rounds = 1;
  cfg.clients = 1;
  cfg.dim = 2;
  cfg.pricing.rho = 1.0;
  cfg.pricing.theta1 = 0.0;
  cfg.belief_bias = 0.0;  // join whenever the expected price is negligible
  auto r = run_fl(cfg, 99);
  REQUIRE(r.ledger.rounds.size() == 1);
  CHECK(r.ledger.rounds[0].active == std::vector<int>{0});
  CHECK(r.ledger.rounds[0].collab_gain ==
        doctest::Approx(r.final_collab_gain));
  // z-bar equals the gain of the single active client's updated model, which
  // is also the booked individual gain.
  CHECK(r.ledger.rounds[0].collab_gain ==
        doctest::Approx(r.ledger.rounds[0].gains.at(0)));
}

TEST_CASE("run_fl validates config") {
  FlConfig cfg;
  cfg.pricing.rho = 1.5;
  CHECK_THROWS_AS(run_fl(cfg, 1), std::invalid_argument);
  FlConfig cfg2;
  cfg2.rounds = 0;
  CHECK_THROWS_AS(run_fl(cfg2, 1), std::invalid_argument);
}

TEST_CASE("participation stabilizes with identical honest clients") {
  FlConfig cfg;
  cfg.rounds = 30;
  cfg.clients = 8;
  cfg.dim = 3;
  cfg.noise_sigma = 0.0;  // identical clients
  cfg.pricing.theta1 = 0.0;
  cfg.belief_bias = 0.0;
  auto r = run_fl(cfg, 7);
  REQUIRE(r.ledger.rounds.size() == 30);
  const auto& last = r.ledger.rounds.back().participants;
  for (std::size_t i = r.ledger.rounds.size() - 10;
       i < r.ledger.rounds.size(); ++i)
    CHECK(r.ledger.rounds[i].participants == last);
}

TEST_CASE("ledger costs match the pricing formula and selection cardinality") {
  FlConfig cfg;
  cfg.rounds = 20;
  cfg.clients = 12;
  cfg.dim = 3;
  cfg.byzantine_ratio = 0.25;
  cfg.byzantine = ByzantineKind::random_modification;
  cfg.pricing.gamma = 2001.0;
  auto r = run_fl(cfg, 41);
  for (std::size_t t = 0; t < r.ledger.rounds.size(); ++t) {
    const auto& rec = r.ledger.rounds[t];
    if (rec.participants.empty()) continue;
    const int expect_k = std::max(
        static_cast<int>(std::floor(cfg.pricing.rho * rec.participants.size())),
        1);
    CHECK(static_cast<int>(rec.active.size()) == expect_k);
    FlPricingParams p = cfg.pricing;
    p.theta1 = r.rounds[t].theta1;
    p.theta2 = r.rounds[t].theta2;
    for (int id : rec.participants) {
      const bool is_active = std::find(rec.active.begin(), rec.active.end(),
                                       id) != rec.active.end();
      CHECK(rec.costs.at(id) ==
            doctest::Approx(fl_cost(rec.collab_gain, rec.gains.at(id),
                                    is_active, p))
                .epsilon(1e-12));
    }
  }
}

TEST_CASE("ledger satisfies the round profit identity") {
  FlConfig cfg;
  cfg.rounds = 15;
  cfg.clients = 10;
  cfg.dim = 3;
  cfg.byzantine_ratio = 0.2;
  cfg.byzantine = ByzantineKind::label_flip;
  auto r = run_fl(cfg, 4242);
  for (const auto& rec : r.ledger.rounds) {
    double sum_costs = 0.0, sum_profits = 0.0, sum_um = 0.0;
    for (int id : rec.participants) {
      sum_costs += rec.costs.at(id);
      sum_profits += rec.profits.at(id);
      sum_um += r.ledger.utility_u * rec.gains.at(id);
    }
    const double uA = r.ledger.utility_u * rec.collab_gain;
    const double n = static_cast<double>(rec.participants.size());
    const double lhs = rec.system_profit + sum_profits;
    const double rhs =
        (r.ledger.lambda - 1.0) * sum_costs + (n + 1.0) * uA - sum_um;
    CHECK(std::abs(lhs - rhs) < 1e-9);
  }
}

TEST_CASE("byzantine-free incentivized run matches the baseline updates") {
  FlConfig cfg;
  cfg.rounds = 12;
  cfg.clients = 10;
  cfg.dim = 3;
  cfg.pricing.theta1 = 0.0;
  cfg.belief_bias = 0.0;  // everyone participates
  FlConfig base = cfg;
  base.incentivized = false;
  auto a = run_fl(cfg, 77);
  auto b = run_fl(base, 77);
  REQUIRE(a.ledger.rounds.size() == b.ledger.rounds.size());
  for (std::size_t t = 0; t < a.ledger.rounds.size(); ++t) {
    REQUIRE(a.ledger.rounds[t].participants.size() == cfg.clients);
    CHECK(a.ledger.rounds[t].active == b.ledger.rounds[t].active);
    CHECK(a.ledger.rounds[t].collab_gain == b.ledger.rounds[t].collab_gain);
  }
  for (int k = 0; k < cfg.dim; ++k)
    CHECK(a.final_model[k] == b.final_model[k]);
}

TEST_CASE("logistic backend smoke run") {
  FlConfig cfg;
  cfg.task = TaskKind::logistic;
  cfg.rounds = 5;
  cfg.clients = 6;
  cfg.dim = 3;
  cfg.local_samples = 30;
  cfg.logistic_test_n = 200;
  cfg.pricing.theta1 = 0.0;
  cfg.belief_bias = 0.0;
  auto r = run_fl(cfg, 12);
  REQUIRE(r.ledger.rounds.size() == 5);
  // training should beat the zero model
  SyntheticTask t = make_logistic_task(3, 200, Rng(12).stream(1));
  CHECK(r.final_collab_gain > t.gain({0.0, 0.0, 0.0}));
}

TEST_CASE("subsample residual") {
  Rng rng(31);

  SUBCASE("full participation is exact") {
    std::vector<double> w = {1.0, 2.0, 0.5};
    std::vector<std::vector<double>> x = {{0.1, 0.2}, {0.3, -0.1}, {0.7, 0.9}};
    // K >= 10 required; tile to 12 entries
    std::vector<double> weights;
    std::vector<std::vector<double>> models;
    for (int i = 0; i < 12; ++i) {
      weights.push_back(w[i % 3]);
      models.push_back(x[i % 3]);
    }
    CHECK(subsample_residual(12, 1.0, weights, models, rng) == 0.0);
  }

  SUBCASE("identical models are exact for any draw") {
    std::vector<double> weights(16, 1.0);
    std::vector<std::vector<double>> models(16, {0.5, -0.25, 1.0});
    for (int i = 0; i < 20; ++i)
      CHECK(subsample_residual(16, 0.4, weights, models, rng) == 0.0);
  }

  SUBCASE("concentration with K") {
    auto median_residual = [&](int K) {
      std::vector<double> weights(K);
      std::vector<std::vector<double>> models(K, std::vector<double>(4));
      Rng gen(55);
      for (int i = 0; i < K; ++i) {
        weights[i] = gen.uniform(0.5, 1.5);
        for (auto& v : models[i]) v = gen.uniform(-1, 1);
      }
      std::vector<double> res;
      for (int d = 0; d < 50; ++d)
        res.push_back(subsample_residual(K, 0.3, weights, models, rng));
      std::sort(res.begin(), res.end());
      return 0.5 * (res[24] + res[25]);
    };
    CHECK(median_residual(10000) < 0.25 * median_residual(100));
  }
}

TEST_CASE("uniform-activation near-optimality ratio") {
  SUBCASE("equal means give ratio 1") {
    auto r = uniform_activation_ratio({2.0, 2.0, 2.0, 2.0}, 1.0, 0.5, 1 << 20, 0);
    CHECK(r.ratio == doctest::Approx(1.0).epsilon(1e-6));
  }

  SUBCASE("high noise makes uniform near-optimal") {
    std::vector<double> means = {2.95, 3.05, 2.9, 3.1};
    double maxdev = 0.0;
    const double mu = 3.0;
    for (double m : means) maxdev = std::max(maxdev, std::abs(m - mu));
    const double sigma =
        std::sqrt(100.0 * means.size() * maxdev * maxdev);
    auto r = uniform_activation_ratio(means, sigma, 0.5, 1 << 20, 0);
    CHECK(r.ratio >= 0.95);
    CHECK(r.ratio <= 1.0);
  }

  SUBCASE("no noise with distinct means makes uniform suboptimal") {
    auto r = uniform_activation_ratio({2.0, 2.5, 3.5, 4.0}, 0.0, 0.5, 1 << 20, 0);
    CHECK(r.ratio < 1.0);
  }

  SUBCASE("oversize instance rejected") {
    std::vector<double> means(13, 1.0);
    CHECK_THROWS_AS(uniform_activation_ratio(means, 1.0, 0.5, 1 << 20, 0),
                    InstanceTooLarge);
  }
}
