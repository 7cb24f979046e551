#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "icl/mechanism.hpp"
#include "icl/rng.hpp"

namespace icl::fl {

enum class TaskKind { quadratic, logistic };
enum class ByzantineKind { none, random_modification, label_flip };

// Server-side evaluation task. The quadratic task scores a model by its exact
// squared distance to the truth (the population test loss); the logistic task
// scores mean cross-entropy on a held-out sample.
struct SyntheticTask {
  TaskKind kind = TaskKind::quadratic;
  std::vector<double> mu_star;                  // quadratic truth
  std::vector<std::vector<double>> test_x;      // logistic test inputs
  std::vector<int> test_y;                      // labels in {0,1}

  std::size_t dim() const;
  double gain(const std::vector<double>& model) const;  // -test loss
  std::vector<double> gain_gradient(const std::vector<double>& model) const;
};

SyntheticTask make_quadratic_task(int dim, Rng rng);
SyntheticTask make_logistic_task(int dim, int test_n, Rng rng);

struct FlPricingParams {
  double theta1 = -0.2;
  double theta2 = 0.0;
  double gamma = 11.0;
  double rho = 0.1;
  double s = 0.005;
  double eta = 0.01;
  void validate() const;
};

double sigmoid(double v, double s);

// Weighted average of the active submissions.
std::vector<double> aggregate(const std::vector<std::vector<double>>& models,
                              const std::vector<double>& weights,
                              const std::vector<std::size_t>& active);

// Realized price for one participant given the round's collaboration gain and
// (for active clients) its realized individual gain. Non-active clients pay
// the base term only; their individual gains never enter anyone's price.
double fl_cost(double zbar, double z_m, bool is_active,
               const FlPricingParams& p);

// Expected price before selection: the active correction is weighted by the
// activation probability rho, evaluated on the client's last-known gains.
double expected_cost(double zbar_tau, double zm_tau, const FlPricingParams& p);

// delta = belief_bias*U(zbar_{t-1}) - U(z_{m,tau}) - expected_cost; strict.
bool client_decide(double delta);

// Per-client snapshot from its last active round.
struct ClientHistory {
  int last_active = -1;                // tau_m; -1 = uninitialized
  double collab_gain = 0.0;            // zbar_tau
  double own_gain = 0.0;               // z_{m,tau}
  std::vector<double> global_model;    // xbar_tau
  std::vector<double> own_model;       // x_{m,tau}
  double active_weight_sum = 0.0;      // sum of weights over A_tau
};

struct ServerState {
  std::vector<ClientHistory> history;
  std::vector<double> weights;
  double zbar_prev = 0.0;  // zbar_{t-1}, gain of the current global model
  const SyntheticTask* task = nullptr;
  double utility_u = 1.0;  // linear income coefficient
};

// Mechanism-tuning objective: sum over clients of
//   sigmoid(delta_m) * { lambda*C_m(theta) - (w_m / W_tau) * <f'(xbar_tau),
//   xbar_tau - x_{m,tau}> }.
double server_objective(const ServerState& state, double theta1, double theta2,
                        double lambda, const FlPricingParams& p);

// Central-difference gradient of a 2-parameter objective.
std::pair<double, double> objective_gradient(
    const std::function<double(double, double)>& f, double theta1,
    double theta2, double step = 1e-5);

// One ascent step; throws on non-finite gradients.
std::pair<double, double> server_update(std::pair<double, double> theta,
                                        std::pair<double, double> grad,
                                        double eta);

// Exact 1-D two-class split minimizing within-class variance; returns the
// midpoint between the two classes (values.size() >= 2 and non-constant,
// otherwise returns the common/single value).
double jenks_two_class_break(std::vector<double> values);

struct FlConfig {
  int rounds = 100;
  int clients = 50;
  int dim = 5;
  double lambda = 0.1;
  int local_samples = 20;
  double noise_sigma = 1.0;
  double local_blend = 0.5;      // weight on the local estimate vs. global
  FlPricingParams pricing;
  double byzantine_ratio = 0.0;
  ByzantineKind byzantine = ByzantineKind::none;
  TaskKind task = TaskKind::quadratic;
  bool incentivized = true;
  double belief_bias = 1.0;      // applied by every honest client
  double grad_clip = 1.0;        // max l2 norm of the mechanism gradient
  int logistic_test_n = 400;
  int logistic_local_steps = 10;
  double logistic_lr = 0.5;
  double utility_u = 1.0;
  void validate() const;  // throws std::invalid_argument listing the field
};

struct FlRoundStats {
  double theta1 = 0.0, theta2 = 0.0;
  double collab_gain = 0.0, system_profit = 0.0, sum_costs = 0.0;
  int n_participants = 0, n_active = 0;
};

struct FlRunResult {
  GameLedger ledger;
  std::vector<FlRoundStats> rounds;
  double final_collab_gain = 0.0;
  std::vector<double> final_model;
  std::vector<int> byzantine_ids;
};

FlRunResult run_fl(const FlConfig& config, std::uint64_t seed);

// l1 distance between the Bernoulli(rho)-subsampled weighted average and the
// full weighted average, one draw (resampling empty draws).
double subsample_residual(int K, double rho, const std::vector<double>& weights,
                         const std::vector<std::vector<double>>& models,
                         Rng& rng, int* resamples = nullptr);

struct UniformActivationResult {
  double ratio = 1.0;         // in (0,1]; 1 means uniform is optimal
  double income_uniform = 0.0;
  double income_star = 0.0;
  std::vector<double> q_star;
};

// Near-optimality of uniform activation for the quadratic gain: income is the
// negative of (plug-in variance term + exact Bernoulli-enumerated bias term).
UniformActivationResult uniform_activation_ratio(const std::vector<double>& means, double sigma,
                        double rho, std::uint64_t enumeration_budget,
                        std::uint64_t seed);

}  // namespace icl::fl
