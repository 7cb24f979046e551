#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "icl/mechanism.hpp"
#include "icl/rng.hpp"

namespace icl::al {

using Matrix = std::vector<std::vector<double>>;  // subjects x features

struct MisalignedSubjects : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ActiveNotParticipant : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DegenerateDenominator : std::domain_error {
  using std::domain_error::domain_error;
};

// ---------------------------------------------------------------------------
// Local learners.

enum class AlLearnerKind { ridge, boosted_stumps };

struct Stump {
  int feature = 0;
  double threshold = 0.0;
  double left = 0.0;   // prediction for x[feature] <= threshold
  double right = 0.0;
};

struct LocalModel {
  AlLearnerKind kind = AlLearnerKind::ridge;
  std::vector<double> weights;  // ridge: per-feature weights, intercept last
  std::vector<Stump> stumps;
  double shrinkage = 1.0;
  double predict(const std::vector<double>& x) const;
  std::vector<double> predict(const Matrix& x) const;
};

struct AlFitParams {
  double ridge_reg = 1e-3;
  int stump_rounds = 20;
  double stump_shrinkage = 0.5;
};

LocalModel fit_model(const Matrix& x, const std::vector<double>& y,
                     AlLearnerKind kind, const AlFitParams& fit);

double mse(const std::vector<double>& y, const std::vector<double>& pred);

// ---------------------------------------------------------------------------
// Entities and the residual-exchange round.

struct AlEntity {
  int id = 0;
  double price_coeff = 0.0;  // c_i
  AlLearnerKind learner = AlLearnerKind::ridge;

  // Subject-aligned splits of the entity's own feature block and labels.
  Matrix train_x, val_x, test_x;
  std::vector<double> train_y, val_y, test_y;

  // Accumulated ensemble prediction per split, and the training residual.
  std::vector<double> train_f, val_f, test_f;
  std::vector<double> residual;

  // Prediction protocol: additive per-round contributions on the test split
  // (own round-0 fit first, then one entry per training round).
  std::vector<std::vector<double>> test_contrib;

  double val_loss() const { return mse(val_y, val_f); }
  double test_loss() const { return mse(test_y, test_f); }
};

// Round-0 local fit; seeds residual = y - f_0 and the first test contribution.
void init_entity(AlEntity& e, const AlFitParams& fit);

struct PalRoundGains {
  double mu_ab = 0.0;        // mu_{A,B}: A's realized income from the round
  double mu_a_from_b = 0.0;  // mu_{A<-B}: extra gain B brought to A
  double mu_ba = 0.0;
  double mu_b_from_a = 0.0;
};

// One symmetric residual exchange between A and B. Each side fits a helper
// model on the other's blended residual target (blend tau toward its own
// residual), the recipient fits a follow-up on what remains, and both commit
// the additive update. Gains are validation-loss reductions, with the
// assist term measured against the local-only counterfactual.
PalRoundGains run_pal_round(AlEntity& a, AlEntity& b, double tau,
                            const AlFitParams& fit);

// ---------------------------------------------------------------------------
// Favor scores and consensus.

struct GainEstimates {
  // Keyed (i, j): mu_pair is mu_{i,j}; mu_assist is mu_{j<-i}, the gain i
  // brings j (the pairing of arguments favor_score(i, j) consumes).
  std::map<std::pair<int, int>, double> mu_pair;
  std::map<std::pair<int, int>, double> mu_assist;
  std::map<std::pair<int, int>, int> last_collab_round;
};

struct FavorScore {
  bool unexplored = true;
  double value = 0.0;
};

// Unexplored sorts above any finite score.
bool favor_less(const FavorScore& lhs, const FavorScore& rhs);

FavorScore favor_score(int i, int j, double u, double c_i, double c_j,
                       const GainEstimates& est);

// Mutual-favor detection: the pair (i, j) with favors[i] == j and
// favors[j] == i, provided exactly one such pair exists.
std::optional<std::pair<int, int>> consensus_pair(
    const std::map<int, int>& favors);

// Three-entity consensus existence: some pair prefers each other over the
// third under the favor scores.
bool consensus_exists(double u, const std::vector<double>& c,
                    const std::vector<std::vector<double>>& mu_pair,
                    const std::vector<std::vector<double>>& mu_assist);

// Largest linear price admitting a pricing consensus among K entities whose
// expected gains are mu (mu[0] the maximum): min over the others of
// u*(mu_0 - mu_j) / (mu_0 + (K-1)*mu_j).
double consensus_price_threshold(double u, const std::vector<double>& mu, int k);

// ---------------------------------------------------------------------------
// Zero-balance pricing for the non-competing multi-entity case.

struct ZeroBalancePricing {
  double coeff = 1.0;  // linear cost C(z) = coeff * z
  int k = 2;           // participant count
  double cost(double z) const { return coeff * z; }
};

// Non-active participants each pay C(z); the active one receives the exact
// negation of their total, so the costs sum to zero without tolerance.
std::map<int, double> zero_balance_costs(double z, int active,
                                         const std::vector<int>& participants,
                                         const ZeroBalancePricing& pricing);

// ---------------------------------------------------------------------------
// Full incentivized runs.

struct AlConfig {
  int entities = 3;
  int subjects = 300;
  int features_per_entity = 3;
  int rounds = 30;
  double u = 1.0;
  std::vector<double> price_coeffs;  // empty = all entities pay u
  double tau = 0.5;
  AlLearnerKind learner = AlLearnerKind::ridge;
  AlFitParams fit;
  double noise_sigma = 0.5;
  int stop_patience = 3;
  bool collaborate = true;  // false = local-only baseline on the same data
  double lambda = 0.1;      // ledger bookkeeping weight
  void validate() const;
};

struct PalRunResult {
  GameLedger ledger;
  // test_error[i][t]: entity i after round t (index 0 = round-0 local fit).
  std::vector<std::vector<double>> test_error;
  std::vector<std::vector<std::pair<int, int>>> pairings;  // per round
  std::vector<AlEntity> entities;  // final states, contributions included
  GainEstimates estimates;
};

PalRunResult run_pal(const AlConfig& config, std::uint64_t seed);

}  // namespace icl::al
