#include "icl/al.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace icl::al {

namespace {

std::vector<double> add(const std::vector<double>& a,
                        const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

void add_in_place(std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// Gaussian elimination with partial pivoting; the systems here are tiny
// ridge normal equations (a handful of features plus intercept).
std::vector<double> solve_linear(std::vector<std::vector<double>> m,
                                 std::vector<double> rhs) {
  const std::size_t d = rhs.size();
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
    std::swap(m[col], m[piv]);
    std::swap(rhs[col], rhs[piv]);
    for (std::size_t r = col + 1; r < d; ++r) {
      const double f = m[r][col] / m[col][col];
      for (std::size_t c = col; c < d; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  std::vector<double> x(d);
  for (std::size_t i = d; i-- > 0;) {
    double v = rhs[i];
    for (std::size_t c = i + 1; c < d; ++c) v -= m[i][c] * x[c];
    x[i] = v / m[i][i];
  }
  return x;
}

LocalModel fit_ridge(const Matrix& x, const std::vector<double>& y,
                     double reg) {
  const std::size_t n = x.size();
  const std::size_t d = x.empty() ? 0 : x[0].size();
  // Normal equations over [features, 1]; the intercept is regularized too,
  // which is harmless at reg = 1e-3 on centered synthetic data.
  std::vector<std::vector<double>> xtx(d + 1, std::vector<double>(d + 1, 0.0));
  std::vector<double> xty(d + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a <= d; ++a) {
      const double xa = a < d ? x[i][a] : 1.0;
      xty[a] += xa * y[i];
      for (std::size_t b = a; b <= d; ++b) {
        const double xb = b < d ? x[i][b] : 1.0;
        xtx[a][b] += xa * xb;
      }
    }
  }
  for (std::size_t a = 0; a <= d; ++a) {
    xtx[a][a] += reg;
    for (std::size_t b = 0; b < a; ++b) xtx[a][b] = xtx[b][a];
  }
  LocalModel model;
  model.kind = AlLearnerKind::ridge;
  model.weights = solve_linear(std::move(xtx), std::move(xty));
  return model;
}

LocalModel fit_stumps(const Matrix& x, const std::vector<double>& y,
                      int rounds, double shrinkage) {
  const std::size_t n = x.size();
  const std::size_t d = x.empty() ? 0 : x[0].size();
  LocalModel model;
  model.kind = AlLearnerKind::boosted_stumps;
  model.shrinkage = shrinkage;
  const double base = std::accumulate(y.begin(), y.end(), 0.0) /
                      static_cast<double>(std::max<std::size_t>(n, 1));
  model.weights = {base};
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - base;

  std::vector<std::vector<std::size_t>> order(d, std::vector<std::size_t>(n));
  for (std::size_t f = 0; f < d; ++f) {
    std::iota(order[f].begin(), order[f].end(), 0);
    std::sort(order[f].begin(), order[f].end(),
              [&](std::size_t a, std::size_t b) { return x[a][f] < x[b][f]; });
  }

  for (int round = 0; round < rounds; ++round) {
    const double total = std::accumulate(resid.begin(), resid.end(), 0.0);
    Stump best;
    double best_gain = -1.0;
    for (std::size_t f = 0; f < d; ++f) {
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const std::size_t i = order[f][k];
        left_sum += resid[i];
        const std::size_t j = order[f][k + 1];
        if (x[i][f] == x[j][f]) continue;
        const double nl = static_cast<double>(k + 1);
        const double nr = static_cast<double>(n - k - 1);
        const double right_sum = total - left_sum;
        // SSE reduction of the two-mean fit relative to the zero predictor.
        const double gain =
            left_sum * left_sum / nl + right_sum * right_sum / nr;
        if (gain > best_gain) {
          best_gain = gain;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (x[i][f] + x[j][f]);
          best.left = left_sum / nl;
          best.right = right_sum / nr;
        }
      }
    }
    if (best_gain <= 0.0) break;
    model.stumps.push_back(best);
    for (std::size_t i = 0; i < n; ++i) {
      const double p =
          x[i][best.feature] <= best.threshold ? best.left : best.right;
      resid[i] -= shrinkage * p;
    }
  }
  return model;
}

}  // namespace

double LocalModel::predict(const std::vector<double>& x) const {
  if (kind == AlLearnerKind::ridge) {
    double v = weights.back();
    for (std::size_t f = 0; f + 1 < weights.size(); ++f) v += weights[f] * x[f];
    return v;
  }
  double v = weights.empty() ? 0.0 : weights[0];
  for (const Stump& s : stumps)
    v += shrinkage * (x[s.feature] <= s.threshold ? s.left : s.right);
  return v;
}

std::vector<double> LocalModel::predict(const Matrix& x) const {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = predict(x[i]);
  return out;
}

LocalModel fit_model(const Matrix& x, const std::vector<double>& y,
                     AlLearnerKind kind, const AlFitParams& fit) {
  if (x.size() != y.size())
    throw MisalignedSubjects("feature rows and labels differ in length");
  if (kind == AlLearnerKind::ridge) return fit_ridge(x, y, fit.ridge_reg);
  return fit_stumps(x, y, fit.stump_rounds, fit.stump_shrinkage);
}

double mse(const std::vector<double>& y, const std::vector<double>& pred) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - pred[i];
    s += d * d;
  }
  return s / static_cast<double>(std::max<std::size_t>(y.size(), 1));
}

void init_entity(AlEntity& e, const AlFitParams& fit) {
  const LocalModel m = fit_model(e.train_x, e.train_y, e.learner, fit);
  e.train_f = m.predict(e.train_x);
  e.val_f = m.predict(e.val_x);
  e.test_f = m.predict(e.test_x);
  e.residual.resize(e.train_y.size());
  for (std::size_t i = 0; i < e.train_y.size(); ++i)
    e.residual[i] = e.train_y[i] - e.train_f[i];
  e.test_contrib.clear();
  e.test_contrib.push_back(e.test_f);
}

namespace {

struct SideUpdate {
  std::vector<double> train, val, test;  // committed additive contribution
  double mu_pair = 0.0;
  double mu_assist = 0.0;
};

// One direction of the exchange: `helper` fits on the blended target, the
// recipient fits a follow-up on what remains, and gains are measured on the
// recipient's validation split against its local-only counterfactual.
SideUpdate assist(const AlEntity& recipient, const AlEntity& helper,
                  const std::vector<double>& blended_target,
                  const AlFitParams& fit) {
  const LocalModel g = fit_model(helper.train_x, blended_target,
                                 helper.learner, fit);
  const std::vector<double> g_train = g.predict(helper.train_x);

  std::vector<double> remainder(recipient.residual.size());
  for (std::size_t i = 0; i < remainder.size(); ++i)
    remainder[i] = recipient.residual[i] - g_train[i];
  const LocalModel h = fit_model(recipient.train_x, remainder,
                                 recipient.learner, fit);
  const LocalModel local_only = fit_model(recipient.train_x,
                                          recipient.residual,
                                          recipient.learner, fit);

  SideUpdate out;
  out.train = add(g_train, h.predict(recipient.train_x));
  out.val = add(g.predict(helper.val_x), h.predict(recipient.val_x));
  out.test = add(g.predict(helper.test_x), h.predict(recipient.test_x));

  const double before = recipient.val_loss();
  const double after = mse(recipient.val_y, add(recipient.val_f, out.val));
  const double counterfactual =
      mse(recipient.val_y,
          add(recipient.val_f, local_only.predict(recipient.val_x)));
  out.mu_pair = before - after;
  out.mu_assist = counterfactual - after;
  return out;
}

void commit(AlEntity& e, const SideUpdate& u) {
  add_in_place(e.train_f, u.train);
  add_in_place(e.val_f, u.val);
  add_in_place(e.test_f, u.test);
  for (std::size_t i = 0; i < e.residual.size(); ++i)
    e.residual[i] = e.train_y[i] - e.train_f[i];
  e.test_contrib.push_back(u.test);
}

}  // namespace

PalRoundGains run_pal_round(AlEntity& a, AlEntity& b, double tau,
                            const AlFitParams& fit) {
  if (a.id == b.id)
    throw MisalignedSubjects("an entity cannot pair with itself");
  if (a.train_x.size() != b.train_x.size() ||
      a.val_x.size() != b.val_x.size() || a.test_x.size() != b.test_x.size())
    throw MisalignedSubjects("entities hold differently sized subject splits");

  const std::size_t n = a.residual.size();
  std::vector<double> target_for_b(n), target_for_a(n);
  for (std::size_t i = 0; i < n; ++i) {
    target_for_b[i] = (1.0 - tau) * a.residual[i] + tau * b.residual[i];
    target_for_a[i] = (1.0 - tau) * b.residual[i] + tau * a.residual[i];
  }
  // Both directions run on the pre-round residuals, then commit together.
  const SideUpdate for_a = assist(a, b, target_for_b, fit);
  const SideUpdate for_b = assist(b, a, target_for_a, fit);
  commit(a, for_a);
  commit(b, for_b);

  PalRoundGains g;
  g.mu_ab = for_a.mu_pair;
  g.mu_a_from_b = for_a.mu_assist;
  g.mu_ba = for_b.mu_pair;
  g.mu_b_from_a = for_b.mu_assist;
  return g;
}

bool favor_less(const FavorScore& lhs, const FavorScore& rhs) {
  if (lhs.unexplored != rhs.unexplored) return rhs.unexplored;
  if (lhs.unexplored) return false;  // two unexplored scores tie
  return lhs.value < rhs.value;
}

FavorScore favor_score(int i, int j, double u, double c_i, double c_j,
                       const GainEstimates& est) {
  const auto it = est.mu_pair.find({i, j});
  if (it == est.mu_pair.end()) return FavorScore{};
  const auto assist_it = est.mu_assist.find({i, j});
  const double mu_assist =
      assist_it == est.mu_assist.end() ? 0.0 : assist_it->second;
  return FavorScore{false, (u - c_i) * it->second + c_j * mu_assist};
}

std::optional<std::pair<int, int>> consensus_pair(
    const std::map<int, int>& favors) {
  std::optional<std::pair<int, int>> found;
  for (const auto& [i, j] : favors) {
    if (i >= j) continue;
    const auto back = favors.find(j);
    if (back == favors.end() || back->second != i) continue;
    if (found) return std::nullopt;  // more than one mutual pair
    found = std::pair<int, int>{i, j};
  }
  return found;
}

bool consensus_exists(double u, const std::vector<double>& c,
                    const std::vector<std::vector<double>>& mu_pair,
                    const std::vector<std::vector<double>>& mu_assist) {
  const auto q = [&](int i, int j) {
    return (u - c[i]) * mu_pair[i][j] + c[j] * mu_assist[i][j];
  };
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const int k = 3 - i - j;
      if (q(i, j) >= q(i, k) && q(j, i) >= q(j, k)) return true;
    }
  return false;
}

double consensus_price_threshold(double u, const std::vector<double>& mu, int k) {
  if (static_cast<int>(mu.size()) != k || k < 2)
    throw std::invalid_argument("need one mean per entity, k >= 2");
  double best = std::numeric_limits<double>::infinity();
  for (int j = 1; j < k; ++j) {
    const double denom = mu[0] + static_cast<double>(k - 1) * mu[j];
    if (denom == 0.0)
      throw DegenerateDenominator("zero denominator in pricing threshold");
    best = std::min(best, u * (mu[0] - mu[j]) / denom);
  }
  return best;
}

std::map<int, double> zero_balance_costs(double z, int active,
                                         const std::vector<int>& participants,
                                         const ZeroBalancePricing& pricing) {
  if (participants.size() < 2)
    throw std::invalid_argument("zero-balance pricing needs at least 2 ids");
  if (std::find(participants.begin(), participants.end(), active) ==
      participants.end())
    throw ActiveNotParticipant("active id is not a participant");
  const double charge = pricing.cost(z);
  std::map<int, double> out;
  for (int id : participants)
    if (id != active) out[id] = charge;
  // Accumulate in the map's sorted order so the active entry is the exact
  // negation of the sum a reader of the map will form.
  double total = 0.0;
  for (const auto& [id, cost] : out) total += cost;
  out[active] = -total;
  return out;
}

void AlConfig::validate() const {
  if (entities < 1) throw std::invalid_argument("entities must be >= 1");
  if (subjects < 10) throw std::invalid_argument("subjects must be >= 10");
  if (features_per_entity < 1)
    throw std::invalid_argument("features_per_entity must be >= 1");
  if (rounds < 0) throw std::invalid_argument("rounds must be >= 0");
  if (!(tau >= 0.0 && tau <= 1.0))
    throw std::invalid_argument("tau must be in [0, 1]");
  if (!price_coeffs.empty() &&
      static_cast<int>(price_coeffs.size()) != entities)
    throw std::invalid_argument("price_coeffs must match the entity count");
  for (double c : price_coeffs)
    if (!(c >= 0.0)) throw std::invalid_argument("price coefficients are >= 0");
  if (!(noise_sigma >= 0.0))
    throw std::invalid_argument("noise_sigma must be >= 0");
  if (stop_patience < 1)
    throw std::invalid_argument("stop_patience must be >= 1");
}

PalRunResult run_pal(const AlConfig& config, std::uint64_t seed) {
  config.validate();
  const int k = config.entities;
  const int total_features = k * config.features_per_entity;
  const int n = config.subjects;
  const int n_train = n * 6 / 10;
  const int n_val = n * 2 / 10;
  const int n_test = n - n_train - n_val;

  Rng root(seed);
  Rng data_rng = root.stream(1);

  // One global process, features split vertically; every label mixes all
  // features so no entity can reach the noise floor alone.
  Matrix x(n, std::vector<double>(total_features));
  for (auto& row : x)
    for (double& v : row) v = data_rng.normal();

  PalRunResult result;
  result.ledger.lambda = config.lambda;
  result.ledger.utility_u = config.u;
  result.entities.resize(k);
  result.test_error.resize(k);

  for (int i = 0; i < k; ++i) {
    std::vector<double> w(total_features);
    for (double& v : w) v = data_rng.normal();
    std::vector<double> y(n);
    for (int r = 0; r < n; ++r) {
      double v = config.noise_sigma * data_rng.normal();
      for (int f = 0; f < total_features; ++f) v += w[f] * x[r][f];
      y[r] = v;
    }
    AlEntity& e = result.entities[i];
    e.id = i;
    e.learner = config.learner;
    e.price_coeff = config.price_coeffs.empty() ? config.u
                                                : config.price_coeffs[i];
    const int f0 = i * config.features_per_entity;
    const int f1 = f0 + config.features_per_entity;
    auto block = [&](int row) {
      return std::vector<double>(x[row].begin() + f0, x[row].begin() + f1);
    };
    for (int r = 0; r < n_train; ++r) {
      e.train_x.push_back(block(r));
      e.train_y.push_back(y[r]);
    }
    for (int r = n_train; r < n_train + n_val; ++r) {
      e.val_x.push_back(block(r));
      e.val_y.push_back(y[r]);
    }
    for (int r = n_train + n_val; r < n; ++r) {
      e.test_x.push_back(block(r));
      e.test_y.push_back(y[r]);
    }
    (void)n_test;
    init_entity(e, config.fit);
    result.test_error[i].push_back(e.test_loss());
  }

  std::vector<double> best_val(k);
  std::vector<int> since_improve(k, 0);
  std::vector<bool> stopped(k, false);
  for (int i = 0; i < k; ++i) best_val[i] = result.entities[i].val_loss();

  for (int t = 1; t <= config.rounds; ++t) {
    Rng tie_rng = root.stream(2, static_cast<std::uint64_t>(t));
    std::vector<std::pair<int, int>> round_pairs;
    std::map<int, double> round_gains;  // realized validation-loss reduction
    std::map<int, double> round_costs;

    // Quit rule: an entity that has explored every partner and found no
    // positive expected income stops proposing collaborations.
    auto quit_collab = [&](int i) {
      for (int j = 0; j < k; ++j) {
        if (j == i) continue;
        const auto it = result.estimates.mu_pair.find({i, j});
        if (it == result.estimates.mu_pair.end() || it->second > 0.0)
          return false;
      }
      return true;
    };

    if (config.collaborate && k > 1) {
      std::map<int, int> favors;
      std::map<int, FavorScore> favor_values;
      for (int i = 0; i < k; ++i) {
        if (stopped[i] || quit_collab(i)) continue;
        std::vector<int> best_ids;
        FavorScore best_score;
        bool have = false;
        for (int j = 0; j < k; ++j) {
          if (j == i || stopped[j] || quit_collab(j)) continue;
          const AlEntity& a = result.entities[i];
          const AlEntity& b = result.entities[j];
          const FavorScore s = favor_score(i, j, config.u, a.price_coeff,
                                           b.price_coeff, result.estimates);
          if (!have || favor_less(best_score, s)) {
            best_score = s;
            best_ids.assign(1, j);
            have = true;
          } else if (!favor_less(s, best_score)) {
            best_ids.push_back(j);  // exact tie (e.g. several unexplored)
          }
        }
        if (have) {
          const int pick = best_ids[tie_rng.below(best_ids.size())];
          favors[i] = pick;
          favor_values[i] = best_score;
        }
      }
      // Mutual pairs; disjoint greedily by descending combined score, with
      // unexplored counting as infinitely attractive.
      std::vector<std::tuple<double, int, int>> mutual;
      for (const auto& [i, j] : favors) {
        if (i >= j) continue;
        const auto back = favors.find(j);
        if (back == favors.end() || back->second != i) continue;
        const FavorScore& si = favor_values[i];
        const FavorScore& sj = favor_values[j];
        const double combined =
            (si.unexplored || sj.unexplored)
                ? std::numeric_limits<double>::infinity()
                : si.value + sj.value;
        mutual.emplace_back(combined, i, j);
      }
      std::sort(mutual.begin(), mutual.end(),
                [](const auto& a, const auto& b) {
                  return std::get<0>(a) > std::get<0>(b);
                });
      std::vector<bool> taken(k, false);
      for (const auto& [score, i, j] : mutual) {
        (void)score;
        if (taken[i] || taken[j]) continue;
        taken[i] = taken[j] = true;
        round_pairs.emplace_back(i, j);
      }
    }

    std::vector<bool> paired(k, false);
    for (const auto& [i, j] : round_pairs) {
      AlEntity& a = result.entities[i];
      AlEntity& b = result.entities[j];
      const PalRoundGains g = run_pal_round(a, b, config.tau, config.fit);
      paired[i] = paired[j] = true;
      auto& est = result.estimates;
      est.mu_pair[{i, j}] = g.mu_ab;
      est.mu_pair[{j, i}] = g.mu_ba;
      est.mu_assist[{i, j}] = g.mu_b_from_a;  // gain i brought to j
      est.mu_assist[{j, i}] = g.mu_a_from_b;
      est.last_collab_round[{i, j}] = t;
      est.last_collab_round[{j, i}] = t;
      round_gains[i] = g.mu_ab;
      round_gains[j] = g.mu_ba;
      // Each side is billed for its own realized gain and paid for the
      // other's; the pair nets to zero by exact negation.
      const double cost_i =
          a.price_coeff * g.mu_ab - b.price_coeff * g.mu_ba;
      round_costs[i] = cost_i;
      round_costs[j] = -cost_i;
    }

    // Everyone else (still running) boosts locally on its own residual.
    for (int i = 0; i < k; ++i) {
      if (stopped[i] || paired[i]) continue;
      AlEntity& e = result.entities[i];
      const double before = e.val_loss();
      const LocalModel h = fit_model(e.train_x, e.residual, e.learner,
                                     config.fit);
      SideUpdate u;
      u.train = h.predict(e.train_x);
      u.val = h.predict(e.val_x);
      u.test = h.predict(e.test_x);
      commit(e, u);
      round_gains[i] = before - e.val_loss();
      round_costs[i] = 0.0;
    }

    // Stop rule: retire an entity whose validation loss stalls.
    for (int i = 0; i < k; ++i) {
      if (stopped[i]) continue;
      const double v = result.entities[i].val_loss();
      if (v < best_val[i] - 1e-12) {
        best_val[i] = v;
        since_improve[i] = 0;
      } else if (++since_improve[i] >= config.stop_patience) {
        stopped[i] = true;
      }
    }

    for (int i = 0; i < k; ++i)
      result.test_error[i].push_back(result.entities[i].test_loss());
    result.pairings.push_back(round_pairs);

    RoundRecord rec;
    for (const auto& [id, gain] : round_gains) rec.participants.push_back(id);
    for (const auto& [i, j] : round_pairs) {
      rec.active.push_back(i);
      rec.active.push_back(j);
    }
    std::sort(rec.active.begin(), rec.active.end());
    double active_sum = 0.0;
    for (int id : rec.active) active_sum += round_gains[id];
    rec.collab_gain = rec.active.empty()
                          ? 0.0
                          : active_sum / static_cast<double>(rec.active.size());
    const double collab_income = config.u * rec.collab_gain;
    std::vector<double> costs;
    for (const auto& [id, gain] : round_gains) {
      rec.gains[id] = gain;
      rec.costs[id] = round_costs[id];
      rec.profits[id] = participant_profit(true, round_costs[id],
                                           collab_income, config.u * gain);
      costs.push_back(round_costs[id]);
    }
    SystemObjectiveParams sp;
    sp.lambda = config.lambda;
    rec.system_profit = system_profit(sp, costs, collab_income);
    result.ledger.rounds.push_back(std::move(rec));

    if (std::all_of(stopped.begin(), stopped.end(),
                    [](bool s) { return s; }))
      break;
  }
  return result;
}

}  // namespace icl::al
