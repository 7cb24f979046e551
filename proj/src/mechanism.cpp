#include "icl/mechanism.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace icl {

// ---------------------------------------------------------------------------
// UtilityIncome

UtilityIncome UtilityIncome::linear(double u) {
  if (!(u >= 0.0)) throw std::invalid_argument("income coefficient must be >= 0");
  UtilityIncome ui;
  ui.linear_ = true;
  ui.u_ = u;
  return ui;
}

UtilityIncome UtilityIncome::tabulated(
    std::vector<std::pair<double, double>> pts) {
  if (pts.size() < 2)
    throw std::invalid_argument("tabulated income needs at least two points");
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (!(pts[i].first > pts[i - 1].first))
      throw std::invalid_argument("tabulated income abscissae must increase");
    if (pts[i].second < pts[i - 1].second)
      throw std::invalid_argument("income must be nondecreasing in gain");
  }
  UtilityIncome ui;
  ui.linear_ = false;
  ui.pts_ = std::move(pts);
  return ui;
}

double UtilityIncome::operator()(double z) const {
  if (linear_) return u_ * z;
  if (z <= pts_.front().first) return pts_.front().second;
  if (z >= pts_.back().first) return pts_.back().second;
  auto it = std::upper_bound(
      pts_.begin(), pts_.end(), z,
      [](double v, const std::pair<double, double>& p) { return v < p.first; });
  auto hi = *it;
  auto lo = *(it - 1);
  const double t = (z - lo.first) / (hi.first - lo.first);
  return lo.second + t * (hi.second - lo.second);
}

// ---------------------------------------------------------------------------
// Profit accounting

double participant_profit(bool is_participant, double cost,
                          double collab_income, double local_income) {
  if (!is_participant) return 0.0;
  return -cost + collab_income - local_income;
}

double system_profit(const SystemObjectiveParams& params,
                     const std::vector<double>& costs, double collab_income) {
  double sum = std::accumulate(costs.begin(), costs.end(), 0.0);
  if (params.cost_only) return sum;
  return params.lambda * sum + collab_income;
}

double social_welfare_lambda(double lambda, int n_participants) {
  if (n_participants < 0)
    throw std::invalid_argument("participant count must be >= 0");
  return (lambda - 1.0) / (n_participants + 1.0);
}

bool incent_parti(double expected_cost, double expected_collab_income,
                  double expected_local_income) {
  return -expected_cost + expected_collab_income - expected_local_income >= 0.0;
}

bool incent_sys(double lambda, double expected_cost, double income_with,
                double income_without) {
  return lambda * expected_cost + income_with - income_without >= 0.0;
}

// ---------------------------------------------------------------------------
// Finite-support gains

double GainSupport::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) m += probs[i] * values[i];
  return m;
}

void GainSupport::validate() const {
  if (values.empty() || values.size() != probs.size())
    throw std::invalid_argument("gain support needs matching values/probs");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("gain probabilities must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("gain probabilities must sum to 1");
}

namespace {

// Expected income of the average-of-active-gains model for a fixed active
// subset, by exact product enumeration of the member supports.
double active_subset_income(const NashInstance& inst,
                            const std::vector<int>& active) {
  if (active.empty()) return 0.0;  // no model, no income
  std::vector<std::size_t> idx(active.size(), 0);
  double expectation = 0.0;
  while (true) {
    double prob = 1.0;
    double sum = 0.0;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const GainSupport& g = inst.candidates[active[k]].gain;
      prob *= g.probs[idx[k]];
      sum += g.values[idx[k]];
    }
    expectation += prob * inst.utility(sum / static_cast<double>(active.size()));
    // advance mixed-radix counter
    std::size_t k = 0;
    for (; k < active.size(); ++k) {
      if (++idx[k] < inst.candidates[active[k]].gain.values.size()) break;
      idx[k] = 0;
    }
    if (k == active.size()) break;
  }
  return expectation;
}

std::uint64_t subset_term_count(const NashInstance& inst,
                                const std::vector<int>& members) {
  std::uint64_t total = 0;
  const std::uint64_t patterns = 1ULL << members.size();
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    std::uint64_t terms = 1;
    for (std::size_t k = 0; k < members.size(); ++k)
      if (mask & (1ULL << k))
        terms *= inst.candidates[members[k]].gain.values.size();
    total += terms;
    if (total > inst.enumeration_budget) return total;
  }
  return total;
}

}  // namespace

double expected_collab_income(const NashInstance& inst,
                              const std::vector<int>& members) {
  if (members.size() > 20 || subset_term_count(inst, members) > inst.enumeration_budget)
    throw InstanceTooLarge("equilibrium instance exceeds enumeration budget");
  const std::uint64_t patterns = 1ULL << members.size();
  double expectation = 0.0;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    double prob = 1.0;
    std::vector<int> active;
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (mask & (1ULL << k)) {
        prob *= inst.rho;
        active.push_back(members[k]);
      } else {
        prob *= 1.0 - inst.rho;
      }
    }
    if (active.empty()) continue;  // empty round yields zero income
    expectation += prob * active_subset_income(inst, active);
  }
  return expectation;
}

NashReport nash_check(const NashInstance& inst) {
  if (inst.candidates.size() > 6)
    throw InstanceTooLarge("equilibrium check limited to 6 candidates");
  if (!(inst.rho >= 0.0 && inst.rho <= 1.0))
    throw std::invalid_argument("rho must lie in [0,1]");
  for (const auto& c : inst.candidates) c.gain.validate();
  std::set<int> profile(inst.participants.begin(), inst.participants.end());
  for (int id : profile)
    if (id < 0 || id >= static_cast<int>(inst.candidates.size()))
      throw std::invalid_argument("profile references unknown candidate");

  NashReport report;
  report.equilibrium = true;
  for (int m = 0; m < static_cast<int>(inst.candidates.size()); ++m) {
    std::vector<int> without;  // P^(-m)
    for (int id : profile)
      if (id != m) without.push_back(id);
    std::vector<int> with = without;
    with.push_back(m);

    const NashCandidate& cand = inst.candidates[m];
    const double income_with = expected_collab_income(inst, with);
    const double income_without = expected_collab_income(inst, without);
    double own_income = 0.0;
    for (std::size_t i = 0; i < cand.gain.values.size(); ++i)
      own_income += cand.gain.probs[i] * inst.utility(cand.gain.values[i]);

    NashReport::PerCandidate pc;
    pc.id = m;
    pc.in_profile = profile.count(m) > 0;
    pc.parti_ok = incent_parti(cand.cost, income_with, own_income);
    if (inst.lambda_cost_only) {
      // In the cost-only regime the platform keeps anyone who pays.
      pc.sys_ok = cand.cost >= 0.0;
    } else {
      pc.sys_ok = incent_sys(inst.lambda, cand.cost, income_with, income_without);
    }
    if ((pc.parti_ok && pc.sys_ok) != pc.in_profile) report.equilibrium = false;
    report.candidates.push_back(pc);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Activation plans

void SelectionVector::validate(const std::vector<int>& participants) const {
  if (q.size() != participants.size())
    throw InvalidSelectionVector("selection vector size mismatch");
  double sum = 0.0;
  for (int id : participants) {
    auto it = q.find(id);
    if (it == q.end())
      throw InvalidSelectionVector("selection vector missing participant");
    if (!(it->second >= 0.0 && it->second <= 1.0))
      throw InvalidSelectionVector("activation probabilities must lie in [0,1]");
    sum += it->second;
  }
  if (std::abs(sum - rho * static_cast<double>(participants.size())) > 1e-9)
    throw InvalidSelectionVector(
        "activation probabilities must sum to rho * |participants|");
}

std::set<int> sample_active(const SelectionVector& sel,
                            const std::vector<int>& participants, Rng& rng) {
  sel.validate(participants);
  std::set<int> active;
  for (int id : participants)
    if (rng.bernoulli(sel.q.at(id))) active.insert(id);
  return active;
}

namespace {

std::uint64_t lattice_point_count(std::size_t n, long long units,
                                  long long cap, std::uint64_t budget) {
  // DP over prefix sums, clamped at the budget to keep it cheap.
  std::vector<std::uint64_t> dp(units + 1, 0);
  dp[0] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint64_t> next(units + 1, 0);
    for (long long s = 0; s <= units; ++s) {
      if (!dp[s]) continue;
      for (long long v = 0; v <= cap && s + v <= units; ++v) {
        next[s + v] += dp[s];
        if (next[s + v] > budget) next[s + v] = budget + 1;
      }
    }
    dp = std::move(next);
  }
  return dp[units];
}

}  // namespace

SelectionOptimum optimize_selection(
    double rho, std::size_t n,
    const std::function<double(const std::vector<double>&)>& expected_income,
    std::uint64_t enumeration_budget, double step) {
  if (n == 0) throw std::invalid_argument("need at least one participant");
  if (!(step > 0.0 && step <= 1.0))
    throw std::invalid_argument("step must lie in (0,1]");
  const double mass = rho * static_cast<double>(n);
  const long long units = std::llround(mass / step);
  const long long cap = std::llround(1.0 / step);
  if (std::abs(units * step - mass) > 1e-9)
    throw InvalidSelectionVector("rho * n is not representable on the grid");
  if (units < 0 || units > cap * static_cast<long long>(n))
    throw InvalidSelectionVector("rho infeasible for [0,1] probabilities");

  auto to_q = [&](const std::vector<long long>& u) {
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = u[i] * step;
    return q;
  };

  SelectionOptimum best;
  if (lattice_point_count(n, units, cap, enumeration_budget) <=
      enumeration_budget) {
    best.exhaustive = true;
    std::vector<long long> u(n, 0);
    bool have = false;
    // Depth-first enumeration of lattice compositions.
    std::function<void(std::size_t, long long)> rec = [&](std::size_t i,
                                                          long long left) {
      if (i + 1 == n) {
        if (left > cap) return;
        u[i] = left;
        const std::vector<double> q = to_q(u);
        const double val = expected_income(q);
        if (!have || val > best.objective) {
          have = true;
          best.objective = val;
          best.q = q;
        }
        return;
      }
      const long long hi = std::min(cap, left);
      for (long long v = 0; v <= hi; ++v) {
        u[i] = v;
        rec(i + 1, left - v);
      }
    };
    rec(0, units);
    if (!have) throw InvalidSelectionVector("empty selection lattice");
    return best;
  }

  // Pairwise mass-transfer ascent from the (near-)uniform lattice point.
  std::vector<long long> u(n, units / static_cast<long long>(n));
  long long assigned = (units / static_cast<long long>(n)) *
                       static_cast<long long>(n);
  for (std::size_t i = 0; assigned < units; ++i, ++assigned) u[i] += 1;
  double cur = expected_income(to_q(u));
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (u[i] == 0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || u[j] >= cap) continue;
        u[i] -= 1;
        u[j] += 1;
        const double val = expected_income(to_q(u));
        if (val > cur + 1e-12) {
          cur = val;
          improved = true;
        } else {
          u[i] += 1;
          u[j] -= 1;
        }
      }
    }
  }
  best.exhaustive = false;
  best.q = to_q(u);
  best.objective = cur;
  return best;
}

std::function<double(const std::vector<double>&)> bernoulli_mean_gain_income(
    std::vector<GainSupport> gains, UtilityIncome utility,
    std::uint64_t enumeration_budget) {
  for (const auto& g : gains) g.validate();
  return [gains = std::move(gains), utility,
          enumeration_budget](const std::vector<double>& q) {
    if (q.size() != gains.size())
      throw std::invalid_argument("selection vector size mismatch");
    const std::size_t n = gains.size();
    if (n > 20) throw InstanceTooLarge("too many participants to enumerate");
    std::uint64_t terms = 0;
    const std::uint64_t patterns = 1ULL << n;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
      std::uint64_t t = 1;
      for (std::size_t k = 0; k < n; ++k)
        if (mask & (1ULL << k)) t *= gains[k].values.size();
      terms += t;
      if (terms > enumeration_budget)
        throw InstanceTooLarge("expected income exceeds enumeration budget");
    }
    double expectation = 0.0;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
      double prob = 1.0;
      std::vector<std::size_t> active;
      for (std::size_t k = 0; k < n; ++k) {
        if (mask & (1ULL << k)) {
          prob *= q[k];
          active.push_back(k);
        } else {
          prob *= 1.0 - q[k];
        }
      }
      if (prob == 0.0 || active.empty()) continue;
      // product enumeration over the active member supports
      std::vector<std::size_t> idx(active.size(), 0);
      while (true) {
        double p = prob;
        double sum = 0.0;
        for (std::size_t k = 0; k < active.size(); ++k) {
          p *= gains[active[k]].probs[idx[k]];
          sum += gains[active[k]].values[idx[k]];
        }
        expectation += p * utility(sum / static_cast<double>(active.size()));
        std::size_t k = 0;
        for (; k < active.size(); ++k) {
          if (++idx[k] < gains[active[k]].values.size()) break;
          idx[k] = 0;
        }
        if (k == active.size()) break;
      }
    }
    return expectation;
  };
}

}  // namespace icl
