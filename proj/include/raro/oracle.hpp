#pragma once

// Exact validators for the inverse-RL derivations on small enumerable
// spaces: the Gibbs form of the KL-regularised optimum, the contrastive
// gradient of the likelihood objective, and the REINFORCE form of a
// two-label critic's gradient.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "core.hpp"

namespace raro::oracle {

using Vec = std::vector<double>;

struct QuestionSpace {
  std::vector<Vec> features;  // r_phi(a, q) = phi . features[a]
  Vec ref;                    // pi_ref(. | q)
  Vec expert;                 // empirical expert answer distribution
  double weight = 1.0;        // empirical question probability
};

struct EnumerableSpace {
  int dim = 0;
  std::vector<QuestionSpace> questions;

  void validate() const {
    for (const auto& q : questions) {
      if (q.features.empty()) throw Error("empty answer set");
      const double zr = std::accumulate(q.ref.begin(), q.ref.end(), 0.0);
      if (std::abs(zr - 1.0) > 1e-12) throw Error("reference distribution does not sum to 1");
      for (const auto& f : q.features)
        if (static_cast<int>(f.size()) != dim) throw Error("feature dimension mismatch");
    }
  }
};

inline Vec normalized(Vec v) {
  const double z = std::accumulate(v.begin(), v.end(), 0.0);
  for (auto& x : v) x /= z;
  return v;
}

// Feature 0 is a scaled answer length, the rest are random indicators.
inline EnumerableSpace random_space(std::uint64_t seed, int n_questions, int answers, int dim) {
  Rng rng(derive_seed(seed, hash_string("oracle-space")));
  EnumerableSpace s;
  s.dim = dim;
  Vec qw;
  for (int qi = 0; qi < n_questions; ++qi) {
    QuestionSpace q;
    for (int a = 0; a < answers; ++a) {
      Vec f(static_cast<std::size_t>(dim));
      f[0] = static_cast<double>(rng.uniform_int(1, 8)) / 8.0;
      for (int d = 1; d < dim; ++d) f[static_cast<std::size_t>(d)] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      q.features.push_back(std::move(f));
      q.ref.push_back(rng.uniform(0.2, 1.0));
      q.expert.push_back(rng.bernoulli(0.6) ? rng.uniform(0.0, 1.0) : 0.0);
    }
    if (std::accumulate(q.expert.begin(), q.expert.end(), 0.0) == 0.0) q.expert[0] = 1.0;
    q.ref = normalized(q.ref);
    q.expert = normalized(q.expert);
    qw.push_back(rng.uniform(0.5, 1.0));
    s.questions.push_back(std::move(q));
  }
  qw = normalized(qw);
  for (std::size_t i = 0; i < qw.size(); ++i) s.questions[i].weight = qw[i];
  return s;
}

inline Vec random_params(std::uint64_t seed, int dim, double scale = 1.0) {
  Rng rng(derive_seed(seed, hash_string("oracle-params")));
  Vec p(static_cast<std::size_t>(dim));
  for (auto& x : p) x = rng.uniform(-scale, scale);
  return p;
}

inline Vec linear_rewards(const QuestionSpace& q, const Vec& phi) {
  Vec r;
  for (const auto& f : q.features) r.push_back(std::inner_product(f.begin(), f.end(), phi.begin(), 0.0));
  return r;
}

// pi*(a) = ref(a) exp(r(a)/beta) / Z, Z by explicit summation (log-sum-exp).
inline Vec gibbs_from_rewards(const Vec& ref, const Vec& rewards, double beta) {
  Vec logits(ref.size());
  for (std::size_t a = 0; a < ref.size(); ++a) logits[a] = std::log(ref[a]) + rewards[a] / beta;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& l : logits) z += (l = std::exp(l - mx));
  for (auto& l : logits) l /= z;
  return logits;
}

inline std::vector<Vec> gibbs_policy(const EnumerableSpace& s, const Vec& phi, double beta) {
  if (!(beta > 0.0)) throw Error("beta must be positive");
  std::vector<Vec> out;
  for (const auto& q : s.questions) out.push_back(gibbs_from_rewards(q.ref, linear_rewards(q, phi), beta));
  return out;
}

inline double tv_distance(const Vec& p, const Vec& q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return 0.5 * d;
}

// ----------------------------------------------------------------- brute force

// J(pi) = E_pi[r] - beta KL(pi || ref)
inline double kl_objective(const Vec& pi, const Vec& ref, const Vec& r, double beta) {
  double j = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a)
    if (pi[a] > 0.0) j += pi[a] * (r[a] - beta * (std::log(pi[a]) - std::log(ref[a])));
  return j;
}

// Euclidean projection onto {x : x_i >= floor, sum x = 1}.
inline Vec project_simplex(const Vec& y, double floor) {
  const std::size_t n = y.size();
  const double mass = 1.0 - floor * static_cast<double>(n);
  Vec u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = y[i] - floor;
  Vec s = u;
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cum += s[i];
    const double t = (cum - mass) / static_cast<double>(i + 1);
    if (s[i] - t > 0.0) theta = t;
  }
  Vec x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::max(u[i] - theta, 0.0) + floor;
  return x;
}

// Maximises J over the simplex without using the Gibbs form: interior grid
// search, projected gradient ascent, then equality-constrained Newton.
inline Vec maximize_kl_objective(const Vec& ref, const Vec& r, double beta, int grid = 40) {
  const std::size_t n = ref.size();
  Vec best(n, 1.0 / static_cast<double>(n));
  double best_j = kl_objective(best, ref, r, beta);
  if (n <= 4) {
    std::vector<int> k(n, 1);
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
      if (i + 1 == n) {
        k[i] = left;
        Vec p(n);
        for (std::size_t a = 0; a < n; ++a) p[a] = static_cast<double>(k[a]) / grid;
        const double j = kl_objective(p, ref, r, beta);
        if (j > best_j) {
          best_j = j;
          best = p;
        }
        return;
      }
      for (int c = 1; c <= left - static_cast<int>(n - i - 1); ++c) {
        k[i] = c;
        rec(i + 1, left - c);
      }
    };
    rec(0, grid);
  }
  Vec pi = best;
  auto grad = [&](const Vec& p) {
    Vec g(n);
    for (std::size_t a = 0; a < n; ++a) g[a] = r[a] - beta * (std::log(p[a]) - std::log(ref[a]) + 1.0);
    return g;
  };
  double step = 0.1;
  for (int it = 0; it < 2000; ++it) {
    const Vec g = grad(pi);
    const double j0 = kl_objective(pi, ref, r, beta);
    bool moved = false;
    while (step > 1e-14) {
      Vec cand(n);
      for (std::size_t a = 0; a < n; ++a) cand[a] = pi[a] + step * g[a];
      cand = project_simplex(cand, 1e-300);
      if (kl_objective(cand, ref, r, beta) > j0) {
        pi = cand;
        step *= 1.5;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  for (int it = 0; it < 200; ++it) {
    const Vec g = grad(pi);
    double gbar = 0.0;
    for (std::size_t a = 0; a < n; ++a) gbar += pi[a] * g[a];
    Vec d(n);
    double dmax = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      d[a] = pi[a] * (g[a] - gbar) / beta;
      dmax = std::max(dmax, std::abs(d[a]) / pi[a]);
    }
    if (dmax < 1e-15) break;
    double t = 1.0;
    while (true) {
      bool positive = true;
      for (std::size_t a = 0; a < n; ++a)
        if (pi[a] + t * d[a] <= 0.0) positive = false;
      if (positive) break;
      t *= 0.5;
    }
    for (std::size_t a = 0; a < n; ++a) pi[a] += t * d[a];
    const double z = std::accumulate(pi.begin(), pi.end(), 0.0);
    for (auto& x : pi) x /= z;
  }
  return pi;
}

// ----------------------------------------------------------------- reports

struct Report {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

inline Report check_gibbs_policy(const EnumerableSpace& s, const Vec& phi, double beta, double tol = 1e-6) {
  const auto closed = gibbs_policy(s, phi, beta);
  Report rep{"gibbs-policy", 0.0, tol, false, ""};
  for (std::size_t qi = 0; qi < s.questions.size(); ++qi) {
    const auto& q = s.questions[qi];
    const Vec brute = maximize_kl_objective(q.ref, linear_rewards(q, phi), beta);
    rep.max_error = std::max(rep.max_error, tv_distance(brute, closed[qi]));
  }
  rep.pass = rep.max_error <= tol;
  return rep;
}

// L(phi) = E_{(q,a) ~ p_D} log pi*_phi(a | q) for an arbitrary reward map.
using RewardMap = std::function<Vec(const QuestionSpace&, const Vec&)>;

inline double ml_objective(const EnumerableSpace& s, const Vec& phi, double beta, const RewardMap& reward) {
  double L = 0.0;
  for (const auto& q : s.questions) {
    const Vec pi = gibbs_from_rewards(q.ref, reward(q, phi), beta);
    for (std::size_t a = 0; a < pi.size(); ++a)
      if (q.expert[a] > 0.0) L += q.weight * q.expert[a] * std::log(pi[a]);
  }
  return L;
}

inline Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double relative_l2(const Vec& a, const Vec& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

// (1/beta) (E_expert[grad r] - E_gibbs[grad r]) for the linear reward.
inline Vec contrastive_gradient(const EnumerableSpace& s, const Vec& phi, double beta) {
  Vec g(static_cast<std::size_t>(s.dim), 0.0);
  const auto pis = gibbs_policy(s, phi, beta);
  for (std::size_t qi = 0; qi < s.questions.size(); ++qi) {
    const auto& q = s.questions[qi];
    for (std::size_t a = 0; a < q.features.size(); ++a) {
      const double w = q.weight * (q.expert[a] - pis[qi][a]) / beta;
      for (int d = 0; d < s.dim; ++d) g[static_cast<std::size_t>(d)] += w * q.features[a][static_cast<std::size_t>(d)];
    }
  }
  return g;
}

struct GradientCheck {
  Vec analytic;
  Vec numeric;
  double rel_l2 = 0.0;
  double max_rel = 0.0;
};

inline GradientCheck check_reward_gradient(const EnumerableSpace& s, const Vec& phi, double beta, double h) {
  if (!(h > 0.0)) throw Error("finite-difference step must be positive");
  GradientCheck c;
  c.analytic = contrastive_gradient(s, phi, beta);
  c.numeric = central_difference([&](const Vec& p) { return ml_objective(s, p, beta, linear_rewards); }, phi, h);
  c.rel_l2 = relative_l2(c.analytic, c.numeric);
  double scale = 0.0;
  for (double x : c.numeric) scale = std::max(scale, std::abs(x));
  for (std::size_t i = 0; i < phi.size(); ++i)
    c.max_rel = std::max(c.max_rel, std::abs(c.analytic[i] - c.numeric[i]) / std::max(scale, 1e-300));
  return c;
}

// ----------------------------------------------------------------- critic

// Two-label softmax critic: logit_E = psi . f(a), logit_P = psi . g(a) with
// g a fixed cyclic shift of f scaled by one half.
inline Vec policy_label_features(const Vec& f) {
  Vec g(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) g[i] = 0.5 * f[(i + 1) % f.size()];
  return g;
}

inline double critic_p_expert(const Vec& f, const Vec& psi) {
  const Vec g = policy_label_features(f);
  const double le = std::inner_product(f.begin(), f.end(), psi.begin(), 0.0);
  const double lp = std::inner_product(g.begin(), g.end(), psi.begin(), 0.0);
  const double m = std::max(le, lp);
  const double ee = std::exp(le - m), ep = std::exp(lp - m);
  return ee / (ee + ep);
}

// Score-function expectation E_{l ~ c}[ 1{l = label} grad log c(l) ].
inline Vec reinforce_term(const Vec& f, const Vec& psi, bool expert_label) {
  const Vec g = policy_label_features(f);
  const double pe = critic_p_expert(f, psi), pp = 1.0 - pe;
  Vec out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double mean_feat = pe * f[i] + pp * g[i];
    const double score_e = f[i] - mean_feat, score_p = g[i] - mean_feat;
    out[i] = expert_label ? pe * score_e : pp * score_p;
  }
  return out;
}

// Direct derivative of p_E: p_E (1 - p_E) (f - g).
inline Vec direct_p_expert_grad(const Vec& f, const Vec& psi) {
  const Vec g = policy_label_features(f);
  const double pe = critic_p_expert(f, psi);
  Vec out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = pe * (1.0 - pe) * (f[i] - g[i]);
  return out;
}

inline Report check_critic_reinforce(const EnumerableSpace& s, const Vec& psi, double tol = 1e-12) {
  Report rep{"critic-reinforce", 0.0, tol, false, ""};
  for (const auto& q : s.questions)
    for (const auto& f : q.features) {
      const Vec lhs = direct_p_expert_grad(f, psi), rhs = reinforce_term(f, psi, true);
      for (std::size_t i = 0; i < f.size(); ++i) rep.max_error = std::max(rep.max_error, std::abs(lhs[i] - rhs[i]));
    }
  rep.pass = rep.max_error <= tol;
  return rep;
}

inline Vec critic_rewards(const QuestionSpace& q, const Vec& psi) {
  Vec r;
  for (const auto& f : q.features) r.push_back(critic_p_expert(f, psi));
  return r;
}

// Expert answers reinforce the "expert" label, Gibbs answers the "policy" label.
inline Vec contrastive_critic_gradient(const EnumerableSpace& s, const Vec& psi, double beta) {
  Vec g(static_cast<std::size_t>(s.dim), 0.0);
  for (const auto& q : s.questions) {
    const Vec pi = gibbs_from_rewards(q.ref, critic_rewards(q, psi), beta);
    for (std::size_t a = 0; a < q.features.size(); ++a) {
      const Vec te = reinforce_term(q.features[a], psi, true);
      const Vec tp = reinforce_term(q.features[a], psi, false);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += q.weight * (q.expert[a] * te[i] + pi[a] * tp[i]) / beta;
    }
  }
  return g;
}

inline GradientCheck check_critic_gradient(const EnumerableSpace& s, const Vec& psi, double beta, double h) {
  GradientCheck c;
  c.analytic = contrastive_critic_gradient(s, psi, beta);
  c.numeric = central_difference([&](const Vec& p) { return ml_objective(s, p, beta, critic_rewards); }, psi, h);
  c.rel_l2 = relative_l2(c.analytic, c.numeric);
  return c;
}

// ----------------------------------------------------------------- suite

struct SuiteResult {
  std::vector<Report> reports;
  bool pass() const {
    return std::all_of(reports.begin(), reports.end(), [](const Report& r) { return r.pass; });
  }
};

// The three propositions over a fixed battery of seeded spaces.
inline SuiteResult run_oracle_suite(std::uint64_t seed = 0) {
  SuiteResult out;
  {
    Report rep{"gibbs-policy", 0.0, 1e-6, true, ""};
    int cases = 0;
    for (double beta : {0.1, 1.0, 10.0})
      for (int i = 0; i < 20; ++i) {
        const auto space = random_space(seed * 1000 + static_cast<std::uint64_t>(i), 2, 3 + i % 3, 4);
        const auto phi = random_params(seed * 1000 + static_cast<std::uint64_t>(i), 4);
        const auto r = check_gibbs_policy(space, phi, beta);
        rep.max_error = std::max(rep.max_error, r.max_error);
        ++cases;
      }
    rep.pass = rep.max_error <= rep.tolerance;
    rep.detail = std::to_string(cases) + " spaces, beta in {0.1, 1, 10}";
    out.reports.push_back(rep);
  }
  {
    Report rep{"reward-gradient", 0.0, 1e-6, true, ""};
    for (double beta : {0.1, 1.0, 10.0}) {
      const auto space = random_space(seed + 77, 4, 500, 20);
      const auto phi = random_params(seed + 77, 20, 0.5);
      const auto c = check_reward_gradient(space, phi, beta, 1e-5);
      rep.max_error = std::max(rep.max_error, c.rel_l2);
    }
    // matched expectations: expert distribution equal to the Gibbs policy
    auto space = random_space(seed + 78, 3, 50, 6);
    const auto phi = random_params(seed + 78, 6);
    const auto pis = gibbs_policy(space, phi, 1.0);
    for (std::size_t i = 0; i < space.questions.size(); ++i) space.questions[i].expert = pis[i];
    double zero_err = 0.0;
    for (double x : contrastive_gradient(space, phi, 1.0)) zero_err = std::max(zero_err, std::abs(x));
    rep.pass = rep.max_error <= rep.tolerance && zero_err <= 1e-10;
    rep.detail = "rel. L2 vs central differences (h=1e-5), 500 answers x 20 params; |grad| at matched expectations = " +
                 std::to_string(zero_err);
    out.reports.push_back(rep);
  }
  {
    Report rep{"critic-reinforce", 0.0, 1e-12, true, ""};
    double fd_err = 0.0;
    for (int i = 0; i < 10; ++i) {
      const auto space = random_space(seed + 200 + static_cast<std::uint64_t>(i), 3, 20, 5);
      const auto psi = random_params(seed + 200 + static_cast<std::uint64_t>(i), 5, 2.0);
      rep.max_error = std::max(rep.max_error, check_critic_reinforce(space, psi).max_error);
      fd_err = std::max(fd_err, check_critic_gradient(space, psi, 1.0, 1e-5).rel_l2);
    }
    rep.pass = rep.max_error <= rep.tolerance && fd_err <= 1e-6;
    rep.detail = "identity max abs error; contrastive critic gradient rel. L2 vs finite differences = " + std::to_string(fd_err);
    out.reports.push_back(rep);
  }
  return out;
}

}  // namespace raro::oracle
