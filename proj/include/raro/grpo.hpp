#pragma once

// Group-relative policy optimisation without advantage or length
// normalisation, with asymmetric ratio clipping and an exact per-token KL
// penalty against the reference model.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"
#include "seqmodel.hpp"

namespace raro {

enum class Role { policy, critic };

struct Member {
  TokenSeq prefix;
  TokenSeq generated;
  std::vector<double> old_logprobs;  // recorded under theta_old at rollout time
  double reward = 0.0;
  bool mask = true;
  bool overlength = false;
};

struct Group {
  std::string prompt_key;
  Role role = Role::policy;
  std::vector<Member> members;
};

struct ClipBounds {
  double low = 0.2;
  double high = 0.28;

  void validate() const {
    if (!(low > 0.0 && high > 0.0)) throw ConfigInvalid("clip bounds must be positive");
  }
};

inline bool contributes(const Member& m) { return m.mask && !m.overlength; }

// reward minus the mean over masked-in members; masked-out members get 0.
inline std::vector<double> group_advantages(const Group& g) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& m : g.members)
    if (m.mask) {
      sum += m.reward;
      ++n;
    }
  if (n == 0) throw EmptyGroup("group '" + g.prompt_key + "' has no masked-in members");
  const double mean = sum / static_cast<double>(n);
  std::vector<double> adv;
  adv.reserve(g.members.size());
  for (const auto& m : g.members) adv.push_back(m.mask ? m.reward - mean : 0.0);
  return adv;
}

// Drops members that hit their token budget without terminating.
inline std::vector<Member> filter_overlength(std::vector<Member> members) {
  std::erase_if(members, [](const Member& m) { return m.overlength; });
  return members;
}

struct SurrogateWeights {
  double beta_kl = 1e-3;
  double lambda_pol = 0.5;
  double lambda_crit = 0.5;
  bool kl_on_critic = true;
};

struct SurrogateResult {
  double loss = 0.0;  // negated objective
  std::vector<double> grad;
  double policy_objective = 0.0;  // lambda-weighted clipped terms
  double critic_objective = 0.0;
  double kl = 0.0;  // summed exact KL (before beta)
  std::size_t tokens = 0;
  std::size_t clipped_tokens = 0;
};

// Maximised objective:
//   sum_groups lambda_g sum_members sum_t min(r_t A, clip(r_t) A)
//   - beta * sum_members sum_t KL_t(pi_theta || pi_ref)
// summed (not averaged) over tokens and members.
inline SurrogateResult surrogate_loss(std::span<const Group> groups, const ModelState& state, const ReferenceState& ref,
                                      const ClipBounds& bounds, const SurrogateWeights& w, bool with_grad = true) {
  SurrogateResult res;
  if (with_grad) res.grad.assign(state.params.size(), 0.0);
  Workspace ws, wr;
  std::vector<double> dlogits, dkl;
  TokenSeq seq;
  for (const auto& g : groups) {
    std::vector<double> adv;
    try {
      adv = group_advantages(g);
    } catch (const EmptyGroup&) {
      continue;
    }
    const double lambda = g.role == Role::policy ? w.lambda_pol : w.lambda_crit;
    const bool apply_kl = w.beta_kl != 0.0 && (g.role == Role::policy || w.kl_on_critic);
    for (std::size_t mi = 0; mi < g.members.size(); ++mi) {
      const Member& m = g.members[mi];
      if (!contributes(m)) continue;
      const double A = adv[mi];
      if (m.old_logprobs.size() != m.generated.size()) throw Error("member is missing old log-probabilities");
      if (A == 0.0 && !apply_kl) continue;
      seq = m.prefix;
      seq.insert(seq.end(), m.generated.begin(), m.generated.end());
      for (std::size_t t = 0; t < m.generated.size(); ++t) {
        const std::span<const Token> ctx(seq.data(), m.prefix.size() + t);
        forward(state, ctx, ws);
        ++res.tokens;
        const auto tokv = static_cast<std::size_t>(m.generated[t]);
        double coeff = 0.0;
        if (A != 0.0 && lambda != 0.0) {
          const double ratio = std::exp(ws.logprobs[tokv] - m.old_logprobs[t]);
          const double clipped = std::clamp(ratio, 1.0 - bounds.low, 1.0 + bounds.high);
          const double unclipped_term = ratio * A, clipped_term = clipped * A;
          double term;
          if (unclipped_term <= clipped_term) {
            term = unclipped_term;
            coeff = lambda * ratio * A;  // d(ratio)/dtheta = ratio * dlogp
          } else {
            term = clipped_term;
            ++res.clipped_tokens;
          }
          (g.role == Role::policy ? res.policy_objective : res.critic_objective) += lambda * term;
        }
        double kl = 0.0;
        if (apply_kl) {
          forward(ref.model(), ctx, wr);
          kl = kl_divergence(ws.probs, ws.logprobs, wr.logprobs);
          res.kl += kl;
        }
        if (!with_grad) continue;
        // gradient of the negated objective w.r.t. the logits
        dlogits.assign(ws.probs.size(), 0.0);
        if (coeff != 0.0) {
          for (std::size_t v = 0; v < dlogits.size(); ++v) dlogits[v] = coeff * ws.probs[v];
          dlogits[tokv] -= coeff;
        }
        if (apply_kl) {
          kl_logit_grad(ws, wr, kl, dkl);
          for (std::size_t v = 0; v < dlogits.size(); ++v) dlogits[v] += w.beta_kl * dkl[v];
        }
        backward(state, ws, dlogits, 1.0, res.grad);
      }
    }
  }
  res.loss = -(res.policy_objective + res.critic_objective - w.beta_kl * res.kl);
  return res;
}

// ----------------------------------------------------------------- optimiser

struct AdamWConfig {
  double lr = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
};

class AdamW {
 public:
  AdamW() = default;
  AdamW(AdamWConfig cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  // Descends `grad`; returns the pre-clipping gradient norm.
  double step(std::vector<double>& params, std::vector<double> grad) {
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    norm = std::sqrt(norm);
    if (cfg_.max_grad_norm > 0.0 && norm > cfg_.max_grad_norm) {
      const double s = cfg_.max_grad_norm / norm;
      for (auto& g : grad) g *= s;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mh = m_[i] / bc1, vh = v_[i] / bc2;
      params[i] -= cfg_.lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * params[i]);
    }
    return norm;
  }

  const AdamWConfig& config() const { return cfg_; }
  long long steps() const { return t_; }

  Json to_json() const { return Json{{"step", t_}, {"m", m_}, {"v", v_}}; }

  void load_json(const Json& j) {
    t_ = j.at("step").get<long long>();
    m_ = j.at("m").get<std::vector<double>>();
    v_ = j.at("v").get<std::vector<double>>();
  }

 private:
  AdamWConfig cfg_;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

}  // namespace raro
