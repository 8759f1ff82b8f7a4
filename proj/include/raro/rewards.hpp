#pragma once

// Reward assignment for policy and critic rollouts.

#include <algorithm>
#include <cmath>

#include "rollout.hpp"
#include "seqmodel.hpp"
#include "tasks.hpp"

namespace raro {

struct TieRewards {
  double tau_pol = 0.6;
  double tau_crit = 0.55;

  void validate() const {
    if (!(tau_pol >= 0.0 && tau_pol <= 1.0 && tau_crit >= 0.0 && tau_crit <= 1.0))
      throw ConfigInvalid("tie rewards must lie in [0, 1]");
  }
};

struct Reward {
  double value = 0.0;
  bool mask = false;  // false: excluded from the loss
};

inline bool label_picks(Label l, int slot) { return (l == Label::slot1 && slot == 1) || (l == Label::slot2 && slot == 2); }

inline Reward reward_critic(Label label, int expert_slot, const TieRewards& taus) {
  if (label == Label::invalid) return {0.0, false};
  if (label == Label::tie) return {taus.tau_crit, true};
  return {label_picks(label, expert_slot) ? 1.0 : 0.0, true};
}

inline Reward reward_policy(Label label, int expert_slot, const TieRewards& taus) {
  if (label == Label::invalid) return {0.0, false};
  if (label == Label::tie) return {taus.tau_pol, true};
  return {label_picks(label, expert_slot) ? 0.0 : 1.0, true};
}

// Non-relativistic classifier: L1 reads as "expert", L2 as "policy".
enum class BinaryLabel { expert, policy, invalid };
enum class Provenance { expert, policy };

inline BinaryLabel to_binary(Label l) {
  switch (l) {
    case Label::slot1: return BinaryLabel::expert;
    case Label::slot2: return BinaryLabel::policy;
    default: return BinaryLabel::invalid;
  }
}

inline Reward reward_binary(BinaryLabel label, Provenance truth) {
  if (label == BinaryLabel::invalid) return {0.0, false};
  const bool correct = (label == BinaryLabel::expert) == (truth == Provenance::expert);
  return {correct ? 1.0 : 0.0, true};
}

// Policy side: rewarded when its own answer is classified as expert.
inline Reward reward_binary_policy(BinaryLabel label) {
  if (label == BinaryLabel::invalid) return {0.0, false};
  return {label == BinaryLabel::expert ? 1.0 : 0.0, true};
}

inline double reward_rlvr(const Example& ex, std::span<const Token> answer) {
  if (ex.kind != TaskKind::countdown || !ex.countdown)
    throw RlvrUnavailable("no trainer-visible verifier for task '" + to_string(ex.kind) + "'");
  return verify_countdown(*ex.countdown, answer) ? 1.0 : 0.0;
}

enum class RlLogitVariant { logprob, perplexity };

inline double rl_logit_from_logprob(double total, std::size_t length, RlLogitVariant variant) {
  if (variant == RlLogitVariant::logprob) return std::max(0.1 * total, -1.0);
  return 10.0 * std::exp(total / static_cast<double>(length));
}

// Scores the expert answer under the current model, conditioned on the
// question and the policy's own reasoning.
inline double reward_rl_logit(const ModelState& s, std::span<const Token> question, std::span<const Token> think,
                              std::span<const Token> expert, RlLogitVariant variant) {
  if (expert.empty()) throw Error("reward_rl_logit: expert answer must be non-empty");
  TokenSeq ctx = policy_prompt(question);
  ctx.insert(ctx.end(), think.begin(), think.end());
  ctx.push_back(tok::kSepAnswer);
  const auto lp = sequence_logprob(s, ctx, expert);
  return rl_logit_from_logprob(lp.total, expert.size(), variant);
}

}  // namespace raro
