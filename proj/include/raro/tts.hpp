#pragma once

// Test-time scaling: a single-elimination tournament over sampled answers,
// judged by K critic votes per match.

#include <functional>
#include <vector>

#include "core.hpp"
#include "rollout.hpp"
#include "tasks.hpp"

namespace raro {

struct TournamentConfig {
  int n_candidates = 16;
  int votes = 4;
  double temperature = 1.0;
  bool position_swap = false;
  CriticOptions critic;

  void validate() const {
    if (n_candidates < 1) throw ConfigInvalid("n_candidates must be >= 1");
    if (votes < 1) throw ConfigInvalid("votes must be >= 1");
  }
};

// A advances iff strictly more than half of the K votes name it; ties and
// INVALID votes therefore favour B.
inline bool a_advances(int votes_for_a, int k) { return 2 * votes_for_a > k; }

struct TournamentResult {
  std::size_t winner = 0;  // index into the candidate list
  int rounds = 0;
  int matches = 0;
};

// judge(first, second, rng) returns the label for the pair in that slot order.
using PairJudge = std::function<Label(const TokenSeq&, const TokenSeq&, Rng&)>;

inline TournamentResult run_tournament_with(const std::vector<TokenSeq>& candidates, int votes, bool position_swap,
                                            const PairJudge& judge, Rng& rng) {
  if (candidates.empty()) throw Error("tournament needs at least one candidate");
  if (votes < 1) throw ConfigInvalid("votes must be >= 1");
  TournamentResult res;
  const std::uint64_t base = rng.next();
  std::vector<std::size_t> alive(candidates.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
  while (alive.size() > 1) {
    std::vector<std::size_t> next;
    for (std::size_t m = 0; m + 1 < alive.size(); m += 2) {
      const std::size_t a = alive[m], b = alive[m + 1];
      Rng match_rng(derive_seed(base, static_cast<std::uint64_t>(res.rounds), m / 2));
      int for_a = 0;
      for (int v = 0; v < votes; ++v) {
        const bool swapped = position_swap && v % 2 == 1;
        const Label l = swapped ? judge(candidates[b], candidates[a], match_rng) : judge(candidates[a], candidates[b], match_rng);
        for_a += l == (swapped ? Label::slot2 : Label::slot1);
      }
      next.push_back(a_advances(for_a, votes) ? a : b);
      ++res.matches;
    }
    if (alive.size() % 2 == 1) next.push_back(alive.back());
    alive = std::move(next);
    ++res.rounds;
  }
  res.winner = alive.front();
  return res;
}

inline TournamentResult run_tournament(const ModelState& critic, std::span<const Token> question,
                                       const std::vector<TokenSeq>& candidates, const TournamentConfig& cfg, Rng& rng) {
  cfg.validate();
  const PairJudge judge = [&](const TokenSeq& x, const TokenSeq& y, Rng& r) {
    return rollout_critic_prompt(critic, critic_prompt(question, x, y), cfg.critic, r).label;
  };
  return run_tournament_with(candidates, cfg.votes, cfg.position_swap, judge, rng);
}

using AnswerVerifier = std::function<bool(const Example&, std::span<const Token>)>;

struct TtsBudgets {
  int max_think = 64;
  int max_answer = 16;
};

// Accuracy of the tournament winner for each N in `ns`. Candidate k of an
// instance is the same sample for every N, so larger pools extend smaller ones.
inline std::vector<double> tts_eval(const ModelState& policy, const ModelState& critic, const std::vector<const Example*>& split,
                                    const std::vector<int>& ns, const TournamentConfig& cfg, const TtsBudgets& budgets,
                                    const AnswerVerifier& verify, std::uint64_t seed) {
  if (split.empty()) throw EmptySplit("tts_eval: empty split");
  cfg.validate();
  int n_max = 0;
  for (int n : ns) {
    if (n < 1) throw ConfigInvalid("pool sizes must be >= 1");
    n_max = std::max(n_max, n);
  }
  std::vector<double> correct(ns.size(), 0.0);
  for (std::size_t qi = 0; qi < split.size(); ++qi) {
    const Example& ex = *split[qi];
    std::vector<TokenSeq> pool;
    for (int k = 0; k < n_max; ++k) {
      Rng r(derive_seed(seed, hash_string("tts-sample"), qi * 4096 + static_cast<std::uint64_t>(k)));
      pool.push_back(rollout_policy(policy, ex.id, ex.prompt, budgets.max_think, budgets.max_answer, cfg.temperature, r).answer);
    }
    for (std::size_t ni = 0; ni < ns.size(); ++ni) {
      const std::vector<TokenSeq> cands(pool.begin(), pool.begin() + ns[ni]);
      Rng r(derive_seed(seed, hash_string("tts-match"), qi * 64 + ni));
      const auto res = run_tournament(critic, ex.prompt, cands, cfg, r);
      correct[ni] += verify(ex, cands[res.winner]) ? 1.0 : 0.0;
    }
  }
  for (auto& c : correct) c /= static_cast<double>(split.size());
  return correct;
}

}  // namespace raro
