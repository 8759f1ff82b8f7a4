#include <gtest/gtest.h>

#include <raro/tts.hpp>

#include <algorithm>
#include <numeric>

#include "test_util.hpp"

using namespace raro;

namespace {

// Candidates are single tokens; the judge prefers the higher token (a planted
// total order) and always names it.
PairJudge planted_judge(int* calls = nullptr) {
  return [calls](const TokenSeq& x, const TokenSeq& y, Rng&) {
    if (calls) ++*calls;
    return x.front() > y.front() ? Label::slot1 : Label::slot2;
  };
}

std::vector<TokenSeq> singletons(const std::vector<int>& v) {
  std::vector<TokenSeq> out;
  for (int x : v) out.push_back({static_cast<Token>(x)});
  return out;
}

}  // namespace

TEST(Tournament, SingleCandidateNeedsNoMatches) {
  Rng rng(1);
  int calls = 0;
  const auto r = run_tournament_with(singletons({5}), 4, false, planted_judge(&calls), rng);
  EXPECT_EQ(r.winner, 0u);
  EXPECT_EQ(r.rounds, 0);
  EXPECT_EQ(r.matches, 0);
  EXPECT_EQ(calls, 0);
}

TEST(Tournament, SplitVoteSendsBThrough) {
  EXPECT_FALSE(a_advances(2, 4));
  EXPECT_TRUE(a_advances(3, 4));
  EXPECT_FALSE(a_advances(0, 1));
  EXPECT_TRUE(a_advances(1, 1));
  // two votes for A, one for B, one tie: B advances
  int v = 0;
  const PairJudge judge = [&v](const TokenSeq&, const TokenSeq&, Rng&) {
    const Label seq[] = {Label::slot1, Label::slot1, Label::slot2, Label::tie};
    return seq[v++];
  };
  Rng rng(2);
  EXPECT_EQ(run_tournament_with(singletons({1, 2}), 4, false, judge, rng).winner, 1u);
}

TEST(Tournament, InvalidAndTieVotesCountForNeither) {
  const PairJudge judge = [](const TokenSeq&, const TokenSeq&, Rng&) { return Label::invalid; };
  Rng rng(3);
  EXPECT_EQ(run_tournament_with(singletons({9, 1}), 3, false, judge, rng).winner, 1u);
  const PairJudge ties = [](const TokenSeq&, const TokenSeq&, Rng&) { return Label::tie; };
  EXPECT_EQ(run_tournament_with(singletons({9, 1}), 3, false, ties, rng).winner, 1u);
}

TEST(Tournament, PlantedOrderAlwaysWins) {
  for (int n : {2, 3, 4, 5, 8, 16}) {
    std::vector<int> vals(static_cast<std::size_t>(n));
    std::iota(vals.begin(), vals.end(), 0);
    // every placement of the best candidate, with the rest shuffled
    for (int pos = 0; pos < n; ++pos) {
      Rng shuf(static_cast<std::uint64_t>(n * 100 + pos));
      std::vector<int> rest(vals.begin(), vals.end() - 1);
      shuf.shuffle(rest);
      rest.insert(rest.begin() + pos, n - 1);
      Rng rng(7);
      const auto r = run_tournament_with(singletons(rest), 3, false, planted_judge(), rng);
      EXPECT_EQ(r.winner, static_cast<std::size_t>(pos)) << "n=" << n;
    }
  }
}

TEST(Tournament, RoundAndMatchCounts) {
  for (int n = 1; n <= 33; ++n) {
    std::vector<int> vals(static_cast<std::size_t>(n));
    std::iota(vals.begin(), vals.end(), 0);
    int calls = 0;
    Rng rng(4);
    const auto r = run_tournament_with(singletons(vals), 5, false, planted_judge(&calls), rng);
    int expected_rounds = 0;
    while ((1 << expected_rounds) < n) ++expected_rounds;
    EXPECT_EQ(r.rounds, expected_rounds) << n;
    EXPECT_EQ(r.matches, n - 1) << n;
    EXPECT_EQ(calls, 5 * (n - 1)) << n;
  }
}

TEST(Tournament, PositionSwapCountsSwappedVotesForA) {
  // a judge that always says slot 1: with swapping, A gets only the unswapped votes
  const PairJudge first = [](const TokenSeq&, const TokenSeq&, Rng&) { return Label::slot1; };
  Rng rng(5);
  EXPECT_EQ(run_tournament_with(singletons({1, 2}), 4, true, first, rng).winner, 1u);   // 2 of 4
  EXPECT_EQ(run_tournament_with(singletons({1, 2}), 3, true, first, rng).winner, 0u);   // 2 of 3
  EXPECT_EQ(run_tournament_with(singletons({1, 2}), 4, false, first, rng).winner, 0u);  // 4 of 4
  // a consistent judge is unaffected by swapping
  Rng r2(6);
  EXPECT_EQ(run_tournament_with(singletons({3, 0, 7, 1}), 4, true, planted_judge(), r2).winner, 2u);
}

TEST(Tournament, DeterministicGivenSeed) {
  const auto model = ModelState::random(Arch{4, 2, 8, 1, tok::kCount}, 9, 1.0);
  const auto q = raro::testing::T("3 5 =");
  std::vector<TokenSeq> cands;
  for (int i = 0; i < 8; ++i) cands.push_back({static_cast<Token>(i)});
  TournamentConfig cfg;
  cfg.votes = 3;
  cfg.critic.max_think = 4;
  Rng a(11), b(11);
  const auto ra = run_tournament(model, q, cands, cfg, a);
  const auto rb = run_tournament(model, q, cands, cfg, b);
  EXPECT_EQ(ra.winner, rb.winner);
  EXPECT_EQ(ra.matches, 7);
}

TEST(Tournament, ConfigValidation) {
  TournamentConfig cfg;
  cfg.votes = 0;
  EXPECT_THROW(cfg.validate(), ConfigInvalid);
  cfg.votes = 1;
  cfg.n_candidates = 0;
  EXPECT_THROW(cfg.validate(), ConfigInvalid);
  Rng rng(0);
  EXPECT_THROW(run_tournament_with({}, 1, false, planted_judge(), rng), Error);
}

TEST(TtsEval, PoolsArePrefixesAndEmptySplitThrows) {
  const auto model = ModelState::random(Arch{4, 2, 8, 1, tok::kCount}, 21, 0.5);
  Example ex{"q0", TaskKind::countdown, raro::testing::T("1 2 3 = 6"), raro::testing::T("1 + 2 + 3"), "test", std::nullopt};
  std::vector<const Example*> split{&ex};
  TournamentConfig cfg;
  cfg.votes = 1;
  cfg.critic.max_think = 2;
  TtsBudgets budgets{4, 4};
  // verify accepts everything: accuracy is 1 for every N
  const AnswerVerifier all = [](const Example&, std::span<const Token>) { return true; };
  const auto acc = tts_eval(model, model, split, {1, 2, 4}, cfg, budgets, all, 3);
  ASSERT_EQ(acc.size(), 3u);
  for (double a : acc) EXPECT_DOUBLE_EQ(a, 1.0);
  EXPECT_EQ(tts_eval(model, model, split, {1, 4}, cfg, budgets, all, 3), tts_eval(model, model, split, {1, 4}, cfg, budgets, all, 3));
  EXPECT_THROW(tts_eval(model, model, {}, {1}, cfg, budgets, all, 3), EmptySplit);
  EXPECT_THROW(tts_eval(model, model, split, {0}, cfg, budgets, all, 3), ConfigInvalid);
}
