#include <gtest/gtest.h>

#include <raro/presets.hpp>
#include <raro/rollout.hpp>

#include "test_util.hpp"

using namespace raro;
using raro::testing::bigram_model;
using raro::testing::T;

namespace {

const TokenSeq kQuestion = T("1 , 2 = 3");

}  // namespace

TEST(RolloutPolicy, SplitsAtAnswerMarker) {
  const auto s = bigram_model({{3, tok::kLetterA}, {tok::kLetterA, tok::kSepAnswer}, {tok::kSepAnswer, 5},
                               {5, tok::kPlus}, {tok::kPlus, 6}, {6, tok::kEos}});
  Rng rng(1);
  const auto r = rollout_policy(s, "q", kQuestion, 8, 8, 1.0, rng);
  EXPECT_TRUE(r.valid);
  EXPECT_FALSE(r.overlength);
  EXPECT_EQ(r.think, T("A"));
  EXPECT_EQ(r.answer, T("5 + 6"));
  EXPECT_EQ(r.generated, T("A <answer> 5 + 6 <eos>"));
  EXPECT_EQ(r.prompt.front(), tok::kRolePolicy);
  EXPECT_EQ(r.logprobs.size(), r.generated.size());
}

TEST(RolloutPolicy, NoAnswerMarkerWithinBudgetIsOverlength) {
  const auto s = bigram_model({{3, tok::kLetterA}, {tok::kLetterA, Token(tok::kLetterA + 1)}, {Token(tok::kLetterA + 1), tok::kLetterA}});
  Rng rng(1);
  const auto r = rollout_policy(s, "q", kQuestion, 6, 8, 1.0, rng);
  EXPECT_FALSE(r.valid);
  EXPECT_TRUE(r.overlength);
  EXPECT_EQ(r.generated.size(), 7u);
  for (Token t : r.generated) EXPECT_NE(t, tok::kEos);
}

TEST(RolloutPolicy, AnswerBudgetExceeded) {
  const auto s = bigram_model({{3, tok::kSepAnswer}, {tok::kSepAnswer, 5}, {5, 5}});
  Rng rng(1);
  const auto r = rollout_policy(s, "q", kQuestion, 4, 3, 1.0, rng);
  EXPECT_FALSE(r.valid);
  EXPECT_TRUE(r.overlength);
  EXPECT_TRUE(r.think.empty());
}

TEST(RolloutPolicy, EarlyEosIsInvalidNotOverlength) {
  const auto s = bigram_model({{3, tok::kEos}});
  Rng rng(1);
  const auto r = rollout_policy(s, "q", kQuestion, 4, 4, 1.0, rng);
  EXPECT_FALSE(r.valid);
  EXPECT_FALSE(r.overlength);
  const auto e = bigram_model({{3, tok::kSepAnswer}, {tok::kSepAnswer, tok::kEos}});
  const auto r2 = rollout_policy(e, "q", kQuestion, 4, 4, 1.0, rng);
  EXPECT_FALSE(r2.valid);
  EXPECT_TRUE(r2.answer.empty());
}

TEST(RolloutPolicy, ExactBudgetWithEosIsNotOverlength) {
  const auto s = bigram_model({{3, tok::kLetterA}, {tok::kLetterA, tok::kSepAnswer}, {tok::kSepAnswer, 5}, {5, tok::kEos}});
  Rng rng(1);
  const auto r = rollout_policy(s, "q", kQuestion, 1, 1, 1.0, rng);
  EXPECT_TRUE(r.valid);
  EXPECT_FALSE(r.overlength);
}

TEST(RolloutPolicy, DeterministicAndLogprobsConsistent) {
  const auto s = ModelState::random(preset_arch("desk"), 4, 0.5);
  for (int seed = 0; seed < 20; ++seed) {
    Rng a(static_cast<std::uint64_t>(seed)), b(static_cast<std::uint64_t>(seed));
    const auto r1 = rollout_policy(s, "q", kQuestion, 12, 12, 1.0, a);
    const auto r2 = rollout_policy(s, "q", kQuestion, 12, 12, 1.0, b);
    EXPECT_EQ(r1.generated, r2.generated);
    const auto lp = sequence_logprob(s, r1.prompt, r1.generated);
    ASSERT_EQ(lp.per_token.size(), r1.logprobs.size());
    for (std::size_t i = 0; i < lp.per_token.size(); ++i) EXPECT_NEAR(lp.per_token[i], r1.logprobs[i], 1e-10);
    if (r1.valid) {
      EXPECT_FALSE(r1.answer.empty());
      EXPECT_NE(std::find(r1.generated.begin(), r1.generated.end(), tok::kSepAnswer), r1.generated.end());
    }
  }
}

TEST(BuildTriplet, SlotPlacementIsBalanced) {
  Rng rng(3);
  int slot1 = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto t = build_triplet("q", kQuestion, T("1 + 2"), T("2 + 1"), rng);
    slot1 += t.expert_slot == 1;
    EXPECT_EQ(t.expert(), T("1 + 2"));
    EXPECT_EQ(t.other(), T("2 + 1"));
  }
  EXPECT_GE(slot1 / double(n), 0.48);
  EXPECT_LE(slot1 / double(n), 0.52);
}

TEST(BuildTriplet, SlotIndependentOfContent) {
  // 2 x 4 contingency table of expert slot against policy answer content
  Rng rng(4);
  const std::vector<TokenSeq> answers{T("1"), T("2 + 3"), T("4 * 5 - 6"), T("( 7 )")};
  double table[2][4] = {};
  for (int i = 0; i < 10000; ++i) {
    const auto k = static_cast<std::size_t>(rng.index(answers.size()));
    const auto t = build_triplet("q", kQuestion, T("9"), answers[k], rng);
    table[t.expert_slot - 1][k] += 1;
  }
  double row[2] = {}, col[4] = {}, total = 0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) row[r] += table[r][c], col[c] += table[r][c], total += table[r][c];
  double chi2 = 0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) {
      const double e = row[r] * col[c] / total;
      chi2 += (table[r][c] - e) * (table[r][c] - e) / e;
    }
  EXPECT_LT(chi2, 11.345);  // chi-square 0.99 quantile, 3 degrees of freedom
}

TEST(BuildTriplet, IdenticalAnswersPermittedEmptyRejected) {
  Rng rng(5);
  const auto t = build_triplet("q", kQuestion, T("1 + 2"), T("1 + 2"), rng);
  EXPECT_EQ(t.slot1, t.slot2);
  EXPECT_THROW(build_triplet("q", kQuestion, TokenSeq{}, T("1"), rng), Error);
}

TEST(BuildTriplet, JsonRoundTrip) {
  Rng rng(6);
  auto t = build_triplet("cd-1-2", kQuestion, T("1 + 2"), T("3"), rng);
  t.origin = Origin::replay;
  EXPECT_EQ(triplet_from_json(triplet_to_json(t)), t);
}

TEST(RolloutCritic, FirstLabelDecides) {
  const auto s = bigram_model({{tok::kSepThink, tok::kLetterA}, {tok::kLetterA, tok::kLabel1}, {tok::kLabel1, tok::kLabel2}});
  ComparisonTriplet t{"q", kQuestion, T("1"), T("2"), 1, Origin::fresh};
  Rng rng(1);
  const auto r = rollout_critic(s, t, CriticOptions{}, rng);
  EXPECT_EQ(r.label, Label::slot1);
  EXPECT_TRUE(r.valid);
  EXPECT_EQ(r.think, T("A"));
  EXPECT_EQ(r.generated, T("A <L1>"));
  EXPECT_EQ(r.prompt, T("<critic> 1 , 2 = 3 <answer> 1 <answer> 2 <think>"));
}

TEST(RolloutCritic, BudgetExhaustedIsInvalid) {
  const auto s = bigram_model({{tok::kSepThink, tok::kLetterA}, {tok::kLetterA, tok::kLetterA}});
  ComparisonTriplet t{"q", kQuestion, T("1"), T("2"), 1, Origin::fresh};
  Rng rng(1);
  CriticOptions opt;
  opt.max_think = 5;
  const auto r = rollout_critic(s, t, opt, rng);
  EXPECT_EQ(r.label, Label::invalid);
  EXPECT_FALSE(r.valid);
  EXPECT_TRUE(r.overlength);
  EXPECT_EQ(r.generated.size(), 6u);
}

TEST(RolloutCritic, WithoutReasoningLabelMustComeFirst) {
  const auto s = bigram_model({{tok::kSepThink, tok::kLetterA}, {tok::kLetterA, tok::kLabel2}});
  ComparisonTriplet t{"q", kQuestion, T("1"), T("2"), 1, Origin::fresh};
  Rng rng(1);
  CriticOptions opt;
  opt.reasoning = false;
  const auto r = rollout_critic(s, t, opt, rng);
  EXPECT_EQ(r.label, Label::invalid);
  EXPECT_EQ(r.generated.size(), 1u);
  const auto direct = bigram_model({{tok::kSepThink, tok::kLabel2}});
  EXPECT_EQ(rollout_critic(direct, t, opt, rng).label, Label::slot2);
}

TEST(RolloutCritic, TieIllegalWhenDisabled) {
  const auto s = bigram_model({{tok::kSepThink, tok::kLabelTie}});
  ComparisonTriplet t{"q", kQuestion, T("1"), T("2"), 1, Origin::fresh};
  Rng rng(1);
  CriticOptions opt;
  EXPECT_EQ(rollout_critic(s, t, opt, rng).label, Label::tie);
  opt.allow_tie = false;
  const auto r = rollout_critic(s, t, opt, rng);
  EXPECT_EQ(r.label, Label::invalid);
  EXPECT_FALSE(r.overlength);
}

TEST(RolloutCritic, EosWithoutLabelIsInvalid) {
  const auto s = bigram_model({{tok::kSepThink, tok::kEos}});
  ComparisonTriplet t{"q", kQuestion, T("1"), T("2"), 2, Origin::fresh};
  Rng rng(1);
  EXPECT_EQ(rollout_critic(s, t, CriticOptions{}, rng).label, Label::invalid);
}

TEST(RolloutCritic, LogprobsConsistent) {
  const auto s = ModelState::random(preset_arch("desk"), 9, 0.5);
  ComparisonTriplet t{"q", kQuestion, T("1 + 2"), T("3"), 2, Origin::fresh};
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    const auto r = rollout_critic(s, t, CriticOptions{8, 1.0, true, true}, rng);
    const auto lp = sequence_logprob(s, r.prompt, r.generated);
    for (std::size_t i = 0; i < lp.per_token.size(); ++i) EXPECT_NEAR(lp.per_token[i], r.logprobs[i], 1e-10);
    EXPECT_EQ(r.valid, r.label != Label::invalid);
  }
}
