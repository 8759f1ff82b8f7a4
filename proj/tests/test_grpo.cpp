#include <gtest/gtest.h>

#include <raro/grpo.hpp>

#include <cmath>
#include <numeric>

using namespace raro;

namespace {

const Arch kArch{4, 3, 6, 1, 10};

Member make_member(const ModelState& s, Rng& rng, double reward, bool mask = true) {
  Member m;
  for (int i = 0; i < 2; ++i) m.prefix.push_back(static_cast<Token>(rng.uniform_int(0, 9)));
  const int len = static_cast<int>(rng.uniform_int(1, 4));
  for (int i = 0; i < len; ++i) m.generated.push_back(static_cast<Token>(rng.uniform_int(0, 9)));
  m.old_logprobs = sequence_logprob(s, m.prefix, m.generated).per_token;
  m.reward = reward;
  m.mask = mask;
  return m;
}

std::vector<Group> random_batch(const ModelState& s, Rng& rng) {
  std::vector<Group> gs;
  for (int g = 0; g < 3; ++g) {
    Group grp{"g" + std::to_string(g), g % 2 ? Role::critic : Role::policy, {}};
    for (int k = 0; k < 4; ++k) grp.members.push_back(make_member(s, rng, rng.uniform(), k != 3 || g != 1));
    gs.push_back(grp);
  }
  return gs;
}

// Independent route to dKL/dtheta through the score function:
// grad KL(p||q) = sum_v p_v (log p_v - log q_v) grad log p_v.
std::vector<double> kl_grad_by_score(const ModelState& s, const ReferenceState& ref, const Member& m) {
  std::vector<double> g(s.params.size(), 0.0);
  TokenSeq seq = m.prefix;
  seq.insert(seq.end(), m.generated.begin(), m.generated.end());
  for (std::size_t t = 0; t < m.generated.size(); ++t) {
    const TokenSeq ctx(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(m.prefix.size() + t));
    const auto p = next_token_dist(s, ctx);
    const auto q = next_token_dist(ref.model(), ctx);
    for (std::size_t v = 0; v < p.size(); ++v) {
      const auto gv = grad_logprob(s, ctx, TokenSeq{static_cast<Token>(v)});
      const double w = p[v] * (std::log(p[v]) - std::log(q[v]));
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += w * gv[i];
    }
  }
  return g;
}

}  // namespace

TEST(GroupAdvantages, MeanSubtraction) {
  Group g{"q", Role::policy, {}};
  for (double r : {1.0, 0.0, 0.0, 1.0}) g.members.push_back(Member{{}, {}, {}, r, true, false});
  EXPECT_EQ(group_advantages(g), (std::vector<double>{0.5, -0.5, -0.5, 0.5}));
}

TEST(GroupAdvantages, AllEqualGivesZero) {
  Group g{"q", Role::policy, {}};
  for (int i = 0; i < 5; ++i) g.members.push_back(Member{{}, {}, {}, 0.6, true, false});
  for (double a : group_advantages(g)) EXPECT_EQ(a, 0.0);
}

TEST(GroupAdvantages, MaskAwareMean) {
  Group g{"q", Role::critic, {}};
  g.members.push_back(Member{{}, {}, {}, 1.0, true, false});
  g.members.push_back(Member{{}, {}, {}, 0.0, true, false});
  g.members.push_back(Member{{}, {}, {}, 7.0, false, false});
  EXPECT_EQ(group_advantages(g), (std::vector<double>{0.5, -0.5, 0.0}));
}

TEST(GroupAdvantages, EmptyGroupThrows) {
  Group g{"q", Role::policy, {}};
  g.members.push_back(Member{{}, {}, {}, 1.0, false, false});
  EXPECT_THROW(group_advantages(g), EmptyGroup);
  EXPECT_THROW(group_advantages(Group{"e", Role::policy, {}}), EmptyGroup);
}

TEST(GroupAdvantages, SumToZeroWhenFullyMaskedIn) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    Group g{"q", Role::policy, {}};
    const int n = static_cast<int>(rng.uniform_int(1, 16));
    for (int i = 0; i < n; ++i) g.members.push_back(Member{{}, {}, {}, rng.uniform(-1.0, 10.0), true, false});
    const auto a = group_advantages(g);
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 0.0, 1e-12);
  }
}

TEST(FilterOverlength, Examples) {
  EXPECT_TRUE(filter_overlength({}).empty());
  std::vector<Member> ms(3);
  ms[1].overlength = true;
  ms[2].generated = {tok::kEos};
  const auto kept = filter_overlength(ms);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[1].generated, TokenSeq{tok::kEos});
}

TEST(Surrogate, GradientAtOldPointIsScoreMinusKl) {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = ModelState::random(kArch, rng.next(), 0.5);
    const ReferenceState ref(ModelState::random(kArch, rng.next(), 0.5));
    const auto groups = random_batch(s, rng);
    SurrogateWeights w{0.3, 0.7, 0.4, true};
    const auto res = surrogate_loss(groups, s, ref, ClipBounds{}, w);
    std::vector<double> expect(s.params.size(), 0.0);
    for (const auto& g : groups) {
      const auto adv = group_advantages(g);
      const double lambda = g.role == Role::policy ? w.lambda_pol : w.lambda_crit;
      for (std::size_t i = 0; i < g.members.size(); ++i) {
        const auto& m = g.members[i];
        if (!m.mask) continue;
        const auto gl = grad_logprob(s, m.prefix, m.generated);
        const auto gk = kl_grad_by_score(s, ref, m);
        for (std::size_t k = 0; k < expect.size(); ++k) expect[k] -= lambda * adv[i] * gl[k] - w.beta_kl * gk[k];
      }
    }
    for (std::size_t k = 0; k < expect.size(); ++k) EXPECT_NEAR(res.grad[k], expect[k], 1e-8);
    EXPECT_EQ(res.clipped_tokens, 0u);
  }
}

TEST(Surrogate, FiniteDifferencesAwayFromOldPoint) {
  Rng rng(3);
  const auto s = ModelState::random(kArch, 5, 0.5);
  const ReferenceState ref(ModelState::random(kArch, 6, 0.5));
  Group g{"q", Role::policy, {make_member(s, rng, 1.0), make_member(s, rng, 0.0)}};
  // shift old log-probs slightly so ratios sit inside the clip window but away from 1
  for (auto& m : g.members)
    for (auto& lp : m.old_logprobs) lp += rng.uniform(-0.05, 0.05);
  std::vector<Group> gs{g};
  const SurrogateWeights w{0.2, 1.0, 1.0, true};
  const auto res = surrogate_loss(gs, s, ref, ClipBounds{}, w);
  ModelState x = s;
  const double h = 1e-5;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.params.size(); ++i) {
    const double o = x.params[i];
    x.params[i] = o + h;
    const double fp = surrogate_loss(gs, x, ref, ClipBounds{}, w, false).loss;
    x.params[i] = o - h;
    const double fm = surrogate_loss(gs, x, ref, ClipBounds{}, w, false).loss;
    x.params[i] = o;
    const double fd = (fp - fm) / (2 * h);
    num += (fd - res.grad[i]) * (fd - res.grad[i]);
    den += fd * fd;
  }
  EXPECT_LE(std::sqrt(num / den), 1e-5);
}

TEST(Surrogate, SaturatedClipHasNoGradient) {
  Rng rng(4);
  const auto s = ModelState::random(kArch, 7, 0.5);
  const ReferenceState ref(s);
  Group g{"q", Role::policy, {make_member(s, rng, 1.0), make_member(s, rng, 0.0)}};
  // member 0: A = +0.5 with ratio e^0.5 > 1.28; member 1: A = -0.5 with ratio e^-0.5 < 0.8
  for (auto& lp : g.members[0].old_logprobs) lp -= 0.5;
  for (auto& lp : g.members[1].old_logprobs) lp += 0.5;
  std::vector<Group> gs{g};
  const auto res = surrogate_loss(gs, s, ref, ClipBounds{}, SurrogateWeights{0.0, 1.0, 1.0, true});
  for (double x : res.grad) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(res.clipped_tokens, g.members[0].generated.size() + g.members[1].generated.size());
}

TEST(Surrogate, OverlengthAndMaskedMembersContributeNothing) {
  Rng rng(5);
  const auto s = ModelState::random(kArch, 8, 0.5);
  const ReferenceState ref(ModelState::random(kArch, 9, 0.5));
  Group g{"q", Role::policy, {make_member(s, rng, 1.0), make_member(s, rng, 0.0)}};
  std::vector<Group> base{g};
  auto with_extra = base;
  auto over = make_member(s, rng, 1.0);
  over.overlength = true;
  auto masked = make_member(s, rng, 0.0, false);
  with_extra[0].members.push_back(masked);
  const auto a = surrogate_loss(base, s, ref, ClipBounds{}, SurrogateWeights{});
  const auto b = surrogate_loss(with_extra, s, ref, ClipBounds{}, SurrogateWeights{});
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
  // an overlength member still enters the group mean through its reward but adds no tokens
  with_extra[0].members.push_back(over);
  const auto c = surrogate_loss(with_extra, s, ref, ClipBounds{}, SurrogateWeights{});
  EXPECT_EQ(c.tokens, a.tokens);
}

TEST(Surrogate, LambdaZeroSilencesRole) {
  Rng rng(6);
  const auto s = ModelState::random(kArch, 10, 0.5);
  const ReferenceState ref(s);
  const auto groups = random_batch(s, rng);
  const auto res = surrogate_loss(groups, s, ref, ClipBounds{}, SurrogateWeights{1e-3, 0.0, 1.0, true});
  EXPECT_EQ(res.policy_objective, 0.0);
  const auto crit_only = surrogate_loss(groups, s, ref, ClipBounds{}, SurrogateWeights{0.0, 0.0, 1.0, true});
  double norm = 0;
  for (double x : crit_only.grad) norm += x * x;
  EXPECT_GT(norm, 0.0);
}

TEST(Surrogate, OrderInvariant) {
  Rng rng(7);
  const auto s = ModelState::random(kArch, 11, 0.5);
  const ReferenceState ref(ModelState::random(kArch, 12, 0.5));
  auto groups = random_batch(s, rng);
  const auto a = surrogate_loss(groups, s, ref, ClipBounds{}, SurrogateWeights{});
  std::reverse(groups.begin(), groups.end());
  for (auto& g : groups) std::reverse(g.members.begin(), g.members.end());
  const auto b = surrogate_loss(groups, s, ref, ClipBounds{}, SurrogateWeights{});
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  for (std::size_t i = 0; i < a.grad.size(); ++i) EXPECT_NEAR(a.grad[i], b.grad[i], 1e-12);
}

TEST(Surrogate, SmallStepImprovesObjective) {
  Rng rng(8);
  int improved = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = ModelState::random(kArch, rng.next(), 0.5);
    const ReferenceState ref(s);
    const auto groups = random_batch(s, rng);
    const SurrogateWeights w{0.0, 1.0, 1.0, true};
    const auto before = surrogate_loss(groups, s, ref, ClipBounds{}, w);
    double norm = 0;
    for (double x : before.grad) norm += x * x;
    norm = std::sqrt(norm);
    ModelState next = s;
    for (std::size_t i = 0; i < next.params.size(); ++i) next.params[i] -= 1e-3 * before.grad[i] / norm;
    const auto after = surrogate_loss(groups, next, ref, ClipBounds{}, w, false);
    improved += after.loss < before.loss;
  }
  EXPECT_GE(improved, 19);
}

TEST(AdamW, DescendsQuadraticAndClips) {
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  cfg.max_grad_norm = 1.0;
  AdamW opt(cfg, 2);
  std::vector<double> x{3.0, -2.0};
  const double norm = opt.step(x, {6.0, -4.0});
  EXPECT_NEAR(norm, std::sqrt(52.0), 1e-12);
  for (int i = 0; i < 400; ++i) opt.step(x, {2 * x[0], 2 * x[1]});
  EXPECT_LT(std::abs(x[0]), 0.05);
  EXPECT_LT(std::abs(x[1]), 0.05);
  EXPECT_EQ(opt.steps(), 401);
}

TEST(AdamW, DecoupledWeightDecay) {
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt(cfg, 1);
  std::vector<double> x{2.0};
  opt.step(x, {0.0});
  EXPECT_NEAR(x[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-12);
}

TEST(AdamW, StateRoundTrip) {
  AdamW a(AdamWConfig{}, 3);
  std::vector<double> x{1, 2, 3}, y;
  a.step(x, {0.1, -0.2, 0.3});
  AdamW b(AdamWConfig{}, 3);
  b.load_json(Json::parse(a.to_json().dump()));
  y = x;
  a.step(x, {0.5, 0.5, 0.5});
  b.step(y, {0.5, 0.5, 0.5});
  EXPECT_EQ(x, y);
}
