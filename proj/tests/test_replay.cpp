#include <gtest/gtest.h>

#include <raro/replay.hpp>

#include <deque>
#include <set>

using namespace raro;

namespace {

ComparisonTriplet triplet(int id) {
  ComparisonTriplet t;
  t.question_ref = "q" + std::to_string(id);
  t.question = {static_cast<Token>(id % 10)};
  t.slot1 = {static_cast<Token>((id / 10) % 10)};
  t.slot2 = {tok::kPlus};
  t.expert_slot = 1 + id % 2;
  return t;
}

std::vector<ComparisonTriplet> batch(int start, int n) {
  std::vector<ComparisonTriplet> out;
  for (int i = 0; i < n; ++i) out.push_back(triplet(start + i));
  return out;
}

}  // namespace

TEST(ReplayBuffer, AppendAndEvict) {
  ReplayBuffer b;
  b.append_all(batch(0, 3));
  EXPECT_EQ(b.size(), 3u);
  ReplayBuffer capped(2);
  capped.append_all(batch(0, 3));
  ASSERT_EQ(capped.size(), 2u);
  EXPECT_EQ(capped[0], triplet(1));
  EXPECT_EQ(capped[1], triplet(2));
}

TEST(ReplayBuffer, RetrievalIsBitIdentical) {
  ReplayBuffer b;
  const auto in = batch(40, 5);
  b.append_all(in);
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(b[i], in[i]);
  const auto back = ReplayBuffer::from_jsonl(b.to_jsonl());
  ASSERT_EQ(back.size(), b.size());
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(back[i], in[i]);
}

TEST(ReplayBuffer, MatchesFifoModel) {
  Rng rng(1);
  for (int seq = 0; seq < 100000; ++seq) {
    const std::size_t cap = rng.index(5);
    ReplayBuffer b(cap);
    std::deque<int> model;
    int next = 0;
    const int ops = static_cast<int>(rng.uniform_int(1, 6));
    for (int op = 0; op < ops; ++op) {
      const int n = static_cast<int>(rng.uniform_int(0, 4));
      b.append_all(batch(next, n));
      for (int i = 0; i < n; ++i) {
        model.push_back(next + i);
        if (cap > 0 && model.size() > cap) model.pop_front();
      }
      next += n;
    }
    ASSERT_EQ(b.size(), model.size());
    for (std::size_t i = 0; i < model.size(); ++i) ASSERT_EQ(b[i], triplet(model[i]));
  }
}

TEST(Mix, ColdStartIsAllFresh) {
  ReplayBuffer b;
  Rng rng(2);
  const auto out = mix(batch(0, 8), b, rng);
  ASSERT_EQ(out.size(), 8u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].origin, Origin::fresh);
    EXPECT_EQ(out[i].question_ref, triplet(static_cast<int>(i)).question_ref);
  }
}

TEST(Mix, HalfFreshHalfReplay) {
  ReplayBuffer b;
  b.append_all(batch(1000, 100));
  Rng rng(3);
  for (int n : {1, 7, 8}) {
    const auto out = mix(batch(0, n), b, rng);
    ASSERT_EQ(out.size(), static_cast<std::size_t>(n));
    int fresh = 0;
    std::set<std::string> fresh_ids;
    for (const auto& t : out)
      if (t.origin == Origin::fresh) {
        ++fresh;
        fresh_ids.insert(t.question_ref);
      }
    EXPECT_EQ(fresh, (n + 1) / 2);
    EXPECT_EQ(fresh_ids.size(), static_cast<std::size_t>(fresh));
  }
}

TEST(Mix, EmpiricalReplayFraction) {
  ReplayBuffer b;
  b.append_all(batch(1000, 50));
  Rng rng(4);
  double replay = 0, total = 0;
  std::vector<int> hits(50, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto out = mix(batch(0, 5), b, rng);
    for (const auto& t : out) {
      total += 1;
      if (t.origin == Origin::replay) {
        replay += 1;
        ++hits[static_cast<std::size_t>(std::stoi(t.question_ref.substr(1)) - 1000)];
      }
    }
  }
  // odd fresh size: 3 fresh + 2 replay per mix
  EXPECT_NEAR(replay / total, 0.4, 0.02);
  double r8 = 0, t8 = 0;
  for (int i = 0; i < 10000; ++i)
    for (const auto& t : mix(batch(0, 8), b, rng)) {
      t8 += 1;
      r8 += t.origin == Origin::replay;
    }
  EXPECT_NEAR(r8 / t8, 0.5, 0.02);
  // uniform over history: each entry near 20000 / 50 draws
  for (int h : hits) EXPECT_NEAR(h, 400, 100);
}

TEST(Mix, EmptyFreshThrows) {
  ReplayBuffer b;
  Rng rng(5);
  EXPECT_THROW(mix(std::vector<ComparisonTriplet>{}, b, rng), Error);
}
