#pragma once

// Policy and critic generation with structured parsing of the outputs.

#include <string>
#include <vector>

#include "core.hpp"
#include "seqmodel.hpp"

namespace raro {

struct PolicyRollout {
  std::string question_ref;
  TokenSeq prompt;
  TokenSeq generated;  // every sampled token, markers included
  TokenSeq think;      // z
  TokenSeq answer;     // a
  std::vector<double> logprobs;
  bool valid = false;
  bool overlength = false;
};

inline TokenSeq policy_prompt(std::span<const Token> question) {
  TokenSeq p{tok::kRolePolicy};
  p.insert(p.end(), question.begin(), question.end());
  return p;
}

// Think tokens run until SEP_ANSWER, answer tokens until EOS. Exceeding
// either budget marks the rollout overlength (and invalid).
inline PolicyRollout rollout_policy(const ModelState& s, const std::string& question_ref, std::span<const Token> question,
                                    int max_think, int max_answer, double temperature, Rng& rng) {
  PolicyRollout r;
  r.question_ref = question_ref;
  r.prompt = policy_prompt(question);
  TokenSeq seq = r.prompt;
  Workspace ws;
  bool answering = false;
  while (true) {
    forward(s, seq, ws);
    const Token t = sample_from(ws, temperature, rng);
    seq.push_back(t);
    r.generated.push_back(t);
    r.logprobs.push_back(ws.logprobs[static_cast<std::size_t>(t)]);
    if (!answering) {
      if (t == tok::kSepAnswer) {
        answering = true;
        continue;
      }
      if (t == tok::kEos) break;
      r.think.push_back(t);
      if (static_cast<int>(r.think.size()) > max_think) {
        r.overlength = true;
        break;
      }
    } else {
      if (t == tok::kEos) {
        r.valid = !r.answer.empty();
        break;
      }
      r.answer.push_back(t);
      if (static_cast<int>(r.answer.size()) > max_answer) {
        r.overlength = true;
        break;
      }
    }
  }
  return r;
}

enum class Origin { fresh, replay };

struct ComparisonTriplet {
  std::string question_ref;
  TokenSeq question;
  TokenSeq slot1;
  TokenSeq slot2;
  int expert_slot = 1;
  Origin origin = Origin::fresh;

  const TokenSeq& expert() const { return expert_slot == 1 ? slot1 : slot2; }
  const TokenSeq& other() const { return expert_slot == 1 ? slot2 : slot1; }

  friend bool operator==(const ComparisonTriplet&, const ComparisonTriplet&) = default;
};

inline ComparisonTriplet build_triplet(const std::string& question_ref, std::span<const Token> question,
                                       std::span<const Token> expert, std::span<const Token> policy, Rng& rng) {
  if (expert.empty() || policy.empty()) throw Error("build_triplet: answers must be non-empty");
  ComparisonTriplet t;
  t.question_ref = question_ref;
  t.question.assign(question.begin(), question.end());
  t.expert_slot = rng.bernoulli(0.5) ? 1 : 2;
  const TokenSeq e(expert.begin(), expert.end()), p(policy.begin(), policy.end());
  t.slot1 = t.expert_slot == 1 ? e : p;
  t.slot2 = t.expert_slot == 1 ? p : e;
  return t;
}

inline Json triplet_to_json(const ComparisonTriplet& t) {
  return Json{{"question_ref", t.question_ref},
              {"question", tokens_to_json(t.question)},
              {"slot1", tokens_to_json(t.slot1)},
              {"slot2", tokens_to_json(t.slot2)},
              {"expert_slot", t.expert_slot},
              {"origin", t.origin == Origin::fresh ? "fresh" : "replay"}};
}

inline ComparisonTriplet triplet_from_json(const Json& j) {
  ComparisonTriplet t;
  t.question_ref = j.at("question_ref").get<std::string>();
  t.question = tokens_from_json(j.at("question"));
  t.slot1 = tokens_from_json(j.at("slot1"));
  t.slot2 = tokens_from_json(j.at("slot2"));
  t.expert_slot = j.at("expert_slot").get<int>();
  t.origin = j.at("origin").get<std::string>() == "replay" ? Origin::replay : Origin::fresh;
  if (t.expert_slot != 1 && t.expert_slot != 2) throw FormatError("expert_slot must be 1 or 2");
  return t;
}

enum class Label { slot1, slot2, tie, invalid };

struct CriticRollout {
  TokenSeq prompt;
  TokenSeq generated;
  TokenSeq think;
  Label label = Label::invalid;
  std::vector<double> logprobs;
  bool valid = false;
  bool overlength = false;
};

inline TokenSeq critic_prompt(std::span<const Token> question, std::span<const Token> slot1, std::span<const Token> slot2) {
  TokenSeq p{tok::kRoleCritic};
  p.insert(p.end(), question.begin(), question.end());
  p.push_back(tok::kSepAnswer);
  p.insert(p.end(), slot1.begin(), slot1.end());
  p.push_back(tok::kSepAnswer);
  p.insert(p.end(), slot2.begin(), slot2.end());
  p.push_back(tok::kSepThink);
  return p;
}

// Single-answer prompt for the non-relativistic (binary classifier) critic.
inline TokenSeq binary_critic_prompt(std::span<const Token> question, std::span<const Token> answer) {
  TokenSeq p{tok::kRoleCritic};
  p.insert(p.end(), question.begin(), question.end());
  p.push_back(tok::kSepAnswer);
  p.insert(p.end(), answer.begin(), answer.end());
  p.push_back(tok::kSepThink);
  return p;
}

struct CriticOptions {
  int max_think = 32;
  double temperature = 1.0;
  bool reasoning = true;
  bool allow_tie = true;
};

// The first label token decides; with reasoning disabled it must be the
// first generated token. EOS or an exhausted budget gives INVALID.
inline CriticRollout rollout_critic_prompt(const ModelState& s, TokenSeq prompt, const CriticOptions& opt, Rng& rng) {
  CriticRollout r;
  r.prompt = std::move(prompt);
  TokenSeq seq = r.prompt;
  Workspace ws;
  const int budget = opt.reasoning ? opt.max_think + 1 : 1;
  bool terminated = false;
  for (int i = 0; i < budget; ++i) {
    forward(s, seq, ws);
    const Token t = sample_from(ws, opt.temperature, rng);
    seq.push_back(t);
    r.generated.push_back(t);
    r.logprobs.push_back(ws.logprobs[static_cast<std::size_t>(t)]);
    if (tok::is_label(t)) {
      terminated = true;
      if (t == tok::kLabel1) r.label = Label::slot1;
      else if (t == tok::kLabel2) r.label = Label::slot2;
      else r.label = opt.allow_tie ? Label::tie : Label::invalid;
      break;
    }
    if (t == tok::kEos) {
      terminated = true;
      break;
    }
    r.think.push_back(t);
  }
  r.valid = r.label != Label::invalid;
  r.overlength = !terminated;
  return r;
}

inline CriticRollout rollout_critic(const ModelState& s, const ComparisonTriplet& t, const CriticOptions& opt, Rng& rng) {
  return rollout_critic_prompt(s, critic_prompt(t.question, t.slot1, t.slot2), opt, rng);
}

}  // namespace raro
