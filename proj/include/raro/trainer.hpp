#pragma once

// Training loops: format pretraining, SFT, and the GRPO family (RLVR,
// RL-Logit, RARO) with validation-based checkpoint selection.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "grpo.hpp"
#include "replay.hpp"
#include "rewards.hpp"
#include "rollout.hpp"
#include "tasks.hpp"
#include "tts.hpp"

namespace raro {

// ----------------------------------------------------------------- evaluation

enum class EvalMode { greedy_accuracy, hidden_rule_rate };

inline bool task_verify(const Example& ex, std::span<const Token> answer, const RuleSidecar* sidecar) {
  if (ex.kind == TaskKind::countdown) {
    if (!ex.countdown) throw FormatError("countdown example '" + ex.id + "' lacks operands");
    return verify_countdown(*ex.countdown, answer);
  }
  if (!sidecar) throw Error("hidden-rule evaluation needs the rule sidecar");
  const auto it = sidecar->find(ex.id);
  if (it == sidecar->end()) throw FormatError("no rule for instance '" + ex.id + "' in sidecar");
  return verify_hidden_rule(HiddenRuleInstance{ex.id, ex.prompt, it->second}, answer);
}

inline AnswerVerifier make_verifier(const RuleSidecar* sidecar) {
  return [sidecar](const Example& ex, std::span<const Token> a) { return task_verify(ex, a, sidecar); };
}

inline TokenSeq greedy_answer(const ModelState& s, const Example& ex, const Budgets& b) {
  Rng unused(0);
  const auto r = rollout_policy(s, ex.id, ex.prompt, b.max_think, b.max_answer, 0.0, unused);
  return r.valid ? r.answer : TokenSeq{};
}

// Fraction of instances whose greedy answer passes the task verifier.
inline double evaluate(const ModelState& s, const std::vector<const Example*>& split, EvalMode mode, const Budgets& b,
                       const RuleSidecar* sidecar = nullptr) {
  if (split.empty()) throw EmptySplit("evaluate: empty split");
  if (mode == EvalMode::hidden_rule_rate && !sidecar) throw Error("hidden_rule_rate needs the rule sidecar");
  double ok = 0;
  for (const Example* ex : split) {
    ok += task_verify(*ex, greedy_answer(s, *ex, b), sidecar) ? 1.0 : 0.0;
  }
  return ok / static_cast<double>(split.size());
}

// ----------------------------------------------------------------- records

struct RunRecord {
  int iteration = 0;
  std::string variant;
  double policy_reward_mean = 0.0;
  double critic_reward_mean = 0.0;
  double tie_fraction = 0.0;
  double invalid_fraction = 0.0;
  double policy_invalid_fraction = 0.0;
  double overlength_fraction = 0.0;
  double mean_response_length = 0.0;
  double mean_think_length = 0.0;
  std::optional<double> sampled_accuracy;  // logged only, never used for training
  std::optional<double> val_score;
  double train_nll = 0.0;
  double loss = 0.0;
  double policy_objective = 0.0;
  double critic_objective = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
  int policy_rollouts = 0;
  int valid_policy_rollouts = 0;
  int policy_judgments = 0;
  int critic_rollouts = 0;
  int replay_triplets = 0;
  std::size_t buffer_size = 0;
  bool replay_enabled = true;
};

inline Json record_to_json(const RunRecord& r) {
  Json j{{"iteration", r.iteration},
         {"variant", r.variant},
         {"policy_reward_mean", r.policy_reward_mean},
         {"critic_reward_mean", r.critic_reward_mean},
         {"tie_fraction", r.tie_fraction},
         {"invalid_fraction", r.invalid_fraction},
         {"policy_invalid_fraction", r.policy_invalid_fraction},
         {"overlength_fraction", r.overlength_fraction},
         {"mean_response_length", r.mean_response_length},
         {"mean_think_length", r.mean_think_length},
         {"train_nll", r.train_nll},
         {"loss", r.loss},
         {"policy_objective", r.policy_objective},
         {"critic_objective", r.critic_objective},
         {"kl", r.kl},
         {"grad_norm", r.grad_norm},
         {"policy_rollouts", r.policy_rollouts},
         {"valid_policy_rollouts", r.valid_policy_rollouts},
         {"policy_judgments", r.policy_judgments},
         {"critic_rollouts", r.critic_rollouts},
         {"replay_triplets", r.replay_triplets},
         {"buffer_size", r.buffer_size},
         {"replay_enabled", r.replay_enabled}};
  j["sampled_accuracy"] = r.sampled_accuracy ? Json(*r.sampled_accuracy) : Json(nullptr);
  j["val_score"] = r.val_score ? Json(*r.val_score) : Json(nullptr);
  return j;
}

// ----------------------------------------------------------------- run directory

// config.json, metrics.jsonl, timings.jsonl, buffer.jsonl, checkpoints/.
// Every file is replaced atomically. Wall-clock lives in timings.jsonl so
// metrics.jsonl is reproducible byte for byte.
class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_ / "checkpoints");
  }

  const std::filesystem::path& path() const { return dir_; }

  void write_config(const TrainConfig& c) const { write_file_atomic(dir_ / "config.json", config_to_json(c).dump(2) + "\n"); }

  void add(const RunRecord& r, double seconds) {
    metrics_ += record_to_json(r).dump() + "\n";
    timings_ += Json{{"iteration", r.iteration}, {"seconds", seconds}}.dump() + "\n";
  }

  void flush() const {
    write_file_atomic(dir_ / "metrics.jsonl", metrics_);
    write_file_atomic(dir_ / "timings.jsonl", timings_);
  }

  void save(const std::string& name, const ModelState& s, const AdamW* opt = nullptr) const {
    save_checkpoint(dir_ / "checkpoints" / (name + ".json"), s);
    if (opt) write_file_atomic(dir_ / "checkpoints" / (name + ".optim.json"), opt->to_json().dump() + "\n");
  }

  void save_buffer(const ReplayBuffer& b) const { write_file_atomic(dir_ / "buffer.jsonl", b.to_jsonl()); }

  void write_summary(const Json& j) const { write_file_atomic(dir_ / "run.json", j.dump(2) + "\n"); }

 private:
  std::filesystem::path dir_;
  std::string metrics_, timings_;
};

struct TrainResult {
  ModelState final_state;
  ModelState best_state;
  std::optional<ModelState> critic_state;  // separate critic under no_shared_model
  int best_iteration = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<RunRecord> records;
};

namespace detail {

// Epoch-wise shuffled pass over the training split.
class Sampler {
 public:
  Sampler(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.shuffle(order_);
  }

  std::size_t next() {
    if (pos_ == order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

inline std::vector<const Example*> val_subset(const Dataset& d, int val_size) {
  auto v = d.split("val");
  if (val_size > 0 && static_cast<int>(v.size()) > val_size) v.resize(static_cast<std::size_t>(val_size));
  return v;
}

inline TokenSeq sft_target(const Example& ex) {
  TokenSeq t{tok::kSepAnswer};
  t.insert(t.end(), ex.expert.begin(), ex.expert.end());
  t.push_back(tok::kEos);
  return t;
}

inline TokenSeq random_answer(const Example& ex, Rng& rng) {
  if (ex.kind == TaskKind::countdown && ex.countdown) return random_expression(ex.countdown->operands, rng);
  TokenSeq a(static_cast<std::size_t>(rng.uniform_int(1, 6)));
  for (auto& t : a) t = static_cast<Token>(tok::kLetterA + rng.uniform_int(0, tok::kLetterCount - 1));
  return a;
}

inline void negate(std::vector<double>& g) {
  for (auto& x : g) x = -x;
}

inline double mean_or_zero(double sum, double n) { return n > 0 ? sum / n : 0.0; }

struct Selection {
  int best_iteration = -1;
  double best_score = -std::numeric_limits<double>::infinity();

  bool offer(int iteration, double score) {
    if (iteration < 1 || !(score > best_score)) return false;
    best_score = score;
    best_iteration = iteration;
    return true;
  }
};

}  // namespace detail

// ----------------------------------------------------------------- pretraining

// Format pretraining: policy prompts continue with a random well-formed
// answer over the question's symbols (the target is ignored), critic prompts
// over two random answers continue with a uniformly random label.
inline TrainResult train_pretrain(const TrainConfig& cfg, const Dataset& data, RunDirectory* out = nullptr) {
  const auto train = data.split("train");
  if (train.empty()) throw DatasetEmpty("no training examples");
  TrainResult res;
  ModelState s = ModelState::random(cfg.arch, cfg.seed, cfg.init_scale);
  AdamWConfig oc = cfg.optimizer;
  oc.lr = cfg.pretrain.lr;
  AdamW opt(oc, s.params.size());
  Rng rng(derive_seed(cfg.seed, hash_string("pretrain")));
  const auto val = detail::val_subset(data, cfg.val_size);
  std::vector<double> grad(s.params.size());
  Workspace ws;
  double nll = 0.0, count = 0.0;
  auto t0 = std::chrono::steady_clock::now();
  for (int step = 1; step <= cfg.pretrain.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int b = 0; b < cfg.pretrain.batch_size; ++b) {
      const Example& ex = *train[rng.index(train.size())];
      TokenSeq prefix, gen;
      if (rng.bernoulli(cfg.pretrain.critic_fraction)) {
        const auto a1 = detail::random_answer(ex, rng), a2 = detail::random_answer(ex, rng);
        prefix = critic_prompt(ex.prompt, a1, a2);
        gen = {static_cast<Token>(tok::kLabel1 + rng.uniform_int(0, 2))};
      } else {
        prefix = policy_prompt(ex.prompt);
        gen = {tok::kSepAnswer};
        const auto a = detail::random_answer(ex, rng);
        gen.insert(gen.end(), a.begin(), a.end());
        gen.push_back(tok::kEos);
      }
      nll -= sequence_logprob(s, prefix, gen).total;
      count += 1;
      accumulate_logprob_grad(s, prefix, gen, grad, {}, &ws);
    }
    detail::negate(grad);
    const double norm = opt.step(s.params, grad);
    if (step % 100 == 0 || step == cfg.pretrain.steps) {
      RunRecord r;
      r.iteration = step;
      r.variant = cfg.variant();
      r.train_nll = nll / count;
      r.grad_norm = norm;
      r.replay_enabled = false;
      if (step == cfg.pretrain.steps && !val.empty() && val.front()->kind == TaskKind::countdown)
        r.val_score = evaluate(s, val, EvalMode::greedy_accuracy, cfg.budgets);
      nll = count = 0.0;
      res.records.push_back(r);
      const auto t1 = std::chrono::steady_clock::now();
      if (out) out->add(r, std::chrono::duration<double>(t1 - t0).count());
      t0 = t1;
    }
  }
  res.final_state = s;
  res.best_state = s;
  res.best_iteration = cfg.pretrain.steps;
  if (out) {
    out->save("final", s, &opt);
    out->save("best", s, &opt);
    out->flush();
  }
  return res;
}

// ----------------------------------------------------------------- SFT

inline double sft_nll(const ModelState& s, const std::vector<const Example*>& split) {
  double nll = 0.0;
  for (const Example* ex : split) nll -= sequence_logprob(s, policy_prompt(ex->prompt), detail::sft_target(*ex)).total;
  return nll / static_cast<double>(split.size());
}

// Maximises log p(SEP_ANSWER a^E EOS | ROLE_POLICY q); selects the epoch with
// the lowest validation NLL.
inline TrainResult train_sft(const TrainConfig& cfg, const Dataset& data, const ModelState& init, RunDirectory* out = nullptr) {
  const auto train = data.split("train");
  if (train.empty()) throw DatasetEmpty("no training examples");
  const auto val = detail::val_subset(data, cfg.val_size);
  TrainResult res;
  ModelState s = init;
  AdamWConfig oc = cfg.optimizer;
  oc.lr = cfg.sft.lr;
  AdamW opt(oc, s.params.size());
  Rng rng(derive_seed(cfg.seed, hash_string("sft")));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> grad(s.params.size());
  Workspace ws;
  detail::Selection sel;
  res.best_state = s;
  auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= cfg.sft.epochs; ++epoch) {
    rng.shuffle(order);
    double nll = 0.0, norm = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.sft.batch_size)) {
      std::fill(grad.begin(), grad.end(), 0.0);
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.sft.batch_size));
      for (std::size_t i = start; i < end; ++i) {
        const Example& ex = *train[order[i]];
        const auto prefix = policy_prompt(ex.prompt);
        const auto target = detail::sft_target(ex);
        nll -= sequence_logprob(s, prefix, target).total;
        accumulate_logprob_grad(s, prefix, target, grad, {}, &ws);
      }
      detail::negate(grad);
      norm = opt.step(s.params, grad);
    }
    RunRecord r;
    r.iteration = epoch;
    r.variant = cfg.variant();
    r.train_nll = nll / static_cast<double>(order.size());
    r.grad_norm = norm;
    r.replay_enabled = false;
    if (!val.empty()) {
      const double vl = sft_nll(s, val);
      r.loss = vl;
      r.val_score = -vl;
      if (val.front()->kind == TaskKind::countdown) r.sampled_accuracy = evaluate(s, val, EvalMode::greedy_accuracy, cfg.budgets);
      if (sel.offer(epoch, -vl)) {
        res.best_state = s;
        if (out) out->save("best", s, &opt);
      }
    }
    res.records.push_back(r);
    const auto t1 = std::chrono::steady_clock::now();
    if (out) {
      out->add(r, std::chrono::duration<double>(t1 - t0).count());
      out->flush();
    }
    t0 = t1;
  }
  res.final_state = s;
  if (sel.best_iteration < 0) res.best_state = s;
  res.best_iteration = sel.best_iteration;
  res.best_score = sel.best_score;
  if (out) {
    out->save("final", s, &opt);
    if (sel.best_iteration < 0) out->save("best", s, &opt);
    out->flush();
  }
  return res;
}

// ----------------------------------------------------------------- GRPO family

// RLVR and RL-Logit are policy-only; RARO adds the critic stream. Each
// iteration: B questions, K rollouts each, rewards, then B / train_batch
// sequential minibatch updates against the rollout-time log-probabilities.
inline TrainResult train_grpo(const TrainConfig& cfg, const Dataset& data, const ModelState& init, RunDirectory* out = nullptr) {
  cfg.validate();
  const Method method = cfg.method;
  if (method != Method::rlvr && method != Method::rl_logit && method != Method::raro)
    throw ConfigInvalid("train_grpo: method must be rlvr, rl_logit or raro");
  const auto train = data.split("train");
  if (train.empty()) throw DatasetEmpty("no training examples");
  if (method == Method::rlvr)
    for (const Example* ex : train)
      if (ex->kind != TaskKind::countdown) throw RlvrUnavailable("RLVR needs a trainer-visible verifier; task is hidden_rule");
  const auto val = detail::val_subset(data, cfg.val_size);
  const bool val_is_countdown = !val.empty() && val.front()->kind == TaskKind::countdown;
  const Ablations& ab = cfg.ablations;
  const bool raro = method == Method::raro;
  const bool separate_critic = raro && ab.no_shared_model;

  ModelState policy = init;
  std::optional<ModelState> critic_model;
  if (separate_critic) critic_model = init;
  const ReferenceState ref(init);
  AdamW opt(cfg.optimizer, policy.params.size());
  std::optional<AdamW> critic_opt;
  if (separate_critic) critic_opt.emplace(cfg.optimizer, policy.params.size());
  ReplayBuffer buffer(cfg.replay_capacity);
  detail::Sampler sampler(train.size(), derive_seed(cfg.seed, hash_string("sampler")));
  CriticOptions copt;
  copt.max_think = cfg.budgets.critic_max_think;
  copt.temperature = cfg.temperature;
  copt.reasoning = !ab.no_critic_reasoning;
  copt.allow_tie = !ab.no_tie;
  SurrogateWeights weights{cfg.beta_kl, raro ? cfg.lambda_pol : 1.0, cfg.lambda_crit, cfg.kl_on_critic};
  const int B = cfg.rollout_batch, K = cfg.group_size, S = cfg.critic_group_size;
  const int minibatches = B / cfg.train_batch;

  TrainResult res;
  detail::Selection sel;
  res.best_state = policy;
  auto t0 = std::chrono::steady_clock::now();

  for (int it = 1; it <= cfg.iterations; ++it) {
    const ModelState& judge = separate_critic ? *critic_model : policy;
    Rng it_rng(derive_seed(cfg.seed, hash_string("iteration"), static_cast<std::uint64_t>(it)));
    RunRecord rec;
    rec.iteration = it;
    rec.variant = cfg.variant();
    rec.replay_enabled = raro && !ab.no_replay;

    std::vector<const Example*> batch;
    for (int i = 0; i < B; ++i) batch.push_back(train[sampler.next()]);

    // policy rollouts and their rewards
    std::vector<Group> policy_groups;
    std::vector<ComparisonTriplet> fresh;
    double pol_reward = 0, pol_masked_in = 0, resp_len = 0, think_len = 0, invalid = 0, overlength = 0, sampled_ok = 0;
    for (int i = 0; i < B; ++i) {
      const Example& ex = *batch[static_cast<std::size_t>(i)];
      Group g{ex.id + "|policy", Role::policy, {}};
      for (int k = 0; k < K; ++k) {
        const auto idx = (static_cast<std::uint64_t>(it) * static_cast<std::uint64_t>(B) + static_cast<std::uint64_t>(i)) *
                             static_cast<std::uint64_t>(K) + static_cast<std::uint64_t>(k);
        Rng r(derive_seed(cfg.seed, hash_string("policy"), idx));
        const auto roll = rollout_policy(policy, ex.id, ex.prompt, cfg.budgets.max_think, cfg.budgets.max_answer, cfg.temperature, r);
        ++rec.policy_rollouts;
        resp_len += static_cast<double>(roll.generated.size());
        think_len += static_cast<double>(roll.think.size());
        overlength += roll.overlength;
        if (ex.countdown && roll.valid) sampled_ok += verify_countdown(*ex.countdown, roll.answer);
        Member m{roll.prompt, roll.generated, roll.logprobs, 0.0, false, roll.overlength};
        if (!roll.valid) {
          ++invalid;
        } else {
          ++rec.valid_policy_rollouts;
          if (method == Method::rlvr) {
            m.reward = reward_rlvr(ex, roll.answer);
            m.mask = true;
          } else if (method == Method::rl_logit) {
            m.reward = reward_rl_logit(policy, ex.prompt, roll.think, ex.expert, cfg.rl_logit_variant);
            m.mask = true;
          } else {
            auto t = build_triplet(ex.id, ex.prompt, ex.expert, roll.answer, r);
            Label label;
            if (ab.no_relativistic) {
              label = rollout_critic_prompt(judge, binary_critic_prompt(ex.prompt, roll.answer), copt, r).label;
              const Reward rw = reward_binary_policy(to_binary(label));
              m.reward = rw.value;
              m.mask = rw.mask;
            } else {
              label = rollout_critic(judge, t, copt, r).label;
              const Reward rw = reward_policy(label, t.expert_slot, cfg.taus);
              m.reward = rw.value;
              m.mask = rw.mask;
            }
            ++rec.policy_judgments;
            fresh.push_back(std::move(t));
          }
          if (m.mask) {
            pol_reward += m.reward;
            pol_masked_in += 1;
          }
        }
        g.members.push_back(std::move(m));
      }
      g.members = filter_overlength(std::move(g.members));
      policy_groups.push_back(std::move(g));
    }
    const double n_roll = static_cast<double>(rec.policy_rollouts);
    rec.policy_reward_mean = detail::mean_or_zero(pol_reward, pol_masked_in);
    rec.mean_response_length = resp_len / n_roll;
    rec.mean_think_length = think_len / n_roll;
    rec.policy_invalid_fraction = invalid / n_roll;
    rec.overlength_fraction = overlength / n_roll;
    if (batch.front()->countdown) rec.sampled_accuracy = sampled_ok / n_roll;

    // critic stream
    std::vector<Group> critic_groups;
    if (raro && !fresh.empty()) {
      std::vector<ComparisonTriplet> stream;
      if (ab.no_replay) {
        stream = fresh;
      } else {
        stream = mix(fresh, buffer, it_rng);
        buffer.append_all(fresh);
      }
      double crit_reward = 0, crit_masked_in = 0, ties = 0, crit_invalid = 0;
      auto judge_into = [&](Group& g, const TokenSeq& prompt, std::uint64_t stream_idx, auto&& reward_of) {
        for (int s = 0; s < S; ++s) {
          Rng r(derive_seed(cfg.seed, hash_string("critic"),
                            (static_cast<std::uint64_t>(it) << 32) + stream_idx * static_cast<std::uint64_t>(S) + static_cast<std::uint64_t>(s)));
          const auto cr = rollout_critic_prompt(judge, prompt, copt, r);
          const Reward rw = reward_of(cr.label);
          ++rec.critic_rollouts;
          ties += cr.label == Label::tie;
          crit_invalid += cr.label == Label::invalid;
          if (rw.mask) {
            crit_reward += rw.value;
            crit_masked_in += 1;
          }
          g.members.push_back(Member{cr.prompt, cr.generated, cr.logprobs, rw.value, rw.mask, cr.overlength});
        }
        g.members = filter_overlength(std::move(g.members));
      };
      std::uint64_t stream_idx = 0;
      for (std::size_t j = 0; j < stream.size(); ++j) {
        const auto& t = stream[j];
        rec.replay_triplets += t.origin == Origin::replay;
        if (ab.no_relativistic) {
          Group ge{t.question_ref + "|critic|" + std::to_string(j) + "|expert", Role::critic, {}};
          judge_into(ge, binary_critic_prompt(t.question, t.expert()), stream_idx++,
                     [](Label l) { return reward_binary(to_binary(l), Provenance::expert); });
          Group gp{t.question_ref + "|critic|" + std::to_string(j) + "|policy", Role::critic, {}};
          judge_into(gp, binary_critic_prompt(t.question, t.other()), stream_idx++,
                     [](Label l) { return reward_binary(to_binary(l), Provenance::policy); });
          critic_groups.push_back(std::move(ge));
          critic_groups.push_back(std::move(gp));
        } else {
          Group g{t.question_ref + "|critic|" + std::to_string(j), Role::critic, {}};
          judge_into(g, critic_prompt(t.question, t.slot1, t.slot2), stream_idx++,
                     [&](Label l) { return reward_critic(l, t.expert_slot, cfg.taus); });
          critic_groups.push_back(std::move(g));
        }
      }
      const double nc = static_cast<double>(rec.critic_rollouts);
      rec.critic_reward_mean = detail::mean_or_zero(crit_reward, crit_masked_in);
      rec.tie_fraction = detail::mean_or_zero(ties, nc);
      rec.invalid_fraction = detail::mean_or_zero(crit_invalid, nc);
    }
    rec.buffer_size = buffer.size();

    // minibatch updates
    for (int mb = 0; mb < minibatches; ++mb) {
      const auto p_lo = static_cast<std::size_t>(mb * cfg.train_batch), p_hi = p_lo + static_cast<std::size_t>(cfg.train_batch);
      const std::size_t c_lo = critic_groups.size() * static_cast<std::size_t>(mb) / static_cast<std::size_t>(minibatches);
      const std::size_t c_hi = critic_groups.size() * static_cast<std::size_t>(mb + 1) / static_cast<std::size_t>(minibatches);
      std::vector<Group> pol(policy_groups.begin() + static_cast<std::ptrdiff_t>(p_lo), policy_groups.begin() + static_cast<std::ptrdiff_t>(p_hi));
      std::vector<Group> crit(critic_groups.begin() + static_cast<std::ptrdiff_t>(c_lo), critic_groups.begin() + static_cast<std::ptrdiff_t>(c_hi));
      if (separate_critic) {
        const auto rp = surrogate_loss(pol, policy, ref, cfg.clip, weights);
        rec.grad_norm += opt.step(policy.params, rp.grad);
        const auto rc = surrogate_loss(crit, *critic_model, ref, cfg.clip, weights);
        critic_opt->step(critic_model->params, rc.grad);
        rec.loss += rp.loss + rc.loss;
        rec.policy_objective += rp.policy_objective;
        rec.critic_objective += rc.critic_objective;
        rec.kl += rp.kl + rc.kl;
      } else {
        pol.insert(pol.end(), std::make_move_iterator(crit.begin()), std::make_move_iterator(crit.end()));
        const auto r = surrogate_loss(pol, policy, ref, cfg.clip, weights);
        rec.grad_norm += opt.step(policy.params, r.grad);
        rec.loss += r.loss;
        rec.policy_objective += r.policy_objective;
        rec.critic_objective += r.critic_objective;
        rec.kl += r.kl;
      }
    }
    rec.grad_norm /= minibatches;
    if (!policy.finite()) throw Error("non-finite parameters after update at iteration " + std::to_string(it));

    // validation and selection
    if (it % cfg.val_every == 0 || it == cfg.iterations) {
      double score;
      if (val_is_countdown) score = evaluate(policy, val, EvalMode::greedy_accuracy, cfg.budgets);
      else score = rec.policy_reward_mean;
      rec.val_score = score;
      if (sel.offer(it, score)) {
        res.best_state = policy;
        if (separate_critic) res.critic_state = *critic_model;
        if (out) {
          out->save("best", policy, &opt);
          if (separate_critic) out->save("best_critic", *critic_model, &*critic_opt);
        }
      }
    }
    res.records.push_back(rec);
    const auto t1 = std::chrono::steady_clock::now();
    if (out) {
      out->add(rec, std::chrono::duration<double>(t1 - t0).count());
      if (it % 25 == 0) out->flush();
    }
    t0 = t1;
  }
  res.final_state = policy;
  if (separate_critic && !res.critic_state) res.critic_state = *critic_model;
  res.best_iteration = sel.best_iteration;
  res.best_score = sel.best_score;
  if (sel.best_iteration < 0) res.best_state = policy;
  if (out) {
    out->save("final", policy, &opt);
    if (separate_critic) out->save("final_critic", *critic_model, &*critic_opt);
    if (sel.best_iteration < 0) out->save("best", policy, &opt);
    if (raro) out->save_buffer(buffer);
    out->flush();
  }
  return res;
}

// Dispatches on cfg.method. `init` is ignored for pretraining.
inline TrainResult train(const TrainConfig& cfg, const Dataset& data, const ModelState& init, RunDirectory* out = nullptr) {
  cfg.validate();
  if (data.examples.empty()) throw DatasetEmpty("dataset has no examples");
  if (out) out->write_config(cfg);
  if (cfg.method != Method::pretrain && init.arch != cfg.arch)
    throw ConfigInvalid("initial checkpoint architecture does not match config arch");
  TrainResult r;
  switch (cfg.method) {
    case Method::pretrain: r = train_pretrain(cfg, data, out); break;
    case Method::sft: r = train_sft(cfg, data, init, out); break;
    default: r = train_grpo(cfg, data, init, out); break;
  }
  if (out)
    out->write_summary(Json{{"variant", cfg.variant()},
                            {"method", to_string(cfg.method)},
                            {"ablations", config_to_json(cfg)["ablations"]},
                            {"replay_enabled", cfg.method == Method::raro && !cfg.ablations.no_replay},
                            {"best_iteration", r.best_iteration},
                            {"best_score", std::isfinite(r.best_score) ? Json(r.best_score) : Json(nullptr)},
                            {"iterations", r.records.size()}});
  return r;
}

}  // namespace raro
