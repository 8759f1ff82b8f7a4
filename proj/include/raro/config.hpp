#pragma once

// Training configuration. Struct defaults follow the published
// hyperparameter tables; the "desk" preset rescales batch sizes, budgets and
// learning rate for a model with tens of thousands of parameters.
//
// JSON schema (every key optional, unknown keys rejected):
//   preset: "full" | "desk"            applied first, then explicit keys
//   method: "pretrain" | "sft" | "rlvr" | "rl_logit" | "raro"
//   seed, iterations, rollout_batch, group_size, train_batch
//   critic_group_size                  critic samples per judged triplet
//   beta_kl, lambda_pol, lambda_crit, temperature, kl_on_critic
//   taus: {tau_pol, tau_crit}
//   clip: {low, high}
//   budgets: {max_think, max_answer, critic_max_think}
//   optimizer: {lr, beta1, beta2, eps, weight_decay, max_grad_norm}
//   arch: {window, embed, hidden, layers}, init_scale
//   ablations: {no_tie, no_relativistic, no_replay, no_critic_reasoning, no_shared_model}
//   rl_logit_variant: "logprob" | "perplexity"
//   replay_capacity                    0 = unbounded
//   val_size, val_every                val_size 0 = whole split
//   sft: {epochs, batch_size, lr}
//   pretrain: {steps, batch_size, lr, critic_fraction}

#include <set>
#include <string>

#include "grpo.hpp"
#include "io.hpp"
#include "presets.hpp"
#include "rewards.hpp"

namespace raro {

enum class Method { pretrain, sft, rlvr, rl_logit, raro };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::pretrain: return "pretrain";
    case Method::sft: return "sft";
    case Method::rlvr: return "rlvr";
    case Method::rl_logit: return "rl_logit";
    case Method::raro: return "raro";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "pretrain") return Method::pretrain;
  if (s == "sft") return Method::sft;
  if (s == "rlvr") return Method::rlvr;
  if (s == "rl_logit" || s == "rl-logit") return Method::rl_logit;
  if (s == "raro") return Method::raro;
  throw ConfigInvalid("unknown method '" + s + "'");
}

struct Ablations {
  bool no_tie = false;
  bool no_relativistic = false;
  bool no_replay = false;
  bool no_critic_reasoning = false;
  bool no_shared_model = false;

  bool any() const { return no_tie || no_relativistic || no_replay || no_critic_reasoning || no_shared_model; }
  friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct Budgets {
  int max_think = 2048;
  int max_answer = 2048;
  int critic_max_think = 2048;
};

struct SftOptions {
  int epochs = 4;
  int batch_size = 8;
  double lr = 1e-5;
};

struct PretrainOptions {
  int steps = 2000;
  int batch_size = 16;
  double lr = 3e-3;
  double critic_fraction = 0.5;
};

struct TrainConfig {
  std::string preset = "full";
  Method method = Method::raro;
  std::uint64_t seed = 0;
  int iterations = 100;
  int rollout_batch = 1024;
  int group_size = 16;
  int train_batch = 256;
  int critic_group_size = 16;
  double beta_kl = 1e-3;
  double lambda_pol = 0.5;
  double lambda_crit = 0.5;
  double temperature = 1.0;
  bool kl_on_critic = true;
  TieRewards taus;
  ClipBounds clip;
  Budgets budgets;
  AdamWConfig optimizer;
  Arch arch = preset_arch("desk");
  double init_scale = 0.05;
  Ablations ablations;
  RlLogitVariant rl_logit_variant = RlLogitVariant::logprob;
  std::size_t replay_capacity = 0;
  int val_size = 0;
  int val_every = 1;
  SftOptions sft;
  PretrainOptions pretrain;

  void validate() const {
    if (!(lambda_pol >= 0.0 && lambda_crit >= 0.0 && lambda_pol + lambda_crit > 0.0))
      throw ConfigInvalid("lambda_pol + lambda_crit must be positive (both non-negative)");
    if (group_size < 1) throw ConfigInvalid("group_size must be >= 1");
    if (critic_group_size < 1) throw ConfigInvalid("critic_group_size must be >= 1");
    if (rollout_batch < 1 || train_batch < 1 || rollout_batch % train_batch != 0)
      throw ConfigInvalid("rollout_batch must be a positive multiple of train_batch");
    if (iterations < 0) throw ConfigInvalid("iterations must be >= 0");
    if (budgets.max_think < 1 || budgets.max_answer < 1 || budgets.critic_max_think < 1)
      throw ConfigInvalid("token budgets must be >= 1");
    if (!(beta_kl >= 0.0)) throw ConfigInvalid("beta_kl must be >= 0");
    if (!(temperature > 0.0)) throw ConfigInvalid("temperature must be positive");
    if (!(optimizer.lr > 0.0) || !(sft.lr > 0.0) || !(pretrain.lr > 0.0)) throw ConfigInvalid("learning rates must be positive");
    if (val_every < 1 || val_size < 0) throw ConfigInvalid("val_every must be >= 1 and val_size >= 0");
    if (sft.epochs < 0 || sft.batch_size < 1 || pretrain.steps < 0 || pretrain.batch_size < 1)
      throw ConfigInvalid("invalid sft/pretrain schedule");
    if (!(pretrain.critic_fraction >= 0.0 && pretrain.critic_fraction <= 1.0))
      throw ConfigInvalid("pretrain.critic_fraction must lie in [0, 1]");
    taus.validate();
    clip.validate();
    arch.validate();
    if (arch.vocab != tok::kCount) throw ConfigInvalid("arch.vocab must match the token vocabulary");
  }

  // Labels runs so that ablations are distinguishable in metadata.
  std::string variant() const {
    std::string v = to_string(method);
    if (ablations.no_tie) v += "+no_tie";
    if (ablations.no_relativistic) v += "+no_relativistic";
    if (ablations.no_replay) v += "+no_replay";
    if (ablations.no_critic_reasoning) v += "+no_critic_reasoning";
    if (ablations.no_shared_model) v += "+no_shared_model";
    return v;
  }
};

// Desk-scale overrides: small batches, short budgets, a learning rate sized
// for a model with ~30k parameters.
inline void apply_desk_preset(TrainConfig& c) {
  c.preset = "desk";
  c.iterations = 300;
  c.rollout_batch = 16;
  c.group_size = 8;
  c.train_batch = 8;
  c.critic_group_size = 4;
  c.budgets = Budgets{64, 16, 8};
  c.optimizer.lr = 1e-3;
  c.arch = preset_arch("desk");
  c.val_size = 128;
  c.sft = SftOptions{30, 16, 2e-3};
  c.pretrain = PretrainOptions{3000, 16, 3e-3, 0.5};
}

inline TrainConfig full_config() { return TrainConfig{}; }

inline TrainConfig desk_config(Method m = Method::raro) {
  TrainConfig c;
  apply_desk_preset(c);
  c.method = m;
  return c;
}

inline Json config_to_json(const TrainConfig& c) {
  const auto& o = c.optimizer;
  return Json{
      {"preset", c.preset},
      {"method", to_string(c.method)},
      {"seed", c.seed},
      {"iterations", c.iterations},
      {"rollout_batch", c.rollout_batch},
      {"group_size", c.group_size},
      {"train_batch", c.train_batch},
      {"critic_group_size", c.critic_group_size},
      {"beta_kl", c.beta_kl},
      {"lambda_pol", c.lambda_pol},
      {"lambda_crit", c.lambda_crit},
      {"temperature", c.temperature},
      {"kl_on_critic", c.kl_on_critic},
      {"taus", {{"tau_pol", c.taus.tau_pol}, {"tau_crit", c.taus.tau_crit}}},
      {"clip", {{"low", c.clip.low}, {"high", c.clip.high}}},
      {"budgets",
       {{"max_think", c.budgets.max_think}, {"max_answer", c.budgets.max_answer}, {"critic_max_think", c.budgets.critic_max_think}}},
      {"optimizer",
       {{"lr", o.lr}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}, {"weight_decay", o.weight_decay},
        {"max_grad_norm", o.max_grad_norm}}},
      {"arch", {{"window", c.arch.window}, {"embed", c.arch.embed}, {"hidden", c.arch.hidden}, {"layers", c.arch.layers}}},
      {"init_scale", c.init_scale},
      {"ablations",
       {{"no_tie", c.ablations.no_tie},
        {"no_relativistic", c.ablations.no_relativistic},
        {"no_replay", c.ablations.no_replay},
        {"no_critic_reasoning", c.ablations.no_critic_reasoning},
        {"no_shared_model", c.ablations.no_shared_model}}},
      {"rl_logit_variant", c.rl_logit_variant == RlLogitVariant::logprob ? "logprob" : "perplexity"},
      {"replay_capacity", c.replay_capacity},
      {"val_size", c.val_size},
      {"val_every", c.val_every},
      {"sft", {{"epochs", c.sft.epochs}, {"batch_size", c.sft.batch_size}, {"lr", c.sft.lr}}},
      {"pretrain",
       {{"steps", c.pretrain.steps},
        {"batch_size", c.pretrain.batch_size},
        {"lr", c.pretrain.lr},
        {"critic_fraction", c.pretrain.critic_fraction}}},
      {"variant", c.variant()},
  };
}

namespace detail {

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigInvalid(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigInvalid("unknown config key '" + where + k + "'");
}

template <class T>
void read(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline TrainConfig config_from_json(const Json& j) {
  TrainConfig c;
  try {
    detail::check_keys(j,
                       {"preset", "method", "seed", "iterations", "rollout_batch", "group_size", "train_batch", "critic_group_size",
                        "beta_kl", "lambda_pol", "lambda_crit", "temperature", "kl_on_critic", "taus", "clip", "budgets",
                        "optimizer", "arch", "init_scale", "ablations", "rl_logit_variant", "replay_capacity", "val_size",
                        "val_every", "sft", "pretrain", "variant"},
                       "");
    const std::string preset = j.value("preset", std::string("desk"));
    if (preset == "desk") apply_desk_preset(c);
    else if (preset != "full") throw ConfigInvalid("unknown preset '" + preset + "'");
    if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
    detail::read(j, "seed", c.seed);
    detail::read(j, "iterations", c.iterations);
    detail::read(j, "rollout_batch", c.rollout_batch);
    detail::read(j, "group_size", c.group_size);
    detail::read(j, "train_batch", c.train_batch);
    detail::read(j, "critic_group_size", c.critic_group_size);
    detail::read(j, "beta_kl", c.beta_kl);
    detail::read(j, "lambda_pol", c.lambda_pol);
    detail::read(j, "lambda_crit", c.lambda_crit);
    detail::read(j, "temperature", c.temperature);
    detail::read(j, "kl_on_critic", c.kl_on_critic);
    detail::read(j, "init_scale", c.init_scale);
    detail::read(j, "replay_capacity", c.replay_capacity);
    detail::read(j, "val_size", c.val_size);
    detail::read(j, "val_every", c.val_every);
    if (j.contains("taus")) {
      const auto& t = j.at("taus");
      detail::check_keys(t, {"tau_pol", "tau_crit"}, "taus.");
      detail::read(t, "tau_pol", c.taus.tau_pol);
      detail::read(t, "tau_crit", c.taus.tau_crit);
    }
    if (j.contains("clip")) {
      const auto& t = j.at("clip");
      detail::check_keys(t, {"low", "high"}, "clip.");
      detail::read(t, "low", c.clip.low);
      detail::read(t, "high", c.clip.high);
    }
    if (j.contains("budgets")) {
      const auto& t = j.at("budgets");
      detail::check_keys(t, {"max_think", "max_answer", "critic_max_think"}, "budgets.");
      detail::read(t, "max_think", c.budgets.max_think);
      detail::read(t, "max_answer", c.budgets.max_answer);
      detail::read(t, "critic_max_think", c.budgets.critic_max_think);
    }
    if (j.contains("optimizer")) {
      const auto& t = j.at("optimizer");
      detail::check_keys(t, {"lr", "beta1", "beta2", "eps", "weight_decay", "max_grad_norm"}, "optimizer.");
      detail::read(t, "lr", c.optimizer.lr);
      detail::read(t, "beta1", c.optimizer.beta1);
      detail::read(t, "beta2", c.optimizer.beta2);
      detail::read(t, "eps", c.optimizer.eps);
      detail::read(t, "weight_decay", c.optimizer.weight_decay);
      detail::read(t, "max_grad_norm", c.optimizer.max_grad_norm);
    }
    if (j.contains("arch")) {
      const auto& t = j.at("arch");
      if (t.is_string()) {
        c.arch = preset_arch(t.get<std::string>());
      } else {
        detail::check_keys(t, {"window", "embed", "hidden", "layers"}, "arch.");
        detail::read(t, "window", c.arch.window);
        detail::read(t, "embed", c.arch.embed);
        detail::read(t, "hidden", c.arch.hidden);
        detail::read(t, "layers", c.arch.layers);
      }
    }
    if (j.contains("ablations")) {
      const auto& t = j.at("ablations");
      detail::check_keys(t, {"no_tie", "no_relativistic", "no_replay", "no_critic_reasoning", "no_shared_model"}, "ablations.");
      detail::read(t, "no_tie", c.ablations.no_tie);
      detail::read(t, "no_relativistic", c.ablations.no_relativistic);
      detail::read(t, "no_replay", c.ablations.no_replay);
      detail::read(t, "no_critic_reasoning", c.ablations.no_critic_reasoning);
      detail::read(t, "no_shared_model", c.ablations.no_shared_model);
    }
    if (j.contains("rl_logit_variant")) {
      const auto v = j.at("rl_logit_variant").get<std::string>();
      if (v == "logprob") c.rl_logit_variant = RlLogitVariant::logprob;
      else if (v == "perplexity") c.rl_logit_variant = RlLogitVariant::perplexity;
      else throw ConfigInvalid("unknown rl_logit_variant '" + v + "'");
    }
    if (j.contains("sft")) {
      const auto& t = j.at("sft");
      detail::check_keys(t, {"epochs", "batch_size", "lr"}, "sft.");
      detail::read(t, "epochs", c.sft.epochs);
      detail::read(t, "batch_size", c.sft.batch_size);
      detail::read(t, "lr", c.sft.lr);
    }
    if (j.contains("pretrain")) {
      const auto& t = j.at("pretrain");
      detail::check_keys(t, {"steps", "batch_size", "lr", "critic_fraction"}, "pretrain.");
      detail::read(t, "steps", c.pretrain.steps);
      detail::read(t, "batch_size", c.pretrain.batch_size);
      detail::read(t, "lr", c.pretrain.lr);
      detail::read(t, "critic_fraction", c.pretrain.critic_fraction);
    }
    if (j.contains("variant") && j.at("variant").get<std::string>() != c.variant())
      throw ConfigInvalid("variant label does not match method and ablation flags");
  } catch (const Json::exception& e) {
    throw ConfigInvalid(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  try {
    return config_from_json(Json::parse(read_file(path)));
  } catch (const Json::parse_error& e) {
    throw ConfigInvalid(std::string("unparseable config: ") + e.what());
  }
}

}  // namespace raro
