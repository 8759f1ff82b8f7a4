// raro: data generation, training, evaluation, tournament reranking, oracle
// checks and metrics export.
//
// Exit codes: 0 success, 1 validation failure, 2 usage error.

#include <CLI11.hpp>

#include <raro/oracle.hpp>
#include <raro/trainer.hpp>
#include <raro/tts.hpp>

#include <cstdio>
#include <iostream>
#include <set>

using namespace raro;
namespace fs = std::filesystem;

namespace {

struct GenArgs {
  std::string task = "countdown";
  int count = 1000;
  std::uint64_t seed = 0;
  int n = 3, lo = 1, hi = 9, target = 10;
  int val = 0, test = 0;
  std::string out, sidecar;
};

struct TrainArgs {
  std::string method, config, data, out, init;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
};

struct EvalArgs {
  std::string checkpoint, critic, data, split = "test", sidecar;
  int max_think = 64, max_answer = 16, critic_think = 8;
  std::vector<int> ns{1, 4, 16};
  int votes = 4;
  bool swap = false;
  std::uint64_t seed = 0;
};

struct ExportArgs {
  std::string run, format = "csv", out;
};

int gen_data(const GenArgs& a) {
  Dataset d;
  std::string sidecar_text;
  if (a.task == "countdown") {
    CountdownParams p;
    p.count = a.count;
    p.seed = a.seed;
    p.n = a.n;
    p.lo = a.lo;
    p.hi = a.hi;
    p.target = a.target;
    for (const auto& it : generate_countdown(p)) d.examples.push_back(to_example(it));
  } else {
    const auto items = generate_hidden_rule(a.count, a.seed);
    for (const auto& it : items) d.examples.push_back(to_example(it));
    sidecar_text = sidecar_to_jsonl(items);
  }
  assign_splits(d.examples, a.val, a.test);
  write_file_atomic(a.out, dataset_to_jsonl(d));
  if (!sidecar_text.empty()) {
    const fs::path side = a.sidecar.empty() ? fs::path(a.out + ".rules.jsonl") : fs::path(a.sidecar);
    write_file_atomic(side, sidecar_text);
  }
  std::cout << "wrote " << d.examples.size() << " examples to " << a.out << "\n";
  return 0;
}

int train_cmd(const TrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? desk_config() : load_config(a.config);
  if (!a.method.empty()) cfg.method = method_from_string(a.method);
  if (a.seed) cfg.seed = *a.seed;
  if (a.iterations) cfg.iterations = *a.iterations;
  cfg.validate();
  const Dataset data = load_dataset(a.data);
  ModelState init;
  if (!a.init.empty()) init = load_checkpoint(a.init);
  else if (cfg.method != Method::pretrain) init = ModelState::random(cfg.arch, cfg.seed, cfg.init_scale);
  RunDirectory out(a.out);
  const auto r = train(cfg, data, init, &out);
  std::cout << Json{{"variant", cfg.variant()}, {"best_iteration", r.best_iteration}, {"records", r.records.size()}, {"out", a.out}}.dump()
            << "\n";
  return 0;
}

std::unique_ptr<RuleSidecar> maybe_sidecar(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_unique<RuleSidecar>(load_sidecar(path));
}

int eval_cmd(const EvalArgs& a) {
  const ModelState s = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset(a.data);
  const auto split = data.split(a.split);
  const auto sidecar = maybe_sidecar(a.sidecar);
  const bool hidden = !split.empty() && split.front()->kind == TaskKind::hidden_rule;
  const Budgets b{a.max_think, a.max_answer, a.critic_think};
  const double acc = evaluate(s, split, hidden ? EvalMode::hidden_rule_rate : EvalMode::greedy_accuracy, b, sidecar.get());
  std::cout << Json{{"split", a.split}, {"instances", split.size()}, {"accuracy", acc}}.dump() << "\n";
  return 0;
}

int tts_cmd(const EvalArgs& a) {
  const ModelState policy = load_checkpoint(a.checkpoint);
  const ModelState critic = a.critic.empty() ? policy : load_checkpoint(a.critic);
  const Dataset data = load_dataset(a.data);
  const auto split = data.split(a.split);
  const auto sidecar = maybe_sidecar(a.sidecar);
  TournamentConfig cfg;
  cfg.votes = a.votes;
  cfg.position_swap = a.swap;
  cfg.critic.max_think = a.critic_think;
  const auto acc = tts_eval(policy, critic, split, a.ns, cfg, TtsBudgets{a.max_think, a.max_answer}, make_verifier(sidecar.get()), a.seed);
  Json rows = Json::array();
  for (std::size_t i = 0; i < a.ns.size(); ++i) rows.push_back(Json{{"n", a.ns[i]}, {"accuracy", acc[i]}});
  std::cout << Json{{"split", a.split}, {"instances", split.size()}, {"votes", a.votes}, {"results", rows}}.dump(2) << "\n";
  return 0;
}

int oracle_cmd(std::uint64_t seed) {
  const auto res = oracle::run_oracle_suite(seed);
  for (const auto& r : res.reports)
    std::printf("%s  %-18s max_error=%.3e tol=%.0e  %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.max_error, r.tolerance,
                r.detail.c_str());
  return res.pass() ? 0 : 1;
}

std::string csv_cell(const Json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

int export_cmd(const ExportArgs& a) {
  if (a.format != "csv") throw ConfigInvalid("unsupported export format '" + a.format + "'");
  const auto records = parse_jsonl(read_file(fs::path(a.run) / "metrics.jsonl"));
  std::set<std::string> keys;
  for (const auto& r : records)
    for (const auto& [k, v] : r.items()) keys.insert(k);
  std::vector<std::string> cols{"iteration"};
  for (const auto& k : keys)
    if (k != "iteration") cols.push_back(k);
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += "\n";
  for (const auto& r : records) {
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + (r.contains(cols[i]) ? csv_cell(r[cols[i]]) : "");
    out += "\n";
  }
  if (a.out.empty()) std::cout << out;
  else write_file_atomic(a.out, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"raro: adversarial imitation of reasoning from demonstrations"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "generate a task dataset as JSONL");
  g->add_option("--task", gen.task)->check(CLI::IsMember({"countdown", "hidden-rule"}))->capture_default_str();
  g->add_option("--count", gen.count)->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--n", gen.n, "operands per countdown instance")->capture_default_str();
  g->add_option("--lo", gen.lo)->capture_default_str();
  g->add_option("--hi", gen.hi)->capture_default_str();
  g->add_option("--target", gen.target)->capture_default_str();
  g->add_option("--val", gen.val, "validation instances")->capture_default_str();
  g->add_option("--test", gen.test, "test instances")->capture_default_str();
  g->add_option("--out", gen.out)->required();
  g->add_option("--sidecar", gen.sidecar, "hidden-rule evaluation sidecar (default OUT.rules.jsonl)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model; writes a run directory");
  t->add_option("--method", tr.method)->check(CLI::IsMember({"pretrain", "sft", "rlvr", "rl-logit", "rl_logit", "raro"}));
  t->add_option("--config", tr.config, "JSON config (default: desk preset)");
  t->add_option("--data", tr.data)->required();
  t->add_option("--out", tr.out)->required();
  t->add_option("--init", tr.init, "initial checkpoint");
  t->add_option("--seed", tr.seed);
  t->add_option("--iterations", tr.iterations);

  EvalArgs ev;
  auto add_eval_flags = [](CLI::App* c, EvalArgs& a) {
    c->add_option("--data", a.data)->required();
    c->add_option("--split", a.split)->capture_default_str();
    c->add_option("--sidecar", a.sidecar, "hidden-rule evaluation sidecar");
    c->add_option("--max-think", a.max_think)->capture_default_str();
    c->add_option("--max-answer", a.max_answer)->capture_default_str();
    c->add_option("--critic-think", a.critic_think)->capture_default_str();
  };
  auto* e = app.add_subcommand("eval", "greedy accuracy of a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  add_eval_flags(e, ev);

  EvalArgs ts;
  auto* s = app.add_subcommand("tts", "tournament accuracy for several pool sizes");
  s->add_option("--checkpoint", ts.checkpoint, "policy checkpoint")->required();
  s->add_option("--critic", ts.critic, "critic checkpoint (default: the policy checkpoint)");
  s->add_option("--n", ts.ns, "pool sizes")->delimiter(',')->capture_default_str();
  s->add_option("--votes", ts.votes)->capture_default_str();
  s->add_flag("--position-swap", ts.swap);
  s->add_option("--seed", ts.seed)->capture_default_str();
  add_eval_flags(s, ts);

  std::uint64_t oracle_seed = 0;
  auto* o = app.add_subcommand("oracle-check", "check the three exact propositions");
  o->add_option("--seed", oracle_seed)->capture_default_str();

  ExportArgs ex;
  auto* x = app.add_subcommand("export-metrics", "export metrics.jsonl of a run");
  x->add_option("--run", ex.run)->required();
  x->add_option("--format", ex.format)->capture_default_str();
  x->add_option("--out", ex.out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << err.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*g) return gen_data(gen);
    if (*t) return train_cmd(tr);
    if (*e) return eval_cmd(ev);
    if (*s) return tts_cmd(ts);
    if (*o) return oracle_cmd(oracle_seed);
    if (*x) return export_cmd(ex);
  } catch (const ConfigInvalid& err) {
    std::cerr << "ConfigInvalid: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
