#pragma once

// Toy task families with expert demonstrations and ground-truth verifiers.
// Verifiers are consumed by RLVR and by evaluation only; the adversarial
// trainer never sees them.

#include <algorithm>
#include <cmath>
#include <span>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "io.hpp"

namespace raro {

// ----------------------------------------------------------------- rationals

// Exact rational with int64 storage; arithmetic reports overflow and
// division by zero through std::nullopt.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static std::optional<Rational> make(__int128 n, __int128 d) {
    if (d == 0) return std::nullopt;
    if (d < 0) {
      n = -n;
      d = -d;
    }
    __int128 a = n < 0 ? -n : n, b = d;
    while (b != 0) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) {
      n /= a;
      d /= a;
    }
    constexpr __int128 lim = std::numeric_limits<std::int64_t>::max();
    if (n > lim || n < -lim || d > lim) return std::nullopt;
    return Rational{static_cast<std::int64_t>(n), static_cast<std::int64_t>(d)};
  }

  friend bool operator==(const Rational&, const Rational&) = default;
};

inline std::optional<Rational> apply_op(Token op, const Rational& a, const Rational& b) {
  using I = __int128;
  switch (op) {
    case tok::kPlus: return Rational::make(I{a.num} * b.den + I{b.num} * a.den, I{a.den} * b.den);
    case tok::kMinus: return Rational::make(I{a.num} * b.den - I{b.num} * a.den, I{a.den} * b.den);
    case tok::kTimes: return Rational::make(I{a.num} * b.num, I{a.den} * b.den);
    case tok::kDivide: return Rational::make(I{a.num} * b.den, I{a.den} * b.num);
    default: return std::nullopt;
  }
}

// ----------------------------------------------------------------- countdown

struct CountdownInstance {
  std::string id;
  std::vector<int> operands;
  int target = 0;
};

inline TokenSeq number_tokens(int value) {
  TokenSeq out;
  for (char c : std::to_string(value)) out.push_back(static_cast<Token>(c - '0'));
  return out;
}

// "o1 , o2 , ... = target"
inline TokenSeq countdown_prompt(const CountdownInstance& inst) {
  TokenSeq out;
  for (std::size_t i = 0; i < inst.operands.size(); ++i) {
    if (i) out.push_back(tok::kComma);
    const auto digits = number_tokens(inst.operands[i]);
    out.insert(out.end(), digits.begin(), digits.end());
  }
  out.push_back(tok::kEquals);
  const auto t = number_tokens(inst.target);
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

namespace detail {

// Recursive-descent parser over the infix grammar
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := number | '(' expr ')'
// Collects the literal numbers it reads so operand usage can be checked.
class ExprParser {
 public:
  explicit ExprParser(std::span<const Token> toks) : toks_(toks) {}

  // nullopt on syntax error, trailing tokens or undefined arithmetic.
  std::optional<Rational> parse_all(std::vector<int>& numbers) {
    numbers_ = &numbers;
    auto v = expr();
    if (!ok_ || pos_ != toks_.size()) return std::nullopt;
    return v;
  }

 private:
  std::optional<Rational> expr() {
    auto lhs = term();
    while (ok_ && pos_ < toks_.size() && (toks_[pos_] == tok::kPlus || toks_[pos_] == tok::kMinus)) {
      const Token op = toks_[pos_++];
      auto rhs = term();
      lhs = combine(op, lhs, rhs);
    }
    return lhs;
  }

  std::optional<Rational> term() {
    auto lhs = factor();
    while (ok_ && pos_ < toks_.size() && (toks_[pos_] == tok::kTimes || toks_[pos_] == tok::kDivide)) {
      const Token op = toks_[pos_++];
      auto rhs = factor();
      lhs = combine(op, lhs, rhs);
    }
    return lhs;
  }

  std::optional<Rational> factor() {
    if (pos_ >= toks_.size()) return fail();
    if (toks_[pos_] == tok::kLParen) {
      ++pos_;
      auto v = expr();
      if (!ok_ || pos_ >= toks_.size() || toks_[pos_] != tok::kRParen) return fail();
      ++pos_;
      return v;
    }
    if (!tok::is_digit(toks_[pos_])) return fail();
    if (toks_[pos_] == 0 && pos_ + 1 < toks_.size() && tok::is_digit(toks_[pos_ + 1])) return fail();
    std::int64_t value = 0;
    int ndigits = 0;
    while (pos_ < toks_.size() && tok::is_digit(toks_[pos_])) {
      if (++ndigits > 9) return fail();
      value = value * 10 + toks_[pos_++];
    }
    numbers_->push_back(static_cast<int>(value));
    return Rational{value, 1};
  }

  std::optional<Rational> combine(Token op, const std::optional<Rational>& a, const std::optional<Rational>& b) {
    if (!ok_) return std::nullopt;
    // keep parsing after undefined arithmetic so syntax errors still surface
    if (!a || !b) {
      undefined_ = true;
      return std::nullopt;
    }
    auto r = apply_op(op, *a, *b);
    if (!r) undefined_ = true;
    return r;
  }

  std::optional<Rational> fail() {
    ok_ = false;
    return std::nullopt;
  }

  std::span<const Token> toks_;
  std::size_t pos_ = 0;
  bool ok_ = true;
  bool undefined_ = false;
  std::vector<int>* numbers_ = nullptr;
};

}  // namespace detail

// Exact-arithmetic evaluation of an infix expression; nullopt on any failure.
inline std::optional<Rational> evaluate_expression(std::span<const Token> answer, std::vector<int>* numbers_out = nullptr) {
  std::vector<int> numbers;
  detail::ExprParser p(answer);
  auto v = p.parse_all(numbers);
  if (numbers_out) *numbers_out = std::move(numbers);
  return v;
}

inline bool verify_countdown(const CountdownInstance& inst, std::span<const Token> answer) {
  std::vector<int> used;
  const auto value = evaluate_expression(answer, &used);
  if (!value) return false;
  auto want = inst.operands;
  std::sort(used.begin(), used.end());
  std::sort(want.begin(), want.end());
  if (used != want) return false;
  return *value == Rational{inst.target, 1};
}

// Lexicographic order on rendered symbols (not raw token ids).
inline bool token_lex_less(std::span<const Token> a, std::span<const Token> b) {
  const auto& v = Vocab::standard();
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                      [&](Token x, Token y) { return v.symbol(x) < v.symbol(y); });
}

// Number of (permutation, parenthesization, operator) triples for n operands.
inline double countdown_search_space(int n) {
  double perms = 1, catalan = 1;
  for (int i = 2; i <= n; ++i) perms *= i;
  for (int i = 0; i < n - 1; ++i) catalan = catalan * 2 * (2 * i + 1) / (i + 2);
  return perms * catalan * std::pow(4.0, n - 1);
}

namespace detail {

struct Expr {
  std::optional<Rational> value;
  TokenSeq tokens;
  int prec = 3;  // 1: additive, 2: multiplicative, 3: atom
};

inline int op_prec(Token op) { return (op == tok::kPlus || op == tok::kMinus) ? 1 : 2; }

// Renders with the minimal parentheses that preserve the value under
// left-associative parsing.
inline Expr combine_expr(Token op, const Expr& l, const Expr& r) {
  Expr e;
  e.prec = op_prec(op);
  e.value = (l.value && r.value) ? apply_op(op, *l.value, *r.value) : std::nullopt;
  const bool paren_l = l.prec < e.prec;
  const bool paren_r = r.prec < e.prec || (r.prec == e.prec && (op == tok::kMinus || op == tok::kDivide));
  auto emit = [&](const Expr& x, bool paren) {
    if (paren) e.tokens.push_back(tok::kLParen);
    e.tokens.insert(e.tokens.end(), x.tokens.begin(), x.tokens.end());
    if (paren) e.tokens.push_back(tok::kRParen);
  };
  emit(l, paren_l);
  e.tokens.push_back(op);
  emit(r, paren_r);
  return e;
}

inline std::vector<Expr> all_trees(std::span<const int> leaves) {
  if (leaves.size() == 1) return {Expr{Rational{leaves[0], 1}, number_tokens(leaves[0]), 3}};
  std::vector<Expr> out;
  for (std::size_t k = 1; k < leaves.size(); ++k) {
    const auto left = all_trees(leaves.subspan(0, k));
    const auto right = all_trees(leaves.subspan(k));
    for (const auto& l : left)
      for (const auto& r : right)
        for (Token op : {tok::kPlus, tok::kMinus, tok::kTimes, tok::kDivide}) out.push_back(combine_expr(op, l, r));
  }
  return out;
}

inline Expr random_tree(std::span<const int> leaves, Rng& rng) {
  if (leaves.size() == 1) return Expr{Rational{leaves[0], 1}, number_tokens(leaves[0]), 3};
  const std::size_t k = 1 + rng.index(leaves.size() - 1);
  static constexpr Token ops[] = {tok::kPlus, tok::kMinus, tok::kTimes, tok::kDivide};
  const Token op = ops[rng.index(4)];
  const Expr l = random_tree(leaves.subspan(0, k), rng);
  return combine_expr(op, l, random_tree(leaves.subspan(k), rng));
}

}  // namespace detail

// Well-formed expression using every operand once, with random order,
// bracketing and operators; the value is unconstrained.
inline TokenSeq random_expression(std::vector<int> operands, Rng& rng) {
  if (operands.empty()) throw Error("random_expression: no operands");
  rng.shuffle(operands);
  return detail::random_tree(operands, rng).tokens;
}

// Shortest solution, ties broken by token_lex_less; nullopt if unsolvable.
inline std::optional<TokenSeq> solve_countdown(const std::vector<int>& operands, int target, double max_search = 1e6) {
  const double space = countdown_search_space(static_cast<int>(operands.size()));
  if (space > max_search)
    throw SearchSpaceTooLarge("countdown search space " + std::to_string(space) + " exceeds limit " + std::to_string(max_search));
  auto perm = operands;
  std::sort(perm.begin(), perm.end());
  std::optional<TokenSeq> best;
  const Rational want{target, 1};
  do {
    for (auto& e : detail::all_trees(perm)) {
      if (!e.value || !(*e.value == want)) continue;
      if (!best || e.tokens.size() < best->size() || (e.tokens.size() == best->size() && token_lex_less(e.tokens, *best)))
        best = std::move(e.tokens);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct CountdownParams {
  int count = 1;
  int n = 3;
  int lo = 1;
  int hi = 9;
  int target = 10;
  std::uint64_t seed = 0;
  double max_search = 1e6;
  int max_attempts_per_instance = 1000;
};

struct CountdownItem {
  CountdownInstance instance;
  TokenSeq expert;
};

inline std::vector<CountdownItem> generate_countdown(const CountdownParams& p) {
  if (p.count < 1) throw InfeasibleParameters("count must be >= 1");
  if (p.n < 2 || p.lo < 1 || p.hi < p.lo || p.target < 1) throw InfeasibleParameters("need n >= 2, 1 <= lo <= hi, target >= 1");
  const double space = countdown_search_space(p.n);
  if (space > p.max_search)
    throw SearchSpaceTooLarge("countdown search space " + std::to_string(space) + " exceeds limit " + std::to_string(p.max_search));
  Rng rng(derive_seed(p.seed, hash_string("countdown")));
  std::vector<CountdownItem> out;
  const long long max_attempts = static_cast<long long>(p.count) * p.max_attempts_per_instance;
  long long attempts = 0;
  while (static_cast<int>(out.size()) < p.count) {
    if (attempts++ >= max_attempts) throw InfeasibleParameters("no solvable countdown instance within attempt limit");
    std::vector<int> ops(static_cast<std::size_t>(p.n));
    for (auto& o : ops) o = static_cast<int>(rng.uniform_int(p.lo, p.hi));
    auto sol = solve_countdown(ops, p.target, p.max_search);
    if (!sol) continue;
    CountdownInstance inst{"cd-" + std::to_string(p.seed) + "-" + std::to_string(out.size()), ops, p.target};
    out.push_back({std::move(inst), std::move(*sol)});
  }
  return out;
}

// ----------------------------------------------------------------- hidden rule

struct HiddenRuleInstance {
  std::string id;
  TokenSeq prompt_tokens;
  std::string rule_id;
};

inline const std::vector<std::string>& hidden_rule_ids() {
  static const std::vector<std::string> ids{"palindrome_key", "multiset_mod3"};
  return ids;
}

namespace detail {

inline bool all_letters(std::span<const Token> s) {
  return std::all_of(s.begin(), s.end(), [](Token t) { return tok::is_letter(t); });
}

// (a) palindrome over the letter alphabet containing the prompt's first token
inline bool rule_palindrome_key(std::span<const Token> prompt, std::span<const Token> answer) {
  if (answer.empty() || prompt.empty() || !all_letters(answer)) return false;
  if (!std::equal(answer.begin(), answer.end(), answer.rbegin())) return false;
  return std::find(answer.begin(), answer.end(), prompt[0]) != answer.end();
}

// (b) length divisible by m = |prompt| and multiset equal to k copies of the prompt's
inline bool rule_multiset_mod(std::span<const Token> prompt, std::span<const Token> answer) {
  const std::size_t m = prompt.size();
  if (m == 0 || answer.empty() || answer.size() % m != 0 || !all_letters(answer)) return false;
  const std::size_t k = answer.size() / m;
  std::map<Token, std::size_t> want, got;
  for (Token t : prompt) want[t] += k;
  for (Token t : answer) got[t] += 1;
  return want == got;
}

}  // namespace detail

inline bool verify_hidden_rule(const HiddenRuleInstance& inst, std::span<const Token> answer) {
  if (inst.rule_id == "palindrome_key") return detail::rule_palindrome_key(inst.prompt_tokens, answer);
  if (inst.rule_id == "multiset_mod3") {
    if (inst.prompt_tokens.size() != 3) return false;
    return detail::rule_multiset_mod(inst.prompt_tokens, answer);
  }
  throw UnknownRule("unknown hidden rule '" + inst.rule_id + "'");
}

struct HiddenRuleItem {
  HiddenRuleInstance instance;
  TokenSeq expert;
};

inline std::vector<HiddenRuleItem> generate_hidden_rule(int count, std::uint64_t seed) {
  if (count < 1) throw InfeasibleParameters("count must be >= 1");
  Rng rng(derive_seed(seed, hash_string("hidden_rule")));
  auto letter = [&] { return static_cast<Token>(tok::kLetterA + rng.uniform_int(0, tok::kLetterCount - 1)); };
  std::vector<HiddenRuleItem> out;
  for (int i = 0; i < count; ++i) {
    HiddenRuleInstance inst;
    inst.id = "hr-" + std::to_string(seed) + "-" + std::to_string(i);
    inst.prompt_tokens = {letter(), letter(), letter()};
    inst.rule_id = hidden_rule_ids()[rng.index(hidden_rule_ids().size())];
    TokenSeq expert;
    if (inst.rule_id == "palindrome_key") {
      const int half = static_cast<int>(rng.uniform_int(1, 2));
      TokenSeq left;
      for (int j = 0; j < half; ++j) left.push_back(letter());
      left[rng.index(left.size())] = inst.prompt_tokens[0];
      expert = left;
      expert.push_back(letter());
      expert.insert(expert.end(), left.rbegin(), left.rend());
    } else {
      const int k = static_cast<int>(rng.uniform_int(1, 2));
      for (int j = 0; j < k; ++j) expert.insert(expert.end(), inst.prompt_tokens.begin(), inst.prompt_tokens.end());
      rng.shuffle(expert);
    }
    out.push_back({std::move(inst), std::move(expert)});
  }
  return out;
}

// ----------------------------------------------------------------- datasets

enum class TaskKind { countdown, hidden_rule };

inline std::string to_string(TaskKind k) { return k == TaskKind::countdown ? "countdown" : "hidden_rule"; }

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "countdown") return TaskKind::countdown;
  if (s == "hidden_rule" || s == "hidden-rule") return TaskKind::hidden_rule;
  throw FormatError("unknown task kind '" + s + "'");
}

struct Example {
  std::string id;
  TaskKind kind = TaskKind::countdown;
  TokenSeq prompt;
  TokenSeq expert;
  std::string split = "train";
  std::optional<CountdownInstance> countdown;  // trainer-invisible for hidden rules
};

struct Dataset {
  std::vector<Example> examples;

  std::vector<const Example*> split(const std::string& name) const {
    std::vector<const Example*> out;
    for (const auto& e : examples)
      if (e.split == name) out.push_back(&e);
    return out;
  }
};

// Last test_count items go to "test", the val_count before them to "val".
inline void assign_splits(std::vector<Example>& ex, int val_count, int test_count) {
  if (val_count < 0 || test_count < 0 || val_count + test_count > static_cast<int>(ex.size()))
    throw InfeasibleParameters("split sizes exceed dataset size");
  const std::size_t n = ex.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= n - static_cast<std::size_t>(test_count)) ex[i].split = "test";
    else if (i >= n - static_cast<std::size_t>(test_count + val_count)) ex[i].split = "val";
    else ex[i].split = "train";
  }
}

inline Example to_example(const CountdownItem& item) {
  return Example{item.instance.id, TaskKind::countdown, countdown_prompt(item.instance), item.expert, "train", item.instance};
}

inline Example to_example(const HiddenRuleItem& item) {
  return Example{item.instance.id, TaskKind::hidden_rule, item.instance.prompt_tokens, item.expert, "train", std::nullopt};
}

inline Json example_to_json(const Example& e) {
  Json meta = {{"split", e.split}};
  if (e.countdown) {
    meta["operands"] = e.countdown->operands;
    meta["target"] = e.countdown->target;
  }
  return Json{{"id", e.id},
              {"task_kind", to_string(e.kind)},
              {"prompt_tokens", tokens_to_json(e.prompt)},
              {"expert_tokens", tokens_to_json(e.expert)},
              {"meta", meta}};
}

inline Example example_from_json(const Json& j) {
  try {
    Example e;
    e.id = j.at("id").get<std::string>();
    e.kind = task_kind_from_string(j.at("task_kind").get<std::string>());
    e.prompt = tokens_from_json(j.at("prompt_tokens"));
    e.expert = tokens_from_json(j.at("expert_tokens"));
    const auto& meta = j.at("meta");
    e.split = meta.value("split", "train");
    if (e.kind == TaskKind::countdown)
      e.countdown = CountdownInstance{e.id, meta.at("operands").get<std::vector<int>>(), meta.at("target").get<int>()};
    return e;
  } catch (const Json::exception& ex) {
    throw FormatError(std::string("bad dataset record: ") + ex.what());
  }
}

inline std::string dataset_to_jsonl(const Dataset& d) {
  std::vector<Json> rows;
  for (const auto& e : d.examples) rows.push_back(example_to_json(e));
  return to_jsonl(rows);
}

inline Dataset dataset_from_jsonl(const std::string& text) {
  Dataset d;
  for (const auto& j : parse_jsonl(text)) d.examples.push_back(example_from_json(j));
  return d;
}

inline Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_jsonl(read_file(path)); }

// Evaluation sidecar: rule ids keyed by instance id.
using RuleSidecar = std::map<std::string, std::string>;

inline std::string sidecar_to_jsonl(const std::vector<HiddenRuleItem>& items) {
  std::vector<Json> rows;
  for (const auto& it : items) rows.push_back(Json{{"id", it.instance.id}, {"rule_id", it.instance.rule_id}});
  return to_jsonl(rows);
}

inline RuleSidecar load_sidecar(const std::filesystem::path& path) {
  RuleSidecar out;
  for (const auto& j : parse_jsonl(read_file(path))) out[j.at("id").get<std::string>()] = j.at("rule_id").get<std::string>();
  return out;
}

}  // namespace raro
