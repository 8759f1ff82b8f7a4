#pragma once

// Shared primitives: token alphabet, error types and the seeded generator
// used everywhere randomness is needed.

#include <array>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace raro {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

// ----------------------------------------------------------------- errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define RARO_DEFINE_ERROR(Name)                    \
  struct Name : Error {                            \
    using Error::Error;                            \
  }

RARO_DEFINE_ERROR(SearchSpaceTooLarge);
RARO_DEFINE_ERROR(InfeasibleParameters);
RARO_DEFINE_ERROR(UnknownRule);
RARO_DEFINE_ERROR(EmptyGroup);
RARO_DEFINE_ERROR(ConfigInvalid);
RARO_DEFINE_ERROR(DatasetEmpty);
RARO_DEFINE_ERROR(EmptySplit);
RARO_DEFINE_ERROR(RlvrUnavailable);
RARO_DEFINE_ERROR(CheckpointError);
RARO_DEFINE_ERROR(FormatError);

#undef RARO_DEFINE_ERROR

// ----------------------------------------------------------------- tokens

namespace tok {
// digits occupy ids 0..9 so that a digit token equals its value
inline constexpr Token kPlus = 10;
inline constexpr Token kMinus = 11;
inline constexpr Token kTimes = 12;
inline constexpr Token kDivide = 13;
inline constexpr Token kLParen = 14;
inline constexpr Token kRParen = 15;
inline constexpr Token kComma = 16;
inline constexpr Token kEquals = 17;
inline constexpr Token kLetterA = 18;  // hidden-rule alphabet A..H
inline constexpr int kLetterCount = 8;
inline constexpr Token kRolePolicy = 26;
inline constexpr Token kRoleCritic = 27;
inline constexpr Token kSepThink = 28;
inline constexpr Token kSepAnswer = 29;
inline constexpr Token kLabel1 = 30;
inline constexpr Token kLabel2 = 31;
inline constexpr Token kLabelTie = 32;
inline constexpr Token kEos = 33;
inline constexpr int kCount = 34;

constexpr bool is_digit(Token t) { return t >= 0 && t <= 9; }
constexpr bool is_letter(Token t) { return t >= kLetterA && t < kLetterA + kLetterCount; }
constexpr bool is_label(Token t) { return t == kLabel1 || t == kLabel2 || t == kLabelTie; }
}  // namespace tok

class Vocab {
 public:
  static const Vocab& standard() {
    static const Vocab v{build()};
    return v;
  }

  int size() const { return static_cast<int>(symbols_.size()); }
  const std::string& symbol(Token t) const { return symbols_.at(static_cast<std::size_t>(t)); }

  Token lookup(std::string_view s) const {
    for (std::size_t i = 0; i < symbols_.size(); ++i)
      if (symbols_[i] == s) return static_cast<Token>(i);
    throw FormatError("unknown token symbol '" + std::string(s) + "'");
  }

  // FNV-1a over the newline-joined symbol list.
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& s : symbols_) {
      for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
      }
      h ^= '\n';
      h *= 1099511628211ull;
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    return out;
  }

  std::string render(std::span<const Token> seq) const {
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i) out += ' ';
      out += symbol(seq[i]);
    }
    return out;
  }

  // Whitespace-separated symbols.
  TokenSeq parse(std::string_view text) const {
    TokenSeq out;
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && text[i] == ' ') ++i;
      std::size_t j = i;
      while (j < text.size() && text[j] != ' ') ++j;
      if (j > i) out.push_back(lookup(text.substr(i, j - i)));
      i = j;
    }
    return out;
  }

 private:
  explicit Vocab(std::vector<std::string> s) : symbols_(std::move(s)) {}

  static std::vector<std::string> build() {
    std::vector<std::string> s;
    for (int d = 0; d < 10; ++d) s.push_back(std::to_string(d));
    for (const char* op : {"+", "-", "*", "/", "(", ")", ",", "="}) s.emplace_back(op);
    for (int l = 0; l < tok::kLetterCount; ++l) s.emplace_back(1, static_cast<char>('A' + l));
    for (const char* m : {"<policy>", "<critic>", "<think>", "<answer>", "<L1>", "<L2>", "<TIE>", "<eos>"})
      s.emplace_back(m);
    return s;
  }

  std::vector<std::string> symbols_;
};

// ----------------------------------------------------------------- rng

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

// Stream seed for (run seed, tag, index) triples.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index);
}

// mt19937_64 with library-independent conversions, so streams are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], rejection sampled.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return lo + static_cast<std::int64_t>(engine_());
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t x;
    do x = engine_();
    while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
  }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1)); }

  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace raro
