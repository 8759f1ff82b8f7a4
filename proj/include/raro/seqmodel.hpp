#pragma once

// Tiny autoregressive categorical model. The last `window` tokens are
// embedded slot by slot (empty slots use a dedicated padding row), the slot
// embeddings are concatenated, passed through tanh layers and projected to
// next-token logits. One parameter vector serves both the policy and the
// critic role; the leading role marker selects the behaviour.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "io.hpp"

namespace raro {

struct Arch {
  int window = 8;
  int embed = 4;
  int hidden = 16;
  int layers = 1;  // hidden tanh layers; 0 gives a linear softmax over the window
  int vocab = tok::kCount;

  int input_dim() const { return window * embed; }
  int layer_in(int l) const { return l == 0 ? input_dim() : hidden; }
  int last_dim() const { return layers == 0 ? input_dim() : hidden; }

  std::size_t embedding_size() const { return static_cast<std::size_t>(vocab + 1) * embed; }
  std::size_t layer_offset(int l) const {
    std::size_t off = embedding_size();
    for (int i = 0; i < l; ++i) off += static_cast<std::size_t>(layer_in(i)) * hidden + hidden;
    return off;
  }
  std::size_t output_offset() const { return layer_offset(layers); }
  std::size_t param_count() const { return output_offset() + static_cast<std::size_t>(vocab) * last_dim() + vocab; }

  void validate() const {
    if (window < 1 || embed < 1 || layers < 0 || (layers > 0 && hidden < 1) || vocab < 2 || vocab > 256)
      throw ConfigInvalid("invalid model architecture");
  }

  friend bool operator==(const Arch&, const Arch&) = default;
};

inline Json arch_to_json(const Arch& a) {
  return Json{{"window", a.window}, {"embed", a.embed}, {"hidden", a.hidden}, {"layers", a.layers}, {"vocab", a.vocab}};
}

inline Arch arch_from_json(const Json& j) {
  Arch a;
  a.window = j.at("window").get<int>();
  a.embed = j.at("embed").get<int>();
  a.hidden = j.at("hidden").get<int>();
  a.layers = j.at("layers").get<int>();
  a.vocab = j.value("vocab", tok::kCount);
  a.validate();
  return a;
}

struct ModelState {
  Arch arch;
  std::vector<double> params;

  ModelState() = default;
  explicit ModelState(const Arch& a) : arch(a), params(a.param_count(), 0.0) { a.validate(); }

  static ModelState random(const Arch& a, std::uint64_t seed, double scale = 0.05) {
    ModelState s(a);
    Rng rng(derive_seed(seed, hash_string("init")));
    for (auto& p : s.params) p = rng.uniform(-scale, scale);
    return s;
  }

  bool finite() const {
    return std::all_of(params.begin(), params.end(), [](double x) { return std::isfinite(x); });
  }
};

// Frozen copy used as the KL anchor.
class ReferenceState {
 public:
  explicit ReferenceState(ModelState s) : state_(std::move(s)) {}
  const ModelState& model() const { return state_; }

 private:
  ModelState state_;
};

// Activations of one forward pass, reused across calls to avoid allocation.
struct Workspace {
  std::vector<int> slots;
  std::vector<double> input;
  std::vector<std::vector<double>> acts;
  std::vector<double> logits, probs, logprobs;
  std::vector<double> delta, delta_prev;
};

// Fills ws with the next-token distribution after `context`.
inline void forward(const ModelState& s, std::span<const Token> context, Workspace& ws) {
  const Arch& a = s.arch;
  const double* p = s.params.data();
  const int W = a.window, E = a.embed, V = a.vocab;
  ws.slots.assign(static_cast<std::size_t>(W), V);
  const std::size_t n = context.size();
  for (int j = 0; j < W; ++j) {
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(n) - W + j;
    if (pos >= 0) ws.slots[static_cast<std::size_t>(j)] = context[static_cast<std::size_t>(pos)];
  }
  ws.input.resize(static_cast<std::size_t>(a.input_dim()));
  for (int j = 0; j < W; ++j) {
    const double* row = p + static_cast<std::size_t>(ws.slots[static_cast<std::size_t>(j)]) * E;
    std::copy(row, row + E, ws.input.begin() + static_cast<std::ptrdiff_t>(j) * E);
  }
  ws.acts.resize(static_cast<std::size_t>(a.layers));
  const std::vector<double>* x = &ws.input;
  for (int l = 0; l < a.layers; ++l) {
    const int in = a.layer_in(l), out = a.hidden;
    const double* Wm = p + a.layer_offset(l);
    const double* b = Wm + static_cast<std::size_t>(in) * out;
    auto& h = ws.acts[static_cast<std::size_t>(l)];
    h.resize(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
      const double* w = Wm + static_cast<std::size_t>(o) * in;
      double acc = b[o];
      for (int i = 0; i < in; ++i) acc += w[i] * (*x)[static_cast<std::size_t>(i)];
      h[static_cast<std::size_t>(o)] = std::tanh(acc);
    }
    x = &h;
  }
  const int last = a.last_dim();
  const double* Wo = p + a.output_offset();
  const double* bo = Wo + static_cast<std::size_t>(V) * last;
  ws.logits.resize(static_cast<std::size_t>(V));
  double mx = -INFINITY;
  for (int v = 0; v < V; ++v) {
    const double* w = Wo + static_cast<std::size_t>(v) * last;
    double acc = bo[v];
    for (int i = 0; i < last; ++i) acc += w[i] * (*x)[static_cast<std::size_t>(i)];
    ws.logits[static_cast<std::size_t>(v)] = acc;
    mx = std::max(mx, acc);
  }
  double z = 0.0;
  ws.probs.resize(static_cast<std::size_t>(V));
  for (int v = 0; v < V; ++v) z += (ws.probs[static_cast<std::size_t>(v)] = std::exp(ws.logits[static_cast<std::size_t>(v)] - mx));
  const double logz = mx + std::log(z);
  ws.logprobs.resize(static_cast<std::size_t>(V));
  for (int v = 0; v < V; ++v) {
    ws.probs[static_cast<std::size_t>(v)] /= z;
    ws.logprobs[static_cast<std::size_t>(v)] = ws.logits[static_cast<std::size_t>(v)] - logz;
  }
}

// Accumulates scale * J^T dlogits into grad, where J is the Jacobian of the
// logits of the forward pass cached in ws.
inline void backward(const ModelState& s, Workspace& ws, std::span<const double> dlogits, double scale, std::span<double> grad) {
  const Arch& a = s.arch;
  const double* p = s.params.data();
  double* g = grad.data();
  const int V = a.vocab, last = a.last_dim();
  const std::vector<double>& top = a.layers == 0 ? ws.input : ws.acts.back();
  const std::size_t out_off = a.output_offset();
  ws.delta.assign(static_cast<std::size_t>(last), 0.0);
  for (int v = 0; v < V; ++v) {
    const double d = scale * dlogits[static_cast<std::size_t>(v)];
    if (d == 0.0) continue;
    double* gw = g + out_off + static_cast<std::size_t>(v) * last;
    const double* w = p + out_off + static_cast<std::size_t>(v) * last;
    for (int i = 0; i < last; ++i) {
      gw[i] += d * top[static_cast<std::size_t>(i)];
      ws.delta[static_cast<std::size_t>(i)] += d * w[i];
    }
    g[out_off + static_cast<std::size_t>(V) * last + static_cast<std::size_t>(v)] += d;
  }
  for (int l = a.layers - 1; l >= 0; --l) {
    const int in = a.layer_in(l), out = a.hidden;
    const std::size_t off = a.layer_offset(l);
    const auto& h = ws.acts[static_cast<std::size_t>(l)];
    const std::vector<double>& x = l == 0 ? ws.input : ws.acts[static_cast<std::size_t>(l - 1)];
    ws.delta_prev.assign(static_cast<std::size_t>(in), 0.0);
    for (int o = 0; o < out; ++o) {
      const double hv = h[static_cast<std::size_t>(o)];
      const double d = ws.delta[static_cast<std::size_t>(o)] * (1.0 - hv * hv);
      if (d == 0.0) continue;
      double* gw = g + off + static_cast<std::size_t>(o) * in;
      const double* w = p + off + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        gw[i] += d * x[static_cast<std::size_t>(i)];
        ws.delta_prev[static_cast<std::size_t>(i)] += d * w[i];
      }
      g[off + static_cast<std::size_t>(in) * out + static_cast<std::size_t>(o)] += d;
    }
    std::swap(ws.delta, ws.delta_prev);
  }
  const int E = a.embed;
  for (int j = 0; j < a.window; ++j) {
    double* row = g + static_cast<std::size_t>(ws.slots[static_cast<std::size_t>(j)]) * E;
    for (int e = 0; e < E; ++e) row[e] += ws.delta[static_cast<std::size_t>(j * E + e)];
  }
}

inline std::vector<double> next_token_dist(const ModelState& s, std::span<const Token> context) {
  Workspace ws;
  forward(s, context, ws);
  return ws.probs;
}

struct SequenceLogProb {
  double total = 0.0;
  std::vector<double> per_token;
};

inline SequenceLogProb sequence_logprob(const ModelState& s, std::span<const Token> prefix, std::span<const Token> generated) {
  TokenSeq seq(prefix.begin(), prefix.end());
  seq.insert(seq.end(), generated.begin(), generated.end());
  SequenceLogProb out;
  Workspace ws;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    forward(s, std::span<const Token>(seq.data(), prefix.size() + i), ws);
    const double lp = ws.logprobs[static_cast<std::size_t>(generated[i])];
    out.per_token.push_back(lp);
    out.total += lp;
  }
  return out;
}

// d/dtheta of sum_i weights[i] * log p(generated[i] | prefix ++ generated[:i]);
// unit weights when `weights` is empty.
inline void accumulate_logprob_grad(const ModelState& s, std::span<const Token> prefix, std::span<const Token> generated,
                                    std::span<double> grad, std::span<const double> weights = {}, Workspace* scratch = nullptr) {
  TokenSeq seq(prefix.begin(), prefix.end());
  seq.insert(seq.end(), generated.begin(), generated.end());
  Workspace local;
  Workspace& ws = scratch ? *scratch : local;
  std::vector<double> dlogits;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w == 0.0) continue;
    forward(s, std::span<const Token>(seq.data(), prefix.size() + i), ws);
    dlogits.assign(ws.probs.size(), 0.0);
    for (std::size_t v = 0; v < dlogits.size(); ++v) dlogits[v] = -ws.probs[v];
    dlogits[static_cast<std::size_t>(generated[i])] += 1.0;
    backward(s, ws, dlogits, w, grad);
  }
}

inline std::vector<double> grad_logprob(const ModelState& s, std::span<const Token> prefix, std::span<const Token> generated) {
  std::vector<double> g(s.params.size(), 0.0);
  accumulate_logprob_grad(s, prefix, generated, g);
  return g;
}

// Temperature <= 0 selects greedy (argmax, lowest id on ties).
inline Token sample_from(const Workspace& ws, double temperature, Rng& rng) {
  const auto& logits = ws.logits;
  if (temperature <= 0.0) return static_cast<Token>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  const double u = rng.uniform();
  double acc = 0.0;
  if (temperature == 1.0) {
    for (std::size_t v = 0; v < ws.probs.size(); ++v) {
      acc += ws.probs[v];
      if (u < acc) return static_cast<Token>(v);
    }
    return static_cast<Token>(ws.probs.size() - 1);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> q(logits.size());
  double z = 0.0;
  for (std::size_t v = 0; v < q.size(); ++v) z += (q[v] = std::exp((logits[v] - mx) / temperature));
  const double target = u * z;
  for (std::size_t v = 0; v < q.size(); ++v) {
    acc += q[v];
    if (target < acc) return static_cast<Token>(v);
  }
  return static_cast<Token>(q.size() - 1);
}

// Generates until EOS (inclusive) or max_new tokens.
inline TokenSeq sample(const ModelState& s, std::span<const Token> prefix, double temperature, int max_new, Rng& rng) {
  TokenSeq seq(prefix.begin(), prefix.end());
  TokenSeq out;
  Workspace ws;
  for (int i = 0; i < max_new; ++i) {
    forward(s, seq, ws);
    const Token t = sample_from(ws, temperature, rng);
    seq.push_back(t);
    out.push_back(t);
    if (t == tok::kEos) break;
  }
  return out;
}

inline double kl_divergence(std::span<const double> p, std::span<const double> logp, std::span<const double> logq) {
  double kl = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) kl += p[v] * (logp[v] - logq[v]);
  return std::max(kl, 0.0);
}

inline double exact_token_kl(const ModelState& s, const ReferenceState& ref, std::span<const Token> context) {
  Workspace a, b;
  forward(s, context, a);
  forward(ref.model(), context, b);
  return kl_divergence(a.probs, a.logprobs, b.logprobs);
}

// dKL(p||q)/dlogits_p = p * (log p - log q - KL)
inline void kl_logit_grad(const Workspace& p, const Workspace& q, double kl, std::vector<double>& out) {
  out.resize(p.probs.size());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = p.probs[v] * (p.logprobs[v] - q.logprobs[v] - kl);
}

// ----------------------------------------------------------------- checkpoints

inline constexpr int kCheckpointVersion = 1;

inline Json checkpoint_to_json(const ModelState& s) {
  return Json{{"version", kCheckpointVersion},
              {"arch", arch_to_json(s.arch)},
              {"vocab_hash", Vocab::standard().hash()},
              {"params", s.params}};
}

inline ModelState checkpoint_from_json(const Json& j) {
  try {
    if (j.at("version").get<int>() != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
    if (j.at("vocab_hash").get<std::string>() != Vocab::standard().hash()) throw CheckpointError("vocabulary hash mismatch");
    ModelState s(arch_from_json(j.at("arch")));
    auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != s.params.size())
      throw CheckpointError("parameter count " + std::to_string(params.size()) + " does not match architecture (" +
                            std::to_string(s.params.size()) + ")");
    s.params = std::move(params);
    if (!s.finite()) throw CheckpointError("non-finite parameter in checkpoint");
    return s;
  } catch (const Json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigInvalid& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelState& s) {
  write_file_atomic(path, checkpoint_to_json(s).dump() + "\n");
}

inline ModelState load_checkpoint(const std::filesystem::path& path) {
  try {
    return checkpoint_from_json(Json::parse(read_file(path)));
  } catch (const Json::parse_error& e) {
    throw CheckpointError(std::string("unparseable checkpoint: ") + e.what());
  }
}

}  // namespace raro
