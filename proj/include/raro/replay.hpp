#pragma once

// Append-only store of past comparison triplets and the fresh/replay mix
// that feeds the critic.

#include <deque>
#include <numeric>
#include <vector>

#include "rollout.hpp"

namespace raro {

class ReplayBuffer {
 public:
  // capacity 0 means unbounded
  explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

  void append_all(std::span<const ComparisonTriplet> triplets) {
    for (const auto& t : triplets) {
      entries_.push_back(t);
      if (capacity_ > 0 && entries_.size() > capacity_) entries_.pop_front();
    }
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const ComparisonTriplet& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::string to_jsonl() const {
    std::string out;
    for (const auto& t : entries_) out += triplet_to_json(t).dump() + "\n";
    return out;
  }

  static ReplayBuffer from_jsonl(const std::string& text, std::size_t capacity = 0) {
    ReplayBuffer b(capacity);
    std::vector<ComparisonTriplet> ts;
    for (const auto& j : parse_jsonl(text)) ts.push_back(triplet_from_json(j));
    b.append_all(ts);
    return b;
  }

 private:
  std::size_t capacity_;
  std::deque<ComparisonTriplet> entries_;
};

// ceil(n/2) fresh triplets without replacement plus floor(n/2) replayed ones
// drawn uniformly with replacement; all fresh when the buffer is empty.
inline std::vector<ComparisonTriplet> mix(std::span<const ComparisonTriplet> fresh, const ReplayBuffer& buffer, Rng& rng) {
  if (fresh.empty()) throw Error("mix: fresh batch must be non-empty");
  std::vector<ComparisonTriplet> out;
  if (buffer.empty()) {
    out.assign(fresh.begin(), fresh.end());
    for (auto& t : out) t.origin = Origin::fresh;
    return out;
  }
  const std::size_t n = fresh.size();
  const std::size_t n_fresh = (n + 1) / 2, n_replay = n / 2;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n_fresh; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  for (std::size_t i = 0; i < n_fresh; ++i) {
    out.push_back(fresh[idx[i]]);
    out.back().origin = Origin::fresh;
  }
  for (std::size_t i = 0; i < n_replay; ++i) {
    out.push_back(buffer[rng.index(buffer.size())]);
    out.back().origin = Origin::replay;
  }
  return out;
}

}  // namespace raro
