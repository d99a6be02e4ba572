#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sjds/error.hpp"
#include "sjds/rng.hpp"

namespace sjds {

enum class SamplingMode { with_replacement, without_replacement };

struct SamplingPlan {
  std::uint64_t rows = 0;          // N
  std::uint64_t subsample_size = 0;  // n
  std::uint64_t subsamples = 0;    // K
  std::uint64_t master_seed = 0;
  SamplingMode mode = SamplingMode::with_replacement;

  void validate() const {
    if (rows == 0) throw ArgumentError("sampling needs N >= 1");
    if (subsample_size == 0) throw ArgumentError("sampling needs n >= 1");
    if (subsamples == 0) throw ArgumentError("sampling needs K >= 1");
    if (mode == SamplingMode::without_replacement && subsample_size * subsamples > rows) {
      throw ArgumentError("sampling without replacement needs n*K <= N");
    }
  }
};

struct SubsampleIndices {
  std::uint64_t k = 0;  // 1-based ordinal
  std::vector<std::uint64_t> indices;
};

// Fills out with out.size() independent uniform draws from [0, rows).
inline void draw_with_replacement_into(std::uint64_t seed, std::uint64_t rows,
                                       std::span<std::uint64_t> out) {
  if (rows == 0) throw ArgumentError("cannot sample from an empty dataset (N = 0)");
  Xoshiro256 gen(seed);
  for (auto& idx : out) idx = gen.below(rows);
}

inline SubsampleIndices draw_with_replacement(std::uint64_t seed, std::uint64_t rows, std::uint64_t n) {
  SubsampleIndices s;
  s.indices.resize(n);
  draw_with_replacement_into(seed, rows, s.indices);
  return s;
}

// Rejection sampling against one running exclusion set: each candidate is
// compared with every previously drawn index by linear scan, redrawn on a hit
// and appended otherwise. The O(|drawn|) scan per draw is intentional; this
// path exists to measure the cost of excluding duplicates on disk, not to be
// fast. New indices are appended to already_drawn.
inline SubsampleIndices draw_without_replacement(std::uint64_t seed, std::uint64_t rows, std::uint64_t n,
                                                 std::vector<std::uint64_t>& already_drawn) {
  if (rows == 0) throw ArgumentError("cannot sample from an empty dataset (N = 0)");
  if (already_drawn.size() + n > rows) {
    throw ArgumentError("sampling without replacement: only " +
                        std::to_string(rows - std::min<std::uint64_t>(rows, already_drawn.size())) +
                        " rows left, " + std::to_string(n) + " requested");
  }
  Xoshiro256 gen(seed);
  SubsampleIndices s;
  s.indices.reserve(n);
  for (std::uint64_t m = 0; m < n; ++m) {
    std::uint64_t candidate = 0;
    do {
      candidate = gen.below(rows);
    } while (std::find(already_drawn.begin(), already_drawn.end(), candidate) != already_drawn.end());
    already_drawn.push_back(candidate);
    s.indices.push_back(candidate);
  }
  return s;
}

// All K subsamples of a plan. Subsample k always uses subsample_seed(master, k).
inline std::vector<SubsampleIndices> draw_plan(const SamplingPlan& plan) {
  plan.validate();
  std::vector<SubsampleIndices> out;
  out.reserve(plan.subsamples);
  std::vector<std::uint64_t> drawn;
  if (plan.mode == SamplingMode::without_replacement) drawn.reserve(plan.subsample_size * plan.subsamples);
  for (std::uint64_t k = 1; k <= plan.subsamples; ++k) {
    const auto seed = subsample_seed(plan.master_seed, k);
    auto s = plan.mode == SamplingMode::with_replacement
                 ? draw_with_replacement(seed, plan.rows, plan.subsample_size)
                 : draw_without_replacement(seed, plan.rows, plan.subsample_size, drawn);
    s.k = k;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sjds
