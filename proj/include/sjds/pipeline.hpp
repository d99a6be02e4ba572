#pragma once

// End-to-end estimation over an on-disk dataset: draw each subsample with its
// own derived seed, read its rows, jackknife it, then reduce in k order.
// Work items are subsample ordinals spread over a small thread pool; the
// output does not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "sjds/dataset.hpp"
#include "sjds/estimator.hpp"
#include "sjds/rng.hpp"
#include "sjds/sampling.hpp"
#include "sjds/statistic.hpp"

namespace sjds {

inline unsigned resolve_workers(unsigned requested) noexcept {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs body(worker, i) for i in [0, count) on `workers` threads. If any call
// throws, the exception from the smallest failing i is rethrown, so the
// reported error is the same for every worker count.
template <typename Body>
void parallel_for(std::size_t count, unsigned workers, Body&& body) {
  workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::size_t err_index = count;
  std::exception_ptr err;

  auto run = [&](unsigned w) {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      {
        std::lock_guard lk(err_mu);
        if (err && i > err_index) return;
      }
      try {
        body(w, i);
      } catch (...) {
        std::lock_guard lk(err_mu);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };

  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  if (err) std::rethrow_exception(err);
}

// Reusable buffers for one worker.
struct SubsampleScratch {
  std::vector<std::uint64_t> indices;
  RowMatrix rows;
  RowMatrix features;
};

// Draws, reads and jackknifes subsample k (1-based) of a with-replacement plan.
template <MomentStatistic Stat>
SubsampleResult run_subsample(const DatasetHandle& data, const Stat& stat, std::uint64_t n, std::uint64_t k,
                              std::uint64_t master_seed, SubsampleScratch& scratch) {
  scratch.indices.resize(n);
  draw_with_replacement_into(subsample_seed(master_seed, k), data.rows(), scratch.indices);
  scratch.rows.resize(n, data.cols());
  data.read_into(scratch.indices, scratch.rows.data());
  compute_features(stat, scratch.rows, scratch.features);
  return jackknife_subsample(stat, scratch.features, k);
}

template <MomentStatistic Stat>
std::vector<SubsampleResult> compute_subsamples(const DatasetHandle& data, const Stat& stat, std::uint64_t n,
                                                std::uint64_t K, std::uint64_t master_seed, unsigned workers) {
  if (n < 2) throw ArgumentError("subsample size n must be >= 2 for the jackknife");
  if (K < 1) throw ArgumentError("number of subsamples K must be >= 1");
  workers = resolve_workers(workers);
  std::vector<SubsampleResult> results(K);
  std::vector<SubsampleScratch> scratch(std::min<std::uint64_t>(workers, K));
  parallel_for(K, workers, [&](unsigned w, std::size_t i) {
    results[i] = run_subsample(data, stat, n, i + 1, master_seed, scratch[w]);
  });
  return results;
}

struct EstimateOptions {
  std::uint64_t n = 0;
  std::uint64_t K = 0;
  std::uint64_t master_seed = 0;
  double alpha = 0.05;
  unsigned workers = 0;  // 0 = hardware concurrency
  CiCenter center = CiCenter::jds;
};

inline EstimateReport estimate(const DatasetHandle& data, const Statistic& stat, const EstimateOptions& opt) {
  stat.bind(data.cols());
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw ArgumentError("alpha must be in (0, 1)");
  const auto results = compute_subsamples(data, stat, opt.n, opt.K, opt.master_seed, opt.workers);
  EstimateReport rep = aggregate(results, data.rows(), opt.alpha, opt.center);
  rep.master_seed = opt.master_seed;
  rep.statistic_name = stat.name();
  rep.rng_id = std::string(kRngId);
  return rep;
}

// g at the mean of phi over the entire dataset (the whole-sample estimate).
// One sequential pass with compensated sums.
template <MomentStatistic Stat>
double whole_sample_estimate(const DatasetHandle& data, const Stat& stat) {
  const std::size_t q = stat.q();
  std::vector<detail::CompensatedSum> acc(q);
  std::vector<double> row(data.cols()), f(q);
  for (std::uint64_t i = 0; i < data.rows(); ++i) {
    data.copy_row(i, row);
    stat.phi(row, f);
    for (std::size_t c = 0; c < q; ++c) acc[c].add(f[c]);
  }
  std::vector<double> mu(q);
  for (std::size_t c = 0; c < q; ++c) mu[c] = acc[c].value() / static_cast<double>(data.rows());
  return detail::checked_g(stat, mu, 0, -1);
}

}  // namespace sjds
