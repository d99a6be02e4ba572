#pragma once

// Monte Carlo harness: synthetic data generation, M-replication experiments
// over one fixed on-disk dataset, and the sampling-mode benchmark.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sjds/dataset.hpp"
#include "sjds/estimator.hpp"
#include "sjds/pipeline.hpp"
#include "sjds/report.hpp"
#include "sjds/rng.hpp"
#include "sjds/sampling.hpp"
#include "sjds/statistic.hpp"

namespace sjds {

// Lower Cholesky factor of a symmetric positive definite p x p matrix
// (row-major). Throws ArgumentError otherwise.
inline std::vector<double> cholesky(std::span<const double> sigma, std::size_t p) {
  if (sigma.size() != p * p) throw ArgumentError("covariance must be p x p");
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (sigma[i * p + j] != sigma[j * p + i]) throw ArgumentError("covariance is not symmetric");
    }
  }
  std::vector<double> L(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = sigma[i * p + j];
      for (std::size_t k = 0; k < j; ++k) s -= L[i * p + k] * L[j * p + k];
      if (i == j) {
        if (!(s > 0.0)) throw ArgumentError("covariance is not positive definite");
        L[i * p + i] = std::sqrt(s);
      } else {
        L[i * p + j] = s / L[j * p + j];
      }
    }
  }
  return L;
}

// N iid mean-zero normal rows with covariance sigma, x = L z.
inline DatasetHeader generate_multivariate_normal(std::uint64_t seed, std::uint64_t rows,
                                                  std::span<const double> sigma, std::size_t p,
                                                  const std::filesystem::path& out_path) {
  if (rows == 0) throw ArgumentError("generate: N must be >= 1");
  const auto L = cholesky(sigma, p);
  Xoshiro256 gen(seed);
  DatasetWriter w(out_path, static_cast<std::uint32_t>(p));
  std::vector<double> z(p), x(p);
  for (std::uint64_t i = 0; i < rows; ++i) {
    for (auto& v : z) v = gen.normal();
    for (std::size_t r = 0; r < p; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c <= r; ++c) s += L[r * p + c] * z[c];
      x[r] = s;
    }
    w.append(x);
  }
  return w.finish();
}

// sigma = {s11, s12, s21, s22}.
inline DatasetHeader generate_bivariate_normal(std::uint64_t seed, std::uint64_t rows,
                                               const std::array<double, 4>& sigma,
                                               const std::filesystem::path& out_path) {
  return generate_multivariate_normal(seed, rows, sigma, 2, out_path);
}

// Replication m uses master seed subsample_seed(master, kReplicationSeedOffset + m),
// which cannot coincide with the seed of any subsample k < 2^32 of a plain
// estimate run on the same master seed.
inline constexpr std::uint64_t kReplicationSeedOffset = std::uint64_t{1} << 32;

inline std::uint64_t replication_seed(std::uint64_t master_seed, std::uint64_t m) noexcept {
  return subsample_seed(master_seed, kReplicationSeedOffset + m);
}

struct ExperimentConfig {
  std::string dataset;    // SJDS path
  std::string statistic;  // e.g. "corr:0,1"
  std::uint64_t n = 0;
  std::uint64_t K = 0;
  std::uint64_t M = 1;
  double alpha = 0.05;
  std::uint64_t master_seed = 0;
  std::optional<double> theta_true;  // whole-sample estimate when absent
  unsigned workers = 0;

  void validate() const {
    if (M < 1) throw ArgumentError("M must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must be in (0, 1)");
  }
};

struct ReplicationRecord {
  double theta_sos = 0.0;
  double theta_jds = 0.0;
  double se = 0.0;
  double ci_low = 0.0;   // centred on theta_jds
  double ci_high = 0.0;
};

struct Summary {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0, mean = 0.0;
};

struct ReplicationMetrics {
  double theta_true = 0.0;
  std::uint64_t M = 0;
  double bias_sos = 0.0;
  double bias_jds = 0.0;
  double se_sos = 0.0;  // sample SD of theta_sos over replications
  double se_jds = 0.0;
  std::uint64_t covered_sos = 0;
  std::uint64_t covered_jds = 0;
  double ecp_sos = 0.0;
  double ecp_jds = 0.0;
  double mean_se = 0.0;  // mean JSE over replications
  Summary rae_sos;       // |se_m / se_sos - 1|
  Summary rae_jds;       // |se_m / se_jds - 1|
  std::vector<ReplicationRecord> per_rep;
};

namespace detail {

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Quantile with linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& s, double p) {
  const double h = p * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace detail

inline Summary summarize(std::vector<double> v) {
  Summary s;
  if (v.empty() || std::any_of(v.begin(), v.end(), [](double x) { return std::isnan(x); })) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan, nan, nan, nan};
  }
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  s.q1 = detail::quantile_sorted(v, 0.25);
  s.median = detail::quantile_sorted(v, 0.5);
  s.q3 = detail::quantile_sorted(v, 0.75);
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

// Metrics from finished replications against reference theta.
inline ReplicationMetrics summarize_replications(std::vector<ReplicationRecord> reps, double theta, double alpha) {
  ReplicationMetrics out;
  out.theta_true = theta;
  out.M = reps.size();
  const double z = normal_quantile(1.0 - alpha / 2.0);
  std::vector<double> sos, jds;
  double sum_se = 0.0;
  for (const auto& r : reps) {
    sos.push_back(r.theta_sos);
    jds.push_back(r.theta_jds);
    out.bias_sos += r.theta_sos - theta;
    out.bias_jds += r.theta_jds - theta;
    sum_se += r.se;
    if (r.ci_low <= theta && theta <= r.ci_high) ++out.covered_jds;
    if (r.theta_sos - r.se * z <= theta && theta <= r.theta_sos + r.se * z) ++out.covered_sos;
  }
  const double M = static_cast<double>(reps.size());
  out.bias_sos /= M;
  out.bias_jds /= M;
  out.mean_se = sum_se / M;
  out.se_sos = detail::sample_sd(sos);
  out.se_jds = detail::sample_sd(jds);
  out.ecp_sos = static_cast<double>(out.covered_sos) / M;
  out.ecp_jds = static_cast<double>(out.covered_jds) / M;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> rae_sos, rae_jds;
  for (const auto& r : reps) {
    rae_sos.push_back(out.se_sos > 0.0 ? std::abs(r.se / out.se_sos - 1.0) : nan);
    rae_jds.push_back(out.se_jds > 0.0 ? std::abs(r.se / out.se_jds - 1.0) : nan);
  }
  out.rae_sos = summarize(std::move(rae_sos));
  out.rae_jds = summarize(std::move(rae_jds));
  out.per_rep = std::move(reps);
  return out;
}

// M replications of the full estimate over one fixed dataset; only the
// subsampling randomness changes between replications. Replications run in
// parallel, each single-threaded, and are reduced in ascending m.
inline ReplicationMetrics run_replications(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto data = open_dataset(cfg.dataset);
  const auto stat = parse_statistic(cfg.statistic, data.cols());
  const double theta = cfg.theta_true ? *cfg.theta_true : whole_sample_estimate(data, stat);

  std::vector<ReplicationRecord> reps(cfg.M);
  parallel_for(cfg.M, resolve_workers(cfg.workers), [&](unsigned, std::size_t i) {
    try {
      const auto results = compute_subsamples(data, stat, cfg.n, cfg.K, replication_seed(cfg.master_seed, i + 1), 1);
      const auto rep = aggregate(results, data.rows(), cfg.alpha);
      reps[i] = {rep.theta_sos, rep.theta_jds, rep.se, rep.ci_low, rep.ci_high};
    } catch (const DomainError& e) {
      throw DomainError("replication " + std::to_string(i + 1) + ": " + e.what(), e.subsample(), e.point());
    } catch (const Error& e) {
      throw Error("replication " + std::to_string(i + 1) + ": " + e.what());
    }
  });
  return summarize_replications(std::move(reps), theta, cfg.alpha);
}

inline std::string metrics_csv_header() {
  return "dataset,statistic,n,K,M,alpha,master_seed,theta_true,bias_sos,bias_jds,se_sos,se_jds,ecp_sos,"
         "ecp_jds,rae_median_sos,rae_median_jds";
}

namespace detail {

// RFC 4180 quoting; statistic names such as corr:0,1 contain commas.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace detail

inline std::string metrics_csv_row(const ExperimentConfig& cfg, const ReplicationMetrics& m) {
  std::ostringstream os;
  os << detail::csv_field(cfg.dataset) << ',' << detail::csv_field(cfg.statistic) << ',' << cfg.n << ',' << cfg.K << ',' << cfg.M << ','
     << format_double(cfg.alpha) << ',' << cfg.master_seed << ',' << format_double(m.theta_true) << ','
     << format_double(m.bias_sos) << ',' << format_double(m.bias_jds) << ',' << format_double(m.se_sos) << ','
     << format_double(m.se_jds) << ',' << format_double(m.ecp_sos) << ',' << format_double(m.ecp_jds) << ','
     << format_double(m.rae_sos.median) << ',' << format_double(m.rae_jds.median);
  return os.str();
}

namespace detail {

// JSON has no NaN; write null instead.
inline nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

inline nlohmann::json summary_json(const Summary& s) {
  return {{"min", num(s.min)}, {"q1", num(s.q1)},   {"median", num(s.median)},
          {"q3", num(s.q3)},   {"max", num(s.max)}, {"mean", num(s.mean)}};
}

}  // namespace detail

inline nlohmann::json metrics_json(const ExperimentConfig& cfg, const ReplicationMetrics& m) {
  nlohmann::json per_rep = nlohmann::json::array();
  for (const auto& r : m.per_rep) {
    per_rep.push_back({{"theta_sos", r.theta_sos},
                       {"theta_jds", r.theta_jds},
                       {"se", r.se},
                       {"ci_low", r.ci_low},
                       {"ci_high", r.ci_high}});
  }
  return {{"dataset", cfg.dataset},
          {"statistic", cfg.statistic},
          {"n", cfg.n},
          {"K", cfg.K},
          {"M", cfg.M},
          {"alpha", cfg.alpha},
          {"master_seed", cfg.master_seed},
          {"theta_true", m.theta_true},
          {"rng_id", std::string(kRngId)},
          {"bias_sos", m.bias_sos},
          {"bias_jds", m.bias_jds},
          {"se_sos", m.se_sos},
          {"se_jds", m.se_jds},
          {"ecp_sos", m.ecp_sos},
          {"ecp_jds", m.ecp_jds},
          {"covered_sos", m.covered_sos},
          {"covered_jds", m.covered_jds},
          {"mean_se", m.mean_se},
          {"rae_median_sos", detail::num(m.rae_sos.median)},
          {"rae_median_jds", detail::num(m.rae_jds.median)},
          {"rae_sos", detail::summary_json(m.rae_sos)},
          {"rae_jds", detail::summary_json(m.rae_jds)},
          {"per_rep", std::move(per_rep)}};
}

// Reads an ExperimentConfig from JSON. Keys mirror the struct fields; "data"
// is accepted as an alias of "dataset".
inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) j.at("dataset").get_to(c.dataset);
  else if (j.contains("data")) j.at("data").get_to(c.dataset);
  j.at("statistic").get_to(c.statistic);
  j.at("n").get_to(c.n);
  j.at("K").get_to(c.K);
  if (j.contains("M")) j.at("M").get_to(c.M);
  if (j.contains("alpha")) j.at("alpha").get_to(c.alpha);
  if (j.contains("master_seed")) j.at("master_seed").get_to(c.master_seed);
  if (j.contains("theta_true") && !j.at("theta_true").is_null()) c.theta_true = j.at("theta_true").get<double>();
  if (j.contains("workers")) j.at("workers").get_to(c.workers);
  return c;
}

// ---------------------------------------------------------------------------
// Sampling benchmark

struct BenchRow {
  std::uint64_t n = 0;
  std::uint64_t K = 0;
  SamplingMode mode = SamplingMode::with_replacement;
  double seconds = 0.0;  // median over repeats
  double mse = 0.0;      // mean squared error of the column-0 mean estimate
  std::uint64_t repeats = 0;
};

inline const char* mode_name(SamplingMode m) noexcept {
  return m == SamplingMode::with_replacement ? "with_replacement" : "without_replacement";
}

namespace detail {

// Draws and reads all K subsamples; returns (seconds, column-0 mean of all
// rows read). Only drawing and reading are timed.
inline std::pair<double, double> timed_sampling(const DatasetHandle& data, std::uint64_t n, std::uint64_t K,
                                                std::uint64_t seed, SamplingMode mode) {
  RowMatrix buffer(n * K, data.cols());
  std::vector<std::uint64_t> drawn;
  std::vector<std::uint64_t> idx(n);
  const auto t0 = std::chrono::steady_clock::now();
  if (mode == SamplingMode::without_replacement) drawn.reserve(n * K);
  for (std::uint64_t k = 1; k <= K; ++k) {
    const auto ks = subsample_seed(seed, k);
    auto out = buffer.data().subspan((k - 1) * n * data.cols(), n * data.cols());
    if (mode == SamplingMode::with_replacement) {
      draw_with_replacement_into(ks, data.rows(), idx);
      data.read_into(idx, out);
    } else {
      const auto s = draw_without_replacement(ks, data.rows(), n, drawn);
      data.read_into(s.indices, out);
    }
  }
  const auto t1 = std::chrono::steady_clock::now();
  double sum = 0.0;
  for (std::size_t i = 0; i < buffer.rows(); ++i) sum += buffer(i, 0);
  return {std::chrono::duration<double>(t1 - t0).count(), sum / static_cast<double>(buffer.rows())};
}

}  // namespace detail

// Times both sampling modes over a grid of (n, K). The reference for the MSE
// is the whole-dataset mean of column 0. Each cell is repeated `repeats`
// times; the median time and the mean squared error are reported. Runs
// single-threaded.
inline std::vector<BenchRow> bench_sampling(const DatasetHandle& data,
                                            const std::vector<std::pair<std::uint64_t, std::uint64_t>>& grid,
                                            std::uint64_t seed, std::uint64_t repeats = 3) {
  if (repeats == 0) throw ArgumentError("repeats must be >= 1");
  for (const auto& [n, K] : grid) {
    if (n == 0 || K == 0) throw ArgumentError("bench grid entries need n, K >= 1");
    if (n * K > data.rows()) {
      throw ArgumentError("without-replacement cell n=" + std::to_string(n) + ", K=" + std::to_string(K) +
                          " needs n*K <= N");
    }
  }
  const double reference = whole_sample_estimate(data, stat_mean(0));

  std::vector<BenchRow> out;
  for (const auto& [n, K] : grid) {
    for (auto mode : {SamplingMode::with_replacement, SamplingMode::without_replacement}) {
      std::vector<double> times;
      double sq = 0.0;
      for (std::uint64_t r = 1; r <= repeats; ++r) {
        const auto [secs, est] = detail::timed_sampling(data, n, K, subsample_seed(seed, r), mode);
        times.push_back(secs);
        sq += (est - reference) * (est - reference);
      }
      std::sort(times.begin(), times.end());
      const double median = times.size() % 2 == 1
                                ? times[times.size() / 2]
                                : 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
      out.push_back({n, K, mode, median, sq / static_cast<double>(repeats), repeats});
    }
  }
  return out;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "n,K,mode,seconds,mse,repeats\n";
  for (const auto& r : rows) {
    os << r.n << ',' << r.K << ',' << mode_name(r.mode) << ',' << format_double(r.seconds) << ','
       << format_double(r.mse) << ',' << r.repeats << '\n';
  }
  return os.str();
}

}  // namespace sjds
