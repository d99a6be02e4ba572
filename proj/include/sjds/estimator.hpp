#pragma once

// Per-subsample jackknife and the aggregation into the subsample one-shot
// (SOS) estimate, the jackknife-debiased (JDS) estimate, and the jackknife
// standard error (JSE).
//
// For subsample k with moment mean mu and leave-one-out means mu_{-j}:
//   theta_k     = g(mu)
//   bias_k      = (n-1) * (mean_j g(mu_{-j}) - theta_k)
//   theta_jds_k = theta_k - bias_k
//   ss_k        = sum_j (g(mu_{-j}) - theta_k)^2
// and across subsamples
//   theta_sos = mean_k theta_k,  theta_jds = mean_k theta_jds_k
//   se^2      = (1/K + n/N) * mean_k ss_k

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sjds/error.hpp"
#include "sjds/matrix.hpp"
#include "sjds/statistic.hpp"

namespace sjds {

struct MomentVector {
  std::vector<double> values;
  std::size_t n_obs = 0;

  std::size_t q() const noexcept { return values.size(); }
};

namespace detail {

// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }
  double hi() const noexcept { return sum_; }
  double lo() const noexcept { return comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Knuth TwoSum: s + e == a + b exactly.
inline void two_sum(double a, double b, double& s, double& e) noexcept {
  s = a + b;
  const double bb = s - a;
  e = (a - (s - bb)) + (b - bb);
}

inline bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

// Column means of an n x q feature matrix, with compensated summation.
inline MomentVector moment_mean(const RowMatrix& features) {
  if (features.rows() == 0 || features.cols() == 0) throw ArgumentError("moment_mean: empty input");
  const std::size_t n = features.rows();
  const std::size_t q = features.cols();
  std::vector<detail::CompensatedSum> acc(q);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = features.row(i);
    for (std::size_t c = 0; c < q; ++c) acc[c].add(r[c]);
  }
  MomentVector mu;
  mu.values.resize(q);
  mu.n_obs = n;
  for (std::size_t c = 0; c < q; ++c) mu.values[c] = acc[c].value() / static_cast<double>(n);
  if (!detail::all_finite(mu.values)) throw ArgumentError("moment_mean: non-finite input");
  return mu;
}

// Mean with observation phi_j removed, by downdate:
//   mu_{-j} = (n*mu - phi_j)/(n-1) = mu + (mu - phi_j)/(n-1)
// The second form is used; it returns mu unchanged when phi_j == mu.
inline void loo_moment_into(std::span<const double> mu, std::span<const double> phi_j, std::size_t n,
                            std::span<double> out) noexcept {
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (std::size_t c = 0; c < mu.size(); ++c) out[c] = mu[c] + (mu[c] - phi_j[c]) * inv;
}

inline MomentVector loo_moment(const MomentVector& mu, std::span<const double> phi_j, std::size_t n) {
  if (n < 2) throw ArgumentError("jackknife needs n >= 2");
  if (mu.n_obs != n) throw ArgumentError("loo_moment: mu was not averaged over n observations");
  if (phi_j.size() != mu.q()) throw ArgumentError("loo_moment: dimension mismatch");
  MomentVector out;
  out.values.resize(mu.q());
  out.n_obs = n - 1;
  loo_moment_into(mu.values, phi_j, n, out.values);
  return out;
}

struct SubsampleResult {
  std::uint64_t k = 0;
  double theta_hat = 0.0;
  double theta_jds = 0.0;
  double ss = 0.0;
  std::uint64_t n = 0;

  // (n-1) * (mean_j theta_{-j} - theta_hat), recovered from the stored pair.
  double bias() const noexcept { return theta_hat - theta_jds; }

  friend bool operator==(const SubsampleResult&, const SubsampleResult&) = default;
};

// Applies phi to every row of a record batch, producing the n x q features.
template <MomentStatistic Stat>
void compute_features(const Stat& stat, const RowMatrix& rows, RowMatrix& features) {
  features.resize(rows.rows(), stat.q());
  for (std::size_t i = 0; i < rows.rows(); ++i) stat.phi(rows.row(i), features.row(i));
}

template <MomentStatistic Stat>
RowMatrix compute_features(const Stat& stat, const RowMatrix& rows) {
  RowMatrix f;
  compute_features(stat, rows, f);
  return f;
}

namespace detail {

template <MomentStatistic Stat>
double checked_g(const Stat& stat, std::span<const double> m, std::uint64_t k, long long point) {
  if (stat.in_domain(m)) {
    const double v = stat.g(m);
    if (std::isfinite(v)) return v;
  }
  std::string where = point < 0 ? "the subsample mean" : "leave-out position " + std::to_string(point);
  throw DomainError("g undefined at " + where + " of subsample " + std::to_string(k), k, point);
}

}  // namespace detail

// Jackknife over subsample positions: a row drawn twice is left out twice.
// O(n*q + n*cost(g)) via O(q) downdates of the column sums.
template <MomentStatistic Stat>
SubsampleResult jackknife_subsample(const Stat& stat, const RowMatrix& features, std::uint64_t k = 0) {
  const std::size_t n = features.rows();
  if (n < 2) throw ArgumentError("jackknife needs n >= 2");
  if (features.cols() != stat.q()) throw ArgumentError("feature width does not match statistic");

  const std::size_t q = features.cols();
  std::vector<detail::CompensatedSum> acc(q);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = features.row(i);
    for (std::size_t c = 0; c < q; ++c) acc[c].add(r[c]);
  }
  std::vector<double> mu(q);
  for (std::size_t c = 0; c < q; ++c) mu[c] = acc[c].value() / static_cast<double>(n);
  if (!detail::all_finite(mu)) throw ArgumentError("moment_mean: non-finite input");
  const double theta = detail::checked_g(stat, mu, k, -1);

  // Downdate the compensated sum rather than the mean: (S - phi_j)/(n-1)
  // with S kept as hi + lo. The mean-based form loses everything to
  // cancellation when phi_j dominates a column (x^4 of an outlier, n small).
  std::vector<double> loo(q);
  const double inv = 1.0 / static_cast<double>(n - 1);
  detail::CompensatedSum dev_sum;
  double ss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto r = features.row(j);
    for (std::size_t c = 0; c < q; ++c) {
      double s, e;
      detail::two_sum(acc[c].hi(), -r[c], s, e);
      loo[c] = (s + (e + acc[c].lo())) * inv;
    }
    const double dev = detail::checked_g(stat, loo, k, static_cast<long long>(j)) - theta;
    dev_sum.add(dev);
    ss += dev * dev;
  }
  const double nd = static_cast<double>(n);
  const double bias = (nd - 1.0) * dev_sum.value() / nd;
  return {k, theta, theta - bias, ss, n};
}

// Literal evaluation of the same definitions: every leave-one-out mean is
// recomputed by direct summation, O(n^2 q) in total. Kept as the independent
// reference for jackknife_subsample.
template <MomentStatistic Stat>
SubsampleResult jackknife_subsample_naive(const Stat& stat, const RowMatrix& features, std::uint64_t k = 0) {
  const std::size_t n = features.rows();
  const std::size_t q = features.cols();
  if (n < 2) throw ArgumentError("jackknife needs n >= 2");
  if (q != stat.q()) throw ArgumentError("feature width does not match statistic");

  std::vector<double> mean(q, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < q; ++c) mean[c] += features(i, c);
  }
  for (auto& v : mean) v /= static_cast<double>(n);
  const double theta = detail::checked_g(stat, mean, k, -1);

  std::vector<double> loo_theta(n);
  std::vector<double> loo(q);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(loo.begin(), loo.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      for (std::size_t c = 0; c < q; ++c) loo[c] += features(i, c);
    }
    for (auto& v : loo) v /= static_cast<double>(n - 1);
    loo_theta[j] = detail::checked_g(stat, loo, k, static_cast<long long>(j));
  }

  double mean_loo = 0.0;
  for (double t : loo_theta) mean_loo += t;
  mean_loo /= static_cast<double>(n);
  const double nd = static_cast<double>(n);
  const double bias = (nd - 1.0) * mean_loo - (nd - 1.0) * theta;
  double ss = 0.0;
  for (double t : loo_theta) ss += (t - theta) * (t - theta);
  return {k, theta, theta - bias, ss, n};
}

// Standard normal quantile. Acklam's rational approximation (relative error
// below 1.15e-9) followed by one Halley correction step against erfc, which
// brings the result to near double precision.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ArgumentError("normal_quantile: p must be in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  constexpr double p_high = 1.0 - p_low;

  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= p_high) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// theta -/+ se * z_{1 - alpha/2}
inline Interval confidence_interval(double theta, double se, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must be in (0, 1)");
  if (!(se >= 0.0)) throw ArgumentError("standard error must be >= 0");
  const double half = se * normal_quantile(1.0 - alpha / 2.0);
  return {theta - half, theta + half};
}

// Which estimate the confidence interval is centred on.
enum class CiCenter { jds, sos };

struct EstimateReport {
  double theta_sos = 0.0;
  double theta_jds = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.05;
  std::uint64_t n = 0;
  std::uint64_t K = 0;
  std::uint64_t N = 0;
  std::uint64_t master_seed = 0;
  std::string statistic_name;
  std::string rng_id;

  friend bool operator==(const EstimateReport&, const EstimateReport&) = default;
};

// Reduces per-subsample results in ascending k regardless of input order, so
// the report is bit-identical however the results were computed.
inline EstimateReport aggregate(std::span<const SubsampleResult> results, std::uint64_t N,
                                double alpha = 0.05, CiCenter center = CiCenter::jds) {
  if (results.empty()) throw ArgumentError("aggregate: no subsample results");
  if (N == 0) throw ArgumentError("aggregate: N must be >= 1");
  std::vector<const SubsampleResult*> ordered;
  ordered.reserve(results.size());
  for (const auto& r : results) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const SubsampleResult* a, const SubsampleResult* b) { return a->k < b->k; });

  const std::uint64_t n = ordered.front()->n;
  double sum_theta = 0.0, sum_jds = 0.0, sum_ss = 0.0;
  for (const auto* r : ordered) {
    if (r->n != n) throw ArgumentError("aggregate: subsamples have different sizes");
    sum_theta += r->theta_hat;
    sum_jds += r->theta_jds;
    sum_ss += r->ss;
  }
  const double K = static_cast<double>(ordered.size());
  EstimateReport rep;
  rep.theta_sos = sum_theta / K;
  rep.theta_jds = sum_jds / K;
  const double se2 = (1.0 / K + static_cast<double>(n) / static_cast<double>(N)) * (sum_ss / K);
  rep.se = std::sqrt(se2);
  rep.alpha = alpha;
  rep.n = n;
  rep.K = ordered.size();
  rep.N = N;
  const auto ci = confidence_interval(center == CiCenter::jds ? rep.theta_jds : rep.theta_sos, rep.se, alpha);
  rep.ci_low = ci.low;
  rep.ci_high = ci.high;
  return rep;
}

}  // namespace sjds
