#pragma once

// Built-in statistics, each a smooth function g of the mean of a
// per-observation moment map phi. The estimator only ever sees phi and g, so
// every statistic goes through the same jackknife path.

#include <array>
#include <charconv>
#include <cmath>
#include <concepts>
#include <optional>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sjds/error.hpp"

namespace sjds {

// What the estimator needs from a statistic.
template <typename S>
concept MomentStatistic = requires(const S& s, std::span<const double> x, std::span<double> out) {
  { s.q() } -> std::convertible_to<std::size_t>;
  { s.phi(x, out) };
  { s.in_domain(x) } -> std::convertible_to<bool>;
  { s.g(x) } -> std::convertible_to<double>;
};

enum class StatKind { mean, variance, sd, kurtosis, correlation };

class Statistic {
 public:
  static constexpr std::size_t kMaxMoments = 5;

  Statistic(StatKind kind, std::size_t col_a, std::size_t col_b = 0) : kind_(kind), a_(col_a), b_(col_b) {
    if (kind == StatKind::correlation && col_a == col_b) throw ArgumentError("columns must differ");
  }

  StatKind kind() const noexcept { return kind_; }

  std::size_t q() const noexcept {
    switch (kind_) {
      case StatKind::mean: return 1;
      case StatKind::variance:
      case StatKind::sd: return 2;
      case StatKind::kurtosis: return 4;
      case StatKind::correlation: return 5;
    }
    return 0;
  }

  // Dataset columns phi reads.
  std::vector<std::size_t> columns() const {
    if (kind_ == StatKind::correlation) return {a_, b_};
    return {a_};
  }

  // Canonical spec text, e.g. "corr:0,1".
  std::string name() const {
    std::string s = kind_name(kind_);
    s += ':' + std::to_string(a_);
    if (kind_ == StatKind::correlation) s += ',' + std::to_string(b_);
    return s;
  }

  // Throws RangeError if the dataset has too few columns.
  void bind(std::size_t cols) const {
    for (auto c : columns()) {
      if (c >= cols) {
        throw RangeError("column " + std::to_string(c) + " out of range for a dataset with " +
                         std::to_string(cols) + " columns");
      }
    }
  }

  void phi(std::span<const double> row, std::span<double> out) const noexcept {
    const double x = row[a_];
    switch (kind_) {
      case StatKind::mean:
        out[0] = x;
        break;
      case StatKind::variance:
      case StatKind::sd:
        out[0] = x;
        out[1] = x * x;
        break;
      case StatKind::kurtosis: {
        const double x2 = x * x;
        out[0] = x;
        out[1] = x2;
        out[2] = x2 * x;
        out[3] = x2 * x2;
        break;
      }
      case StatKind::correlation: {
        const double y = row[b_];
        out[0] = x;
        out[1] = y;
        out[2] = x * x;
        out[3] = y * y;
        out[4] = x * y;
        break;
      }
    }
  }

  bool in_domain(std::span<const double> m) const noexcept {
    switch (kind_) {
      case StatKind::mean:
      case StatKind::variance: return true;
      case StatKind::sd:
      case StatKind::kurtosis: return m[1] - m[0] * m[0] > 0.0;
      case StatKind::correlation: return m[2] - m[0] * m[0] > 0.0 && m[3] - m[1] * m[1] > 0.0;
    }
    return false;
  }

  // Caller checks in_domain first.
  double g(std::span<const double> m) const noexcept {
    switch (kind_) {
      case StatKind::mean: return m[0];
      case StatKind::variance: return m[1] - m[0] * m[0];
      case StatKind::sd: return std::sqrt(m[1] - m[0] * m[0]);
      case StatKind::kurtosis: {
        const double m1 = m[0];
        const double m1sq = m1 * m1;
        const double c2 = m[1] - m1sq;
        const double c4 = m[3] - 4.0 * m[2] * m1 + 6.0 * m[1] * m1sq - 3.0 * m1sq * m1sq;
        return c4 / (c2 * c2);
      }
      case StatKind::correlation: {
        const double cov = m[4] - m[0] * m[1];
        return cov / std::sqrt((m[2] - m[0] * m[0]) * (m[3] - m[1] * m[1]));
      }
    }
    return 0.0;
  }

  static const char* kind_name(StatKind k) noexcept {
    switch (k) {
      case StatKind::mean: return "mean";
      case StatKind::variance: return "var";
      case StatKind::sd: return "sd";
      case StatKind::kurtosis: return "kurt";
      case StatKind::correlation: return "corr";
    }
    return "?";
  }

 private:
  StatKind kind_;
  std::size_t a_;
  std::size_t b_;
};

static_assert(MomentStatistic<Statistic>);

inline Statistic stat_mean(std::size_t col) { return {StatKind::mean, col}; }
inline Statistic stat_variance(std::size_t col) { return {StatKind::variance, col}; }
inline Statistic stat_sd(std::size_t col) { return {StatKind::sd, col}; }
// Raw (non-excess) kurtosis: 3 for a Gaussian.
inline Statistic stat_kurtosis(std::size_t col) { return {StatKind::kurtosis, col}; }
inline Statistic stat_correlation(std::size_t col_a, std::size_t col_b) {
  return {StatKind::correlation, col_a, col_b};
}

// Parses `name[:col[,col]]`. Names: mean, var, sd, kurt, corr (long forms
// variance, kurtosis, correlation are accepted too). The column defaults to 0
// for single-column statistics. Pass cols to also check the columns exist.
inline Statistic parse_statistic(std::string_view spec, std::size_t cols = 0) {
  const auto colon = spec.find(':');
  const std::string_view name = spec.substr(0, colon);
  std::vector<std::size_t> idx;
  if (colon != std::string_view::npos) {
    std::string_view rest = spec.substr(colon + 1);
    while (true) {
      const auto comma = rest.find(',');
      const auto tok = rest.substr(0, comma);
      std::size_t v = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw ArgumentError("malformed column list in statistic '" + std::string(spec) + "'");
      }
      idx.push_back(v);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  }

  auto single = [&](StatKind k) {
    if (idx.size() > 1) throw ArgumentError("statistic '" + std::string(name) + "' takes one column");
    return Statistic(k, idx.empty() ? 0 : idx[0]);
  };

  std::optional<Statistic> out;
  if (name == "mean") out = single(StatKind::mean);
  else if (name == "var" || name == "variance") out = single(StatKind::variance);
  else if (name == "sd") out = single(StatKind::sd);
  else if (name == "kurt" || name == "kurtosis") out = single(StatKind::kurtosis);
  else if (name == "corr" || name == "correlation") {
    if (idx.size() != 2) throw ArgumentError("statistic 'corr' takes two columns, e.g. corr:0,1");
    out = Statistic(StatKind::correlation, idx[0], idx[1]);
  } else {
    throw ArgumentError("unknown statistic '" + std::string(name) + "'");
  }
  if (cols > 0) out->bind(cols);
  return *out;
}

}  // namespace sjds
