#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sjds/sjds.hpp"

using namespace sjds;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sjds-test-sim-" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Sample covariance of two columns, two-pass.
std::array<double, 4> sample_cov(const DatasetHandle& d) {
  double m0 = 0, m1 = 0;
  std::vector<double> row(2);
  for (std::uint64_t i = 0; i < d.rows(); ++i) {
    d.copy_row(i, row);
    m0 += row[0];
    m1 += row[1];
  }
  const double N = static_cast<double>(d.rows());
  m0 /= N;
  m1 /= N;
  double s00 = 0, s01 = 0, s11 = 0;
  for (std::uint64_t i = 0; i < d.rows(); ++i) {
    d.copy_row(i, row);
    s00 += (row[0] - m0) * (row[0] - m0);
    s01 += (row[0] - m0) * (row[1] - m1);
    s11 += (row[1] - m1) * (row[1] - m1);
  }
  return {s00 / N, s01 / N, s01 / N, s11 / N};
}

bool rel_close(double a, double b, double tol) {
  if (a == b) return true;
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

const std::array<double, 4> kSigma{25.0, 10.0, 10.0, 5.0};

}  // namespace

TEST_CASE("generate_bivariate_normal", "[simulation][generate]") {
  TempDir dir;
  const std::uint64_t N = 100000;

  SECTION("identity covariance") {
    generate_bivariate_normal(1, N, {1, 0, 0, 1}, dir / "id.sjds");
    const auto c = sample_cov(open_dataset(dir / "id.sjds"));
    const double tol = 3.0 / std::sqrt(static_cast<double>(N));
    CHECK(std::abs(c[0] - 1.0) < tol);
    CHECK(std::abs(c[1]) < tol);
    CHECK(std::abs(c[3] - 1.0) < tol);
  }
  SECTION("covariance [[25,10],[10,5]] gives correlation 2/sqrt(5)") {
    const auto h = generate_bivariate_normal(2, N, kSigma, dir / "p.sjds");
    CHECK(h.rows == N);
    CHECK(h.cols == 2);
    const auto c = sample_cov(open_dataset(dir / "p.sjds"));
    CHECK(std::abs(c[1] / std::sqrt(c[0] * c[3]) - 2.0 / std::sqrt(5.0)) < 0.01);
  }
  SECTION("same seed, identical bytes") {
    generate_bivariate_normal(3, 5000, kSigma, dir / "a.sjds");
    generate_bivariate_normal(3, 5000, kSigma, dir / "b.sjds");
    generate_bivariate_normal(4, 5000, kSigma, dir / "c.sjds");
    CHECK(slurp(dir / "a.sjds") == slurp(dir / "b.sjds"));
    CHECK(slurp(dir / "a.sjds") != slurp(dir / "c.sjds"));
  }
  SECTION("non positive definite covariance") {
    CHECK_THROWS_WITH(generate_bivariate_normal(1, 10, {1, 2, 2, 1}, dir / "x.sjds"),
                      Catch::Matchers::ContainsSubstring("positive definite"));
    CHECK_THROWS_AS(generate_bivariate_normal(1, 10, {1, 0.5, 0.2, 1}, dir / "x.sjds"), ArgumentError);
    CHECK_FALSE(fs::exists(dir / "x.sjds"));
  }
}

TEST_CASE("estimate pipeline", "[pipeline]") {
  TempDir dir;
  const auto path = dir / "bvn.sjds";
  generate_bivariate_normal(7, 200000, kSigma, path);
  const auto data = open_dataset(path);

  SECTION("worker count never changes the report") {
    EstimateOptions opt{100, 150, 42, 0.05, 1};
    const auto a = estimate(data, stat_correlation(0, 1), opt);
    opt.workers = 8;
    const auto b = estimate(data, stat_correlation(0, 1), opt);
    opt.workers = 3;
    const auto c = estimate(data, stat_correlation(0, 1), opt);
    CHECK(a == b);
    CHECK(a == c);
    CHECK(a.rng_id == std::string(kRngId));
    CHECK(a.statistic_name == "corr:0,1");
  }
  SECTION("correlation estimate lies within 4 se of 2/sqrt(5)") {
    const auto r = estimate(data, stat_correlation(0, 1), {500, 200, 3});
    CHECK(std::abs(r.theta_jds - 0.8944272) < 4.0 * r.se);
    CHECK(r.ci_low <= r.theta_jds);
    CHECK(r.theta_jds <= r.ci_high);
  }
  SECTION("mean: JDS equals SOS") {
    const auto r = estimate(data, stat_mean(0), {50, 100, 3});
    CHECK(rel_close(r.theta_jds, r.theta_sos, 1e-12));
  }
  SECTION("sos mode centres the interval on theta_sos") {
    EstimateOptions opt{50, 30, 3};
    opt.center = CiCenter::sos;
    const auto r = estimate(data, stat_sd(0), opt);
    CHECK((r.ci_low + r.ci_high) / 2 == Catch::Approx(r.theta_sos).epsilon(1e-12));
  }
  SECTION("domain errors carry the subsample") {
    // A constant column makes sd undefined everywhere.
    RowMatrix flat(100, 1);
    for (auto& v : flat.data()) v = 2.0;
    write_dataset(dir / "flat.sjds", flat);
    const auto f = open_dataset(dir / "flat.sjds");
    try {
      estimate(f, stat_sd(0), {10, 5, 1, 0.05, 4});
      FAIL("expected DomainError");
    } catch (const DomainError& e) {
      CHECK(e.subsample() == 1);
    }
  }
  SECTION("bad arguments") {
    CHECK_THROWS_AS(estimate(data, stat_mean(0), {1, 10, 1}), ArgumentError);
    CHECK_THROWS_AS(estimate(data, stat_mean(0), {10, 0, 1}), ArgumentError);
    CHECK_THROWS_AS(estimate(data, stat_mean(5), {10, 10, 1}), RangeError);
  }
}

TEST_CASE("mean estimate is shift/scale equivariant", "[pipeline][property]") {
  TempDir dir;
  generate_bivariate_normal(8, 20000, kSigma, dir / "x.sjds");
  const auto x = open_dataset(dir / "x.sjds");
  for (const auto& [a, b] : std::vector<std::pair<double, double>>{{2.0, 3.0}, {-0.5, 10.0}, {4.0, -1.0}}) {
    DatasetWriter w(dir / "y.sjds", 2);
    std::vector<double> row(2);
    for (std::uint64_t i = 0; i < x.rows(); ++i) {
      x.copy_row(i, row);
      for (auto& v : row) v = a * v + b;
      w.append(row);
    }
    w.finish();
    const auto y = open_dataset(dir / "y.sjds");
    const EstimateOptions opt{40, 60, 9};
    const auto rx = estimate(x, stat_mean(0), opt);
    const auto ry = estimate(y, stat_mean(0), opt);
    INFO("a=" << a << " b=" << b);
    CHECK(rel_close(ry.theta_sos, a * rx.theta_sos + b, 1e-12));
    CHECK(rel_close(ry.theta_jds, a * rx.theta_jds + b, 1e-12));
    CHECK(rel_close(ry.se, std::abs(a) * rx.se, 1e-12));
  }
}

TEST_CASE("run_replications", "[simulation]") {
  TempDir dir;
  const auto path = (dir / "d.sjds").string();
  generate_bivariate_normal(11, 100000, kSigma, path);

  SECTION("M = 1 is degenerate") {
    ExperimentConfig cfg{path, "corr:0,1", 50, 20, 1, 0.05, 5, 2.0 / std::sqrt(5.0)};
    const auto m = run_replications(cfg);
    CHECK(m.M == 1);
    CHECK(m.bias_jds == Catch::Approx(m.per_rep[0].theta_jds - 2.0 / std::sqrt(5.0)));
    CHECK((m.ecp_jds == 0.0 || m.ecp_jds == 1.0));
    CHECK(m.se_jds == 0.0);
  }
  SECTION("linear statistic: SOS and JDS streams coincide") {
    ExperimentConfig cfg{path, "mean:1", 30, 20, 40, 0.05, 6, 0.0};
    const auto m = run_replications(cfg);
    for (const auto& r : m.per_rep) REQUIRE(rel_close(r.theta_sos, r.theta_jds, 1e-12));
    CHECK(m.bias_sos == Catch::Approx(m.bias_jds).epsilon(1e-10));
  }
  SECTION("ECP is a fraction of an integer count; results ignore worker count") {
    ExperimentConfig cfg{path, "sd:0", 40, 25, 30, 0.05, 7, std::nullopt, 1};
    const auto a = run_replications(cfg);
    cfg.workers = 4;
    const auto b = run_replications(cfg);
    CHECK(a.ecp_jds * 30 == static_cast<double>(a.covered_jds));
    CHECK(a.ecp_sos * 30 == static_cast<double>(a.covered_sos));
    CHECK(a.ecp_jds >= 0.0);
    CHECK(a.ecp_jds <= 1.0);
    REQUIRE(a.per_rep.size() == b.per_rep.size());
    for (std::size_t i = 0; i < a.per_rep.size(); ++i) {
      CHECK(a.per_rep[i].theta_jds == b.per_rep[i].theta_jds);
      CHECK(a.per_rep[i].se == b.per_rep[i].se);
    }
    // Without theta_true the whole-sample estimate is the reference.
    CHECK(a.theta_true == whole_sample_estimate(open_dataset(path), stat_sd(0)));
  }
  SECTION("replication m depends only on (master_seed, m)") {
    ExperimentConfig cfg{path, "corr:0,1", 20, 10, 5, 0.05, 8, 0.9};
    const auto a = run_replications(cfg);
    const auto data = open_dataset(path);
    const auto rep3 = estimate(data, stat_correlation(0, 1), {20, 10, replication_seed(8, 3), 0.05, 1});
    CHECK(a.per_rep[2].theta_jds == rep3.theta_jds);
    CHECK(a.per_rep[2].se == rep3.se);
  }
  SECTION("RAE shrinks as K grows") {
    // The SE carries an n/N term for dataset-level variance that the spread
    // over replications on one fixed file does not see; it inflates SE by
    // sqrt(1 + nK/N). Keep nK/N small so the K effect dominates.
    const auto big = (dir / "big.sjds").string();
    generate_bivariate_normal(13, 1000000, kSigma, big);
    ExperimentConfig small{big, "corr:0,1", 100, 50, 400, 0.05, 9, 2.0 / std::sqrt(5.0)};
    ExperimentConfig large = small;
    large.K = 200;
    const auto a = run_replications(small);
    const auto b = run_replications(large);
    INFO("median RAE K=50: " << a.rae_jds.median << ", K=200: " << b.rae_jds.median);
    CHECK(b.rae_jds.median < a.rae_jds.median);
  }
  SECTION("CSV and JSON output") {
    ExperimentConfig cfg{path, "corr:0,1", 20, 10, 4, 0.05, 10, 0.9};
    const auto m = run_replications(cfg);
    CHECK(metrics_csv_header() ==
          "dataset,statistic,n,K,M,alpha,master_seed,theta_true,bias_sos,bias_jds,se_sos,se_jds,ecp_sos,ecp_jds,"
          "rae_median_sos,rae_median_jds");
    const auto row = metrics_csv_row(cfg, m);
    CHECK(row.find(",\"corr:0,1\",20,10,4,") != std::string::npos);
    CHECK(std::count(row.begin(), row.end(), ',') == 16);
    const auto j = metrics_json(cfg, m);
    CHECK(j.at("per_rep").size() == 4);
    CHECK(j.at("ecp_jds").get<double>() == m.ecp_jds);
    const auto back = experiment_from_json(j);
    CHECK(back.dataset == cfg.dataset);
    CHECK(back.n == 20);
    CHECK(back.M == 4);
    CHECK(back.theta_true == 0.9);
  }
}

TEST_CASE("bench_sampling", "[simulation][bench]") {
  TempDir dir;
  generate_bivariate_normal(12, 100000, {1, 0, 0, 1}, dir / "b.sjds");
  const auto data = open_dataset(dir / "b.sjds");
  const auto rows = bench_sampling(data, {{100, 50}, {100, 100}}, 1, 3);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].mode == SamplingMode::with_replacement);
  CHECK(rows[1].mode == SamplingMode::without_replacement);
  CHECK(rows[1].seconds >= rows[0].seconds);
  CHECK(rows[3].seconds >= rows[2].seconds);
  for (const auto& r : rows) CHECK(r.mse >= 0.0);
  const auto csv = bench_csv(rows);
  CHECK(csv.rfind("n,K,mode,seconds,mse,repeats\n", 0) == 0);
  CHECK_THROWS_AS(bench_sampling(data, {{1000, 1000}}, 1, 1), ArgumentError);
}

TEST_CASE("EstimateReport JSON round trip", "[report]") {
  EstimateReport r{0.1234567890123456789, -1e-300, 3.5e-7, -2.0, 2.0, 0.05, 50, 1000, 1000000,
                   0xFFFFFFFFFFFFFFFFULL, "corr:0,1", std::string(kRngId)};
  const auto text = report_json(r);
  const auto back = nlohmann::json::parse(text).get<EstimateReport>();
  CHECK(back == r);
  CHECK(report_table(r).find("theta_jds") != std::string::npos);
}
