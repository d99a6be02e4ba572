// sjds: subsample jackknife estimation over on-disk datasets.
//
//   sjds convert        CSV -> SJDS (optional signed-log transform)
//   sjds generate       synthetic multivariate normal SJDS file
//   sjds estimate       SOS / JDS point estimates, JSE and confidence interval
//   sjds simulate       Monte Carlo replications (bias, SE, ECP, RAE)
//   sjds bench-sampling with- vs without-replacement sampling timings
//
// Results go to stdout, diagnostics and progress to stderr.
// Exit codes: 0 success, 1 usage error, 2 runtime or domain error.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sjds/sjds.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int cmd_estimate(const std::string& data_path, const std::string& stat_spec, const sjds::EstimateOptions& opt,
                 const std::string& format) {
  if (opt.n < 2) throw UsageError("--n must be >= 2");
  if (opt.K < 1) throw UsageError("--k must be >= 1");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw UsageError("--alpha must be in (0, 1)");
  std::optional<sjds::Statistic> parsed;
  try {
    parsed = sjds::parse_statistic(stat_spec);
  } catch (const sjds::ArgumentError& e) {
    throw UsageError(std::string("--stat: ") + e.what());
  }
  const auto& stat = *parsed;
  const auto data = sjds::open_dataset(data_path);
  const auto rep = sjds::estimate(data, stat, opt);
  if (format == "json") {
    std::cout << sjds::report_json(rep) << '\n';
  } else {
    std::cout << sjds::report_table(rep);
  }
  return 0;
}

int cmd_generate(std::uint64_t rows, const std::vector<double>& sigma, std::uint64_t seed, const std::string& out) {
  std::size_t p = 0;
  while (p * p < sigma.size()) ++p;
  if (p * p != sigma.size()) throw UsageError("--sigma needs p*p values (row-major), got " + std::to_string(sigma.size()));
  const auto h = sjds::generate_multivariate_normal(seed, rows, sigma, p, out);
  std::cout << nlohmann::json{{"path", out}, {"N", h.rows}, {"p", h.cols}}.dump() << '\n';
  return 0;
}

int cmd_convert(const std::string& csv, const std::vector<std::string>& columns, const std::string& transform,
                const std::string& out) {
  const auto t = transform == "signed_log" ? sjds::Transform::signed_log : sjds::Transform::none;
  const auto h = sjds::convert_csv(csv, columns, t, out);
  std::cout << nlohmann::json{{"path", out}, {"N", h.rows}, {"p", h.cols}}.dump() << '\n';
  return 0;
}

std::vector<sjds::ExperimentConfig> load_experiments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sjds::FormatError("cannot read config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw sjds::FormatError("config '" + path + "': " + e.what());
  }
  std::vector<nlohmann::json> items;
  if (j.is_array()) {
    items.assign(j.begin(), j.end());
  } else {
    items.push_back(j);
  }
  std::vector<sjds::ExperimentConfig> out;
  for (const auto& item : items) {
    try {
      auto cfg = sjds::experiment_from_json(item);
      // Optional generator block: {"rows": N, "sigma": [...], "seed": s}
      if (item.contains("generate")) {
        const auto& g = item.at("generate");
        const auto sigma = g.at("sigma").get<std::vector<double>>();
        std::size_t p = 0;
        while (p * p < sigma.size()) ++p;
        if (!std::filesystem::exists(cfg.dataset)) {
          std::cerr << "simulate: generating " << cfg.dataset << '\n';
          sjds::generate_multivariate_normal(g.value("seed", std::uint64_t{0}), g.at("rows").get<std::uint64_t>(),
                                             sigma, p, cfg.dataset);
        }
      }
      out.push_back(std::move(cfg));
    } catch (const nlohmann::json::exception& e) {
      throw sjds::FormatError("config '" + path + "': " + e.what());
    }
  }
  return out;
}

int cmd_simulate(std::vector<sjds::ExperimentConfig> configs, const std::string& json_out) {
  nlohmann::json detail = nlohmann::json::array();
  std::cout << sjds::metrics_csv_header() << '\n';
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& cfg = configs[i];
    std::cerr << "simulate: [" << i + 1 << "/" << configs.size() << "] " << cfg.statistic << " n=" << cfg.n
              << " K=" << cfg.K << " M=" << cfg.M << '\n';
    const auto m = sjds::run_replications(cfg);
    std::cout << sjds::metrics_csv_row(cfg, m) << '\n' << std::flush;
    if (!json_out.empty()) detail.push_back(sjds::metrics_json(cfg, m));
  }
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    if (!out) throw sjds::FormatError("cannot write '" + json_out + "'");
    out << detail.dump(2) << '\n';
  }
  return 0;
}

int cmd_bench(const std::string& data_path, std::uint64_t rows, const std::vector<std::uint64_t>& ns,
              const std::vector<std::uint64_t>& ks, std::uint64_t seed, std::uint64_t repeats) {
  std::filesystem::path path = data_path;
  std::optional<std::filesystem::path> temp;
  if (path.empty()) {
    temp = std::filesystem::temp_directory_path() /
           ("sjds-bench-" + std::to_string(::getpid()) + "-" + std::to_string(seed) + ".sjds");
    std::cerr << "bench-sampling: generating " << rows << " standard bivariate normal rows\n";
    sjds::generate_bivariate_normal(seed, rows, {1.0, 0.0, 0.0, 1.0}, *temp);
    path = *temp;
  }
  struct Cleanup {
    std::optional<std::filesystem::path>& p;
    ~Cleanup() {
      if (p) {
        std::error_code ec;
        std::filesystem::remove(*p, ec);
      }
    }
  } cleanup{temp};

  std::vector<std::pair<std::uint64_t, std::uint64_t>> grid;
  if (ns.empty() && ks.empty()) {
    for (std::uint64_t n : {100, 500}) {
      for (std::uint64_t k : {50, 100, 200}) grid.emplace_back(n, k);
    }
  } else {
    if (ns.empty() || ks.empty()) throw UsageError("--n and --k must be given together");
    for (auto n : ns) {
      for (auto k : ks) grid.emplace_back(n, k);
    }
  }
  const auto data = sjds::open_dataset(path);
  std::cout << sjds::bench_csv(sjds::bench_sampling(data, grid, seed, repeats));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subsample jackknife estimation over on-disk datasets"};
  app.require_subcommand(1);

  // estimate
  auto* est = app.add_subcommand("estimate", "SOS/JDS estimates with jackknife standard error");
  std::string est_data, est_stat, est_format = "table", est_mode = "jds";
  sjds::EstimateOptions est_opt;
  est->add_option("--data", est_data, "SJDS dataset path")->required();
  est->add_option("--stat", est_stat, "statistic, e.g. mean:0, sd:2, kurt:1, corr:0,1")->required();
  est->add_option("--n", est_opt.n, "subsample size (>= 2)")->required();
  est->add_option("--k", est_opt.K, "number of subsamples (>= 1)")->required();
  est->add_option("--seed", est_opt.master_seed, "master seed")->required();
  est->add_option("--alpha", est_opt.alpha, "confidence level alpha")->capture_default_str();
  est->add_option("--workers", est_opt.workers, "worker threads (0 = all cores)")->capture_default_str();
  est->add_option("--format", est_format, "output format")->check(CLI::IsMember({"json", "table"}))->capture_default_str();
  est->add_option("--mode", est_mode, "estimate the interval is centred on")
      ->check(CLI::IsMember({"jds", "sos"}))
      ->capture_default_str();

  // generate
  auto* gen = app.add_subcommand("generate", "write N iid mean-zero normal rows with covariance --sigma");
  std::uint64_t gen_rows = 0, gen_seed = 0;
  std::vector<double> gen_sigma;
  std::string gen_out;
  gen->add_option("--n-rows", gen_rows, "number of rows N")->required();
  gen->add_option("--sigma", gen_sigma, "covariance, row-major, comma separated (e.g. 25,10,10,5)")
      ->required()
      ->delimiter(',');
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--out", gen_out, "output SJDS path")->required();

  // convert
  auto* conv = app.add_subcommand("convert", "ingest numeric CSV columns into an SJDS file");
  std::string conv_csv, conv_out, conv_transform = "none";
  std::vector<std::string> conv_cols;
  conv->add_option("--csv", conv_csv, "input CSV (header row required)")->required();
  conv->add_option("--columns", conv_cols, "column names to keep, comma separated (default: all)")->delimiter(',');
  conv->add_option("--transform", conv_transform, "value transform")
      ->check(CLI::IsMember({"none", "signed_log"}))
      ->capture_default_str();
  conv->add_option("--out", conv_out, "output SJDS path")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte Carlo replications; CSV metrics on stdout");
  std::string sim_config, sim_json;
  sjds::ExperimentConfig sim_cfg;
  std::optional<double> sim_theta;
  sim->add_option("--config", sim_config, "JSON config (object or array of objects)");
  sim->add_option("--data", sim_cfg.dataset, "SJDS dataset path");
  sim->add_option("--stat", sim_cfg.statistic, "statistic spec");
  sim->add_option("--n", sim_cfg.n, "subsample size");
  sim->add_option("--k", sim_cfg.K, "number of subsamples");
  sim->add_option("--m", sim_cfg.M, "number of replications")->capture_default_str();
  sim->add_option("--alpha", sim_cfg.alpha, "confidence level alpha")->capture_default_str();
  sim->add_option("--seed", sim_cfg.master_seed, "master seed")->capture_default_str();
  sim->add_option("--theta-true", sim_theta, "reference value (default: whole-sample estimate)");
  sim->add_option("--workers", sim_cfg.workers, "worker threads (0 = all cores)")->capture_default_str();
  sim->add_option("--json-out", sim_json, "write full per-replication detail as JSON");

  // bench-sampling
  auto* bench = app.add_subcommand("bench-sampling", "time sampling with vs without replacement; CSV on stdout");
  std::string bench_data;
  std::uint64_t bench_rows = 1'000'000, bench_seed = 1, bench_repeats = 3;
  std::vector<std::uint64_t> bench_n, bench_k;
  bench->add_option("--data", bench_data, "SJDS dataset (default: generate --rows standard normal rows)");
  bench->add_option("--rows", bench_rows, "rows to generate when --data is absent")->capture_default_str();
  bench->add_option("--n", bench_n, "subsample sizes, comma separated")->delimiter(',');
  bench->add_option("--k", bench_k, "subsample counts, comma separated")->delimiter(',');
  bench->add_option("--seed", bench_seed, "seed")->capture_default_str();
  bench->add_option("--repeats", bench_repeats, "repeats per cell (median time reported)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*est) {
      est_opt.center = est_mode == "sos" ? sjds::CiCenter::sos : sjds::CiCenter::jds;
      return cmd_estimate(est_data, est_stat, est_opt, est_format);
    }
    if (*gen) return cmd_generate(gen_rows, gen_sigma, gen_seed, gen_out);
    if (*conv) return cmd_convert(conv_csv, conv_cols, conv_transform, conv_out);
    if (*sim) {
      std::vector<sjds::ExperimentConfig> configs;
      if (!sim_config.empty()) {
        configs = load_experiments(sim_config);
      } else {
        if (sim_cfg.dataset.empty() || sim_cfg.statistic.empty() || sim_cfg.n == 0 || sim_cfg.K == 0) {
          throw UsageError("simulate needs --config or all of --data, --stat, --n, --k");
        }
        sim_cfg.theta_true = sim_theta;
        configs.push_back(sim_cfg);
      }
      return cmd_simulate(std::move(configs), sim_json);
    }
    if (*bench) return cmd_bench(bench_data, bench_rows, bench_n, bench_k, bench_seed, bench_repeats);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  } catch (const sjds::DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
