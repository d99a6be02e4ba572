#pragma once

#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>

#include "json.hpp"
#include "sjds/estimator.hpp"

namespace sjds {

// Shortest text that parses back to the same double; "nan"/"inf" for
// non-finite values.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

inline void to_json(nlohmann::json& j, const EstimateReport& r) {
  j = nlohmann::json{{"theta_sos", r.theta_sos},
                     {"theta_jds", r.theta_jds},
                     {"se", r.se},
                     {"ci_low", r.ci_low},
                     {"ci_high", r.ci_high},
                     {"alpha", r.alpha},
                     {"n", r.n},
                     {"K", r.K},
                     {"N", r.N},
                     {"master_seed", r.master_seed},
                     {"statistic_name", r.statistic_name},
                     {"rng_id", r.rng_id}};
}

inline void from_json(const nlohmann::json& j, EstimateReport& r) {
  j.at("theta_sos").get_to(r.theta_sos);
  j.at("theta_jds").get_to(r.theta_jds);
  j.at("se").get_to(r.se);
  j.at("ci_low").get_to(r.ci_low);
  j.at("ci_high").get_to(r.ci_high);
  j.at("alpha").get_to(r.alpha);
  j.at("n").get_to(r.n);
  j.at("K").get_to(r.K);
  j.at("N").get_to(r.N);
  j.at("master_seed").get_to(r.master_seed);
  j.at("statistic_name").get_to(r.statistic_name);
  j.at("rng_id").get_to(r.rng_id);
}

inline std::string report_json(const EstimateReport& r, int indent = 2) {
  return nlohmann::json(r).dump(indent);
}

inline std::string report_table(const EstimateReport& r) {
  std::ostringstream os;
  auto line = [&](const char* key, const std::string& value) {
    os << std::left << std::setw(16) << key << value << '\n';
  };
  line("statistic_name", r.statistic_name);
  line("theta_sos", format_double(r.theta_sos));
  line("theta_jds", format_double(r.theta_jds));
  line("se", format_double(r.se));
  line("ci_low", format_double(r.ci_low));
  line("ci_high", format_double(r.ci_high));
  line("alpha", format_double(r.alpha));
  line("n", std::to_string(r.n));
  line("K", std::to_string(r.K));
  line("N", std::to_string(r.N));
  line("master_seed", std::to_string(r.master_seed));
  line("rng_id", r.rng_id);
  return os.str();
}

}  // namespace sjds
