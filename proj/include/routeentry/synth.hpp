#pragma once

#include "routeentry/errors.hpp"
#include "routeentry/ingest.hpp"
#include "routeentry/panel.hpp"
#include "routeentry/stats.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace routeentry::synth {

enum class Link { Probit, Logit };

inline const char* link_name(Link l) { return l == Link::Probit ? "probit" : "logit"; }

inline Link link_from_name(const std::string& s) {
  if (s == "probit") return Link::Probit;
  if (s == "logit") return Link::Logit;
  throw io_error("unknown link '" + s + "', expected probit or logit");
}

struct SynthConfig {
  std::size_t n = 1000;
  std::size_t k = 2;
  std::vector<double> beta;
  double intercept = 0.0;
  Link link = Link::Logit;
  std::size_t n_dummies = 0; // leading columns drawn as 0/1 instead of normal
  std::size_t groups = 0;    // 0 disables the random intercept
  double group_sd = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (k < 1 || n <= k) throw std::invalid_argument("synth config: need n > k >= 1");
    if (beta.size() != k) throw std::invalid_argument("synth config: beta size must equal k");
    if (n_dummies > k) throw std::invalid_argument("synth config: more dummies than regressors");
    if (group_sd < 0.0) throw std::invalid_argument("synth config: negative group sd");
    if (groups > 0 && groups > n) throw std::invalid_argument("synth config: more groups than rows");
  }
};

struct TruthRecord {
  std::vector<double> beta;
  double intercept = 0.0;
  Link link = Link::Logit;
  double group_sd = 0.0;
  std::size_t groups = 0;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  double positive_rate = 0.0;
};

inline nlohmann::ordered_json truth_to_json(const TruthRecord& t) {
  nlohmann::ordered_json j;
  j["beta"] = t.beta;
  j["intercept"] = t.intercept;
  j["link"] = link_name(t.link);
  j["group_sd"] = t.group_sd;
  j["groups"] = t.groups;
  j["seed"] = t.seed;
  j["n"] = t.n;
  j["k"] = t.k;
  j["positive_rate"] = t.positive_rate;
  return j;
}

inline TruthRecord truth_from_json(const nlohmann::json& j) {
  TruthRecord t;
  t.beta = j.at("beta").get<std::vector<double>>();
  t.intercept = j.at("intercept").get<double>();
  t.link = link_from_name(j.at("link").get<std::string>());
  t.group_sd = j.at("group_sd").get<double>();
  t.groups = j.at("groups").get<std::size_t>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.n = j.at("n").get<std::size_t>();
  t.k = j.at("k").get<std::size_t>();
  t.positive_rate = j.at("positive_rate").get<double>();
  return t;
}

struct SynthData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::int32_t> groups;
  std::vector<std::string> names;
  TruthRecord truth;
};

// Draws regressors, group effects and outcomes from separate substreams so
// that adding a regressor leaves the noise draws untouched.
inline SynthData generate(const SynthConfig& config) {
  config.validate();
  SynthData d;
  d.X.resize(config.n, config.k);
  d.names.reserve(config.k);

  auto design_rng = stats::substream(config.seed, "design");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t j = 0; j < config.k; ++j) {
    d.names.push_back("x" + std::to_string(j + 1));
    for (std::size_t i = 0; i < config.n; ++i) {
      d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          j < config.n_dummies ? (coin(design_rng) ? 1.0 : 0.0) : normal(design_rng);
    }
  }

  std::vector<double> group_effect;
  d.groups.assign(config.n, 0);
  if (config.groups > 0) {
    auto group_rng = stats::substream(config.seed, "groups");
    std::normal_distribution<double> geff(0.0, config.group_sd > 0.0 ? config.group_sd : 1e-300);
    group_effect.resize(config.groups);
    for (std::size_t g = 0; g < config.groups; ++g) {
      group_effect[g] = config.group_sd > 0.0 ? geff(group_rng) : 0.0;
    }
    for (std::size_t i = 0; i < config.n; ++i) {
      d.groups[i] = static_cast<std::int32_t>((i * config.groups) / config.n);
    }
  }

  Eigen::Map<const Eigen::VectorXd> beta(config.beta.data(), config.beta.size());
  const Eigen::VectorXd index = d.X * beta;

  auto noise_rng = stats::substream(config.seed, "noise");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  d.y.resize(config.n);
  double positives = 0.0;
  for (std::size_t i = 0; i < config.n; ++i) {
    double eta = config.intercept + index(static_cast<Eigen::Index>(i));
    if (!group_effect.empty()) eta += group_effect[static_cast<std::size_t>(d.groups[i])];
    const double p = config.link == Link::Probit ? stats::norm_cdf(eta) : stats::logistic(eta);
    const double u = unif(noise_rng);
    d.y(static_cast<Eigen::Index>(i)) = u < p ? 1.0 : 0.0;
    positives += d.y(static_cast<Eigen::Index>(i));
  }

  d.truth.beta = config.beta;
  d.truth.intercept = config.intercept;
  d.truth.link = config.link;
  d.truth.group_sd = config.group_sd;
  d.truth.groups = config.groups;
  d.truth.seed = config.seed;
  d.truth.n = config.n;
  d.truth.k = config.k;
  d.truth.positive_rate = positives / static_cast<double>(config.n);
  return d;
}

inline void write_dataset_csv(const SynthData& d, const std::string& path) {
  csv::Writer w(path);
  std::vector<std::string> header = {"y"};
  for (const auto& n : d.names) header.push_back(n);
  header.push_back("group");
  w.row(header);
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    std::vector<std::string> row = {std::to_string(static_cast<int>(d.y(i)))};
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) row.push_back(ingest::format_double(d.X(i, j)));
    row.push_back(std::to_string(d.groups[static_cast<std::size_t>(i)]));
    w.row(row);
  }
}

// --- panel fixture -----------------------------------------------------------

struct FixtureConfig {
  std::size_t airports = 312;
  std::size_t out_of_range_pairs = 1334; // ordered pairs outside [100, 3000] miles
  int first_year = 2008;
  int years = 11;
  int base_year = 2007;
  std::string subject_carrier = "AZU";
  std::size_t served_pair_target = 2800; // directed pairs with any traffic
  std::size_t entry_pair_target = 400;   // pairs the subject enters in-sample
  std::uint64_t seed = 20080101;
};

struct FixtureFiles {
  std::string flights;
  std::string airports;
  std::string cities;
  std::string regions;
  std::string carriers;
  std::string truth;
};

struct FixtureTruth {
  std::size_t airports = 0;
  std::size_t enumerated_pairs = 0;
  std::size_t out_of_range_pairs = 0;
  std::size_t retained_pairs = 0;
  std::size_t years = 0;
  std::size_t expected_observations = 0;
};

namespace detail {

inline constexpr double miles_per_degree = 69.09341; // meridian arc at the fixture radius

// Clusters of airports placed within a few miles of a shared grid node
// produce the under-100-mile pairs; everything else stays in [100, 3000].
inline std::vector<std::size_t> triangular_decomposition(std::size_t target_unordered) {
  std::vector<std::size_t> clusters;
  std::size_t remaining = target_unordered;
  while (remaining > 0) {
    const auto m = static_cast<std::size_t>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(remaining))) / 2.0);
    const std::size_t size = std::max<std::size_t>(2, m);
    const std::size_t used = size * (size - 1) / 2;
    if (used > remaining) {
      clusters.push_back(2);
      remaining -= 1;
    } else {
      clusters.push_back(size);
      remaining -= used;
    }
  }
  return clusters;
}

} // namespace detail

// Emits an ingest-ready file set whose pair arithmetic matches the requested
// counts exactly.  The construction is verified by running the actual
// enumeration and distance filter before anything is written.
inline FixtureTruth make_panel_fixture(const FixtureConfig& config, const std::string& out_dir,
                                       FixtureFiles* files = nullptr) {
  namespace fs = std::filesystem;
  if (config.airports < 2) throw std::invalid_argument("fixture needs at least two airports");
  if (config.years < 1) throw std::invalid_argument("fixture needs at least one sample year");
  if (config.out_of_range_pairs % 2 != 0) {
    throw std::invalid_argument("out-of-range pair count must be even: distances are symmetric");
  }

  const std::size_t target_unordered = config.out_of_range_pairs / 2;
  std::vector<std::size_t> clusters;
  std::size_t clustered_airports = 0;
  if (target_unordered > 0) {
    clusters = detail::triangular_decomposition(target_unordered);
    for (auto m : clusters) clustered_airports += m;
    if (clustered_airports > config.airports) {
      throw std::invalid_argument("out-of-range pair count infeasible for this airport count");
    }
  }
  const std::size_t singles = config.airports - clustered_airports;
  const std::size_t nodes = singles + clusters.size();
  if (nodes < 1) throw std::invalid_argument("fixture produces no grid nodes");

  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(nodes))));
  const double cluster_radius_miles = 5.0;

  // widest grid step whose corner-to-corner distance stays under 3000 miles
  const auto corner_distance = [&](double step_deg) {
    const double half = 0.5 * static_cast<double>(side - 1) * step_deg;
    return panel::great_circle_miles({-half, 0.0},
                                     {half, static_cast<double>(side - 1) * step_deg});
  };
  double step_deg = 2.0;
  if (side > 1) {
    double lo = 0.0, hi = 12.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (corner_distance(mid) <= 3000.0 - 2.0 * cluster_radius_miles - 30.0) lo = mid;
      else hi = mid;
    }
    step_deg = lo;
    const double max_lat = 0.5 * static_cast<double>(side - 1) * step_deg;
    const double min_spacing =
        panel::great_circle_miles({max_lat, 0.0}, {max_lat, step_deg});
    if (min_spacing < 100.0 + 2.0 * cluster_radius_miles + 5.0) {
      throw std::invalid_argument("airport layout infeasible: grid too dense for the distance band");
    }
  }

  // --- place airports -------------------------------------------------------
  std::vector<ingest::AirportRecord> airports;
  airports.reserve(config.airports);
  auto attr_rng = stats::substream(config.seed, "airports");
  std::uniform_real_distribution<double> conn_share(0.0, 0.6);
  std::uniform_real_distribution<double> fee(80.0, 400.0);

  std::size_t next_code = 0;
  const auto add_airport = [&](double lat, double lon) {
    ingest::AirportRecord a;
    ++next_code;
    char code[8];
    std::snprintf(code, sizeof(code), "A%03zu", next_code);
    a.code = code;
    a.latitude = lat;
    a.longitude = lon;
    a.secondary = next_code == 1;
    a.slot_constrained = next_code >= 2 && next_code <= 5;
    a.subject_hub = next_code >= 6 && next_code <= 8;
    a.rival_conn_share = std::round(conn_share(attr_rng) * 1e4) / 1e4;
    a.landing_fee = std::round(fee(attr_rng) * 100.0) / 100.0;
    a.natl_pax_share = 0.0;
    airports.push_back(a);
  };

  const double lat0 = -0.5 * static_cast<double>(side - 1) * step_deg;
  std::size_t node = 0;
  const auto node_pos = [&](std::size_t idx) {
    const std::size_t r = idx / side;
    const std::size_t c = idx % side;
    return panel::LatLon{lat0 + static_cast<double>(r) * step_deg,
                         static_cast<double>(c) * step_deg};
  };
  const double radius_deg = cluster_radius_miles / detail::miles_per_degree;
  for (auto m : clusters) {
    const auto pos = node_pos(node++);
    for (std::size_t u = 0; u < m; ++u) {
      const double angle = 2.0 * M_PI * static_cast<double>(u) / static_cast<double>(m);
      const double lat = pos.lat + radius_deg * std::cos(angle);
      const double lon =
          pos.lon + radius_deg * std::sin(angle) / std::cos(pos.lat * M_PI / 180.0);
      add_airport(lat, lon);
    }
  }
  for (std::size_t s = 0; s < singles; ++s) {
    const auto pos = node_pos(node++);
    add_airport(pos.lat, pos.lon);
  }

  // --- verify the pair arithmetic before writing anything --------------------
  const auto pairs = panel::enumerate_pairs(airports);
  const auto filtered = panel::apply_distance_filter(pairs, 100.0, 3000.0);
  if (filtered.discarded != config.out_of_range_pairs) {
    throw std::invalid_argument("fixture verification failed: " +
                                std::to_string(filtered.discarded) +
                                " out-of-range pairs, requested " +
                                std::to_string(config.out_of_range_pairs));
  }

  // --- carriers, regions, cities ---------------------------------------------
  ingest::CarrierTable carriers;
  carriers["LAT"] = ingest::CarrierClass::FscMajor;
  carriers["GOL"] = ingest::CarrierClass::LccMajor;
  carriers["WEB"] = ingest::CarrierClass::Lcc;
  carriers["REG"] = ingest::CarrierClass::Regional;
  carriers["BKR"] = ingest::CarrierClass::Bankrupt;
  carriers[config.subject_carrier] = ingest::CarrierClass::Lcc;

  ingest::AirportRegionMap regions;
  for (const auto& a : airports) regions[a.code] = "R" + a.code.substr(1);

  const int last_year = config.first_year + config.years - 1;
  std::vector<ingest::CityAttributeRecord> cities;
  auto city_rng = stats::substream(config.seed, "cities");
  std::uniform_real_distribution<double> pop(5e4, 5e6);
  std::uniform_real_distribution<double> inc(8e3, 4e4);
  std::uniform_real_distribution<double> unempl(0.05, 0.30);
  std::uniform_real_distribution<double> vac(0.01, 0.20);
  std::uniform_real_distribution<double> drift(0.98, 1.02);
  for (const auto& a : airports) {
    double p = pop(city_rng), i = inc(city_rng), u = unempl(city_rng), v = vac(city_rng);
    for (int year = config.base_year; year <= last_year; ++year) {
      ingest::CityAttributeRecord c;
      c.region = regions[a.code];
      c.year = year;
      c.population = std::round(p);
      c.income = std::round(i * 100.0) / 100.0;
      c.unemployment = std::round(std::clamp(u, 0.01, 0.95) * 1e4) / 1e4;
      c.tourism = std::round(std::clamp(v, 0.005, 0.90) * 1e4) / 1e4;
      cities.push_back(c);
      p *= drift(city_rng);
      i *= drift(city_rng);
    }
  }

  // --- traffic -----------------------------------------------------------------
  auto traffic_rng = stats::substream(config.seed, "traffic");
  std::vector<ingest::FlightRecord> flights;
  const std::vector<std::string> rivals = {"LAT", "GOL", "WEB", "REG", "BKR"};
  std::uniform_int_distribution<std::size_t> pick_pair(0, filtered.retained.size() - 1);
  std::uniform_int_distribution<int> pick_rivals(1, 3);
  std::uniform_int_distribution<std::size_t> pick_rival(0, rivals.size() - 1);
  std::uniform_int_distribution<long long> rival_pax(500, 200000);
  std::uniform_int_distribution<long long> subject_pax(1000, 80000);
  std::uniform_int_distribution<int> pick_year(config.first_year, last_year);
  std::bernoulli_distribution base_presence(0.5);
  std::bernoulli_distribution active_year(0.8);

  std::set<std::size_t> served;
  const std::size_t served_target = std::min(config.served_pair_target, filtered.retained.size());
  while (served.size() < served_target) served.insert(pick_pair(traffic_rng));

  for (auto idx : served) {
    const auto& pr = filtered.retained[idx];
    const int n_rivals = pick_rivals(traffic_rng);
    std::set<std::string> on_route;
    for (int r = 0; r < n_rivals; ++r) on_route.insert(rivals[pick_rival(traffic_rng)]);
    const bool in_base = base_presence(traffic_rng);
    for (const auto& carrier : on_route) {
      for (int year = config.base_year; year <= last_year; ++year) {
        if (year == config.base_year && !in_base) continue;
        if (!active_year(traffic_rng)) continue;
        flights.push_back({year, pr.origin, pr.destination, carrier, rival_pax(traffic_rng)});
      }
    }
  }

  // subject entries: a block of served pairs gets a start year in-sample
  std::vector<std::size_t> served_list(served.begin(), served.end());
  std::uniform_int_distribution<std::size_t> pick_served(0, served_list.size() - 1);
  std::set<std::size_t> entry_pairs;
  const std::size_t entry_target = std::min(config.entry_pair_target, served_list.size() / 2);
  while (entry_pairs.size() < entry_target) entry_pairs.insert(served_list[pick_served(traffic_rng)]);
  for (auto idx : entry_pairs) {
    const auto& pr = filtered.retained[idx];
    const int start = pick_year(traffic_rng);
    for (int year = start; year <= last_year; ++year) {
      if (year > start && !active_year(traffic_rng)) continue;
      flights.push_back({year, pr.origin, pr.destination, config.subject_carrier,
                         subject_pax(traffic_rng)});
    }
  }
  // a handful of pairs where the subject already operated in the base year
  std::size_t base_active_added = 0;
  for (auto idx : served_list) {
    if (entry_pairs.count(idx)) continue;
    const auto& pr = filtered.retained[idx];
    for (int year = config.base_year; year <= last_year; ++year) {
      flights.push_back({year, pr.origin, pr.destination, config.subject_carrier,
                         subject_pax(traffic_rng)});
    }
    if (++base_active_added >= 30) break;
  }

  std::sort(flights.begin(), flights.end(), [](const auto& a, const auto& b) {
    return std::tie(a.year, a.origin, a.destination, a.carrier) <
           std::tie(b.year, b.origin, b.destination, b.carrier);
  });

  // --- write -------------------------------------------------------------------
  fs::create_directories(out_dir);
  FixtureFiles out;
  out.flights = (fs::path(out_dir) / "flights.csv").string();
  out.airports = (fs::path(out_dir) / "airports.csv").string();
  out.cities = (fs::path(out_dir) / "cities.csv").string();
  out.regions = (fs::path(out_dir) / "airport_regions.csv").string();
  out.carriers = (fs::path(out_dir) / "carriers.csv").string();
  out.truth = (fs::path(out_dir) / "truth.json").string();
  ingest::write_flights(out.flights, flights);
  ingest::write_airports(out.airports, airports);
  ingest::write_cities(out.cities, cities);
  ingest::write_airport_regions(out.regions, regions);
  ingest::write_carriers(out.carriers, carriers);

  FixtureTruth truth;
  truth.airports = config.airports;
  truth.enumerated_pairs = pairs.size();
  truth.out_of_range_pairs = filtered.discarded;
  truth.retained_pairs = filtered.retained.size();
  truth.years = static_cast<std::size_t>(config.years);
  truth.expected_observations = truth.retained_pairs * truth.years;

  nlohmann::ordered_json j;
  j["airports"] = truth.airports;
  j["enumerated_pairs"] = truth.enumerated_pairs;
  j["out_of_range_pairs"] = truth.out_of_range_pairs;
  j["retained_pairs"] = truth.retained_pairs;
  j["years"] = truth.years;
  j["expected_observations"] = truth.expected_observations;
  j["first_year"] = config.first_year;
  j["last_year"] = last_year;
  j["base_year"] = config.base_year;
  j["subject_carrier"] = config.subject_carrier;
  j["seed"] = config.seed;
  std::ofstream tf(out.truth);
  tf << j.dump(2) << "\n";

  if (files) *files = out;
  return truth;
}

} // namespace routeentry::synth
