#pragma once

#include "routeentry/errors.hpp"
#include "routeentry/ingest.hpp"
#include "routeentry/model_spec.hpp"
#include "routeentry/panel.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace routeentry::covariates {

// Herfindahl-Hirschman index from market shares summing to one.
inline double hhi(const std::vector<double>& shares) {
  double sum = 0.0;
  double sq = 0.0;
  bool any_positive = false;
  for (double s : shares) {
    if (s < 0.0) throw std::invalid_argument("hhi: negative share");
    if (s > 0.0) any_positive = true;
    sum += s;
    sq += s * s;
  }
  if (!any_positive) throw std::invalid_argument("hhi: all shares are zero");
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("hhi: shares do not sum to one");
  return sq;
}

inline double geometric_mean(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("geometric_mean: inputs must be positive (missing or corrupt data)");
  }
  return std::sqrt(a * b);
}

// Mutually exclusive distance-band dummies over [300,600), [600,900),
// [900,1200), [1200,1500), [1500,3000].  The base case [100,300) sets none.
// The top band is closed at 3000 because the distance filter retains it.
inline std::array<int, 5> distance_buckets(double miles) {
  if (miles < 100.0 || miles > 3000.0) {
    throw std::invalid_argument("distance_buckets: distance outside [100, 3000]");
  }
  std::array<int, 5> d{0, 0, 0, 0, 0};
  if (miles < 300.0) return d;
  if (miles < 600.0) d[0] = 1;
  else if (miles < 900.0) d[1] = 1;
  else if (miles < 1200.0) d[2] = 1;
  else if (miles < 1500.0) d[3] = 1;
  else d[4] = 1;
  return d;
}

struct NetworkEconomies {
  double netwec = 0.0;
  double max_cities = 0.0;
  double min_cities = 0.0;
  int zero_presence = 0;
};

// Endpoint counts are the number of routes the subject carrier operates out
// of each endpoint airport.
inline NetworkEconomies network_economies(double origin_routes, double destination_routes) {
  NetworkEconomies out;
  out.netwec = origin_routes + destination_routes;
  out.max_cities = std::max(origin_routes, destination_routes);
  out.min_cities = std::min(origin_routes, destination_routes);
  out.zero_presence = (origin_routes == 0.0 && destination_routes == 0.0) ? 1 : 0;
  return out;
}

struct ConcentrationFlags {
  int nonhub = 0; // some endpoint holds under 0.25% of national traffic
  int big = 0;    // the more concentrated endpoint moves >= 1,000,000 passengers
  int medsma = 0; // the less concentrated endpoint moves < 1,000,000 passengers
};

inline ConcentrationFlags concentration_flags(double share_origin, double share_destination,
                                              double pax_origin, double pax_destination,
                                              double hhi_origin, double hhi_destination) {
  ConcentrationFlags f;
  f.nonhub = std::min(share_origin, share_destination) < 0.0025 ? 1 : 0;
  const bool origin_more_concentrated = hhi_origin >= hhi_destination;
  const double pax_more = origin_more_concentrated ? pax_origin : pax_destination;
  const double pax_less = origin_more_concentrated ? pax_destination : pax_origin;
  f.big = pax_more >= 1'000'000.0 ? 1 : 0;
  f.medsma = pax_less < 1'000'000.0 ? 1 : 0;
  return f;
}

struct CatalogOptions {
  int base_year = 2007;
  std::string subject_carrier;
  int bankruptcy_year = 2018;
  bool huboth_dummy = false;        // continuous rival connecting share by default
  double huboth_dummy_cutoff = 0.25;
};

// Variables held at their base-year values to sidestep post-entry feedback.
inline const std::vector<std::string>& frozen_variable_names() {
  static const std::vector<std::string> names = {"PAX",    "HHI",    "MAXHHI", "MINHHI",
                                                 "FSCMAJ", "LCCMAJ", "LCCCOMP", "REGSMA"};
  return names;
}

inline bool is_frozen(const std::string& name) {
  for (const auto& n : frozen_variable_names())
    if (n == name) return true;
  return false;
}

inline const std::vector<std::string>& catalog_variable_names() {
  static const std::vector<std::string> names = {
      "PAX",      "DIST",     "DIST_SQ",  "DIST300",  "DIST600",  "DIST900", "DIST1200",
      "DIST1500", "POP",      "INC",      "UNEMPL",   "VACATION", "SECND",   "SLOT",
      "FEE",      "NETWEC",   "MAXAZCIT", "MINAZCIT", "ZERAZCIT", "AZSHCON", "HUB",
      "HUBOTH",   "NONHUB",   "HHI",      "MAXHHI",   "MINHHI",   "LCCCOMP", "BANKR",
      "MININC",   "MAXINC",   "EXIST",    "NEW",      "FSCMAJ",   "LCCMAJ",  "REGSMA",
      "BIG",      "MEDSMA",   "TREND",    "MAXHHI_X_NONHUB", "MAXHHI_X_MEDSMA",
      "MAXHHI_X_BIG", "TREND_X_DIST", "TREND_X_HUB", "TREND_X_SECND", "TREND_X_NEW"};
  return names;
}

class CovariateCatalog {
public:
  std::size_t n_obs = 0;

  const std::vector<double>& column(const std::string& name) const {
    auto it = columns_.find(name);
    if (it == columns_.end()) throw io_error("unknown covariate '" + name + "'");
    return it->second;
  }

  bool has(const std::string& name) const { return columns_.count(name) > 0; }

  std::vector<double>& emplace(const std::string& name) {
    auto& col = columns_[name];
    col.assign(n_obs, 0.0);
    return col;
  }

  std::vector<double>& mutable_column(const std::string& name) {
    auto it = columns_.find(name);
    if (it == columns_.end()) throw io_error("unknown covariate '" + name + "'");
    return it->second;
  }

  void export_csv(const panel::Panel& p, const std::string& path) const {
    csv::Writer w(path);
    std::vector<std::string> header = {"origin", "destination", "year", "az"};
    for (const auto& name : catalog_variable_names()) header.push_back(name);
    w.row(header);
    const std::size_t years = p.n_years();
    std::vector<const std::vector<double>*> cols;
    for (const auto& name : catalog_variable_names()) cols.push_back(&column(name));
    for (std::size_t k = 0; k < p.pairs.size(); ++k) {
      for (std::size_t t = 0; t < years; ++t) {
        const std::size_t obs = k * years + t;
        if (p.censored[obs]) continue;
        std::vector<std::string> row = {p.pairs[k].origin, p.pairs[k].destination,
                                        std::to_string(p.window.first + static_cast<int>(t)),
                                        std::to_string(p.az[obs])};
        for (const auto* col : cols) row.push_back(ingest::format_double((*col)[obs]));
        w.row(row);
      }
    }
  }

private:
  std::unordered_map<std::string, std::vector<double>> columns_;
};

namespace detail {

struct AirportBaseStats {
  double pax_total = 0.0;   // arrivals plus departures in the base year
  double hhi = 0.0;         // carrier concentration, zero when idle
  double natl_share = 0.0;
};

struct PairBaseStats {
  double pax = 0.0;
  double hhi = 0.0;
  bool fsc_major = false;
  bool lcc_major = false;
  bool lcc_any = false;
  bool regional = false;
};

inline std::string pair_key(const std::string& o, const std::string& d) { return o + "\x1f" + d; }

} // namespace detail

// Computes every catalog column for the panel.  `flights` must cover both
// the sample window and the base year; carrier-level and airport-level
// base-year aggregates are derived from it.
inline CovariateCatalog build_catalog(const panel::Panel& p,
                                      const std::vector<ingest::FlightRecord>& flights,
                                      const std::vector<ingest::AirportRecord>& airports,
                                      const std::vector<ingest::CityAttributeRecord>& cities,
                                      const ingest::AirportRegionMap& regions,
                                      const ingest::CarrierTable& carriers,
                                      const CatalogOptions& options) {
  if (options.subject_carrier.empty()) throw io_error("catalog options: subject carrier not set");

  std::unordered_map<std::string, const ingest::AirportRecord*> airport_by_code;
  for (const auto& a : airports) airport_by_code[a.code] = &a;

  std::map<std::pair<std::string, int>, const ingest::CityAttributeRecord*> city_by_region_year;
  for (const auto& c : cities) city_by_region_year[{c.region, c.year}] = &c;

  const auto city_row = [&](const std::string& airport, int year) {
    const auto rit = regions.find(airport);
    if (rit == regions.end()) throw io_error("airport '" + airport + "' missing from region map");
    const auto cit = city_by_region_year.find({rit->second, year});
    if (cit == city_by_region_year.end()) {
      throw io_error("no city attributes for region '" + rit->second + "' in year " +
                     std::to_string(year));
    }
    return cit->second;
  };

  const auto carrier_class = [&](const std::string& code) {
    const auto it = carriers.find(code);
    return it == carriers.end() ? ingest::CarrierClass::Other : it->second;
  };

  // --- base-year aggregates -------------------------------------------------
  std::unordered_map<std::string, detail::PairBaseStats> pair_base;
  std::unordered_map<std::string, std::unordered_map<std::string, double>> airport_carrier_base;
  std::unordered_map<std::string, detail::AirportBaseStats> airport_base;
  double national_base_total = 0.0;

  // subject network per year: departures out of each airport
  std::unordered_map<int, std::unordered_map<std::string, std::vector<std::pair<std::string, double>>>>
      subject_network;
  // directed pair traffic per year, all carriers
  std::unordered_map<std::string, double> pair_year_pax;

  const auto pair_year_key = [](const std::string& o, const std::string& d, int year) {
    return o + "\x1f" + d + "\x1f" + std::to_string(year);
  };

  std::unordered_map<std::string, std::map<std::string, double>> pair_base_carrier_pax;

  for (const auto& f : flights) {
    if (f.passengers <= 0) continue;
    if (f.year == options.base_year) {
      const auto key = detail::pair_key(f.origin, f.destination);
      pair_base_carrier_pax[key][f.carrier] += static_cast<double>(f.passengers);
      airport_carrier_base[f.origin][f.carrier] += static_cast<double>(f.passengers);
      airport_carrier_base[f.destination][f.carrier] += static_cast<double>(f.passengers);
      national_base_total += 2.0 * static_cast<double>(f.passengers);
    }
    if (f.carrier == options.subject_carrier) {
      subject_network[f.year][f.origin].emplace_back(f.destination,
                                                     static_cast<double>(f.passengers));
    }
    pair_year_pax[pair_year_key(f.origin, f.destination, f.year)] +=
        static_cast<double>(f.passengers);
  }

  for (const auto& [key, carrier_pax] : pair_base_carrier_pax) {
    detail::PairBaseStats stats;
    double total = 0.0;
    for (const auto& [carrier, pax] : carrier_pax) total += pax;
    stats.pax = total;
    double sq = 0.0;
    for (const auto& [carrier, pax] : carrier_pax) {
      const double share = pax / total;
      sq += share * share;
      switch (carrier_class(carrier)) {
        case ingest::CarrierClass::FscMajor: stats.fsc_major = true; break;
        case ingest::CarrierClass::LccMajor:
          stats.lcc_major = true;
          stats.lcc_any = true;
          break;
        case ingest::CarrierClass::Lcc: stats.lcc_any = true; break;
        case ingest::CarrierClass::Regional: stats.regional = true; break;
        default: break;
      }
    }
    stats.hhi = sq;
    pair_base[key] = stats;
  }

  if (national_base_total <= 0.0) {
    throw io_error("base year " + std::to_string(options.base_year) +
                   " has zero national traffic; airport shares are undefined");
  }
  for (const auto& [code, carrier_pax] : airport_carrier_base) {
    detail::AirportBaseStats stats;
    for (const auto& [carrier, pax] : carrier_pax) stats.pax_total += pax;
    double sq = 0.0;
    for (const auto& [carrier, pax] : carrier_pax) {
      const double share = pax / stats.pax_total;
      sq += share * share;
    }
    stats.hhi = sq;
    stats.natl_share = stats.pax_total / national_base_total;
    airport_base[code] = stats;
  }

  const std::size_t years = p.n_years();
  CovariateCatalog cat;
  cat.n_obs = p.n_obs();
  for (const auto& name : catalog_variable_names()) cat.emplace(name);

  const auto set = [&cat](const std::string& name) -> std::vector<double>& {
    return cat.mutable_column(name);
  };

  auto& c_pax = set("PAX");
  auto& c_dist = set("DIST");
  auto& c_dist_sq = set("DIST_SQ");
  std::array<std::vector<double>*, 5> c_buckets = {&set("DIST300"), &set("DIST600"),
                                                   &set("DIST900"), &set("DIST1200"),
                                                   &set("DIST1500")};
  auto& c_pop = set("POP");
  auto& c_inc = set("INC");
  auto& c_unempl = set("UNEMPL");
  auto& c_vacation = set("VACATION");
  auto& c_secnd = set("SECND");
  auto& c_slot = set("SLOT");
  auto& c_fee = set("FEE");
  auto& c_netwec = set("NETWEC");
  auto& c_maxazcit = set("MAXAZCIT");
  auto& c_minazcit = set("MINAZCIT");
  auto& c_zerazcit = set("ZERAZCIT");
  auto& c_azshcon = set("AZSHCON");
  auto& c_hub = set("HUB");
  auto& c_huboth = set("HUBOTH");
  auto& c_nonhub = set("NONHUB");
  auto& c_hhi = set("HHI");
  auto& c_maxhhi = set("MAXHHI");
  auto& c_minhhi = set("MINHHI");
  auto& c_lcccomp = set("LCCCOMP");
  auto& c_bankr = set("BANKR");
  auto& c_mininc = set("MININC");
  auto& c_maxinc = set("MAXINC");
  auto& c_exist = set("EXIST");
  auto& c_new = set("NEW");
  auto& c_fscmaj = set("FSCMAJ");
  auto& c_lccmaj = set("LCCMAJ");
  auto& c_regsma = set("REGSMA");
  auto& c_big = set("BIG");
  auto& c_medsma = set("MEDSMA");
  auto& c_trend = set("TREND");
  auto& c_maxhhi_nonhub = set("MAXHHI_X_NONHUB");
  auto& c_maxhhi_medsma = set("MAXHHI_X_MEDSMA");
  auto& c_maxhhi_big = set("MAXHHI_X_BIG");
  auto& c_trend_dist = set("TREND_X_DIST");
  auto& c_trend_hub = set("TREND_X_HUB");
  auto& c_trend_secnd = set("TREND_X_SECND");
  auto& c_trend_new = set("TREND_X_NEW");

  for (std::size_t k = 0; k < p.pairs.size(); ++k) {
    const auto& pr = p.pairs[k];
    const auto oit = airport_by_code.find(pr.origin);
    const auto dit = airport_by_code.find(pr.destination);
    if (oit == airport_by_code.end() || dit == airport_by_code.end()) {
      throw io_error("panel pair references airport missing from the airport table");
    }
    const auto& ao = *oit->second;
    const auto& ad = *dit->second;

    const auto key = detail::pair_key(pr.origin, pr.destination);
    const auto pbit = pair_base.find(key);
    const bool served_base = pbit != pair_base.end();
    const detail::PairBaseStats pb = served_base ? pbit->second : detail::PairBaseStats{};

    detail::AirportBaseStats ab_o;
    detail::AirportBaseStats ab_d;
    if (const auto it = airport_base.find(pr.origin); it != airport_base.end()) ab_o = it->second;
    if (const auto it = airport_base.find(pr.destination); it != airport_base.end()) ab_d = it->second;

    const ConcentrationFlags flags = concentration_flags(ab_o.natl_share, ab_d.natl_share,
                                                         ab_o.pax_total, ab_d.pax_total, ab_o.hhi,
                                                         ab_d.hhi);

    const double dist100 = pr.distance_miles / 100.0;
    const auto buckets = distance_buckets(pr.distance_miles);
    const double pax_frozen = std::log1p(pb.pax);
    const double maxhhi = std::max(ab_o.hhi, ab_d.hhi);
    const double minhhi = std::min(ab_o.hhi, ab_d.hhi);
    const double secnd = (ao.secondary || ad.secondary) ? 1.0 : 0.0;
    const double slot = (ao.slot_constrained || ad.slot_constrained) ? 1.0 : 0.0;
    const double hub = (ao.subject_hub || ad.subject_hub) ? 1.0 : 0.0;
    double huboth = std::max(ao.rival_conn_share, ad.rival_conn_share);
    if (options.huboth_dummy) huboth = huboth >= options.huboth_dummy_cutoff ? 1.0 : 0.0;
    const double fee =
        flags.big ? std::log(geometric_mean(ao.landing_fee, ad.landing_fee)) : 0.0;

    for (std::size_t t = 0; t < years; ++t) {
      const int year = p.window.first + static_cast<int>(t);
      const std::size_t obs = k * years + t;

      c_pax[obs] = pax_frozen;
      c_dist[obs] = dist100;
      c_dist_sq[obs] = dist100 * dist100;
      for (int b = 0; b < 5; ++b) (*c_buckets[b])[obs] = buckets[b];

      const auto* city_o = city_row(pr.origin, year);
      const auto* city_d = city_row(pr.destination, year);
      c_pop[obs] = std::log(geometric_mean(city_o->population / 1e4, city_d->population / 1e4));
      c_inc[obs] = std::log(geometric_mean(city_o->income, city_d->income));
      c_unempl[obs] = geometric_mean(city_o->unemployment, city_d->unemployment);
      c_vacation[obs] = geometric_mean(city_o->tourism, city_d->tourism);
      c_mininc[obs] = std::log(std::min(city_o->income, city_d->income));
      c_maxinc[obs] = std::log(std::max(city_o->income, city_d->income));

      c_secnd[obs] = secnd;
      c_slot[obs] = slot;
      c_hub[obs] = hub;
      c_huboth[obs] = huboth;
      c_fee[obs] = fee;

      // subject network in the preceding year; the base year backs the first
      const int lag_year = year == p.window.first ? options.base_year : year - 1;
      double routes_o = 0.0, routes_d = 0.0;
      double conn_proxy = 0.0;
      const auto nit = subject_network.find(lag_year);
      if (nit != subject_network.end()) {
        const auto oit2 = nit->second.find(pr.origin);
        const auto dit2 = nit->second.find(pr.destination);
        if (oit2 != nit->second.end()) routes_o = static_cast<double>(oit2->second.size());
        if (dit2 != nit->second.end()) routes_d = static_cast<double>(dit2->second.size());
        // one-stop flow bound through the subject's network: passengers the
        // subject could connect between the endpoints via some middle airport
        if (oit2 != nit->second.end()) {
          for (const auto& [mid, pax_om] : oit2->second) {
            if (mid == pr.destination) continue;
            const auto mit = nit->second.find(mid);
            if (mit == nit->second.end()) continue;
            for (const auto& [dest, pax_md] : mit->second) {
              if (dest == pr.destination) conn_proxy += std::min(pax_om, pax_md);
            }
          }
        }
      }
      const NetworkEconomies net = network_economies(routes_o, routes_d);
      c_netwec[obs] = net.netwec;
      c_maxazcit[obs] = net.max_cities;
      c_minazcit[obs] = net.min_cities;
      c_zerazcit[obs] = net.zero_presence;

      // the subject's share of connecting traffic on the pair, proxied by the
      // lagged one-stop flow over the lagged nonstop total; zero without any
      // connecting presence
      if (conn_proxy > 0.0) {
        const auto pyit = pair_year_pax.find(pair_year_key(pr.origin, pr.destination, lag_year));
        const double nonstop = pyit != pair_year_pax.end() ? pyit->second : 0.0;
        c_azshcon[obs] = conn_proxy / (nonstop + conn_proxy);
      } else {
        c_azshcon[obs] = 0.0;
      }

      c_nonhub[obs] = flags.nonhub;
      c_big[obs] = flags.big;
      c_medsma[obs] = flags.medsma;
      c_hhi[obs] = pb.hhi;
      c_maxhhi[obs] = maxhhi;
      c_minhhi[obs] = minhhi;
      c_lcccomp[obs] = pb.lcc_any ? 1.0 : 0.0;
      c_fscmaj[obs] = pb.fsc_major ? 1.0 : 0.0;
      c_lccmaj[obs] = pb.lcc_major ? 1.0 : 0.0;
      c_regsma[obs] = pb.regional ? 1.0 : 0.0;

      double bankr = 0.0;
      if (year == options.bankruptcy_year) {
        if (const auto* cell = p.traffic_cell(k, year)) {
          for (const auto& [carrier, pax] : cell->carriers) {
            if (pax > 0 && carrier_class(carrier) == ingest::CarrierClass::Bankrupt) {
              bankr = 1.0;
              break;
            }
          }
        }
      }
      c_bankr[obs] = bankr;

      c_exist[obs] = p.exist[obs];
      c_new[obs] = 1.0 - static_cast<double>(p.exist[obs]);

      const double trend = static_cast<double>(year - p.window.first + 1);
      c_trend[obs] = trend;
      c_maxhhi_nonhub[obs] = maxhhi * flags.nonhub;
      c_maxhhi_medsma[obs] = maxhhi * flags.medsma;
      c_maxhhi_big[obs] = maxhhi * flags.big;
      c_trend_dist[obs] = trend * dist100;
      c_trend_hub[obs] = trend * hub;
      c_trend_secnd[obs] = trend * secnd;
      c_trend_new[obs] = trend * c_new[obs];
    }
  }
  return cat;
}

struct DroppedColumn {
  std::string name;
  std::string reason;
  double diagnostic = 0.0;
};

struct DesignMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::int32_t> clusters;  // airport-pair index per row
  std::vector<std::size_t> row_obs;    // panel observation per row
  std::vector<DroppedColumn> dropped;
  std::size_t requested_columns = 0;
};

// Builds the estimation matrix for one model spec: filters the sample,
// stacks the requested columns in order, and prunes rank-deficient columns
// with a pivoted QR at relative threshold 1e-10.
inline DesignMatrix assemble_design(const panel::Panel& p, const CovariateCatalog& cat,
                                    const model::ModelSpec& spec) {
  spec.validate();
  const std::size_t years = p.n_years();

  std::vector<std::size_t> rows;
  rows.reserve(p.n_obs());
  for (std::size_t k = 0; k < p.pairs.size(); ++k) {
    for (std::size_t t = 0; t < years; ++t) {
      const std::size_t obs = k * years + t;
      if (p.censored[obs]) continue;
      const int year = p.window.first + static_cast<int>(t);
      if (spec.first_year && year < *spec.first_year) continue;
      if (spec.last_year && year > *spec.last_year) continue;
      if (spec.subset == model::Subset::Exist && !p.exist[obs]) continue;
      if (spec.subset == model::Subset::New && p.exist[obs]) continue;
      rows.push_back(obs);
    }
  }
  if (rows.empty()) throw io_error("model spec '" + spec.name + "': sub-sample filter removed all rows");

  std::vector<std::string> names;
  if (spec.intercept) names.push_back("CONST");
  for (const auto& v : spec.variables) names.push_back(v);

  const std::size_t n = rows.size();
  Eigen::MatrixXd full(n, names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == "CONST" && spec.intercept && j == 0) {
      full.col(j).setOnes();
      continue;
    }
    const auto& col = cat.column(names[j]); // throws on unknown variable
    for (std::size_t i = 0; i < n; ++i) full(static_cast<Eigen::Index>(i), j) = col[rows[i]];
  }

  DesignMatrix out;
  out.requested_columns = spec.variables.size();

  // all-zero columns first, so they get a precise reason
  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (full.col(j).cwiseAbs().maxCoeff() == 0.0) {
      out.dropped.push_back({names[j], "all zero in sub-sample", 0.0});
    } else {
      candidates.push_back(j);
    }
  }

  std::vector<std::size_t> retained = candidates;
  if (!candidates.empty()) {
    Eigen::MatrixXd sub(n, candidates.size());
    for (std::size_t j = 0; j < candidates.size(); ++j) sub.col(j) = full.col(candidates[j]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    if (rank < static_cast<Eigen::Index>(candidates.size())) {
      const auto perm = qr.colsPermutation().indices();
      const double pivot0 = std::abs(qr.matrixR()(0, 0));
      std::vector<bool> keep(candidates.size(), false);
      for (Eigen::Index r = 0; r < rank; ++r) keep[perm(r)] = true;
      retained.clear();
      for (std::size_t j = 0; j < candidates.size(); ++j) {
        if (keep[j]) {
          retained.push_back(candidates[j]);
        } else {
          Eigen::Index pos = 0;
          for (Eigen::Index r = 0; r < perm.size(); ++r)
            if (perm(r) == static_cast<Eigen::Index>(j)) pos = r;
          const double pivot =
              pos < qr.matrixR().rows() ? std::abs(qr.matrixR()(pos, pos)) : 0.0;
          out.dropped.push_back(
              {names[candidates[j]], "collinear with retained columns", pivot / pivot0});
        }
      }
    }
  }

  out.names.reserve(retained.size());
  out.X.resize(n, retained.size());
  for (std::size_t j = 0; j < retained.size(); ++j) {
    out.names.push_back(names[retained[j]]);
    out.X.col(static_cast<Eigen::Index>(j)) = full.col(retained[j]);
  }
  out.y.resize(n);
  out.clusters.resize(n);
  out.row_obs = rows;
  for (std::size_t i = 0; i < n; ++i) {
    out.y(static_cast<Eigen::Index>(i)) = p.az[rows[i]];
    out.clusters[i] = static_cast<std::int32_t>(rows[i] / years);
  }
  if (!out.X.allFinite()) {
    throw io_error("model spec '" + spec.name + "': design matrix contains non-finite entries");
  }
  return out;
}

} // namespace routeentry::covariates
