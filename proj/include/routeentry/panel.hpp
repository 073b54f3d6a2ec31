#pragma once

#include "routeentry/errors.hpp"
#include "routeentry/ingest.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace routeentry::panel {

inline constexpr double earth_radius_miles = 3958.7613;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

// Haversine great-circle distance in statute miles.
inline double great_circle_miles(const LatLon& a, const LatLon& b) {
  const double rad = M_PI / 180.0;
  const double dlat = (b.lat - a.lat) * rad;
  const double dlon = (b.lon - a.lon) * rad;
  const double sl = std::sin(0.5 * dlat);
  const double so = std::sin(0.5 * dlon);
  double h = sl * sl + std::cos(a.lat * rad) * std::cos(b.lat * rad) * so * so;
  h = std::clamp(h, 0.0, 1.0);
  return earth_radius_miles * 2.0 * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

struct AirportPair {
  std::string origin;
  std::string destination;
  double distance_miles = 0.0;
};

// All ordered pairs (n*(n-1)), sorted by (origin, destination).
inline std::vector<AirportPair> enumerate_pairs(const std::vector<ingest::AirportRecord>& airports) {
  if (airports.size() < 2) throw io_error("need at least two airports to enumerate pairs");
  std::vector<const ingest::AirportRecord*> sorted;
  sorted.reserve(airports.size());
  for (const auto& a : airports) sorted.push_back(&a);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->code < b->code; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->code == sorted[i - 1]->code) {
      throw io_error("duplicate airport code '" + sorted[i]->code + "'");
    }
  }
  const std::size_t n = sorted.size();
  // upper-triangle distance cache, mirrored for the reverse direction
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = great_circle_miles({sorted[i]->latitude, sorted[i]->longitude},
                                          {sorted[j]->latitude, sorted[j]->longitude});
      dist[i * n + j] = d;
      dist[j * n + i] = d;
    }
  }
  std::vector<AirportPair> pairs;
  pairs.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      pairs.push_back({sorted[i]->code, sorted[j]->code, dist[i * n + j]});
    }
  }
  return pairs;
}

struct FilterResult {
  std::vector<AirportPair> retained;
  std::size_t discarded = 0;
};

// Keeps the closed interval [lo, hi].
inline FilterResult apply_distance_filter(const std::vector<AirportPair>& pairs, double lo,
                                          double hi) {
  if (!(lo < hi)) throw std::invalid_argument("distance filter requires lo < hi");
  FilterResult out;
  out.retained.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.distance_miles >= lo && p.distance_miles <= hi) {
      out.retained.push_back(p);
    } else {
      ++out.discarded;
    }
  }
  return out;
}

struct PanelMeta {
  std::size_t airports = 0;
  std::size_t enumerated_pairs = 0;
  std::size_t discarded_pairs = 0;
  std::size_t retained_pairs = 0;
  int first_year = 0;
  int last_year = 0;
  std::size_t years = 0;
  std::size_t observations = 0;
  std::size_t entries = 0;
  std::size_t exist_pairs = 0;
  std::size_t censored = 0;
  std::size_t bef_observations = 0;
  std::size_t aft_observations = 0;
};

inline nlohmann::ordered_json meta_to_json(const PanelMeta& m) {
  nlohmann::ordered_json j;
  j["airports"] = m.airports;
  j["enumerated_pairs"] = m.enumerated_pairs;
  j["discarded_pairs"] = m.discarded_pairs;
  j["retained_pairs"] = m.retained_pairs;
  j["first_year"] = m.first_year;
  j["last_year"] = m.last_year;
  j["years"] = m.years;
  j["observations"] = m.observations;
  j["entries"] = m.entries;
  j["exist_pairs"] = m.exist_pairs;
  j["censored"] = m.censored;
  if (m.bef_observations || m.aft_observations) {
    j["bef_observations"] = m.bef_observations;
    j["aft_observations"] = m.aft_observations;
  }
  return j;
}

// Carrier-level passenger totals for one (pair, year).
struct TrafficCell {
  std::vector<std::pair<std::string, long long>> carriers; // sorted by carrier
  long long total = 0;
  long long carrier_pax(const std::string& code) const {
    for (const auto& [c, pax] : carriers)
      if (c == code) return pax;
    return 0;
  }
};

// Balanced directional pair-by-year panel.  Observations are stored in
// (origin, destination, year) order: obs = pair_index * years + year_offset.
class Panel {
public:
  std::vector<AirportPair> pairs;
  ingest::YearRange window;
  PanelMeta meta;

  std::vector<std::uint8_t> az;              // entry outcome
  std::vector<std::uint8_t> exist;           // pair served in the base year
  std::vector<std::uint8_t> subject_active;  // subject carrier present this year
  std::vector<std::uint8_t> censored;        // excluded from the risk set
  std::vector<long long> total_pax;
  std::vector<long long> subject_pax;

  // traffic detail only for served observations
  std::unordered_map<std::uint64_t, TrafficCell> traffic;

  std::size_t n_years() const { return static_cast<std::size_t>(window.size()); }
  std::size_t n_obs() const { return pairs.size() * n_years(); }

  std::size_t obs_index(std::size_t pair_idx, int year) const {
    return pair_idx * n_years() + static_cast<std::size_t>(year - window.first);
  }

  static std::uint64_t traffic_key(std::size_t pair_idx, int year) {
    return (static_cast<std::uint64_t>(pair_idx) << 16) | static_cast<std::uint16_t>(year);
  }

  const TrafficCell* traffic_cell(std::size_t pair_idx, int year) const {
    auto it = traffic.find(traffic_key(pair_idx, year));
    return it == traffic.end() ? nullptr : &it->second;
  }

  int pair_index(const std::string& origin, const std::string& destination) const {
    auto it = pair_lookup_.find(origin + "\x1f" + destination);
    return it == pair_lookup_.end() ? -1 : it->second;
  }

  void rebuild_lookup() {
    pair_lookup_.clear();
    pair_lookup_.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      pair_lookup_[pairs[i].origin + "\x1f" + pairs[i].destination] = static_cast<int>(i);
    }
  }

private:
  std::unordered_map<std::string, int> pair_lookup_;
};

inline Panel build_balanced_panel(std::vector<AirportPair> pairs,
                                  const std::vector<ingest::FlightRecord>& flights,
                                  const ingest::YearRange& years,
                                  const std::set<std::string>& known_airports = {}) {
  if (years.size() < 1) throw std::invalid_argument("empty year range");
  Panel p;
  std::sort(pairs.begin(), pairs.end(), [](const AirportPair& a, const AirportPair& b) {
    return std::tie(a.origin, a.destination) < std::tie(b.origin, b.destination);
  });
  p.pairs = std::move(pairs);
  p.window = years;
  p.rebuild_lookup();

  std::set<std::string> known = known_airports;
  if (known.empty()) {
    for (const auto& pr : p.pairs) {
      known.insert(pr.origin);
      known.insert(pr.destination);
    }
  }

  const std::size_t n = p.n_obs();
  p.az.assign(n, 0);
  p.exist.assign(n, 0);
  p.subject_active.assign(n, 0);
  p.censored.assign(n, 0);
  p.total_pax.assign(n, 0);
  p.subject_pax.assign(n, 0);

  for (const auto& f : flights) {
    if (!known.count(f.origin) || !known.count(f.destination)) {
      throw io_error("flight record references unknown airport '" +
                     (known.count(f.origin) ? f.destination : f.origin) + "'");
    }
    if (!years.contains(f.year)) continue;
    const int idx = p.pair_index(f.origin, f.destination);
    if (idx < 0) continue; // pair removed by the distance filter
    const std::size_t obs = p.obs_index(static_cast<std::size_t>(idx), f.year);
    p.total_pax[obs] += f.passengers;
    auto& cell = p.traffic[Panel::traffic_key(static_cast<std::size_t>(idx), f.year)];
    cell.total += f.passengers;
    cell.carriers.emplace_back(f.carrier, f.passengers);
  }
  for (auto& [key, cell] : p.traffic) {
    std::sort(cell.carriers.begin(), cell.carriers.end());
  }

  p.meta.retained_pairs = p.pairs.size();
  p.meta.first_year = years.first;
  p.meta.last_year = years.last;
  p.meta.years = static_cast<std::size_t>(years.size());
  p.meta.observations = n;
  return p;
}

// Directed base-year route activity: pair key -> subject carriers seen.
struct BaseYearActivity {
  std::unordered_set<std::string> served_pairs;          // any carrier
  std::unordered_set<std::string> subject_served_pairs;  // subject carrier only

  static std::string key(const std::string& o, const std::string& d) { return o + "\x1f" + d; }

  static BaseYearActivity from_flights(const std::vector<ingest::FlightRecord>& base_flights,
                                       const std::string& subject_carrier) {
    BaseYearActivity a;
    for (const auto& f : base_flights) {
      if (f.passengers <= 0) continue;
      a.served_pairs.insert(key(f.origin, f.destination));
      if (f.carrier == subject_carrier) a.subject_served_pairs.insert(key(f.origin, f.destination));
    }
    return a;
  }
};

struct EntryOptions {
  bool count_reentry = false;      // a restart after a full absent year is a new entry
  bool censor_post_entry = false;  // drop years after the (first) entry from the risk set
};

// Sets AZ, the subject-activity flags, and per-pair subject passenger counts.
// Default semantics: AZ flags the first sample year the subject starts
// operating a pair it never served before, base year included.
inline void derive_entry(Panel& p, const std::string& subject_carrier,
                         const BaseYearActivity& base, const EntryOptions& options = {}) {
  const std::size_t years = p.n_years();
  p.meta.entries = 0;
  p.meta.censored = 0;
  for (std::size_t k = 0; k < p.pairs.size(); ++k) {
    const bool base_active =
        base.subject_served_pairs.count(BaseYearActivity::key(p.pairs[k].origin, p.pairs[k].destination)) > 0;
    bool seen_activity = base_active;  // base year or any earlier sample year
    bool active_prev = base_active;    // the immediately preceding year
    bool entered = false;
    int entry_year = 0;
    for (std::size_t t = 0; t < years; ++t) {
      const int year = p.window.first + static_cast<int>(t);
      const std::size_t obs = k * years + t;
      const auto* cell = p.traffic_cell(k, year);
      const long long pax = cell ? cell->carrier_pax(subject_carrier) : 0;
      p.subject_pax[obs] = pax;
      const bool active = pax > 0;
      p.subject_active[obs] = active ? 1 : 0;
      const bool is_entry =
          active && (options.count_reentry ? !active_prev : !seen_activity);
      if (is_entry) {
        p.az[obs] = 1;
        ++p.meta.entries;
        if (!entered) {
          entered = true;
          entry_year = year;
        }
      } else {
        p.az[obs] = 0;
      }
      if (options.censor_post_entry && entered && year > entry_year) {
        p.censored[obs] = 1;
        ++p.meta.censored;
      }
      seen_activity = seen_activity || active;
      active_prev = active;
    }
  }
}

inline void classify_exist_new(Panel& p, const BaseYearActivity& base) {
  const std::size_t years = p.n_years();
  p.meta.exist_pairs = 0;
  for (std::size_t k = 0; k < p.pairs.size(); ++k) {
    const bool served =
        base.served_pairs.count(BaseYearActivity::key(p.pairs[k].origin, p.pairs[k].destination)) > 0;
    if (served) ++p.meta.exist_pairs;
    for (std::size_t t = 0; t < years; ++t) p.exist[k * years + t] = served ? 1 : 0;
  }
}

struct SplitResult {
  Panel bef;
  Panel aft;
};

// BEF = years strictly before the merger year, AFT = merger year onwards.
inline SplitResult split_sample(const Panel& p, int merger_year) {
  if (merger_year <= p.window.first || merger_year > p.window.last) {
    throw std::invalid_argument("merger year " + std::to_string(merger_year) +
                                " produces a degenerate split of " +
                                std::to_string(p.window.first) + "-" + std::to_string(p.window.last));
  }
  auto subset = [&p](int first, int last) {
    Panel out;
    out.pairs = p.pairs;
    out.window = {first, last};
    out.rebuild_lookup();
    const std::size_t years = out.n_years();
    const std::size_t n = out.n_obs();
    out.az.resize(n);
    out.exist.resize(n);
    out.subject_active.resize(n);
    out.censored.resize(n);
    out.total_pax.resize(n);
    out.subject_pax.resize(n);
    for (std::size_t k = 0; k < out.pairs.size(); ++k) {
      for (std::size_t t = 0; t < years; ++t) {
        const int year = first + static_cast<int>(t);
        const std::size_t src = p.obs_index(k, year);
        const std::size_t dst = k * years + t;
        out.az[dst] = p.az[src];
        out.exist[dst] = p.exist[src];
        out.subject_active[dst] = p.subject_active[src];
        out.censored[dst] = p.censored[src];
        out.total_pax[dst] = p.total_pax[src];
        out.subject_pax[dst] = p.subject_pax[src];
        const auto* cell = p.traffic_cell(k, year);
        if (cell) out.traffic[Panel::traffic_key(k, year)] = *cell;
      }
    }
    out.meta = p.meta;
    out.meta.first_year = first;
    out.meta.last_year = last;
    out.meta.years = years;
    out.meta.observations = n;
    out.meta.bef_observations = 0;
    out.meta.aft_observations = 0;
    std::size_t entries = 0, censored = 0;
    for (std::size_t i = 0; i < n; ++i) {
      entries += out.az[i];
      censored += out.censored[i];
    }
    out.meta.entries = entries;
    out.meta.censored = censored;
    return out;
  };
  SplitResult out{subset(p.window.first, merger_year - 1), subset(merger_year, p.window.last)};
  return out;
}

inline void export_panel_csv(const Panel& p, const std::string& path) {
  csv::Writer w(path);
  w.row({"origin", "destination", "year", "distance", "az", "exist"});
  const std::size_t years = p.n_years();
  for (std::size_t k = 0; k < p.pairs.size(); ++k) {
    for (std::size_t t = 0; t < years; ++t) {
      const std::size_t obs = k * years + t;
      if (p.censored[obs]) continue;
      w.row({p.pairs[k].origin, p.pairs[k].destination,
             std::to_string(p.window.first + static_cast<int>(t)),
             ingest::format_double(p.pairs[k].distance_miles), std::to_string(p.az[obs]),
             std::to_string(p.exist[obs])});
    }
  }
}

} // namespace routeentry::panel
