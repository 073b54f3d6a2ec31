#pragma once

#include "routeentry/csv.hpp"
#include "routeentry/errors.hpp"
#include "routeentry/rater.hpp"

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace routeentry::ingest {

struct YearRange {
  int first = 0;
  int last = 0;
  bool contains(int y) const { return y >= first && y <= last; }
  int size() const { return last - first + 1; }
};

struct FlightRecord {
  int year = 0;
  std::string origin;
  std::string destination;
  std::string carrier;
  long long passengers = 0;
};

struct AirportRecord {
  std::string code;
  double latitude = 0.0;
  double longitude = 0.0;
  bool secondary = false;
  bool slot_constrained = false;
  bool subject_hub = false;
  double rival_conn_share = 0.0; // max rival connecting-passenger share at the airport
  double landing_fee = 0.0;
  double natl_pax_share = 0.0; // reported share basis, kept for audit
};

struct CityAttributeRecord {
  std::string region;
  int year = 0;
  double population = 0.0;
  double income = 0.0;
  double unemployment = 0.0;
  double tourism = 0.0;
};

// airport code -> mesoregion key
using AirportRegionMap = std::unordered_map<std::string, std::string>;

enum class CarrierClass { FscMajor, LccMajor, Lcc, Regional, Bankrupt, Other };

using CarrierTable = std::unordered_map<std::string, CarrierClass>;

struct Reject {
  std::size_t line_no = 0;
  std::string reason;
};

template <typename T>
struct LoadResult {
  std::vector<T> records;
  std::vector<Reject> rejects;
};

inline bool parse_flag(const std::string& s, const std::string& path, std::size_t line_no,
                       const std::string& what) {
  const long long v = csv::parse_int(s, path, line_no, what);
  if (v != 0 && v != 1) {
    throw io_error(path + ":" + std::to_string(line_no) + ": " + what + " must be 0 or 1");
  }
  return v == 1;
}

inline LoadResult<FlightRecord> load_flights(const std::string& path, const YearRange& window) {
  const auto table = csv::read_table(path, {"year", "origin", "destination", "carrier", "passengers"});
  LoadResult<FlightRecord> out;
  std::map<std::tuple<int, std::string, std::string, std::string>, std::size_t> seen;
  std::vector<std::pair<std::size_t, std::size_t>> duplicates;
  for (const auto& row : table.rows) {
    FlightRecord r;
    r.year = static_cast<int>(csv::parse_int(row.fields[0], path, row.line_no, "year"));
    r.origin = csv::to_upper(csv::trim(row.fields[1]));
    r.destination = csv::to_upper(csv::trim(row.fields[2]));
    r.carrier = csv::to_upper(csv::trim(row.fields[3]));
    r.passengers = csv::parse_int(row.fields[4], path, row.line_no, "passengers");
    if (r.origin.empty() || r.destination.empty() || r.carrier.empty()) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": empty airport or carrier code");
    }
    if (r.origin == r.destination) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": origin equals destination ('" +
                     r.origin + "')");
    }
    if (r.passengers < 0) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": negative passenger count");
    }
    const auto key = std::make_tuple(r.year, r.origin, r.destination, r.carrier);
    const auto it = seen.find(key);
    if (it != seen.end()) {
      duplicates.emplace_back(it->second, row.line_no);
    } else {
      seen.emplace(key, row.line_no);
    }
    if (!window.contains(r.year)) {
      out.rejects.push_back({row.line_no, "year " + std::to_string(r.year) + " outside window " +
                                              std::to_string(window.first) + "-" +
                                              std::to_string(window.last)});
      continue;
    }
    out.records.push_back(std::move(r));
  }
  if (!duplicates.empty()) {
    std::ostringstream msg;
    msg << path << ": duplicate (year,origin,destination,carrier) rows at lines";
    for (const auto& [first, second] : duplicates) msg << " " << first << "/" << second;
    throw io_error(msg.str());
  }
  return out;
}

inline std::vector<AirportRecord> load_airports(const std::string& path) {
  const auto table = csv::read_table(
      path, {"code", "lat", "lon", "secnd", "slot", "az_hub", "rival_conn_share", "landing_fee",
             "natl_pax_share"});
  std::vector<AirportRecord> out;
  std::set<std::string> codes;
  for (const auto& row : table.rows) {
    AirportRecord a;
    a.code = csv::to_upper(csv::trim(row.fields[0]));
    a.latitude = csv::parse_double(row.fields[1], path, row.line_no, "lat");
    a.longitude = csv::parse_double(row.fields[2], path, row.line_no, "lon");
    a.secondary = parse_flag(row.fields[3], path, row.line_no, "secnd");
    a.slot_constrained = parse_flag(row.fields[4], path, row.line_no, "slot");
    a.subject_hub = parse_flag(row.fields[5], path, row.line_no, "az_hub");
    a.rival_conn_share = csv::parse_double(row.fields[6], path, row.line_no, "rival_conn_share");
    a.landing_fee = csv::parse_double(row.fields[7], path, row.line_no, "landing_fee");
    a.natl_pax_share = csv::parse_double(row.fields[8], path, row.line_no, "natl_pax_share");
    if (a.code.empty()) throw io_error(path + ":" + std::to_string(row.line_no) + ": empty code");
    if (std::abs(a.latitude) > 90.0) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": latitude out of range");
    }
    if (std::abs(a.longitude) > 180.0) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": longitude out of range");
    }
    if (a.rival_conn_share < 0.0 || a.rival_conn_share > 1.0) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": rival_conn_share outside [0,1]");
    }
    if (!codes.insert(a.code).second) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": duplicate airport code '" +
                     a.code + "'");
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<CityAttributeRecord> load_cities(const std::string& path) {
  const auto table =
      csv::read_table(path, {"region", "year", "population", "income", "unempl", "vacation"});
  std::vector<CityAttributeRecord> out;
  std::set<std::pair<std::string, int>> seen;
  for (const auto& row : table.rows) {
    CityAttributeRecord c;
    c.region = csv::trim(row.fields[0]);
    c.year = static_cast<int>(csv::parse_int(row.fields[1], path, row.line_no, "year"));
    c.population = csv::parse_double(row.fields[2], path, row.line_no, "population");
    c.income = csv::parse_double(row.fields[3], path, row.line_no, "income");
    c.unemployment = csv::parse_double(row.fields[4], path, row.line_no, "unempl");
    c.tourism = csv::parse_double(row.fields[5], path, row.line_no, "vacation");
    if (c.region.empty()) throw io_error(path + ":" + std::to_string(row.line_no) + ": empty region");
    if (c.population <= 0.0) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": population must be positive");
    }
    if (c.unemployment < 0.0 || c.unemployment > 1.0) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": unempl outside [0,1]");
    }
    if (c.tourism < 0.0 || c.tourism > 1.0) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": vacation outside [0,1]");
    }
    if (!seen.insert({c.region, c.year}).second) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": duplicate (region, year) row");
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline AirportRegionMap load_airport_regions(const std::string& path) {
  const auto table = csv::read_table(path, {"code", "region"});
  AirportRegionMap out;
  for (const auto& row : table.rows) {
    const std::string code = csv::to_upper(csv::trim(row.fields[0]));
    const std::string region = csv::trim(row.fields[1]);
    if (code.empty() || region.empty()) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": empty code or region");
    }
    if (!out.emplace(code, region).second) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": duplicate airport code '" + code +
                     "'");
    }
  }
  return out;
}

inline CarrierClass carrier_class_from_token(const std::string& token, const std::string& path,
                                             std::size_t line_no) {
  if (token == "FSC_MAJOR") return CarrierClass::FscMajor;
  if (token == "LCC_MAJOR") return CarrierClass::LccMajor;
  if (token == "LCC") return CarrierClass::Lcc;
  if (token == "REGIONAL") return CarrierClass::Regional;
  if (token == "BANKRUPT") return CarrierClass::Bankrupt;
  if (token == "OTHER") return CarrierClass::Other;
  throw io_error(path + ":" + std::to_string(line_no) + ": unknown carrier class '" + token + "'");
}

inline const char* carrier_class_token(CarrierClass c) {
  switch (c) {
    case CarrierClass::FscMajor: return "FSC_MAJOR";
    case CarrierClass::LccMajor: return "LCC_MAJOR";
    case CarrierClass::Lcc: return "LCC";
    case CarrierClass::Regional: return "REGIONAL";
    case CarrierClass::Bankrupt: return "BANKRUPT";
    case CarrierClass::Other: return "OTHER";
  }
  return "OTHER";
}

inline CarrierTable load_carriers(const std::string& path) {
  const auto table = csv::read_table(path, {"carrier", "class"});
  CarrierTable out;
  for (const auto& row : table.rows) {
    const std::string code = csv::to_upper(csv::trim(row.fields[0]));
    if (code.empty()) throw io_error(path + ":" + std::to_string(row.line_no) + ": empty carrier");
    if (out.count(code)) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": duplicate carrier '" + code + "'");
    }
    out[code] = carrier_class_from_token(csv::to_upper(csv::trim(row.fields[1])), path, row.line_no);
  }
  return out;
}

inline Rater load_rater_file(const std::string& path) {
  const auto table = csv::read_table(path, {"variable", "class"});
  Rater r(path);
  for (const auto& row : table.rows) {
    const std::string variable = csv::trim(row.fields[0]);
    const std::string token = csv::to_upper(csv::trim(row.fields[1]));
    if (variable.empty()) throw io_error(path + ":" + std::to_string(row.line_no) + ": empty variable");
    if (r.contains(variable)) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": duplicate variable '" + variable +
                     "'");
    }
    SignClass c;
    try {
      c = sign_class_from_token(token);
    } catch (const io_error& e) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": " + e.what());
    }
    r.add(variable, c);
  }
  if (r.empty()) throw io_error(path + ": rater file has no rows");
  return r;
}

// variable,estimate,stars with "-" standing for a dropped variable.
inline PublishedEstimates load_published_estimates(const std::string& path) {
  const auto table = csv::read_table(path, {"variable", "estimate", "stars"});
  PublishedEstimates out;
  out.name = path;
  std::set<std::string> seen;
  for (const auto& row : table.rows) {
    PublishedCoefficient c;
    c.variable = csv::trim(row.fields[0]);
    if (c.variable.empty()) throw io_error(path + ":" + std::to_string(row.line_no) + ": empty variable");
    if (!seen.insert(c.variable).second) {
      throw io_error(path + ":" + std::to_string(row.line_no) + ": duplicate variable '" +
                     c.variable + "'");
    }
    const std::string est = csv::trim(row.fields[1]);
    if (est != "-") {
      c.estimate = csv::parse_double(est, path, row.line_no, "estimate");
      try {
        c.stars = star_count(csv::trim(row.fields[2]));
      } catch (const io_error& e) {
        throw io_error(path + ":" + std::to_string(row.line_no) + ": " + e.what());
      }
    }
    out.coefficients.push_back(std::move(c));
  }
  return out;
}

// --- canonical serialization ----------------------------------------------
// Loading then re-writing a valid file reproduces it row-for-row.

inline void write_flights(const std::string& path, const std::vector<FlightRecord>& records) {
  csv::Writer w(path);
  w.row({"year", "origin", "destination", "carrier", "passengers"});
  for (const auto& r : records) {
    w.row({std::to_string(r.year), r.origin, r.destination, r.carrier,
           std::to_string(r.passengers)});
  }
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline void write_airports(const std::string& path, const std::vector<AirportRecord>& records) {
  csv::Writer w(path);
  w.row({"code", "lat", "lon", "secnd", "slot", "az_hub", "rival_conn_share", "landing_fee",
         "natl_pax_share"});
  for (const auto& a : records) {
    w.row({a.code, format_double(a.latitude), format_double(a.longitude),
           a.secondary ? "1" : "0", a.slot_constrained ? "1" : "0", a.subject_hub ? "1" : "0",
           format_double(a.rival_conn_share), format_double(a.landing_fee),
           format_double(a.natl_pax_share)});
  }
}

inline void write_cities(const std::string& path, const std::vector<CityAttributeRecord>& records) {
  csv::Writer w(path);
  w.row({"region", "year", "population", "income", "unempl", "vacation"});
  for (const auto& c : records) {
    w.row({c.region, std::to_string(c.year), format_double(c.population), format_double(c.income),
           format_double(c.unemployment), format_double(c.tourism)});
  }
}

inline void write_airport_regions(const std::string& path, const AirportRegionMap& map) {
  std::vector<std::pair<std::string, std::string>> sorted(map.begin(), map.end());
  std::sort(sorted.begin(), sorted.end());
  csv::Writer w(path);
  w.row({"code", "region"});
  for (const auto& [code, region] : sorted) w.row({code, region});
}

inline void write_carriers(const std::string& path, const CarrierTable& table) {
  std::vector<std::pair<std::string, CarrierClass>> sorted(table.begin(), table.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  csv::Writer w(path);
  w.row({"carrier", "class"});
  for (const auto& [code, cls] : sorted) w.row({code, carrier_class_token(cls)});
}

inline void write_rater(const std::string& path, const Rater& rater) {
  csv::Writer w(path);
  w.row({"variable", "class"});
  for (const auto& [name, c] : rater.entries()) w.row({name, to_token(c)});
}

} // namespace routeentry::ingest
