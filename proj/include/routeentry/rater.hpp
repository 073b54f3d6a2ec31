#pragma once

#include "routeentry/csv.hpp"
#include "routeentry/errors.hpp"

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace routeentry {

enum class SignClass { SignificantNegative, NotSignificant, SignificantPositive };

inline const char* to_token(SignClass c) {
  switch (c) {
    case SignClass::SignificantNegative: return "NEG";
    case SignClass::NotSignificant: return "NS";
    case SignClass::SignificantPositive: return "POS";
  }
  return "NS";
}

inline SignClass sign_class_from_token(const std::string& token) {
  if (token == "NEG") return SignClass::SignificantNegative;
  if (token == "NS") return SignClass::NotSignificant;
  if (token == "POS") return SignClass::SignificantPositive;
  throw io_error("unknown class token '" + token + "', expected NEG, NS or POS");
}

// Ordered variable -> sign/significance classification.
class Rater {
public:
  Rater() = default;
  explicit Rater(std::string provenance) : provenance_(std::move(provenance)) {}

  void add(const std::string& variable, SignClass c) {
    if (index_.count(variable)) throw io_error("duplicate variable '" + variable + "' in rater");
    index_[variable] = entries_.size();
    entries_.emplace_back(variable, c);
  }

  bool contains(const std::string& variable) const { return index_.count(variable) > 0; }

  SignClass at(const std::string& variable) const {
    auto it = index_.find(variable);
    if (it == index_.end()) throw io_error("rater has no variable '" + variable + "'");
    return entries_[it->second].second;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const std::vector<std::pair<std::string, SignClass>>& entries() const { return entries_; }
  const std::string& provenance() const { return provenance_; }
  void set_provenance(std::string p) { provenance_ = std::move(p); }

private:
  std::vector<std::pair<std::string, SignClass>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::string provenance_;
};

// One row of a published estimation table: point estimate plus the star
// marker that encodes its significance band.  Dropped variables carry no
// estimate.
struct PublishedCoefficient {
  std::string variable;
  std::optional<double> estimate;
  int stars = 0; // 0..3
};

struct PublishedEstimates {
  std::string name;
  std::vector<PublishedCoefficient> coefficients;
};

// Representative p-value for a star band, chosen inside the band so that
// strict p < alpha comparisons reproduce the conventional cutoffs.
inline double star_p_value(int stars) {
  switch (stars) {
    case 3: return 0.005;
    case 2: return 0.03;
    case 1: return 0.075;
    default: return 0.5;
  }
}

inline int star_count(const std::string& s) {
  int n = 0;
  for (char c : s) {
    if (c == '*') ++n;
    else if (!std::isspace(static_cast<unsigned char>(c)))
      throw io_error("invalid stars field '" + s + "'");
  }
  if (n > 3) throw io_error("invalid stars field '" + s + "'");
  return n;
}

} // namespace routeentry
