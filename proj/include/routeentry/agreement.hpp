#pragma once

#include "routeentry/errors.hpp"
#include "routeentry/estimators.hpp"
#include "routeentry/rater.hpp"
#include "routeentry/stats.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace routeentry::agreement {

inline int class_index(SignClass c) {
  switch (c) {
    case SignClass::SignificantNegative: return 0;
    case SignClass::NotSignificant: return 1;
    case SignClass::SignificantPositive: return 2;
  }
  return 1;
}

inline SignClass classify_estimate(double estimate, double p, double alpha) {
  if (p < alpha) {
    if (estimate > 0.0) return SignClass::SignificantPositive;
    if (estimate < 0.0) return SignClass::SignificantNegative;
  }
  return SignClass::NotSignificant;
}

// Step I/II classification: sign plus strict p < alpha significance.
inline Rater classify_coefficients(const estimators::FitResult& fit, double alpha) {
  if (!fit.converged) throw numeric_error("cannot classify a non-converged fit");
  Rater r(fit.name);
  for (const auto& view : estimators::estimate_views(fit)) {
    r.add(view.name, classify_estimate(view.estimate, view.p, alpha));
  }
  if (r.empty()) throw io_error("fit '" + fit.name + "' has no classifiable coefficients");
  return r;
}

inline Rater classify_published(const PublishedEstimates& table, double alpha) {
  Rater r(table.name);
  for (const auto& c : table.coefficients) {
    if (!c.estimate) continue; // dropped variables are excluded from the rater
    r.add(c.variable, classify_estimate(*c.estimate, star_p_value(c.stars), alpha));
  }
  if (r.empty()) throw io_error("published table '" + table.name + "' has no estimates");
  return r;
}

struct AlignedRaters {
  std::vector<std::string> names;
  std::vector<std::pair<SignClass, SignClass>> pairs;
  std::vector<std::string> excluded_a;
  std::vector<std::string> excluded_b;
};

// Pairs classifications over the variable-name intersection, in the first
// rater's order.
inline AlignedRaters align_raters(const Rater& a, const Rater& b) {
  AlignedRaters out;
  for (const auto& [name, ca] : a.entries()) {
    if (b.contains(name)) {
      out.names.push_back(name);
      out.pairs.emplace_back(ca, b.at(name));
    } else {
      out.excluded_a.push_back(name);
    }
  }
  for (const auto& [name, cb] : b.entries()) {
    if (!a.contains(name)) out.excluded_b.push_back(name);
  }
  if (out.pairs.empty()) throw io_error("raters share no variables");
  return out;
}

struct KappaResult {
  std::size_t n = 0;
  double po = 0.0;
  double pe = 0.0;
  double kappa = 0.0;
  bool defined = true; // false when both raters are constant and equal (Pe = 1)
  std::array<std::array<std::size_t, 3>, 3> contingency{};
};

inline KappaResult cohen_kappa(const AlignedRaters& aligned) {
  const std::size_t n = aligned.pairs.size();
  if (n < 2) throw std::invalid_argument("kappa needs at least two rated items");
  KappaResult r;
  r.n = n;
  std::array<double, 3> marg_a{0, 0, 0};
  std::array<double, 3> marg_b{0, 0, 0};
  std::size_t agree = 0;
  for (const auto& [ca, cb] : aligned.pairs) {
    const int ia = class_index(ca);
    const int ib = class_index(cb);
    ++r.contingency[ia][ib];
    marg_a[ia] += 1.0;
    marg_b[ib] += 1.0;
    if (ia == ib) ++agree;
  }
  r.po = static_cast<double>(agree) / static_cast<double>(n);
  r.pe = 0.0;
  for (int c = 0; c < 3; ++c) {
    r.pe += (marg_a[c] / static_cast<double>(n)) * (marg_b[c] / static_cast<double>(n));
  }
  if (r.pe >= 1.0 - 1e-12) {
    r.defined = false;
    r.kappa = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.kappa = (r.po - r.pe) / (1.0 - r.pe);
  return r;
}

// Cohen's large-sample standard error under the chance-agreement null.
inline double kappa_se_analytic(const AlignedRaters& aligned) {
  const std::size_t n = aligned.pairs.size();
  std::array<double, 3> pa{0, 0, 0};
  std::array<double, 3> pb{0, 0, 0};
  for (const auto& [ca, cb] : aligned.pairs) {
    pa[class_index(ca)] += 1.0 / static_cast<double>(n);
    pb[class_index(cb)] += 1.0 / static_cast<double>(n);
  }
  double pe = 0.0, third = 0.0;
  for (int c = 0; c < 3; ++c) {
    pe += pa[c] * pb[c];
    third += pa[c] * pb[c] * (pa[c] + pb[c]);
  }
  const double num = pe + pe * pe - third;
  if (num <= 0.0 || pe >= 1.0 - 1e-12) return 0.0;
  return std::sqrt(num / (static_cast<double>(n) * (1.0 - pe) * (1.0 - pe)));
}

struct BootstrapResult {
  double se = 0.0;
  double z = 0.0;
  double p = 0.0;
  std::size_t replications = 0;
  std::size_t dropped = 0; // replicates with undefined kappa
  bool unreliable = false; // more than 10% of replicates dropped
};

// Item-pair bootstrap: resamples the N rated coefficients with replacement;
// each replicate draws from a substream keyed by (seed, index), so results
// do not depend on scheduling.
inline BootstrapResult kappa_bootstrap(const AlignedRaters& aligned, std::size_t replications,
                                       std::uint64_t seed, unsigned threads = 1) {
  const KappaResult point = cohen_kappa(aligned);
  const std::size_t n = aligned.pairs.size();
  std::vector<double> kappas(replications, std::numeric_limits<double>::quiet_NaN());
  stats::parallel_for(replications, threads, [&](std::size_t r) {
    auto rng = stats::substream(seed, "kappa_bootstrap", r);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::array<double, 3> marg_a{0, 0, 0};
    std::array<double, 3> marg_b{0, 0, 0};
    std::size_t agree = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& [ca, cb] = aligned.pairs[pick(rng)];
      const int ia = class_index(ca);
      const int ib = class_index(cb);
      marg_a[ia] += 1.0;
      marg_b[ib] += 1.0;
      if (ia == ib) ++agree;
    }
    const double po = static_cast<double>(agree) / static_cast<double>(n);
    double pe = 0.0;
    for (int c = 0; c < 3; ++c) {
      pe += (marg_a[c] / static_cast<double>(n)) * (marg_b[c] / static_cast<double>(n));
    }
    if (pe < 1.0 - 1e-12) kappas[r] = (po - pe) / (1.0 - pe);
  });

  BootstrapResult out;
  out.replications = replications;
  double sum = 0.0;
  std::size_t kept = 0;
  for (double k : kappas) {
    if (std::isnan(k)) {
      ++out.dropped;
    } else {
      sum += k;
      ++kept;
    }
  }
  if (kept == 0) throw numeric_error("kappa bootstrap: every replicate was undefined");
  const double mean = sum / static_cast<double>(kept);
  double ss = 0.0;
  for (double k : kappas) {
    if (!std::isnan(k)) ss += (k - mean) * (k - mean);
  }
  out.se = kept > 1 ? std::sqrt(ss / static_cast<double>(kept - 1)) : 0.0;
  out.unreliable = out.dropped * 10 > replications;
  if (!point.defined) {
    out.z = std::numeric_limits<double>::quiet_NaN();
    out.p = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  if (out.se > 0.0) {
    out.z = point.kappa / out.se;
    out.p = stats::normal_p_two_sided(out.z);
  } else {
    out.z = point.kappa == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    out.p = point.kappa == 0.0 ? 1.0 : 0.0;
  }
  return out;
}

enum class AgreementStrength { Poor, Slight, Fair, Moderate, Substantial, AlmostPerfect };

inline const char* strength_label(AgreementStrength s) {
  switch (s) {
    case AgreementStrength::Poor: return "poor";
    case AgreementStrength::Slight: return "slight";
    case AgreementStrength::Fair: return "fair";
    case AgreementStrength::Moderate: return "moderate";
    case AgreementStrength::Substantial: return "substantial";
    case AgreementStrength::AlmostPerfect: return "almost perfect";
  }
  return "poor";
}

// The published scale has a gap between 0.20 and 0.21, so values round to
// two decimals before the lookup.
inline AgreementStrength landis_koch_label(double kappa) {
  if (kappa < -1.0 - 1e-9 || kappa > 1.0 + 1e-9) {
    throw std::invalid_argument("kappa outside [-1, 1]");
  }
  const long long r = std::llround(std::clamp(kappa, -1.0, 1.0) * 100.0);
  if (r < 0) return AgreementStrength::Poor;
  if (r <= 20) return AgreementStrength::Slight;
  if (r <= 40) return AgreementStrength::Fair;
  if (r <= 60) return AgreementStrength::Moderate;
  if (r <= 80) return AgreementStrength::Substantial;
  return AgreementStrength::AlmostPerfect;
}

// 3x3 matrix whose cells hold the variable names for each class pairing;
// diagonal cells are the agreements.
using AgreementMatrix = std::array<std::array<std::vector<std::string>, 3>, 3>;

inline AgreementMatrix agreement_matrix(const AlignedRaters& aligned) {
  AgreementMatrix m;
  for (std::size_t i = 0; i < aligned.pairs.size(); ++i) {
    const auto& [ca, cb] = aligned.pairs[i];
    m[class_index(ca)][class_index(cb)].push_back(aligned.names[i]);
  }
  return m;
}

struct KappaReport {
  KappaResult point;
  BootstrapResult bootstrap;
  double se_analytic = 0.0;
  AgreementStrength label = AgreementStrength::Poor;
  std::string rater_a;
  std::string rater_b;
};

inline KappaReport kappa_report(const Rater& a, const Rater& b, std::size_t replications,
                                std::uint64_t seed, unsigned threads = 1) {
  const AlignedRaters aligned = align_raters(a, b);
  KappaReport report;
  report.rater_a = a.provenance();
  report.rater_b = b.provenance();
  report.point = cohen_kappa(aligned);
  report.bootstrap = kappa_bootstrap(aligned, replications, seed, threads);
  report.se_analytic = kappa_se_analytic(aligned);
  if (report.point.defined) report.label = landis_koch_label(report.point.kappa);
  return report;
}

inline nlohmann::ordered_json kappa_report_json(const KappaReport& r) {
  nlohmann::ordered_json j;
  j["rater_a"] = r.rater_a;
  j["rater_b"] = r.rater_b;
  j["n"] = r.point.n;
  j["po"] = r.point.po;
  j["pe"] = r.point.pe;
  j["kappa_defined"] = r.point.defined;
  if (r.point.defined) {
    j["kappa"] = r.point.kappa;
    j["label"] = strength_label(r.label);
  } else {
    j["kappa"] = nullptr;
    j["label"] = nullptr;
  }
  j["se"] = r.bootstrap.se;
  j["se_analytic"] = r.se_analytic;
  if (std::isfinite(r.bootstrap.z)) {
    j["z"] = r.bootstrap.z;
  } else {
    j["z"] = std::isnan(r.bootstrap.z) ? "undefined" : "inf";
  }
  j["p"] = std::isnan(r.bootstrap.p) ? nlohmann::ordered_json(nullptr)
                                     : nlohmann::ordered_json(r.bootstrap.p);
  j["replications"] = r.bootstrap.replications;
  j["dropped_replicates"] = r.bootstrap.dropped;
  j["se_unreliable"] = r.bootstrap.unreliable;
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (int a = 0; a < 3; ++a) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int b = 0; b < 3; ++b) row.push_back(r.point.contingency[a][b]);
    table.push_back(std::move(row));
  }
  j["contingency"] = std::move(table);
  j["classes"] = {"NEG", "NS", "POS"};
  return j;
}

inline void agreement_matrix_csv(const AlignedRaters& aligned, const std::string& path) {
  const AgreementMatrix m = agreement_matrix(aligned);
  csv::Writer w(path);
  w.row({"", "NEG", "NS", "POS"});
  const std::array<const char*, 3> labels = {"NEG", "NS", "POS"};
  for (int a = 0; a < 3; ++a) {
    std::vector<std::string> row = {labels[a]};
    for (int b = 0; b < 3; ++b) {
      std::string cell;
      for (const auto& name : m[a][b]) {
        if (!cell.empty()) cell += "|";
        cell += name;
      }
      row.push_back(cell);
    }
    w.row(row);
  }
}

} // namespace routeentry::agreement
