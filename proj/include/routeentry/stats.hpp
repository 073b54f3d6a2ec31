#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace routeentry::stats {

inline constexpr double sqrt2 = 1.4142135623730951;
inline constexpr double sqrt_2pi = 2.5066282746310002;
inline constexpr double log_2pi = 1.8378770664093453;

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / sqrt_2pi; }

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / sqrt2); }

namespace detail {

// Asymptotic tail series for the normal distribution, valid for large |x|.
// 1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8
inline double tail_series(double x) {
  const double r2 = 1.0 / (x * x);
  return 1.0 + r2 * (-1.0 + r2 * (3.0 + r2 * (-15.0 + r2 * 105.0)));
}

} // namespace detail

// ln Phi(x), safe across the whole real line.  erfc underflows near
// x = -38, so the far left tail switches to the asymptotic expansion.
inline double log_norm_cdf(double x) {
  if (x > 8.0) {
    return std::log1p(-norm_cdf(-x));
  }
  if (x >= -35.0) {
    return std::log(0.5 * std::erfc(-x / sqrt2));
  }
  return -0.5 * x * x - std::log(-x) - 0.5 * log_2pi + std::log(detail::tail_series(x));
}

// phi(x) / Phi(x); equals the inverse Mills ratio of -x.  Near the left
// tail the direct ratio degrades, the series form takes over.
inline double mills_factor(double x) {
  if (x >= -35.0) {
    return norm_pdf(x) / norm_cdf(x);
  }
  return -x / detail::tail_series(x);
}

inline double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double log_logistic_cdf(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

// Two-sided normal p-value for a z statistic.
inline double normal_p_two_sided(double z) {
  if (!std::isfinite(z)) return 0.0;
  return std::erfc(std::abs(z) / sqrt2);
}

namespace detail {

inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 500; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
  // Lentz's continued fraction for the upper incomplete gamma ratio.
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace detail

// Upper tail of the chi-square distribution with df degrees of freedom.
inline double chi2_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  const double a = 0.5 * df;
  const double hx = 0.5 * x;
  if (hx < a + 1.0) return 1.0 - detail::gamma_p_series(a, hx);
  return detail::gamma_q_contfrac(a, hx);
}

struct HermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> log_weights;
};

namespace detail {

// ln of the Gauss-Hermite weight at node x via the Christoffel function
// 1/w = sum_{k<n} p_k(x)^2 over the orthonormal Hermite family.  The
// recurrence is rescaled on the fly, so extreme nodes of large rules do not
// overflow; eigenvector-based weights lose those digits past ~40 nodes.
inline double log_hermite_weight(double x, int n) {
  const double rescale = 1e100;
  double p_prev = 0.0;
  double p = std::pow(M_PI, -0.25);
  double sum = p * p;
  long exponent = 0; // powers of 1e100 divided out of the p's
  for (int k = 1; k < n; ++k) {
    const double p_next = x * std::sqrt(2.0 / k) * p - std::sqrt((k - 1.0) / k) * p_prev;
    p_prev = p;
    p = p_next;
    sum += p * p;
    if (std::abs(p) > rescale) {
      p /= rescale;
      p_prev /= rescale;
      sum /= rescale * rescale;
      ++exponent;
    }
  }
  return -(std::log(sum) + 2.0 * static_cast<double>(exponent) * std::log(rescale));
}

} // namespace detail

// Gauss-Hermite rule for the weight function exp(-x^2): nodes from the
// Golub-Welsch Jacobi matrix, weights from the Christoffel identity.
inline HermiteRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: node count must be positive");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double off = std::sqrt(i / 2.0);
    jacobi(i, i - 1) = off;
    jacobi(i - 1, i) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  HermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  rule.log_weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    rule.log_weights[i] = detail::log_hermite_weight(rule.nodes[i], n);
    rule.weights[i] = std::exp(rule.log_weights[i]);
  }
  return rule;
}

// --- seeding -------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

// Named substream: streams derived from the same master seed stay stable
// when unrelated streams add or drop draws.
inline std::mt19937_64 substream(std::uint64_t seed, const std::string& name, std::uint64_t index = 0) {
  const std::uint64_t mixed = splitmix64(seed ^ splitmix64(fnv1a64(name) + index));
  return std::mt19937_64(mixed);
}

// --- deterministic parallel map -----------------------------------------

// Runs fn(i) for i in [0, n).  Results must be written to per-index slots;
// the partition depends only on n and thread count, never on timing.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (threads <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const unsigned workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

} // namespace routeentry::stats
