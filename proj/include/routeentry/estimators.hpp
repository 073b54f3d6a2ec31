#pragma once

#include "routeentry/covariates.hpp"
#include "routeentry/errors.hpp"
#include "routeentry/model_spec.hpp"
#include "routeentry/stats.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace routeentry::estimators {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct LikelihoodEval {
  double loglik = 0.0;
  VectorXd gradient;
  MatrixXd hessian;
};

// --- probit -----------------------------------------------------------------
// lnL = sum log Phi(qـi x_i'b) with q = 2y - 1.  The per-observation score
// factor is q*lambda(q*eta) and the information weight lambda*(lambda + q*eta).

inline VectorXd probit_score_factors(const VectorXd& eta, const VectorXd& y) {
  VectorXd g(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double q = y(i) > 0.5 ? 1.0 : -1.0;
    g(i) = q * stats::mills_factor(q * eta(i));
  }
  return g;
}

inline LikelihoodEval probit_loglik(const VectorXd& beta, const MatrixXd& X, const VectorXd& y) {
  if (X.rows() != y.size() || X.cols() != beta.size()) {
    throw std::invalid_argument("probit_loglik: dimension mismatch");
  }
  const VectorXd eta = X * beta;
  LikelihoodEval out;
  VectorXd w(eta.size());
  VectorXd g(eta.size());
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double q = y(i) > 0.5 ? 1.0 : -1.0;
    const double u = q * eta(i);
    ll += stats::log_norm_cdf(u);
    const double lambda = stats::mills_factor(u);
    g(i) = q * lambda;
    w(i) = lambda * (lambda + u);
  }
  out.loglik = ll;
  out.gradient = X.transpose() * g;
  out.hessian = -(X.transpose() * w.asDiagonal() * X);
  return out;
}

// --- logit ------------------------------------------------------------------

inline VectorXd logit_score_factors(const VectorXd& eta, const VectorXd& y) {
  VectorXd g(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) g(i) = y(i) - stats::logistic(eta(i));
  return g;
}

inline LikelihoodEval logit_loglik(const VectorXd& beta, const MatrixXd& X, const VectorXd& y) {
  if (X.rows() != y.size() || X.cols() != beta.size()) {
    throw std::invalid_argument("logit_loglik: dimension mismatch");
  }
  const VectorXd eta = X * beta;
  LikelihoodEval out;
  VectorXd w(eta.size());
  VectorXd g(eta.size());
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double q = y(i) > 0.5 ? 1.0 : -1.0;
    ll += stats::log_logistic_cdf(q * eta(i));
    const double pi = stats::logistic(eta(i));
    g(i) = y(i) - pi;
    w(i) = pi * (1.0 - pi);
  }
  out.loglik = ll;
  out.gradient = X.transpose() * g;
  out.hessian = -(X.transpose() * w.asDiagonal() * X);
  return out;
}

// --- fit statistics ---------------------------------------------------------

struct FitStats {
  double pseudo_r2 = 0.0;
  double aic = 0.0;
  double bic = 0.0;
};

inline FitStats fit_stats(double loglik, double null_loglik, std::size_t k, std::size_t n) {
  if (k < 1 || n < 1) throw std::invalid_argument("fit_stats: k and n must be positive");
  if (null_loglik == 0.0) throw std::invalid_argument("fit_stats: null log-likelihood is zero");
  if (loglik < null_loglik - 1e-8) {
    throw std::invalid_argument("fit_stats: optimum log-likelihood below the null");
  }
  FitStats s;
  s.pseudo_r2 = 1.0 - loglik / null_loglik;
  s.aic = 2.0 * static_cast<double>(k) - 2.0 * loglik;
  s.bic = static_cast<double>(k) * std::log(static_cast<double>(n)) - 2.0 * loglik;
  return s;
}

// Intercept-only binary MLE has fitted probability equal to the sample mean
// under any link, so the null log-likelihood has a closed form.
inline double null_loglik_pooled(const VectorXd& y) {
  const double n = static_cast<double>(y.size());
  const double ones = y.sum();
  const double p = ones / n;
  if (p <= 0.0 || p >= 1.0) throw numeric_error("no variation in outcome");
  return ones * std::log(p) + (n - ones) * std::log1p(-p);
}

// --- clustered sandwich -------------------------------------------------------

// V = c * B * (sum_g s_g s_g') * B with s_g the within-cluster score sum and
// c = G/(G-1) * (n-1)/(n-k).  Cluster accumulation follows first appearance
// in row order, so relabeling ids cannot change the result.  Score rows may
// already be cluster sums; pass the true observation count then.
inline MatrixXd clustered_sandwich(const MatrixXd& bread, const MatrixXd& scores,
                                   const std::vector<std::int32_t>& clusters,
                                   std::size_t n_observations = 0) {
  const Eigen::Index n = scores.rows();
  const Eigen::Index k = scores.cols();
  if (static_cast<std::size_t>(n) != clusters.size()) {
    throw std::invalid_argument("clustered_sandwich: scores and cluster ids misaligned");
  }
  std::unordered_map<std::int32_t, std::size_t> group_of;
  std::vector<MatrixXd> sums;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto [it, inserted] = group_of.try_emplace(clusters[i], sums.size());
    if (inserted) sums.emplace_back(MatrixXd::Zero(1, k));
    sums[it->second] += scores.row(i);
  }
  const std::size_t g = sums.size();
  if (g < 2) throw numeric_error("clustered sandwich requires at least two clusters");
  MatrixXd meat = MatrixXd::Zero(k, k);
  for (const auto& s : sums) meat += s.transpose() * s;
  const double nn = static_cast<double>(n_observations ? n_observations : n);
  const double gg = static_cast<double>(g);
  const double c = gg / (gg - 1.0) * (nn - 1.0) / (nn - static_cast<double>(k));
  return c * bread * meat * bread;
}

inline std::size_t count_clusters(const std::vector<std::int32_t>& clusters) {
  std::unordered_map<std::int32_t, bool> seen;
  for (auto c : clusters) seen.try_emplace(c, true);
  return seen.size();
}

// --- results ------------------------------------------------------------------

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double z = 0.0;
  double p = 1.0;
};

inline int stars_for_p(double p) {
  if (p < 0.01) return 3;
  if (p < 0.05) return 2;
  if (p < 0.10) return 1;
  return 0;
}

struct FitResult {
  std::string name;
  model::Estimator estimator = model::Estimator::Probit;
  std::vector<Coefficient> coefficients;
  MatrixXd covariance;
  double loglik = 0.0;
  double null_loglik = 0.0;
  double pseudo_r2 = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
  std::vector<covariates::DroppedColumn> dropped;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  double alpha = 0.10;
  // random-effects variance component (XTPROBIT only)
  bool has_random_effect = false;
  double sigma_u = 0.0;
  double rho = 0.0;

  const Coefficient* find(const std::string& variable) const {
    for (const auto& c : coefficients)
      if (c.name == variable) return &c;
    return nullptr;
  }
};

namespace detail {

struct NewtonOptions {
  double tolerance = 1e-8;
  int max_iterations = 100;
  int max_halvings = 10;
};

struct NewtonOutcome {
  VectorXd beta;
  double loglik = 0.0;
  int iterations = 0;
  double grad_norm = 0.0;
};

// Solves (-H) d = g, adding a ridge if the Hessian is not negative definite
// (possible for the quadrature likelihood away from the optimum).
inline VectorXd ascent_direction(const MatrixXd& hessian, const VectorXd& gradient) {
  MatrixXd a = -hessian;
  double ridge = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LDLT<MatrixXd> ldlt(a);
    if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all()) {
      return ldlt.solve(gradient);
    }
    ridge = ridge == 0.0 ? 1e-8 * std::max(1.0, a.diagonal().cwiseAbs().maxCoeff()) : ridge * 10.0;
    a = -hessian + ridge * MatrixXd::Identity(a.rows(), a.cols());
  }
  throw numeric_error("Newton step failed: Hessian could not be stabilized");
}

template <typename EvalFn, typename StepHook>
NewtonOutcome newton_maximize(const EvalFn& eval, VectorXd beta, const NewtonOptions& options,
                              const StepHook& after_step) {
  LikelihoodEval e = eval(beta);
  if (!std::isfinite(e.loglik)) throw numeric_error("log-likelihood not finite at start");
  NewtonOutcome out;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    out.grad_norm = e.gradient.cwiseAbs().maxCoeff();
    if (out.grad_norm < options.tolerance) {
      out.beta = beta;
      out.loglik = e.loglik;
      out.iterations = iter;
      return out;
    }
    const VectorXd direction = ascent_direction(e.hessian, e.gradient);
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h) {
      VectorXd candidate = beta + scale * direction;
      after_step(candidate);
      LikelihoodEval trial = eval(candidate);
      const bool improved = trial.loglik > e.loglik;
      if (std::isfinite(trial.loglik) &&
          (improved || trial.loglik >= e.loglik - 1e-11 * (1.0 + std::abs(e.loglik)))) {
        beta = std::move(candidate);
        e = std::move(trial);
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      throw numeric_error("Newton stalled: no improving step after " +
                          std::to_string(options.max_halvings) + " halvings");
    }
  }
  std::ostringstream msg;
  msg << "no convergence after " << options.max_iterations
      << " iterations (gradient norm " << e.gradient.cwiseAbs().maxCoeff() << ")";
  throw numeric_error(msg.str());
}

inline void require_both_classes(const VectorXd& y) {
  const double ones = y.sum();
  if (ones == 0.0 || ones == static_cast<double>(y.size())) {
    throw numeric_error("no variation in outcome: all responses equal");
  }
}

// Names the columns contributing most to the runaway linear index.
inline std::string separation_message(const MatrixXd& X, const VectorXd& beta,
                                      const std::vector<std::string>& names, Eigen::Index row) {
  std::vector<std::pair<double, std::string>> contrib;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    contrib.emplace_back(std::abs(X(row, j) * beta(j)),
                         j < static_cast<Eigen::Index>(names.size()) ? names[j]
                                                                     : "x" + std::to_string(j));
  }
  std::sort(contrib.rbegin(), contrib.rend());
  std::string msg = "separation suspected: linear index exceeds 30 while still improving; "
                    "dominant columns:";
  for (std::size_t j = 0; j < std::min<std::size_t>(3, contrib.size()); ++j) {
    msg += " " + contrib[j].second;
  }
  return msg;
}

struct BinaryFitCore {
  VectorXd beta;
  double loglik = 0.0;
  int iterations = 0;
  double grad_norm = 0.0;
  MatrixXd bread;       // inverse observed information
  MatrixXd scores;      // per-observation score rows
};

template <typename LoglikFn, typename ScoreFn>
BinaryFitCore fit_binary_core(const MatrixXd& X, const VectorXd& y,
                              const std::vector<std::string>& names, const NewtonOptions& options,
                              const LoglikFn& loglik_fn, const ScoreFn& score_fn) {
  require_both_classes(y);
  double last_loglik = -std::numeric_limits<double>::infinity();
  const auto separation_check = [&](const VectorXd& b) {
    const VectorXd eta = X * b;
    Eigen::Index worst = 0;
    const double m = eta.cwiseAbs().maxCoeff(&worst);
    if (m > 30.0) {
      const double ll = loglik_fn(b, X, y).loglik;
      if (ll > last_loglik) throw numeric_error(separation_message(X, b, names, worst));
    }
  };
  // wrap eval so the separation hook can see whether lnL keeps improving
  const auto tracked_eval = [&](const VectorXd& b) {
    LikelihoodEval e = loglik_fn(b, X, y);
    if (e.loglik > last_loglik) last_loglik = e.loglik;
    return e;
  };
  NewtonOutcome opt = newton_maximize(tracked_eval, VectorXd::Zero(X.cols()), options,
                                      separation_check);
  BinaryFitCore core;
  core.beta = opt.beta;
  core.loglik = opt.loglik;
  core.iterations = opt.iterations;
  core.grad_norm = opt.grad_norm;
  const LikelihoodEval at_opt = loglik_fn(core.beta, X, y);
  core.bread = (-at_opt.hessian).ldlt().solve(MatrixXd::Identity(X.cols(), X.cols()));
  const VectorXd factors = score_fn(X * core.beta, y);
  core.scores = factors.asDiagonal() * X;
  return core;
}

inline void attach_inference(FitResult& fit, const std::vector<std::string>& names,
                             const VectorXd& beta, const MatrixXd& covariance) {
  fit.covariance = covariance;
  fit.coefficients.clear();
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    Coefficient c;
    c.name = names[static_cast<std::size_t>(j)];
    c.estimate = beta(j);
    c.std_error = std::sqrt(std::max(0.0, covariance(j, j)));
    c.z = c.std_error > 0.0 ? c.estimate / c.std_error
                            : (c.estimate == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    c.p = stats::normal_p_two_sided(c.z);
    fit.coefficients.push_back(std::move(c));
  }
}

} // namespace detail

// --- pooled probit ------------------------------------------------------------

inline FitResult fit_probit(const covariates::DesignMatrix& design, const model::ModelSpec& spec) {
  detail::NewtonOptions options{spec.tolerance, spec.max_iterations, 10};
  const auto core = detail::fit_binary_core(design.X, design.y, design.names, options,
                                            probit_loglik, probit_score_factors);
  FitResult fit;
  fit.name = spec.name;
  fit.estimator = model::Estimator::Probit;
  fit.alpha = spec.alpha;
  fit.n_obs = static_cast<std::size_t>(design.X.rows());
  fit.n_clusters = count_clusters(design.clusters);
  fit.dropped = design.dropped;
  fit.converged = true;
  fit.iterations = core.iterations;
  fit.grad_norm = core.grad_norm;
  fit.loglik = core.loglik;
  fit.null_loglik = null_loglik_pooled(design.y);
  const FitStats s = fit_stats(fit.loglik, fit.null_loglik,
                               static_cast<std::size_t>(design.X.cols()), fit.n_obs);
  fit.pseudo_r2 = s.pseudo_r2;
  fit.aic = s.aic;
  fit.bic = s.bic;
  detail::attach_inference(fit, design.names, core.beta,
                           clustered_sandwich(core.bread, core.scores, design.clusters));
  return fit;
}

// --- rare-event logit -----------------------------------------------------------
// Logit MLE followed by the small-sample coefficient bias correction; the
// covariance picks up the (n/(n+k))^2 shrinkage.  With the correction
// disabled this is the plain logit MLE.

inline FitResult fit_relogit(const covariates::DesignMatrix& design, const model::ModelSpec& spec) {
  detail::NewtonOptions options{spec.tolerance, spec.max_iterations, 10};
  const auto core = detail::fit_binary_core(design.X, design.y, design.names, options,
                                            logit_loglik, logit_score_factors);
  const Eigen::Index n = design.X.rows();
  const Eigen::Index k = design.X.cols();

  VectorXd beta = core.beta;
  MatrixXd covariance = clustered_sandwich(core.bread, core.scores, design.clusters);
  if (spec.relogit_correction) {
    const VectorXd eta = design.X * beta;
    VectorXd pi(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      pi(i) = stats::logistic(eta(i));
      w(i) = pi(i) * (1.0 - pi(i));
    }
    const MatrixXd info = design.X.transpose() * w.asDiagonal() * design.X;
    const Eigen::LDLT<MatrixXd> ldlt(info);
    // Q_ii = x_i (X'WX)^-1 x_i'
    const MatrixXd xinv = ldlt.solve(design.X.transpose()).transpose(); // n x k
    const VectorXd q = (xinv.array() * design.X.array()).rowwise().sum();
    VectorXd xi(n);
    for (Eigen::Index i = 0; i < n; ++i) xi(i) = 0.5 * q(i) * (2.0 * pi(i) - 1.0);
    const VectorXd bias = ldlt.solve(design.X.transpose() * (w.asDiagonal() * xi));
    beta -= bias;
    const double shrink = static_cast<double>(n) / static_cast<double>(n + k);
    covariance *= shrink * shrink;
  }

  FitResult fit;
  fit.name = spec.name;
  fit.estimator = model::Estimator::Relogit;
  fit.alpha = spec.alpha;
  fit.n_obs = static_cast<std::size_t>(n);
  fit.n_clusters = count_clusters(design.clusters);
  fit.dropped = design.dropped;
  fit.converged = true;
  fit.iterations = core.iterations;
  fit.grad_norm = core.grad_norm;
  fit.loglik = core.loglik; // likelihood at the MLE; the correction is post-hoc
  fit.null_loglik = null_loglik_pooled(design.y);
  const FitStats s = fit_stats(fit.loglik, fit.null_loglik, static_cast<std::size_t>(k), fit.n_obs);
  fit.pseudo_r2 = s.pseudo_r2;
  fit.aic = s.aic;
  fit.bic = s.bic;
  detail::attach_inference(fit, design.names, beta, covariance);
  return fit;
}

// --- random-effects probit -------------------------------------------------------
// Random intercept integrated out by Gauss-Hermite quadrature; parameters are
// (beta, gamma) with gamma = ln sigma_u^2 so the variance stays nonnegative.

namespace detail {

struct GroupIndex {
  std::vector<std::vector<Eigen::Index>> rows; // first-appearance group order
};

inline GroupIndex group_rows(const std::vector<std::int32_t>& clusters) {
  GroupIndex g;
  std::unordered_map<std::int32_t, std::size_t> of;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    auto [it, inserted] = of.try_emplace(clusters[i], g.rows.size());
    if (inserted) g.rows.emplace_back();
    g.rows[it->second].push_back(static_cast<Eigen::Index>(i));
  }
  return g;
}

struct ReProbitEval {
  double loglik = 0.0;
  VectorXd gradient;     // k+1
  MatrixXd group_scores; // G x (k+1)
};

// derivatives of the inverse Mills factor lambda(u) = phi(u)/Phi(u)
inline double mills_d1(double u, double lambda) { return -lambda * (u + lambda); }
inline double mills_d2(double u, double lambda) {
  return lambda * ((u + lambda) * (u + lambda) - 1.0 + lambda * (u + lambda));
}

// Adaptive Gauss-Hermite evaluation of the random-intercept probit
// likelihood.  Each group integral
//   L_g = int prod_t Phi(q_t (eta_t + sigma a)) phi(a) da
// is computed after recentering the rule on the mode of the integrand, so a
// 12-node rule already resolves groups whose likelihood localizes sharply.
// The gradient is exact: it tracks the dependence of the mode and curvature
// on the parameters through the implicit-function theorem.
inline ReProbitEval re_probit_eval(const VectorXd& theta, const MatrixXd& X, const VectorXd& y,
                                   const GroupIndex& groups, const stats::HermiteRule& rule) {
  const Eigen::Index k = X.cols();
  const double gamma = theta(k);
  const double sigma = std::exp(0.5 * gamma);
  const VectorXd eta = X * theta.head(k);
  const std::size_t m = rule.nodes.size();

  ReProbitEval out;
  out.gradient = VectorXd::Zero(k + 1);
  out.group_scores = MatrixXd::Zero(static_cast<Eigen::Index>(groups.rows.size()), k + 1);

  // G(a) = sum_t ln Phi(u_t) - a^2/2 - ln(2 pi)/2 with u_t = q_t (eta_t + sigma a)
  const auto eval_g = [&](const std::vector<Eigen::Index>& rows, double a, double& g1,
                          double& g2) {
    double value = -0.5 * a * a - 0.5 * stats::log_2pi;
    g1 = -a;
    g2 = -1.0;
    for (const auto i : rows) {
      const double q = y(i) > 0.5 ? 1.0 : -1.0;
      const double u = q * (eta(i) + sigma * a);
      value += stats::log_norm_cdf(u);
      const double lambda = stats::mills_factor(u);
      g1 += sigma * q * lambda;
      g2 += sigma * sigma * mills_d1(u, lambda);
    }
    return value;
  };

  std::vector<double> c(m);
  for (std::size_t g = 0; g < groups.rows.size(); ++g) {
    const auto& rows = groups.rows[g];

    // mode of the strictly concave G (G'' <= -1)
    double a_hat = 0.0, g1 = 0.0, g2 = -1.0;
    eval_g(rows, a_hat, g1, g2);
    for (int iter = 0; iter < 60 && std::abs(g1) > 1e-12; ++iter) {
      const double step = std::clamp(-g1 / g2, -10.0, 10.0);
      a_hat += step;
      eval_g(rows, a_hat, g1, g2);
    }
    const double s_hat = 1.0 / std::sqrt(-g2);
    const double g2_hat = g2;

    // accumulated pieces at the mode
    double sum_ql = 0.0;      // sum q lambda
    double sum_d1 = 0.0;      // sum lambda'
    double sum_qd2 = 0.0;     // sum q lambda''
    VectorXd sum_lx = VectorXd::Zero(k);   // sum lambda' x
    VectorXd sum_d2x = VectorXd::Zero(k);  // sum q lambda'' x ... see below
    for (const auto i : rows) {
      const double q = y(i) > 0.5 ? 1.0 : -1.0;
      const double u = q * (eta(i) + sigma * a_hat);
      const double lambda = stats::mills_factor(u);
      const double d1 = mills_d1(u, lambda);
      const double d2 = mills_d2(u, lambda);
      sum_ql += q * lambda;
      sum_d1 += d1;
      sum_qd2 += q * d2;
      sum_lx += d1 * X.row(i).transpose();
      sum_d2x += q * d2 * X.row(i).transpose();
    }

    // dG'/dtheta and dG''/dtheta at the mode (a held fixed)
    VectorXd dG1(k + 1), dG2(k + 1);
    dG1.head(k) = sigma * sum_lx;
    dG1(k) = 0.5 * sigma * sum_ql + 0.5 * sigma * sigma * a_hat * sum_d1;
    dG2.head(k) = sigma * sigma * sum_d2x;
    dG2(k) = sigma * sigma * sum_d1 + 0.5 * sigma * sigma * sigma * a_hat * sum_qd2;
    const double g3 = sigma * sigma * sigma * sum_qd2; // G''' at the mode

    const VectorXd da = -dG1 / g2_hat;                       // implicit mode shift
    const VectorXd dG2_total = dG2 + g3 * da;
    const VectorXd dlns = -0.5 * dG2_total / g2_hat;         // d ln s_hat / d theta

    // quadrature terms c_m = ln w_m + z_m^2 + G(a_hat + sqrt2 s_hat z_m)
    double max_term = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      double gj1 = 0.0, gj2 = 0.0;
      const double x_j = a_hat + stats::sqrt2 * s_hat * rule.nodes[j];
      const double value = eval_g(rows, x_j, gj1, gj2);
      c[j] = rule.log_weights[j] + rule.nodes[j] * rule.nodes[j] + value;
      max_term = std::max(max_term, c[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) denom += std::exp(c[j] - max_term);
    out.loglik += 0.5 * std::log(2.0) + std::log(s_hat) + max_term + std::log(denom);

    // d lnL_g/dtheta = d ln s/dtheta + sum_m p_m dc_m/dtheta
    VectorXd score = dlns;
    for (std::size_t j = 0; j < m; ++j) {
      const double weight = std::exp(c[j] - max_term) / denom;
      if (weight <= 0.0) continue;
      const double x_j = a_hat + stats::sqrt2 * s_hat * rule.nodes[j];
      // partials of G at the quadrature point
      double gp = -x_j; // G' (a-direction) at x_j
      VectorXd dG(k + 1);
      dG.setZero();
      for (const auto i : rows) {
        const double q = y(i) > 0.5 ? 1.0 : -1.0;
        const double u = q * (eta(i) + sigma * x_j);
        const double lambda = stats::mills_factor(u);
        gp += sigma * q * lambda;
        dG.head(k) += q * lambda * X.row(i).transpose();
        dG(k) += 0.5 * sigma * x_j * q * lambda;
      }
      const VectorXd dx = da + stats::sqrt2 * rule.nodes[j] * s_hat * dlns;
      score += weight * (dG + gp * dx);
    }
    out.group_scores.row(static_cast<Eigen::Index>(g)) = score.transpose();
    out.gradient += score;
  }
  return out;
}

} // namespace detail

inline double re_probit_loglik(const VectorXd& beta, double sigma_u, const MatrixXd& X,
                               const VectorXd& y, const std::vector<std::int32_t>& clusters,
                               int nodes) {
  const auto rule = stats::gauss_hermite(nodes);
  const auto groups = detail::group_rows(clusters);
  VectorXd theta(beta.size() + 1);
  theta.head(beta.size()) = beta;
  theta(beta.size()) = std::log(std::max(sigma_u * sigma_u, 1e-300));
  return detail::re_probit_eval(theta, X, y, groups, rule).loglik;
}

namespace detail {

inline FitResult fit_re_probit_raw(const MatrixXd& X, const VectorXd& y,
                                   const std::vector<std::int32_t>& clusters,
                                   const std::vector<std::string>& names,
                                   const model::ModelSpec& spec, bool with_null) {
  require_both_classes(y);
  const auto rule = stats::gauss_hermite(spec.quadrature_nodes);
  const auto groups = group_rows(clusters);
  const Eigen::Index k = X.cols();

  // pooled start for beta, modest variance start
  covariates::DesignMatrix pooled;
  pooled.X = X;
  pooled.y = y;
  pooled.names = names;
  pooled.clusters = clusters;
  model::ModelSpec pooled_spec = spec;
  pooled_spec.estimator = model::Estimator::Probit;
  const FitResult pooled_fit = fit_probit(pooled, pooled_spec);
  VectorXd theta(k + 1);
  for (Eigen::Index j = 0; j < k; ++j) theta(j) = pooled_fit.coefficients[j].estimate;
  theta(k) = std::log(0.25);

  const double gamma_floor = -40.0;
  const auto clamp_gamma = [&](VectorXd& t) { t(k) = std::max(t(k), gamma_floor); };

  const auto eval_full = [&](const VectorXd& t) { return re_probit_eval(t, X, y, groups, rule); };
  const auto gradient_at = [&](VectorXd t) {
    clamp_gamma(t);
    return eval_full(t).gradient;
  };
  const auto eval = [&](const VectorXd& t) {
    const ReProbitEval e = eval_full(t);
    LikelihoodEval le;
    le.loglik = e.loglik;
    le.gradient = e.gradient;
    // central finite differences of the analytic gradient
    le.hessian = MatrixXd::Zero(k + 1, k + 1);
    for (Eigen::Index j = 0; j < k + 1; ++j) {
      const double h = 1e-5 * (1.0 + std::abs(t(j)));
      VectorXd tp = t, tm = t;
      tp(j) += h;
      tm(j) -= h;
      le.hessian.col(j) = (gradient_at(tp) - gradient_at(tm)) / (2.0 * h);
    }
    le.hessian = 0.5 * (le.hessian + le.hessian.transpose()).eval();
    return le;
  };

  NewtonOptions options{spec.tolerance, spec.max_iterations, 10};
  const NewtonOutcome opt = newton_maximize(eval, theta, options,
                                            [&](VectorXd& t) { clamp_gamma(t); });

  const LikelihoodEval at_opt = eval(opt.beta);
  const ReProbitEval full = eval_full(opt.beta);
  const MatrixXd bread =
      (-at_opt.hessian).ldlt().solve(MatrixXd::Identity(k + 1, k + 1));

  // group scores are the sandwich meat; clusters coincide with the groups
  std::vector<std::int32_t> group_ids(groups.rows.size());
  for (std::size_t g = 0; g < groups.rows.size(); ++g) group_ids[g] = static_cast<std::int32_t>(g);
  const MatrixXd covariance = clustered_sandwich(bread, full.group_scores, group_ids,
                                                 static_cast<std::size_t>(X.rows()));

  FitResult fit;
  fit.name = spec.name;
  fit.estimator = model::Estimator::ReProbit;
  fit.alpha = spec.alpha;
  fit.n_obs = static_cast<std::size_t>(X.rows());
  fit.n_clusters = groups.rows.size();
  fit.converged = true;
  fit.iterations = opt.iterations;
  fit.grad_norm = opt.grad_norm;
  fit.loglik = opt.loglik;
  fit.has_random_effect = true;
  const double gamma = opt.beta(k);
  fit.sigma_u = std::exp(0.5 * gamma);
  fit.rho = fit.sigma_u * fit.sigma_u / (1.0 + fit.sigma_u * fit.sigma_u);
  detail::attach_inference(fit, names, opt.beta.head(k), covariance.topLeftCorner(k, k));

  if (with_null) {
    // random-effects null: intercept-only fit with the same groups
    MatrixXd ones = MatrixXd::Ones(X.rows(), 1);
    model::ModelSpec null_spec = spec;
    null_spec.name = spec.name + "_null";
    const FitResult null_fit =
        fit_re_probit_raw(ones, y, clusters, {"CONST"}, null_spec, false);
    fit.null_loglik = null_fit.loglik;
    const FitStats s = fit_stats(fit.loglik, fit.null_loglik,
                                 static_cast<std::size_t>(k) + 1, fit.n_obs);
    fit.pseudo_r2 = s.pseudo_r2;
    fit.aic = s.aic;
    fit.bic = s.bic;
  }
  return fit;
}

} // namespace detail

inline FitResult fit_re_probit(const covariates::DesignMatrix& design,
                               const model::ModelSpec& spec) {
  FitResult fit = detail::fit_re_probit_raw(design.X, design.y, design.clusters, design.names,
                                            spec, true);
  fit.dropped = design.dropped;
  return fit;
}

inline FitResult fit_model(const covariates::DesignMatrix& design, const model::ModelSpec& spec) {
  switch (spec.estimator) {
    case model::Estimator::Probit: return fit_probit(design, spec);
    case model::Estimator::ReProbit: return fit_re_probit(design, spec);
    case model::Estimator::Relogit: return fit_relogit(design, spec);
  }
  throw std::invalid_argument("unknown estimator");
}

// --- cross-fit comparisons -----------------------------------------------------

struct VariableEquality {
  std::string name;
  double difference = 0.0;
  double z = 0.0;
  double p = 1.0;
};

struct EqualityReport {
  std::vector<VariableEquality> variables;
  double wald = 0.0;
  std::size_t wald_df = 0;
  double wald_p = 1.0;
  bool reject_at_05 = false;
};

inline EqualityReport coefficient_equality_test(const FitResult& a, const FitResult& b) {
  std::vector<std::size_t> ia, ib;
  for (std::size_t i = 0; i < a.coefficients.size(); ++i) {
    for (std::size_t j = 0; j < b.coefficients.size(); ++j) {
      if (a.coefficients[i].name == b.coefficients[j].name) {
        ia.push_back(i);
        ib.push_back(j);
        break;
      }
    }
  }
  if (ia.empty()) throw io_error("equality test: fits share no variables");

  EqualityReport report;
  const std::size_t m = ia.size();
  VectorXd d(m);
  for (std::size_t t = 0; t < m; ++t) {
    const auto& ca = a.coefficients[ia[t]];
    const auto& cb = b.coefficients[ib[t]];
    VariableEquality v;
    v.name = ca.name;
    v.difference = ca.estimate - cb.estimate;
    const double var = ca.std_error * ca.std_error + cb.std_error * cb.std_error;
    if (var > 0.0) {
      v.z = v.difference / std::sqrt(var);
    } else {
      v.z = v.difference == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    v.p = stats::normal_p_two_sided(v.z);
    report.variables.push_back(v);
    d(static_cast<Eigen::Index>(t)) = v.difference;
  }

  const bool have_cov = a.covariance.rows() == static_cast<Eigen::Index>(a.coefficients.size()) &&
                        b.covariance.rows() == static_cast<Eigen::Index>(b.coefficients.size());
  MatrixXd v = MatrixXd::Zero(m, m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      if (have_cov) {
        v(r, c) = a.covariance(ia[r], ia[c]) + b.covariance(ib[r], ib[c]);
      } else if (r == c) {
        const auto& ca = a.coefficients[ia[r]];
        const auto& cb = b.coefficients[ib[r]];
        v(r, c) = ca.std_error * ca.std_error + cb.std_error * cb.std_error;
      }
    }
  }
  report.wald = d.dot(v.ldlt().solve(d));
  report.wald_df = m;
  report.wald_p = stats::chi2_sf(report.wald, static_cast<double>(m));
  report.reject_at_05 = report.wald_p < 0.05;
  return report;
}

// A sign/significance view of a fit or a published table, the common input
// for flip counting and rater construction.
struct EstimateView {
  std::string name;
  double estimate = 0.0;
  double p = 1.0;
};

inline std::vector<EstimateView> estimate_views(const FitResult& fit) {
  std::vector<EstimateView> out;
  out.reserve(fit.coefficients.size());
  for (const auto& c : fit.coefficients) {
    if (c.name == "CONST") continue; // the intercept is not a classified variable
    out.push_back({c.name, c.estimate, c.p});
  }
  return out;
}

inline std::vector<EstimateView> estimate_views(const PublishedEstimates& table) {
  std::vector<EstimateView> out;
  for (const auto& c : table.coefficients) {
    if (!c.estimate) continue; // dropped in the source table
    out.push_back({c.variable, *c.estimate, star_p_value(c.stars)});
  }
  return out;
}

struct SignFlipReport {
  std::size_t shared = 0;
  std::size_t flips = 0;                 // point-estimate sign changes
  double flip_share = 0.0;
  std::size_t both_significant = 0;      // significant sign on both sides
  std::size_t significant_flips = 0;
  double significant_flip_share = 0.0;
  std::size_t attenuated = 0;            // |estimate| shrank between fits
};

// Counts sign changes between two coefficient sets over their shared
// variables.  The significant variant restricts to coefficients with a
// statistically definite sign in both fits.
inline SignFlipReport sign_flip_stats(const std::vector<EstimateView>& a,
                                      const std::vector<EstimateView>& b, double alpha) {
  SignFlipReport r;
  for (const auto& va : a) {
    const EstimateView* vb = nullptr;
    for (const auto& cand : b) {
      if (cand.name == va.name) {
        vb = &cand;
        break;
      }
    }
    if (!vb) continue;
    ++r.shared;
    const bool flip = va.estimate * vb->estimate < 0.0;
    if (flip) ++r.flips;
    if (std::abs(vb->estimate) < std::abs(va.estimate)) ++r.attenuated;
    if (va.p < alpha && vb->p < alpha) {
      ++r.both_significant;
      if (flip) ++r.significant_flips;
    }
  }
  if (r.shared == 0) throw io_error("sign flip report: no shared variables");
  r.flip_share = static_cast<double>(r.flips) / static_cast<double>(r.shared);
  r.significant_flip_share =
      r.both_significant > 0
          ? static_cast<double>(r.significant_flips) / static_cast<double>(r.both_significant)
          : 0.0;
  return r;
}

// --- serialization ----------------------------------------------------------------

inline nlohmann::ordered_json fit_to_json(const FitResult& fit) {
  nlohmann::ordered_json j;
  j["name"] = fit.name;
  j["estimator"] = model::estimator_name(fit.estimator);
  j["n"] = fit.n_obs;
  j["clusters"] = fit.n_clusters;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["gradient_norm"] = fit.grad_norm;
  j["log_likelihood"] = fit.loglik;
  j["null_log_likelihood"] = fit.null_loglik;
  j["pseudo_r2"] = fit.pseudo_r2;
  j["aic"] = fit.aic;
  j["bic"] = fit.bic;
  j["alpha"] = fit.alpha;
  if (fit.has_random_effect) {
    j["sigma_u"] = fit.sigma_u;
    j["rho"] = fit.rho;
  }
  nlohmann::ordered_json coefs = nlohmann::ordered_json::array();
  for (const auto& c : fit.coefficients) {
    nlohmann::ordered_json jc;
    jc["name"] = c.name;
    jc["estimate"] = c.estimate;
    jc["std_error"] = c.std_error;
    jc["z"] = std::isfinite(c.z) ? nlohmann::ordered_json(c.z) : nlohmann::ordered_json("inf");
    jc["p"] = c.p;
    jc["stars"] = stars_for_p(c.p);
    coefs.push_back(std::move(jc));
  }
  j["coefficients"] = std::move(coefs);
  nlohmann::ordered_json dropped = nlohmann::ordered_json::array();
  for (const auto& d : fit.dropped) {
    dropped.push_back({{"name", d.name}, {"reason", d.reason}, {"diagnostic", d.diagnostic}});
  }
  j["dropped"] = std::move(dropped);
  nlohmann::ordered_json cov = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < fit.covariance.cols(); ++c) row.push_back(fit.covariance(r, c));
    cov.push_back(std::move(row));
  }
  j["covariance"] = std::move(cov);
  return j;
}

inline FitResult fit_from_json(const nlohmann::json& j) {
  FitResult fit;
  fit.name = j.value("name", "fit");
  fit.estimator = model::estimator_from_name(j.value("estimator", "PROBIT"));
  fit.n_obs = j.value("n", 0u);
  fit.n_clusters = j.value("clusters", 0u);
  fit.converged = j.value("converged", true);
  fit.iterations = j.value("iterations", 0);
  fit.grad_norm = j.value("gradient_norm", 0.0);
  fit.loglik = j.value("log_likelihood", 0.0);
  fit.null_loglik = j.value("null_log_likelihood", 0.0);
  fit.pseudo_r2 = j.value("pseudo_r2", 0.0);
  fit.aic = j.value("aic", 0.0);
  fit.bic = j.value("bic", 0.0);
  fit.alpha = j.value("alpha", 0.10);
  if (j.contains("sigma_u")) {
    fit.has_random_effect = true;
    fit.sigma_u = j.at("sigma_u").get<double>();
    fit.rho = j.value("rho", 0.0);
  }
  for (const auto& jc : j.at("coefficients")) {
    Coefficient c;
    c.name = jc.at("name").get<std::string>();
    c.estimate = jc.at("estimate").get<double>();
    c.std_error = jc.value("std_error", 0.0);
    c.z = jc.contains("z") && jc.at("z").is_number() ? jc.at("z").get<double>()
                                                     : std::numeric_limits<double>::infinity();
    c.p = jc.value("p", 1.0);
    fit.coefficients.push_back(std::move(c));
  }
  if (j.contains("dropped")) {
    for (const auto& jd : j.at("dropped")) {
      fit.dropped.push_back({jd.at("name").get<std::string>(), jd.value("reason", ""),
                             jd.value("diagnostic", 0.0)});
    }
  }
  if (j.contains("covariance")) {
    const auto& cov = j.at("covariance");
    const Eigen::Index k = static_cast<Eigen::Index>(cov.size());
    fit.covariance.resize(k, k);
    for (Eigen::Index r = 0; r < k; ++r) {
      for (Eigen::Index c = 0; c < k; ++c) fit.covariance(r, c) = cov[r][c].get<double>();
    }
  }
  return fit;
}

inline void fit_table_csv(const FitResult& fit, const std::string& path) {
  csv::Writer w(path);
  w.row({"variable", "estimate", "stars", "std_error", "z", "p"});
  for (const auto& c : fit.coefficients) {
    w.row({c.name, ingest::format_double(c.estimate), std::string(stars_for_p(c.p), '*'),
           ingest::format_double(c.std_error),
           std::isfinite(c.z) ? ingest::format_double(c.z) : "inf", ingest::format_double(c.p)});
  }
  for (const auto& d : fit.dropped) w.row({d.name, "-", "", "", "", ""});
  w.row({"Estimator", model::estimator_name(fit.estimator), "", "", "", ""});
  w.row({"Clusters", std::to_string(fit.n_clusters), "", "", "", ""});
  w.row({"LogLikelihood", ingest::format_double(fit.loglik), "", "", "", ""});
  w.row({"PseudoR2", ingest::format_double(fit.pseudo_r2), "", "", "", ""});
  w.row({"AIC", ingest::format_double(fit.aic), "", "", "", ""});
  w.row({"BIC", ingest::format_double(fit.bic), "", "", "", ""});
  w.row({"Observations", std::to_string(fit.n_obs), "", "", "", ""});
}

} // namespace routeentry::estimators
