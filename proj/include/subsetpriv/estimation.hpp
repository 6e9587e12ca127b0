#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subsetpriv/design.hpp"
#include "subsetpriv/distribution.hpp"
#include "subsetpriv/error.hpp"
#include "subsetpriv/linalg.hpp"
#include "subsetpriv/subset.hpp"

namespace subsetpriv {

// Warning threshold for min_{i,j}(w_i + w_j); the asymptotic theory needs it
// bounded away from zero.
inline constexpr double kPairMassWarning = 1e-6;
inline constexpr double kIdentifiabilityTolerance = 1e-10;
inline constexpr double kOneStepClamp = 1e-6;

/// w = offset + basis · θ with θ the first p−1 coordinates of w.
struct Reparam {
  static Eigen::MatrixXd basis(int p) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, p - 1);
    b.topRows(p - 1).setIdentity();
    b.row(p - 1).setConstant(-1.0);
    return b;
  }
  static Eigen::VectorXd offset(int p) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(p);
    a[p - 1] = 1.0;
    return a;
  }
  static Eigen::VectorXd to_theta(const Eigen::VectorXd& w) { return w.head(w.size() - 1); }
  static Eigen::VectorXd to_w(const Eigen::VectorXd& theta) {
    Eigen::VectorXd w(theta.size() + 1);
    w.head(theta.size()) = theta;
    w[theta.size()] = 1.0 - theta.sum();
    return w;
  }
};

/// B^T v_a.
inline Eigen::VectorXd reduced_indicator(const Subset& a) {
  const int p = a.width();
  const double last = a.contains(p - 1) ? 1.0 : 0.0;
  Eigen::VectorXd g(p - 1);
  for (int j = 0; j < p - 1; ++j) g[j] = (a.contains(j) ? 1.0 : 0.0) - last;
  return g;
}

/// Distinct subsets with their summed weights.
struct AggregatedObservations {
  std::vector<Subset> subsets;
  std::vector<double> weights;
  double total = 0.0;
  int p = 0;
};

inline AggregatedObservations aggregate(const Observations& obs, int p = 0) {
  AggregatedObservations out;
  out.p = p;
  std::map<std::uint64_t, double> counts;
  for (const auto& o : obs) {
    if (out.p == 0) out.p = o.subset.width();
    if (o.subset.width() != out.p) {
      throw Error(ErrorCode::kInvalidArgument, "observations mix different category counts");
    }
    if (o.subset.empty()) throw Error(ErrorCode::kInvalidArgument, "empty subset observation");
    if (!(o.weight >= 0.0) || !std::isfinite(o.weight)) {
      throw Error(ErrorCode::kInvalidArgument, "observation weights must be finite and >= 0");
    }
    counts[o.subset.bits()] += o.weight;
  }
  for (const auto& [bits, weight] : counts) {
    if (weight <= 0.0) continue;
    out.subsets.emplace_back(bits, out.p);
    out.weights.push_back(weight);
    out.total += weight;
  }
  return out;
}

struct LogLikelihood {
  double value = 0.0;
  std::optional<std::size_t> zero_mass_index;  // first record with v_a^T w = 0
  bool degenerate() const { return zero_mass_index.has_value(); }
};

/// Σ_i weight_i · ln(v_{a_i}^T w), dropping the design-dependent constant.
inline LogLikelihood log_likelihood(const Eigen::VectorXd& w, const Observations& obs) {
  LogLikelihood out;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].subset.width() != w.size()) {
      throw Error(ErrorCode::kInvalidArgument, "observation width does not match w");
    }
    const double mass = obs[i].subset.mass(w);
    if (!(mass > 0.0)) {
      if (obs[i].weight > 0.0) {
        out.value = -std::numeric_limits<double>::infinity();
        out.zero_mass_index = i;
        return out;
      }
      continue;
    }
    out.value += obs[i].weight * std::log(mass);
  }
  return out;
}

inline double log_likelihood(const Eigen::VectorXd& w, const AggregatedObservations& agg) {
  double total = 0.0;
  for (std::size_t k = 0; k < agg.subsets.size(); ++k) {
    const double mass = agg.subsets[k].mass(w);
    if (!(mass > 0.0)) return -std::numeric_limits<double>::infinity();
    total += agg.weights[k] * std::log(mass);
  }
  return total;
}

/// ∇_θ l_n = Σ_i B^T v_{a_i} / (v_{a_i}^T w).
inline Eigen::VectorXd log_likelihood_gradient(const Eigen::VectorXd& w,
                                               const AggregatedObservations& agg) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size() - 1);
  for (std::size_t k = 0; k < agg.subsets.size(); ++k) {
    g += agg.weights[k] * reduced_indicator(agg.subsets[k]) / agg.subsets[k].mass(w);
  }
  return g;
}

/// ∇²_θ l_n = −Σ_i (B^T v_{a_i})(B^T v_{a_i})^T / (v_{a_i}^T w)².
inline Eigen::MatrixXd log_likelihood_hessian(const Eigen::VectorXd& w,
                                              const AggregatedObservations& agg) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(w.size() - 1, w.size() - 1);
  for (std::size_t k = 0; k < agg.subsets.size(); ++k) {
    const Eigen::VectorXd g = reduced_indicator(agg.subsets[k]);
    const double mass = agg.subsets[k].mass(w);
    h.noalias() -= agg.weights[k] / (mass * mass) * g * g.transpose();
  }
  return h;
}

/// Whether the stacked distinct observed subsets R satisfy rank(RB) = p − 1,
/// which makes the MLE unique.
inline bool mle_unique(const AggregatedObservations& agg) {
  const int p = agg.p;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p - 1, p - 1);
  for (const auto& a : agg.subsets) {
    const Eigen::VectorXd g = reduced_indicator(a);
    gram.noalias() += g * g.transpose();
  }
  return relative_min_eigenvalue(gram) > kIdentifiabilityTolerance;
}

// ---------------------------------------------------------------------------

struct EstimateDiagnostics {
  bool identifiable = true;
  bool mle_unique = true;
  bool projection_applied = false;
  bool singular_hessian = false;
  bool covariance_available = false;
  bool small_pair_mass = false;
  double step_norm = 0.0;  // one-step only
  std::vector<std::string> warnings;
};

struct EstimateResult {
  Distribution w_hat;        // projected onto the simplex
  Eigen::VectorXd w_raw;     // before projection
  Eigen::MatrixXd covariance;  // asymptotic covariance of w_hat / n; empty if unavailable
  std::string method;
  int iterations = 0;
  std::optional<double> log_likelihood;
  EstimateDiagnostics diagnostics;
  std::vector<double> trace;  // per-iteration log-likelihood when requested
};

namespace detail {

inline void finish_projection(EstimateResult& r) {
  const Eigen::VectorXd projected = project_to_simplex(r.w_raw);
  r.diagnostics.projection_applied = (projected - r.w_raw).cwiseAbs().maxCoeff() > 0.0;
  r.w_hat = Distribution(projected);
}

inline void check_pair_mass(const Eigen::VectorXd& w, EstimateDiagnostics& d) {
  Eigen::VectorXd sorted = w;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  if (sorted.size() >= 2 && sorted[0] + sorted[1] < kPairMassWarning) {
    d.small_pair_mass = true;
    d.warnings.push_back("min pair mass below " + std::to_string(kPairMassWarning) +
                         "; asymptotic covariance may be unreliable");
  }
}

inline void require_width(const Observations& obs, int p) {
  for (const auto& o : obs) {
    if (o.subset.width() != p) {
      throw Error(ErrorCode::kInvalidArgument, "observation width does not match the design");
    }
  }
}

}  // namespace detail

struct FisherInformation {
  Eigen::MatrixXd matrix;
  bool singular = false;
};

/// Per-observation information I(θ) = Σ_a μ_a (B^T v_a)(B^T v_a)^T / (v_a^T w).
/// Subsets with no mass under w are floored at 1e-12.
inline FisherInformation fisher_information(const Eigen::VectorXd& w,
                                            const ConditionalDesign& design) {
  const int p = design.p();
  if (w.size() != p) throw Error(ErrorCode::kInvalidArgument, "w size does not match design");
  FisherInformation out;
  out.matrix = Eigen::MatrixXd::Zero(p - 1, p - 1);
  for (const auto& e : design.entries()) {
    const Eigen::VectorXd g = reduced_indicator(e.subset);
    const double mass = std::max(e.subset.mass(w), 1e-12);
    out.matrix.noalias() += e.prob / mass * g * g.transpose();
  }
  out.singular = relative_min_eigenvalue(out.matrix) <= kIdentifiabilityTolerance;
  return out;
}

/// Asymptotic covariance of √n(ŵ − w) for the MLE: B I(θ)^{-1} B^T.
inline Eigen::MatrixXd mle_asymptotic_covariance(const Eigen::VectorXd& w,
                                                 const ConditionalDesign& design) {
  const Eigen::MatrixXd b = Reparam::basis(design.p());
  return b * spd_inverse(fisher_information(w, design).matrix) * b.transpose();
}

struct MomentSystem {
  Eigen::MatrixXd q;      // q_ij = Σ_{a∋i,j} μ_a
  Eigen::VectorXd gamma;  // E 1_A = Q w
  Eigen::MatrixXd h;      // E 1_A 1_A^T
  Eigen::MatrixXd c;      // Cov(1_A) = H − γγ^T
};

inline Eigen::MatrixXd coefficient_matrix(const ConditionalDesign& design) {
  const int p = design.p();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(p, p);
  for (const auto& e : design.entries()) {
    const auto idx = e.subset.indices();
    for (int i : idx) {
      for (int j : idx) q(i, j) += e.prob;
    }
  }
  return q;
}

inline MomentSystem moment_system(const ConditionalDesign& design, const Eigen::VectorXd& w) {
  const int p = design.p();
  MomentSystem m;
  m.q = coefficient_matrix(design);
  m.gamma = m.q * w;
  m.h = Eigen::MatrixXd::Zero(p, p);
  for (const auto& e : design.entries()) {
    const double weight = e.prob * e.subset.mass(w);
    const auto idx = e.subset.indices();
    for (int i : idx) {
      for (int j : idx) m.h(i, j) += weight;
    }
  }
  m.c = m.h - m.gamma * m.gamma.transpose();
  return m;
}

/// r_p = (2^{p−1} − p − 1) / (2^{p−2} − p + 1); off-diagonal entries of Q
/// under the uniform design are 1/r_p.
inline double uniform_ratio(int p) {
  if (p < 4) throw Error(ErrorCode::kDomainTooSmall, "the uniform design needs p >= 4");
  return (std::ldexp(1.0, p - 1) - p - 1.0) / (std::ldexp(1.0, p - 2) - p + 1.0);
}

/// Moment system of the uniform design in closed form (no enumeration).
/// Counts supersets of a fixed m-set with size in [2, p−2].
inline MomentSystem uniform_moment_system(int p, const Eigen::VectorXd& w) {
  if (p < 4) throw Error(ErrorCode::kDomainTooSmall, "the uniform design needs p >= 4");
  auto supersets = [p](int m) {
    double count = 0.0;
    double binom = 1.0;  // C(p−m, k−m) as k runs from m
    for (int k = m; k <= p - 2; ++k) {
      if (k >= 2) count += binom;
      binom = binom * (p - k) / (k - m + 1);
    }
    return count;
  };
  const double mu = 1.0 / (std::ldexp(1.0, p - 1) - p - 1.0);
  const double c1 = mu * supersets(1);
  const double c2 = mu * supersets(2);
  const double c3 = mu * supersets(3);
  MomentSystem m;
  m.q = Eigen::MatrixXd::Constant(p, p, c2);
  m.q.diagonal().setConstant(c1);
  m.gamma = m.q * w;
  m.h.resize(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      if (i == j) {
        m.h(i, j) = m.gamma[i];
      } else {
        const double pair = w[i] + w[j];
        m.h(i, j) = c2 * pair + c3 * (1.0 - pair);
      }
    }
  }
  m.c = m.h - m.gamma * m.gamma.transpose();
  return m;
}

struct IdentifiabilityDiagnosis {
  bool identifiable = false;           // rank{v_a^T B : μ_a > 0} = p − 1
  int rank = 0;
  bool q_positive_definite = false;    // shortcut for independent mechanisms
  double q_relative_min_eigenvalue = 0.0;
  Eigen::VectorXd null_direction;      // unit vector in w-space; empty when identifiable
};

inline IdentifiabilityDiagnosis check_identifiability(const ConditionalDesign& design) {
  const int p = design.p();
  const Eigen::MatrixXd b = Reparam::basis(p);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p - 1, p - 1);
  for (const auto& e : design.entries()) {
    const Eigen::VectorXd g = reduced_indicator(e.subset);
    gram.noalias() += g * g.transpose();
  }
  IdentifiabilityDiagnosis d;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    if (eig.eigenvalues()[i] > kIdentifiabilityTolerance * top) ++d.rank;
  }
  d.identifiable = top > 0.0 && d.rank == p - 1;
  if (!d.identifiable) {
    // Eigenvalues ascend, so column 0 spans the weakest direction.
    Eigen::VectorXd dir = b * eig.eigenvectors().col(0);
    d.null_direction = dir / dir.norm();
  }
  d.q_relative_min_eigenvalue = relative_min_eigenvalue(coefficient_matrix(design));
  d.q_positive_definite = d.q_relative_min_eigenvalue > kIdentifiabilityTolerance;
  return d;
}

// ---------------------------------------------------------------------------
// Estimators

struct EmOptions {
  double tol = 1e-9;  // relative log-likelihood change
  int max_iter = 10000;
  bool record_trace = false;
};

inline Eigen::VectorXd uniform_start(int p) {
  return Eigen::VectorXd::Constant(p, 1.0 / static_cast<double>(p));
}

namespace detail {

inline EstimateResult em_core(const AggregatedObservations& agg, const Eigen::VectorXd& init,
                              const EmOptions& options) {
  const int p = agg.p;
  if (init.size() != p) throw Error(ErrorCode::kInvalidArgument, "init has the wrong size");
  if ((init.array() <= 0.0).any()) {
    throw Error(ErrorCode::kNonInteriorInit, "EM needs every initial coordinate > 0");
  }
  if (!(agg.total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "no observations");
  EstimateResult r;
  r.method = "em";
  Eigen::VectorXd w = init / init.sum();
  double current = log_likelihood(w, agg);
  if (options.record_trace) r.trace.push_back(current);
  Eigen::VectorXd next(p);
  int iter = 0;
  while (iter < options.max_iter) {
    next.setZero();
    for (std::size_t k = 0; k < agg.subsets.size(); ++k) {
      const Subset& a = agg.subsets[k];
      const double scale = agg.weights[k] / a.mass(w);
      for (std::uint64_t bits = a.bits(); bits != 0; bits &= bits - 1) {
        const int j = std::countr_zero(bits);
        next[j] += scale * w[j];
      }
    }
    next /= agg.total;
    ++iter;
    const double updated = log_likelihood(next, agg);
    w.swap(next);
    if (options.record_trace) r.trace.push_back(updated);
    const double change = std::abs(updated - current);
    current = updated;
    // Relative change, with an absolute floor once |l| drops below 1.
    if (change <= options.tol * std::max(std::abs(current), 1.0)) break;
  }
  r.iterations = iter;
  r.w_raw = w;
  r.log_likelihood = current;
  finish_projection(r);
  r.diagnostics.mle_unique = mle_unique(agg);
  if (!r.diagnostics.mle_unique) {
    r.diagnostics.warnings.push_back("observed subsets do not pin down a unique MLE (RB rank deficient)");
  }
  return r;
}

}  // namespace detail

/// Maximum likelihood via EM, without a design (no covariance).
inline EstimateResult em_mle(const Observations& obs, const Eigen::VectorXd& init,
                             const EmOptions& options = {}) {
  const AggregatedObservations agg = aggregate(obs, static_cast<int>(init.size()));
  EstimateResult r = detail::em_core(agg, init, options);
  r.diagnostics.warnings.push_back("no design supplied; covariance omitted");
  return r;
}

/// Maximum likelihood via EM with covariance B Î(θ̂)^{-1} B^T / n.
inline EstimateResult em_mle(const Observations& obs, const Eigen::VectorXd& init,
                             const ConditionalDesign& design, const EmOptions& options = {}) {
  detail::require_width(obs, design.p());
  const AggregatedObservations agg = aggregate(obs, design.p());
  EstimateResult r = detail::em_core(agg, init, options);
  const FisherInformation info = fisher_information(r.w_hat.vector(), design);
  const Eigen::MatrixXd b = Reparam::basis(design.p());
  bool pinv = false;
  r.covariance = b * spd_inverse(info.matrix, &pinv) * b.transpose() / agg.total;
  r.diagnostics.covariance_available = true;
  r.diagnostics.identifiable = !info.singular;
  if (pinv) r.diagnostics.warnings.push_back("Fisher information singular; pseudo-inverse used");
  detail::check_pair_mass(r.w_hat.vector(), r.diagnostics);
  return r;
}

namespace detail {

inline Eigen::VectorXd indicator_mean(const AggregatedObservations& agg) {
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(agg.p);
  for (std::size_t k = 0; k < agg.subsets.size(); ++k) {
    for (int j : agg.subsets[k].indices()) gamma[j] += agg.weights[k];
  }
  return gamma / agg.total;
}

}  // namespace detail

/// Method of moments: solve Q ŵ = γ̂.
inline EstimateResult mom_general(const Observations& obs, const ConditionalDesign& design) {
  detail::require_width(obs, design.p());
  const AggregatedObservations agg = aggregate(obs, design.p());
  if (!(agg.total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "no observations");
  const Eigen::MatrixXd q = coefficient_matrix(design);
  if (relative_min_eigenvalue(q) <= kIdentifiabilityTolerance) {
    throw Error(ErrorCode::kIdentifiabilityViolation,
                "coefficient matrix Q is singular; the design is not identifiable");
  }
  EstimateResult r;
  r.method = "mom";
  r.iterations = 0;
  const Eigen::LLT<Eigen::MatrixXd> llt(q);
  r.w_raw = llt.solve(detail::indicator_mean(agg));
  detail::finish_projection(r);
  const MomentSystem m = moment_system(design, r.w_hat.vector());
  const Eigen::MatrixXd q_inv = llt.solve(Eigen::MatrixXd::Identity(q.rows(), q.cols()));
  r.covariance = q_inv * m.c * q_inv / agg.total;
  r.covariance = 0.5 * (r.covariance + r.covariance.transpose()).eval();
  r.diagnostics.covariance_available = true;
  return r;
}

/// Closed-form moment estimator for the uniform design:
/// ŵ = (r_p γ̂ − 1) / (r_p − 1).
inline EstimateResult mom_uniform(const Observations& obs, int p) {
  const double ratio = uniform_ratio(p);
  detail::require_width(obs, p);
  const AggregatedObservations agg = aggregate(obs, p);
  if (!(agg.total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "no observations");
  EstimateResult r;
  r.method = "mom-uniform";
  r.w_raw = (ratio * detail::indicator_mean(agg).array() - 1.0) / (ratio - 1.0);
  detail::finish_projection(r);
  const MomentSystem m = uniform_moment_system(p, r.w_hat.vector());
  const Eigen::MatrixXd q_inv = m.q.inverse();
  r.covariance = q_inv * m.c * q_inv / agg.total;
  r.covariance = 0.5 * (r.covariance + r.covariance.transpose()).eval();
  r.diagnostics.covariance_available = true;
  return r;
}

/// One Newton ascent step on l_n from a moment estimate:
/// θ_one = θ − (∇²l_n(θ))^{-1} ∇l_n(θ).
inline EstimateResult one_step(const Observations& obs, const ConditionalDesign& design,
                               const EstimateResult& start) {
  const int p = design.p();
  detail::require_width(obs, p);
  const AggregatedObservations agg = aggregate(obs, p);
  if (start.w_raw.size() != p) throw Error(ErrorCode::kInvalidArgument, "start has wrong size");
  EstimateResult r;
  r.method = "one-step";
  r.iterations = 1;

  // Pull the start strictly inside the simplex.
  Eigen::VectorXd w0 = start.w_raw;
  const bool outside = (w0.array() < kOneStepClamp).any() || (w0.array() > 1.0 - kOneStepClamp).any();
  if (outside) {
    w0 = w0.cwiseMax(kOneStepClamp).cwiseMin(1.0 - kOneStepClamp);
    w0 /= w0.sum();
    r.diagnostics.warnings.push_back("start clamped into the interior");
  }

  const Eigen::VectorXd grad = log_likelihood_gradient(w0, agg);
  const Eigen::MatrixXd neg_hessian = -log_likelihood_hessian(w0, agg);
  const SpdSolve solve = solve_spd(neg_hessian, grad);
  if (solve.used_pinv) {
    r.diagnostics.singular_hessian = true;
    r.diagnostics.warnings.push_back("SingularHessian: pseudo-inverse used for the Newton step");
  }
  const Eigen::VectorXd step = solve.solution;  // −H^{-1} g with H = ∇²l_n
  r.diagnostics.step_norm = step.norm();
  r.w_raw = Reparam::to_w(Reparam::to_theta(w0) + step);
  detail::finish_projection(r);
  const double ll = log_likelihood(r.w_hat.vector(), agg);
  if (std::isfinite(ll)) r.log_likelihood = ll;

  const FisherInformation info = fisher_information(r.w_hat.vector(), design);
  const Eigen::MatrixXd b = Reparam::basis(p);
  r.covariance = b * spd_inverse(info.matrix) * b.transpose() / agg.total;
  r.diagnostics.covariance_available = true;
  r.diagnostics.identifiable = !info.singular;
  detail::check_pair_mass(r.w_hat.vector(), r.diagnostics);
  return r;
}

/// Moment estimator on an enlarged domain [p+2] whose two dummy categories
/// have known mass α each (coverage-floor and small-p designs). Returns the
/// distribution over the p real categories, de-biased by 1/(1 − 2α).
inline EstimateResult mom_known_dummies(const Observations& obs, const ConditionalDesign& enlarged,
                                        int true_p, double alpha) {
  const int width = enlarged.p();
  if (width != true_p + 2) throw Error(ErrorCode::kInvalidArgument, "expected p + 2 categories");
  if (!(alpha > 0.0 && alpha < 0.5)) throw Error(ErrorCode::kInvalidArgument, "alpha in (0, 1/2)");
  detail::require_width(obs, width);
  const AggregatedObservations agg = aggregate(obs, width);
  if (!(agg.total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "no observations");
  const Eigen::MatrixXd q = coefficient_matrix(enlarged);
  const Eigen::MatrixXd q_tt = q.topLeftCorner(true_p, true_p);
  if (relative_min_eigenvalue(q_tt) <= kIdentifiabilityTolerance) {
    throw Error(ErrorCode::kIdentifiabilityViolation, "real-category block of Q is singular");
  }
  const Eigen::VectorXd dummy_mass = Eigen::VectorXd::Constant(2, alpha);
  const Eigen::VectorXd gamma = detail::indicator_mean(agg);
  const Eigen::LLT<Eigen::MatrixXd> llt(q_tt);
  const Eigen::VectorXd scaled =
      llt.solve(gamma.head(true_p) - q.topRightCorner(true_p, 2) * dummy_mass);

  EstimateResult r;
  r.method = "mom-dummy";
  r.w_raw = scaled / (1.0 - 2.0 * alpha);
  detail::finish_projection(r);

  Eigen::VectorXd mixed(width);
  mixed.head(true_p) = (1.0 - 2.0 * alpha) * r.w_hat.vector();
  mixed.tail(2) = dummy_mass;
  const MomentSystem m = moment_system(enlarged, mixed);
  const Eigen::MatrixXd q_inv = llt.solve(Eigen::MatrixXd::Identity(true_p, true_p));
  const double scale = 1.0 / ((1.0 - 2.0 * alpha) * (1.0 - 2.0 * alpha) * agg.total);
  r.covariance = scale * q_inv * m.c.topLeftCorner(true_p, true_p) * q_inv;
  r.covariance = 0.5 * (r.covariance + r.covariance.transpose()).eval();
  r.diagnostics.covariance_available = true;
  return r;
}

// ---------------------------------------------------------------------------
// Monte-Carlo harness for n‖ŵ − w‖²

struct LossSummary {
  std::string method;
  double mean = 0.0;
  double standard_error = 0.0;
  double seconds = 0.0;
};

struct BenchmarkResult {
  std::vector<LossSummary> losses;
  double mle_limit = 0.0;  // tr(B I(θ)^{-1} B^T)
  double mom_limit = 0.0;  // tr(Q^{-1} C Q^{-1})
  std::size_t n = 0;
  int replications = 0;

  const LossSummary& loss(const std::string& method) const {
    for (const auto& l : losses) {
      if (l.method == method) return l;
    }
    throw Error(ErrorCode::kInvalidArgument, "no such method in benchmark: " + method);
  }
};

struct TheoreticalLimits {
  double mle = 0.0;
  double mom = 0.0;
};

inline TheoreticalLimits scaled_loss_limits(const Eigen::VectorXd& w, const ConditionalDesign& design) {
  TheoreticalLimits out;
  out.mle = mle_asymptotic_covariance(w, design).trace();
  const MomentSystem m = moment_system(design, w);
  const Eigen::MatrixXd q_inv = spd_inverse(m.q);
  out.mom = (q_inv * m.c * q_inv).trace();
  return out;
}

/// Replication r samples with derived_seed(seed, r). Losses use the raw
/// (unprojected) estimates, which is what the limits describe. The "sample"
/// line uses the non-private X_i.
inline BenchmarkResult scaled_l2_benchmark(const Distribution& w, const IndependentDesign& design,
                                           std::size_t n, int replications, std::uint64_t seed,
                                           const std::vector<std::string>& methods = {
                                               "sample", "em", "mom", "one-step"}) {
  const ConditionalDesign mu = induce_conditional(design);
  const IdentifiabilityDiagnosis id = check_identifiability(mu);
  if (!id.q_positive_definite) {
    throw Error(ErrorCode::kIdentifiabilityViolation, "benchmark design is not identifiable");
  }
  BenchmarkResult out;
  out.n = n;
  out.replications = replications;
  const TheoreticalLimits limits = scaled_loss_limits(w.vector(), mu);
  out.mle_limit = limits.mle;
  out.mom_limit = limits.mom;

  struct Acc {
    double sum = 0.0, sum_sq = 0.0, seconds = 0.0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& m : methods) acc[m];
  const double scale = static_cast<double>(n);
  auto record = [&](const std::string& method, const Eigen::VectorXd& estimate, double secs) {
    const double loss = scale * (estimate - w.vector()).squaredNorm();
    auto& a = acc[method];
    a.sum += loss;
    a.sum_sq += loss * loss;
    a.seconds += secs;
  };
  using Clock = std::chrono::steady_clock;
  auto seconds_since = [](Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };

  for (int rep = 0; rep < replications; ++rep) {
    const SampledDataset data =
        sample_dataset(w, design, n, derive_seed(seed, static_cast<std::uint64_t>(rep)), true);
    std::optional<EstimateResult> mom;
    for (const auto& method : methods) {
      const auto t0 = Clock::now();
      if (method == "sample") {
        Eigen::VectorXd freq = Eigen::VectorXd::Zero(w.size());
        for (int x : data.truth) freq[x] += 1.0;
        record(method, freq / static_cast<double>(n), seconds_since(t0));
      } else if (method == "em") {
        const EstimateResult r = em_mle(data.records, uniform_start(w.size()));
        record(method, r.w_raw, seconds_since(t0));
      } else if (method == "mom") {
        mom = mom_general(data.records, mu);
        record(method, mom->w_raw, seconds_since(t0));
      } else if (method == "one-step") {
        if (!mom) mom = mom_general(data.records, mu);
        const EstimateResult r = one_step(data.records, mu, *mom);
        record(method, r.w_raw, seconds_since(t0));
      } else {
        throw Error(ErrorCode::kInvalidArgument, "unknown benchmark method: " + method);
      }
    }
  }
  const double k = static_cast<double>(replications);
  for (const auto& method : methods) {
    const Acc& a = acc[method];
    LossSummary s;
    s.method = method;
    s.mean = a.sum / k;
    const double var = replications > 1 ? (a.sum_sq - k * s.mean * s.mean) / (k - 1.0) : 0.0;
    s.standard_error = std::sqrt(std::max(var, 0.0) / k);
    s.seconds = a.seconds;
    out.losses.push_back(s);
  }
  return out;
}

}  // namespace subsetpriv
