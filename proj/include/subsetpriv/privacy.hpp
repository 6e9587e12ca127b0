#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subsetpriv/design.hpp"
#include "subsetpriv/error.hpp"
#include "subsetpriv/subset.hpp"

namespace subsetpriv {

// Population-level leakage of a design under w. Information quantities in bits.
struct PrivacyReport {
  double size_coverage = 0.0;        // τ = E L(A)
  double size_leakage = 0.0;         // S = 1 − τ
  double mi_leakage = 0.0;           // I(X; A)
  double entropy_coverage = 0.0;     // H(X | A)
  double prediction_leakage = 0.0;   // R(X; A)
  double prediction_coverage = 0.0;  // 1 − R
  double entropy = 0.0;              // H(X)
  double blind_guess = 0.0;          // max_j w_j
};

namespace detail {

inline void check_design_w(const ConditionalDesign& design, const Eigen::VectorXd& w) {
  if (w.size() != design.p()) throw Error(ErrorCode::kInvalidArgument, "w size does not match design");
}

inline double entropy_bits(const Eigen::VectorXd& w) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (w[j] > 0.0) h -= w[j] * std::log2(w[j]);
  }
  return h;
}

}  // namespace detail

/// L(a) = v_a^T w.
inline double subset_size(const Subset& a, const Eigen::VectorXd& w) {
  if (a.empty()) throw Error(ErrorCode::kInvalidArgument, "subset must be nonempty");
  if (a.width() != w.size()) throw Error(ErrorCode::kInvalidArgument, "subset width mismatch");
  return a.mass(w);
}

struct SizeReport {
  double coverage = 0.0;
  double leakage = 0.0;
};

/// τ = Σ_a P(A = a) L(a) = Σ_a μ_a L(a)².
inline SizeReport size_report(const ConditionalDesign& design, const Eigen::VectorXd& w) {
  detail::check_design_w(design, w);
  SizeReport r;
  for (const auto& e : design.entries()) {
    const double mass = e.subset.mass(w);
    r.coverage += e.prob * mass * mass;
  }
  r.leakage = 1.0 - r.coverage;
  return r;
}

struct MutualInformationReport {
  double leakage = 0.0;   // I(X; A)
  double coverage = 0.0;  // H(X | A)
  double entropy = 0.0;   // H(X)
};

/// Enumerates the joint law P(x, a) = w_x μ_a 1{x ∈ a} over the support.
inline MutualInformationReport mi_report(const ConditionalDesign& design, const Eigen::VectorXd& w) {
  detail::check_design_w(design, w);
  MutualInformationReport r;
  r.entropy = detail::entropy_bits(w);
  for (const auto& e : design.entries()) {
    const double p_a = e.prob * e.subset.mass(w);
    if (!(p_a > 0.0)) continue;
    for (int x : e.subset.indices()) {
      const double joint = w[x] * e.prob;
      if (joint > 0.0) r.leakage += joint * std::log2(joint / (w[x] * p_a));
    }
  }
  r.leakage = std::max(r.leakage, 0.0);
  r.coverage = r.entropy - r.leakage;
  return r;
}

struct PredictionReport {
  double leakage = 0.0;      // R(X; A)
  double coverage = 0.0;     // 1 − R
  double blind_guess = 0.0;  // max_j w_j, the best guess without A
};

/// R = Σ_a μ_a max_{x∈a} w_x: the best guess given A = a is the in-subset
/// mode of w.
inline PredictionReport prediction_report(const ConditionalDesign& design, const Eigen::VectorXd& w) {
  detail::check_design_w(design, w);
  PredictionReport r;
  for (const auto& e : design.entries()) {
    double best = 0.0;
    for (int x : e.subset.indices()) best = std::max(best, w[x]);
    r.leakage += e.prob * best;
  }
  r.coverage = 1.0 - r.leakage;
  r.blind_guess = w.maxCoeff();
  return r;
}

inline PrivacyReport privacy_report(const ConditionalDesign& design, const Eigen::VectorXd& w) {
  const SizeReport size = size_report(design, w);
  const MutualInformationReport mi = mi_report(design, w);
  const PredictionReport pred = prediction_report(design, w);
  PrivacyReport r;
  r.size_coverage = size.coverage;
  r.size_leakage = size.leakage;
  r.mi_leakage = mi.leakage;
  r.entropy_coverage = mi.coverage;
  r.entropy = mi.entropy;
  r.prediction_leakage = pred.leakage;
  r.prediction_coverage = pred.coverage;
  r.blind_guess = pred.blind_guess;
  return r;
}

struct RecordLeakage {
  double size_leakage = 0.0;  // 1 − L(a)
  int guess = -1;             // argmax_{x∈a} ŵ_x, lowest index on ties
  double posterior = 0.0;     // ŵ_guess / L(a)
};

inline RecordLeakage per_record_report(const Subset& a, const Eigen::VectorXd& w_hat) {
  const double size = subset_size(a, w_hat);
  RecordLeakage r;
  r.size_leakage = 1.0 - size;
  double best = -1.0;
  for (int x : a.indices()) {
    if (w_hat[x] > best) {
      best = w_hat[x];
      r.guess = x;
    }
  }
  r.posterior = size > 0.0 ? best / size : 0.0;
  return r;
}

}  // namespace subsetpriv
