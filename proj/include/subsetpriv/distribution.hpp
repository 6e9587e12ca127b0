#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "subsetpriv/error.hpp"
#include "subsetpriv/rng.hpp"

namespace subsetpriv {

inline constexpr double kSimplexTolerance = 1e-12;

inline bool is_on_simplex(const Eigen::VectorXd& w, double tol = kSimplexTolerance) {
  if (w.size() == 0) return false;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (!std::isfinite(w[j]) || w[j] < 0.0 || w[j] > 1.0) return false;
  }
  return std::abs(w.sum() - 1.0) <= tol;
}

/// Clips negative coordinates to zero and renormalizes. Falls back to the
/// uniform vector when nothing positive is left.
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& raw) {
  Eigen::VectorXd w = raw.cwiseMax(0.0);
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    return Eigen::VectorXd::Constant(raw.size(), 1.0 / static_cast<double>(raw.size()));
  }
  return w / total;
}

/// A probability vector on p categories.
class Distribution {
 public:
  Distribution() = default;

  explicit Distribution(Eigen::VectorXd w) : w_(std::move(w)) {
    if (w_.size() < 1) throw Error(ErrorCode::kInvalidArgument, "empty distribution");
    for (Eigen::Index j = 0; j < w_.size(); ++j) {
      if (!std::isfinite(w_[j]) || w_[j] < 0.0 || w_[j] > 1.0) {
        throw Error(ErrorCode::kInvalidArgument,
                    "distribution coordinate " + std::to_string(j) + " outside [0, 1]");
      }
    }
    if (std::abs(w_.sum() - 1.0) > kSimplexTolerance) {
      throw Error(ErrorCode::kInvalidArgument, "distribution does not sum to 1");
    }
  }

  Distribution(std::initializer_list<double> values)
      : Distribution(Eigen::Map<const Eigen::VectorXd>(values.begin(),
                                                       static_cast<Eigen::Index>(values.size()))) {}

  /// Normalizes nonnegative weights (e.g. counts) into a distribution.
  static Distribution from_weights(const Eigen::VectorXd& weights) {
    if ((weights.array() < 0.0).any() || !(weights.sum() > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "weights must be nonnegative with positive sum");
    }
    Eigen::VectorXd w = weights / weights.sum();
    w /= w.sum();
    return Distribution(std::move(w));
  }

  static Distribution uniform(int p) {
    return Distribution(Eigen::VectorXd::Constant(p, 1.0 / p));
  }

  int size() const noexcept { return static_cast<int>(w_.size()); }
  double operator[](int j) const { return w_[j]; }
  const Eigen::VectorXd& vector() const noexcept { return w_; }

 private:
  Eigen::VectorXd w_;
};

/// Flat Dirichlet draw: uniform over the simplex.
inline Distribution random_distribution(int p, Stream& rng) {
  Eigen::VectorXd g(p);
  for (int j = 0; j < p; ++j) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    g[j] = -std::log(u);
  }
  return Distribution::from_weights(g);
}

}  // namespace subsetpriv
