#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "subsetpriv/design.hpp"
#include "subsetpriv/distribution.hpp"
#include "subsetpriv/error.hpp"
#include "subsetpriv/independence.hpp"
#include "subsetpriv/rng.hpp"

namespace subsetpriv {

/// W ∝ w_X w_Y^T + ρ I, divided by its total mass. Needs p = q when ρ ≠ 0.
inline Eigen::MatrixXd dependent_joint(const Distribution& wx, const Distribution& wy, double rho) {
  if (rho < 0.0) throw Error(ErrorCode::kInvalidArgument, "rho must be >= 0");
  Eigen::MatrixXd w = wx.vector() * wy.vector().transpose();
  if (rho != 0.0) {
    if (wx.size() != wy.size()) throw Error(ErrorCode::kInvalidArgument, "rho > 0 needs p == q");
    w.diagonal().array() += rho;
  }
  return w / w.sum();
}

/// n pairs (X, Y) ~ W, each reported through its own independent design.
/// Pair i uses sub-stream i of `seed`.
inline PairDataset sample_pairs(const Eigen::MatrixXd& joint, const IndependentDesign& ind_a,
                                const IndependentDesign& ind_b, std::size_t n, std::uint64_t seed) {
  if (joint.rows() != ind_a.p() || joint.cols() != ind_b.p()) {
    throw Error(ErrorCode::kInvalidArgument, "joint shape does not match the designs");
  }
  // Row-major flattening so that cell k maps to (k / q, k % q).
  const Eigen::Index q = joint.cols();
  std::vector<double> cells(static_cast<std::size_t>(joint.size()));
  for (Eigen::Index r = 0; r < joint.rows(); ++r) {
    for (Eigen::Index c = 0; c < q; ++c) cells[static_cast<std::size_t>(r * q + c)] = joint(r, c);
  }
  const DiscreteSampler sampler{std::span<const double>(cells)};
  PairDataset out;
  out.design_a = induce_conditional(ind_a);
  out.design_b = induce_conditional(ind_b);
  out.pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(seed, i);
    const auto k = static_cast<Eigen::Index>(sampler.sample(rng));
    const Subset a = draw_subset(static_cast<int>(k / q), ind_a, rng);
    const Subset b = draw_subset(static_cast<int>(k % q), ind_b, rng);
    out.pairs.push_back({a, b});
  }
  return out;
}

}  // namespace subsetpriv
