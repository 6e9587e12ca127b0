#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "subsetpriv/design.hpp"
#include "subsetpriv/estimation.hpp"

using namespace subsetpriv;

namespace {

Subset S(std::initializer_list<int> idx, int p) { return Subset::from_indices(idx, p); }

Observations obs_of(std::initializer_list<Subset> subsets) {
  Observations out;
  for (const auto& a : subsets) out.push_back({a, 1.0});
  return out;
}

std::vector<oracle::Mask> masks(const Observations& obs) {
  std::vector<oracle::Mask> out;
  for (const auto& o : obs) out.push_back(o.subset.bits());
  return out;
}

const Distribution kW{0.1, 0.2, 0.3, 0.4};

}  // namespace

TEST(LogLikelihood, Examples) {
  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 0.25);
  EXPECT_DOUBLE_EQ(log_likelihood(flat, obs_of({S({0, 1}, 4), S({2, 3}, 4)})).value, 2.0 * std::log(0.5));
  EXPECT_NEAR(log_likelihood(kW.vector(), obs_of({S({0, 1}, 4)})).value, std::log(0.3), 1e-15);
  const LogLikelihood degenerate = log_likelihood(Distribution{1.0, 0.0, 0.0, 0.0}.vector(),
                                                  obs_of({S({0, 1}, 4), S({1, 2}, 4)}));
  EXPECT_TRUE(degenerate.degenerate());
  EXPECT_EQ(degenerate.zero_mass_index, 1u);
  EXPECT_EQ(degenerate.value, -std::numeric_limits<double>::infinity());
}

TEST(EmMle, BoundaryMaximizerMatchesGrid) {
  const Observations obs = obs_of({S({0, 1}, 4), S({0, 2}, 4), S({0, 3}, 4)});
  const EstimateResult r = em_mle(obs, uniform_start(4));
  EXPECT_NEAR(r.w_hat[0], 1.0, 1e-4);
  EXPECT_NEAR(*r.log_likelihood, 0.0, 1e-5);
  const double grid = oracle::grid_max_loglik_p4(masks(obs));
  EXPECT_EQ(grid, 0.0);
  EXPECT_GE(*r.log_likelihood, grid - 1e-5);
}

TEST(EmMle, NonUniqueMaximizerIsFlagged) {
  const Observations obs = obs_of({S({0, 1}, 4), S({2, 3}, 4)});
  const EstimateResult r = em_mle(obs, uniform_start(4));
  EXPECT_FALSE(r.diagnostics.mle_unique);
  EXPECT_NEAR(r.w_hat[0] + r.w_hat[1], 0.5, 1e-9);
  EXPECT_NEAR(*r.log_likelihood, 2.0 * std::log(0.5), 1e-9);
}

TEST(EmMle, RejectsBoundaryStart) {
  try {
    em_mle(obs_of({S({0, 1}, 4)}), Eigen::Vector4d(0.5, 0.5, 0.0, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonInteriorInit);
  }
}

TEST(EmMle, ConsistentAtLargeN) {
  const IndependentDesign d = uniform_design(4);
  const Observations obs = sample_dataset(kW, d, 100000, 11).records;
  const EstimateResult r = em_mle(obs, uniform_start(4), induce_conditional(d));
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(r.w_hat[j], kW[j], 0.01);
  EXPECT_TRUE(r.diagnostics.covariance_available);
  EXPECT_LE((r.covariance - r.covariance.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(r.covariance).eigenvalues().minCoeff(), -1e-8);
}

TEST(EmMle, TraceIsMonotone) {
  const IndependentDesign d = uniform_design(5);
  const Observations obs = sample_dataset(Distribution{0.05, 0.1, 0.15, 0.3, 0.4}, d, 300, 2).records;
  EmOptions opt;
  opt.record_trace = true;
  const EstimateResult r = em_mle(obs, uniform_start(5), opt);
  ASSERT_GT(r.trace.size(), 2u);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_GE(r.trace[i], r.trace[i - 1] - 1e-12);
  // The trace value matches an independent evaluation at the returned point.
  EXPECT_NEAR(r.trace.back(), oracle::log_likelihood(masks(obs), r.w_raw), 1e-9);
}

TEST(EmMle, GridOracleOnSmallInstances) {
  const IndependentDesign d = uniform_design(4);
  for (std::uint64_t seed : {1u, 2u}) {
    Stream rng(seed);
    const Distribution w = random_distribution(4, rng);
    const Observations obs = sample_dataset(w, d, 12, seed).records;
    const EstimateResult r = em_mle(obs, uniform_start(4));
    EXPECT_GE(*r.log_likelihood, oracle::grid_max_loglik_p4(masks(obs), 400) - 1e-5);
  }
}

TEST(MomGeneral, SymmetricMomentsGiveUniform) {
  Observations obs;
  for_each_subset(4, 2, 2, [&](const Subset& a) { obs.push_back({a, 1.0}); });
  const EstimateResult r = mom_general(obs, induce_conditional(uniform_design(4)));
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(r.w_hat[j], 0.25, 1e-14);
}

TEST(MomGeneral, SingularQ) {
  const ConditionalDesign mu(CategorySchema(4), {{S({0, 1}, 4), 1.0}, {S({2, 3}, 4), 1.0}});
  const Eigen::MatrixXd q = coefficient_matrix(mu);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(q);
  EXPECT_EQ(lu.rank(), 2);
  try {
    mom_general(obs_of({S({0, 1}, 4)}), mu);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIdentifiabilityViolation);
  }
}

TEST(MomGeneral, ConsistentAtLargeN) {
  const IndependentDesign d = uniform_design(4);
  const Observations obs = sample_dataset(kW, d, 100000, 12).records;
  const EstimateResult r = mom_general(obs, induce_conditional(d));
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(r.w_hat[j], kW[j], 0.015);
}

TEST(MomUniform, Ratio) {
  EXPECT_DOUBLE_EQ(uniform_ratio(4), 3.0);
  EXPECT_DOUBLE_EQ(uniform_ratio(5), 2.5);
  EXPECT_THROW(uniform_ratio(3), Error);
  EXPECT_THROW(mom_uniform(obs_of({S({0, 1}, 3)}), 3), Error);
}

TEST(MomUniform, ClosedFormAndProjection) {
  // Weighted subset frequencies with indicator means (0.7, 0.5, 0.5, 0.3).
  const Observations obs{{S({0, 1}, 4), 3}, {S({0, 2}, 4), 3}, {S({0, 3}, 4), 1},
                         {S({1, 2}, 4), 1}, {S({1, 3}, 4), 1}, {S({2, 3}, 4), 1}};
  const EstimateResult r = mom_uniform(obs, 4);
  const Eigen::Vector4d raw(0.55, 0.25, 0.25, -0.05);
  EXPECT_LE((r.w_raw - raw).cwiseAbs().maxCoeff(), 1e-14);
  const Eigen::Vector4d projected = Eigen::Vector4d(0.55, 0.25, 0.25, 0.0) / 1.05;
  EXPECT_LE((r.w_hat.vector() - projected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_TRUE(r.diagnostics.projection_applied);
  EXPECT_NEAR(r.w_hat.vector().sum(), 1.0, 1e-12);
}

TEST(MomUniform, MatchesGeneralOnPopulationMoments) {
  for (int p = 4; p <= 10; ++p) {
    Stream rng(static_cast<std::uint64_t>(p));
    const Distribution w = random_distribution(p, rng);
    const ConditionalDesign mu = induce_conditional(uniform_design(p));
    const Eigen::VectorXd gamma = coefficient_matrix(mu) * w.vector();
    const double r = uniform_ratio(p);
    const Eigen::VectorXd closed = (r * gamma.array() - 1.0) / (r - 1.0);
    const Eigen::VectorXd general = coefficient_matrix(mu).llt().solve(gamma);
    EXPECT_LE((closed - general).cwiseAbs().maxCoeff(), 1e-10) << p;
    EXPECT_LE((closed - w.vector()).cwiseAbs().maxCoeff(), 1e-10) << p;
  }
}

TEST(MomUniform, SampleDifferenceIsAShiftAlongOnes) {
  // closed − Q⁻¹γ̂ = c/(1−c) (Σγ̂ / (1 + (p−1)c) − 1) · 1 with c = 1/r_p.
  // The shift vanishes when the mean subset size equals its expectation,
  // which always holds at p = 4.
  for (int p = 4; p <= 7; ++p) {
    const IndependentDesign d = uniform_design(p);
    Stream rng(static_cast<std::uint64_t>(p));
    const Observations obs = sample_dataset(random_distribution(p, rng), d, 500, 3).records;
    const EstimateResult a = mom_uniform(obs, p);
    const EstimateResult b = mom_general(obs, induce_conditional(d));
    double size_sum = 0.0;
    for (const auto& o : obs) size_sum += static_cast<double>(o.subset.size());
    const double c = 1.0 / uniform_ratio(p);
    const double shift = c / (1.0 - c) * (size_sum / obs.size() / (1.0 + (p - 1) * c) - 1.0);
    const Eigen::VectorXd diff = a.w_raw - b.w_raw;
    for (int j = 0; j < p; ++j) EXPECT_NEAR(diff[j], shift, 1e-12) << p;
    if (p == 4) EXPECT_LE(diff.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(MomentSystem, MatchesEnumeration) {
  Stream rng(19);
  const IndependentDesign ind = random_independent_design(5, rng);
  const Distribution w = random_distribution(5, rng);
  const MomentSystem m = moment_system(induce_conditional(ind), w.vector());
  std::map<oracle::Mask, double> nu;
  for (const auto& e : ind.entries()) nu[e.subset.bits()] = e.prob;
  const oracle::Joint joint = oracle::independent_joint(nu, w.vector());
  // H_ij = E 1{i ∈ A} 1{j ∈ A}; γ_i = E 1{i ∈ A}.
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(5, 5);
  for (const auto& [a, cells] : joint.cells) {
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        if (oracle::has(a, i) && oracle::has(a, j)) h(i, j) += joint.prob_a(a);
      }
    }
  }
  EXPECT_LE((m.h - h).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((m.gamma - h.diagonal()).cwiseAbs().maxCoeff(), 1e-14);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(m.q(i, i), 1.0, 1e-12);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m.c).eigenvalues().minCoeff(), -1e-12);
}

TEST(MomentSystem, UniformClosedForm) {
  for (int p = 4; p <= 9; ++p) {
    Stream rng(static_cast<std::uint64_t>(100 + p));
    const Distribution w = random_distribution(p, rng);
    const MomentSystem a = uniform_moment_system(p, w.vector());
    const MomentSystem b = moment_system(induce_conditional(uniform_design(p)), w.vector());
    EXPECT_LE((a.q - b.q).cwiseAbs().maxCoeff(), 1e-13) << p;
    EXPECT_LE((a.h - b.h).cwiseAbs().maxCoeff(), 1e-13) << p;
    EXPECT_NEAR(a.q(0, 1), 1.0 / uniform_ratio(p), 1e-14);
  }
}

TEST(OneStep, FixedPointAtTheMle) {
  const IndependentDesign d = uniform_design(4);
  const ConditionalDesign mu = induce_conditional(d);
  const Observations obs = sample_dataset(kW, d, 400, 21).records;
  EstimateResult current = em_mle(obs, uniform_start(4));
  for (int i = 0; i < 6; ++i) current = one_step(obs, mu, current);
  EXPECT_LE(current.diagnostics.step_norm, 1e-8);
}

TEST(OneStep, SingularHessianFlagged) {
  const ConditionalDesign mu(CategorySchema(4), {{S({0, 1}, 4), 1.0}, {S({2, 3}, 4), 1.0}});
  EstimateResult start;
  start.w_raw = uniform_start(4);
  start.w_hat = Distribution::uniform(4);
  const EstimateResult r = one_step(obs_of({S({0, 1}, 4), S({2, 3}, 4)}), mu, start);
  EXPECT_TRUE(r.diagnostics.singular_hessian);
}

TEST(OneStep, CloseToEm) {
  const IndependentDesign d = uniform_design(4);
  const ConditionalDesign mu = induce_conditional(d);
  const Observations obs = sample_dataset(kW, d, 10000, 22).records;
  const EstimateResult em = em_mle(obs, uniform_start(4));
  const EstimateResult one = one_step(obs, mu, mom_general(obs, mu));
  EXPECT_LE((one.w_hat.vector() - em.w_hat.vector()).norm(), 0.005);
}

TEST(OneStep, ClampsInfeasibleStart) {
  const IndependentDesign d = uniform_design(4);
  const ConditionalDesign mu = induce_conditional(d);
  const Observations obs = sample_dataset(Distribution{0.0, 0.2, 0.3, 0.5}, d, 300, 23).records;
  EstimateResult start = mom_general(obs, mu);
  start.w_raw = Eigen::Vector4d(-0.05, 0.25, 0.3, 0.5);
  const EstimateResult r = one_step(obs, mu, start);
  EXPECT_NEAR(r.w_hat.vector().sum(), 1.0, 1e-12);
  EXPECT_GE(r.w_hat.vector().minCoeff(), 0.0);
}

TEST(Derivatives, FiniteDifferences) {
  const IndependentDesign d = uniform_design(5);
  Stream rng(31);
  const Observations obs = sample_dataset(random_distribution(5, rng), d, 200, 31).records;
  const AggregatedObservations agg = aggregate(obs, 5);
  for (int trial = 0; trial < 10; ++trial) {
    // Interior point away from the boundary.
    Eigen::VectorXd w = random_distribution(5, rng).vector();
    w = (0.5 * w.array() + 0.1).matrix();
    w /= w.sum();
    const Eigen::VectorXd theta = Reparam::to_theta(w);
    auto ll = [&](const Eigen::VectorXd& t) { return oracle::log_likelihood(masks(obs), Reparam::to_w(t)); };
    const Eigen::VectorXd g = log_likelihood_gradient(w, agg);
    const Eigen::MatrixXd h = log_likelihood_hessian(w, agg);
    const double step = 1e-6;
    for (int i = 0; i < 4; ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(4);
      e[i] = step;
      const double fd = (ll(theta + e) - ll(theta - e)) / (2 * step);
      EXPECT_NEAR(g[i], fd, 1e-5 * std::max(1.0, std::abs(fd)));
      const Eigen::VectorXd gp = log_likelihood_gradient(Reparam::to_w(theta + e), agg);
      const Eigen::VectorXd gm = log_likelihood_gradient(Reparam::to_w(theta - e), agg);
      const Eigen::VectorXd col = (gp - gm) / (2 * step);
      for (int j = 0; j < 4; ++j) EXPECT_NEAR(h(j, i), col[j], 1e-4 * std::max(1.0, std::abs(col[j])));
    }
  }
}

TEST(FisherInformation, Examples) {
  const ConditionalDesign pair(CategorySchema(4), {{S({0, 1}, 4), 1.0}, {S({2, 3}, 4), 1.0}});
  const FisherInformation singular = fisher_information(uniform_start(4), pair);
  EXPECT_TRUE(singular.singular);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(singular.matrix);
  EXPECT_EQ(lu.rank(), 1);

  const ConditionalDesign mu = induce_conditional(uniform_design(4));
  const FisherInformation info = fisher_information(uniform_start(4), mu);
  EXPECT_FALSE(info.singular);
  // Σ over 6 subsets of (1/3)(B^T v)(B^T v)^T / 0.5, with B^T v from the masks.
  Eigen::Matrix3d expected = Eigen::Matrix3d::Zero();
  for (oracle::Mask a = 0; a < 16; ++a) {
    if (std::popcount(a) != 2) continue;
    Eigen::Vector3d g;
    for (int i = 0; i < 3; ++i) g[i] = (oracle::has(a, i) ? 1.0 : 0.0) - (oracle::has(a, 3) ? 1.0 : 0.0);
    expected += (1.0 / 3.0) * g * g.transpose() / 0.5;
  }
  EXPECT_LE((info.matrix - expected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(info.matrix).eigenvalues().minCoeff(), 0.0);

  std::vector<WeightedSubset> half;
  for (const auto& e : mu.entries()) half.push_back({e.subset, 0.5 * e.prob});
  const FisherInformation halved = fisher_information(uniform_start(4), ConditionalDesign(mu.schema(), half));
  EXPECT_LE((halved.matrix - 0.5 * info.matrix).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Identifiability, Examples) {
  EXPECT_TRUE(check_identifiability(induce_conditional(uniform_design(4))).identifiable);
  EXPECT_TRUE(check_identifiability(induce_conditional(uniform_design(4))).q_positive_definite);

  const ConditionalDesign pair(CategorySchema(4), {{S({0, 1}, 4), 1.0}, {S({2, 3}, 4), 1.0}});
  const IdentifiabilityDiagnosis d = check_identifiability(pair);
  EXPECT_FALSE(d.identifiable);
  EXPECT_FALSE(d.q_positive_definite);
  EXPECT_EQ(d.rank, 1);
  ASSERT_EQ(d.null_direction.size(), 4);
  // The reported direction is invisible to both subsets and keeps Σw = 1;
  // (1, −1, −1, 1) is one such direction.
  EXPECT_NEAR(d.null_direction.sum(), 0.0, 1e-12);
  EXPECT_NEAR(d.null_direction[0] + d.null_direction[1], 0.0, 1e-12);
  EXPECT_NEAR(d.null_direction[2] + d.null_direction[3], 0.0, 1e-12);
  const Eigen::Vector4d canonical(1, -1, -1, 1);
  EXPECT_NEAR(S({0, 1}, 4).indicator().dot(canonical), 0.0, 0.0);
  EXPECT_NEAR(S({2, 3}, 4).indicator().dot(canonical), 0.0, 0.0);

  std::vector<WeightedSubset> all_pairs;
  for_each_subset(4, 2, 2, [&](const Subset& a) { all_pairs.push_back({a, 1.0 / 3.0}); });
  EXPECT_TRUE(check_identifiability(ConditionalDesign(CategorySchema(4), all_pairs)).identifiable);
}

TEST(Benchmark, SymmetricLimitsCoincide) {
  const ConditionalDesign mu = induce_conditional(uniform_design(4));
  const TheoreticalLimits lim = scaled_loss_limits(uniform_start(4), mu);
  EXPECT_NEAR(lim.mle, lim.mom, 1e-9);
}

TEST(Benchmark, MomCovarianceDominatesMle) {
  Stream rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    const int p = 4 + trial % 3;
    const ConditionalDesign mu = induce_conditional(random_independent_design(p, rng));
    const Distribution w = random_distribution(p, rng);
    Eigen::VectorXd ww = (0.7 * w.vector().array() + 0.3 / p).matrix();
    const MomentSystem m = moment_system(mu, ww);
    const Eigen::MatrixXd q_inv = m.q.inverse();
    const Eigen::MatrixXd diff = q_inv * m.c * q_inv - mle_asymptotic_covariance(ww, mu);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (diff + diff.transpose())).eigenvalues().minCoeff(),
              -1e-9);
    const TheoreticalLimits lim = scaled_loss_limits(ww, mu);
    EXPECT_GE(lim.mom, lim.mle - 1e-12);
  }
}

TEST(Benchmark, SmallRun) {
  const BenchmarkResult b = scaled_l2_benchmark(kW, uniform_design(4), 500, 40, 9);
  EXPECT_EQ(b.losses.size(), 4u);
  EXPECT_GT(b.loss("em").mean, b.loss("sample").mean);
  EXPECT_GT(b.mom_limit, b.mle_limit);
  // Non-private sample frequencies: limit Σ w_j (1 − w_j) = 0.7.
  EXPECT_NEAR(b.loss("sample").mean, 0.7, 4 * b.loss("sample").standard_error);
}

TEST(SimplexClosure, ProjectedEstimates) {
  const IndependentDesign d = uniform_design(6);
  const ConditionalDesign mu = induce_conditional(d);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Observations obs =
        sample_dataset(Distribution{0.0, 0.01, 0.02, 0.07, 0.4, 0.5}, d, 60, seed).records;
    for (const EstimateResult& r : {mom_general(obs, mu), mom_uniform(obs, 6), em_mle(obs, uniform_start(6))}) {
      EXPECT_NEAR(r.w_hat.vector().sum(), 1.0, 1e-12);
      EXPECT_GE(r.w_hat.vector().minCoeff(), 0.0);
    }
  }
}

TEST(KnownDummies, RecoversDistribution) {
  const Distribution w{0.1, 0.2, 0.3, 0.4};
  const DummyDesign dd = dummy_wrap(uniform_design(4), 0.2);
  const SampledDataset data =
      sample_with_dummies(w, 0.2, 60000, 4, [&](int x, Stream& rng) { return dd.draw(x, rng); });
  const EstimateResult r = mom_known_dummies(data.records, dd.induced(), 4, 0.2);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(r.w_hat[j], w[j], 0.02);
  // Without the known dummy mass the enlarged design is not identifiable.
  EXPECT_FALSE(check_identifiability(dd.induced()).identifiable);
}
