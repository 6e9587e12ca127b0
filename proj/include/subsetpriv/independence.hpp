#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "subsetpriv/chi2.hpp"
#include "subsetpriv/design.hpp"
#include "subsetpriv/error.hpp"
#include "subsetpriv/estimation.hpp"
#include "subsetpriv/linalg.hpp"
#include "subsetpriv/rng.hpp"

namespace subsetpriv {

inline constexpr double kExpectedCountFloor = 1e-12;
inline constexpr double kSmallExpectedCount = 5.0;
inline constexpr int kDefaultPermutations = 199;

struct PairObservation {
  Subset a;
  Subset b;
};

/// n subset pairs under a product of two conditional designs.
struct PairDataset {
  std::vector<PairObservation> pairs;
  ConditionalDesign design_a;
  ConditionalDesign design_b;

  Observations a_stream() const {
    Observations out;
    out.reserve(pairs.size());
    for (const auto& pr : pairs) out.push_back({pr.a, 1.0});
    return out;
  }
  Observations b_stream() const {
    Observations out;
    out.reserve(pairs.size());
    for (const auto& pr : pairs) out.push_back({pr.b, 1.0});
    return out;
  }
};

/// Counts n_ab over the cross product of the two design supports.
struct ContingencyTable {
  std::vector<Subset> rows;    // support of design A
  std::vector<Subset> cols;    // support of design B
  std::vector<double> row_mu;  // μ^A_a
  std::vector<double> col_mu;  // μ^B_b
  Eigen::MatrixXd counts;      // s × r
  double n = 0.0;

  int p() const { return rows.empty() ? 0 : rows.front().width(); }
  int q() const { return cols.empty() ? 0 : cols.front().width(); }
};

inline ContingencyTable build_table(const PairDataset& data) {
  ContingencyTable t;
  for (const auto& e : data.design_a.entries()) {
    t.rows.push_back(e.subset);
    t.row_mu.push_back(e.prob);
  }
  for (const auto& e : data.design_b.entries()) {
    t.cols.push_back(e.subset);
    t.col_mu.push_back(e.prob);
  }
  std::unordered_map<Subset, Eigen::Index, SubsetHash> row_index;
  std::unordered_map<Subset, Eigen::Index, SubsetHash> col_index;
  for (std::size_t i = 0; i < t.rows.size(); ++i) row_index[t.rows[i]] = static_cast<Eigen::Index>(i);
  for (std::size_t i = 0; i < t.cols.size(); ++i) col_index[t.cols[i]] = static_cast<Eigen::Index>(i);
  t.counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.rows.size()),
                                   static_cast<Eigen::Index>(t.cols.size()));
  for (const auto& pr : data.pairs) {
    auto r = row_index.find(pr.a);
    auto c = col_index.find(pr.b);
    if (r == row_index.end() || c == col_index.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "pair (" + format_subset(pr.a) + ", " + format_subset(pr.b) +
                      ") lies outside the design supports");
    }
    t.counts(r->second, c->second) += 1.0;
  }
  t.n = static_cast<double>(data.pairs.size());
  return t;
}

enum class JointMethod { kMle, kMom };

inline std::string joint_method_name(JointMethod m) { return m == JointMethod::kMle ? "mle" : "mom"; }

struct JointEstimate {
  Eigen::MatrixXd joint;  // Ŵ, p × q
  Distribution wx;
  Distribution wy;
  int iterations = 0;
};

namespace detail {

// EM over rectangle subsets a × b of the p·q-cell joint.
inline Eigen::MatrixXd joint_em(const ContingencyTable& t, double tol = 1e-9, int max_iter = 10000) {
  const int p = t.p();
  const int q = t.q();
  struct Cell {
    std::vector<int> a, b;
    double count;
  };
  std::vector<Cell> cells;
  for (Eigen::Index i = 0; i < t.counts.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.counts.cols(); ++j) {
      if (t.counts(i, j) > 0.0) {
        cells.push_back({t.rows[static_cast<std::size_t>(i)].indices(),
                         t.cols[static_cast<std::size_t>(j)].indices(), t.counts(i, j)});
      }
    }
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(p, q, 1.0 / (p * q));
  Eigen::MatrixXd next(p, q);
  auto cell_mass = [&w](const Cell& c) {
    double m = 0.0;
    for (int k : c.a) {
      for (int l : c.b) m += w(k, l);
    }
    return m;
  };
  auto loglik = [&]() {
    double ll = 0.0;
    for (const auto& c : cells) ll += c.count * std::log(cell_mass(c));
    return ll;
  };
  double current = loglik();
  for (int iter = 0; iter < max_iter; ++iter) {
    next.setZero();
    for (const auto& c : cells) {
      const double scale = c.count / cell_mass(c);
      for (int k : c.a) {
        for (int l : c.b) next(k, l) += scale * w(k, l);
      }
    }
    w = next / t.n;
    const double updated = loglik();
    const double change = std::abs(updated - current);
    current = updated;
    if (change <= tol * std::max(std::abs(current), 1.0)) break;
  }
  return w;
}

inline Eigen::MatrixXd project_joint(const Eigen::MatrixXd& raw) {
  Eigen::MatrixXd w = raw.cwiseMax(0.0);
  const double total = w.sum();
  if (!(total > 0.0)) return Eigen::MatrixXd::Constant(raw.rows(), raw.cols(), 1.0 / raw.size());
  return w / total;
}

inline Distribution fit_marginal(const Observations& stream, const ConditionalDesign& design,
                                 JointMethod method) {
  if (method == JointMethod::kMom) return mom_general(stream, design).w_hat;
  return detail::em_core(aggregate(stream, design.p()), uniform_start(design.p()), {}).w_hat;
}

}  // namespace detail

/// Joint Ŵ from the pair table plus marginals from the A-only and B-only
/// streams.
inline JointEstimate estimate_joint(const PairDataset& data, JointMethod method) {
  if (data.pairs.empty()) throw Error(ErrorCode::kDegenerateTable, "no pairs");
  const ContingencyTable t = build_table(data);
  JointEstimate out;
  if (method == JointMethod::kMle) {
    out.joint = detail::joint_em(t);
  } else {
    const Eigen::MatrixXd qa = coefficient_matrix(data.design_a);
    const Eigen::MatrixXd qb = coefficient_matrix(data.design_b);
    if (relative_min_eigenvalue(qa) <= kIdentifiabilityTolerance ||
        relative_min_eigenvalue(qb) <= kIdentifiabilityTolerance) {
      throw Error(ErrorCode::kIdentifiabilityViolation, "a component design is not identifiable");
    }
    Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(t.p(), t.q());
    for (Eigen::Index i = 0; i < t.counts.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.counts.cols(); ++j) {
        if (t.counts(i, j) > 0.0) {
          gamma.noalias() += t.counts(i, j) * t.rows[static_cast<std::size_t>(i)].indicator() *
                             t.cols[static_cast<std::size_t>(j)].indicator().transpose();
        }
      }
    }
    gamma /= t.n;
    const Eigen::LLT<Eigen::MatrixXd> la(qa);
    const Eigen::LLT<Eigen::MatrixXd> lb(qb);
    // Q_A^{-1} Γ Q_B^{-1}; Q_B is symmetric so solve on the transpose.
    const Eigen::MatrixXd left = la.solve(gamma);
    out.joint = detail::project_joint(lb.solve(left.transpose()).transpose());
  }
  out.wx = detail::fit_marginal(data.a_stream(), data.design_a, method);
  out.wy = detail::fit_marginal(data.b_stream(), data.design_b, method);
  return out;
}

struct TestResult {
  std::string method;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  std::string calibration = "asymptotic";
  std::optional<bool> rejected;
  std::vector<std::string> warnings;
};

/// T_P = Σ (n_ab − e_ab)² / e_ab with e_ab = n μ_a L̂_X(a) μ_b L̂_Y(b).
inline TestResult pearson_test(const ContingencyTable& t, const Distribution& wx,
                               const Distribution& wy) {
  if (!(t.n > 0.0)) throw Error(ErrorCode::kDegenerateTable, "empty table");
  TestResult r;
  r.method = "pearson";
  bool small = false;
  bool dropped = false;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double pa = t.row_mu[i] * t.rows[i].mass(wx.vector());
    for (std::size_t j = 0; j < t.cols.size(); ++j) {
      const double pb = t.col_mu[j] * t.cols[j].mass(wy.vector());
      const double expected = t.n * pa * pb;
      const double observed = t.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (expected < kSmallExpectedCount) small = true;
      if (expected <= kExpectedCountFloor) {
        if (observed > 0.0) dropped = true;
        continue;
      }
      r.statistic += (observed - expected) * (observed - expected) / expected;
    }
  }
  r.df = static_cast<int>(t.rows.size() * t.cols.size());
  r.p_value = chi2_sf(r.statistic, r.df);
  if (small) {
    r.warnings.push_back("some expected counts are below 5; prefer permutation calibration");
  }
  if (dropped) r.warnings.push_back("observed cells with ~zero expected count were skipped");
  return r;
}

/// T_L = 2 Σ n_ab ln(v_a^T Ŵ v_b / (v_a^T ŵ_X)(ŵ_Y^T v_b)).
inline TestResult lrt_statistic(const ContingencyTable& t, const Eigen::MatrixXd& joint,
                                const Distribution& wx, const Distribution& wy) {
  if (!(t.n > 0.0)) throw Error(ErrorCode::kDegenerateTable, "empty table");
  TestResult r;
  bool floored = false;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const Eigen::VectorXd va = t.rows[i].indicator();
    const double la = va.dot(wx.vector());
    const Eigen::RowVectorXd va_w = va.transpose() * joint;
    for (std::size_t j = 0; j < t.cols.size(); ++j) {
      const double count = t.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (count == 0.0) continue;
      double num = t.cols[j].mass(va_w.transpose());
      double den = la * t.cols[j].mass(wy.vector());
      if (num < kExpectedCountFloor || den < kExpectedCountFloor) {
        floored = true;
        num = std::max(num, kExpectedCountFloor);
        den = std::max(den, kExpectedCountFloor);
      }
      r.statistic += 2.0 * count * std::log(num / den);
    }
  }
  r.df = (t.p() - 1) * (t.q() - 1);
  if (floored) r.warnings.push_back("degenerate cell probabilities floored at 1e-12");
  if (r.statistic < -1e-6) r.warnings.push_back("negative LRT statistic from projected estimates");
  r.p_value = chi2_sf(std::max(r.statistic, 0.0), r.df);
  return r;
}

inline TestResult lrt_test(const PairDataset& data, JointMethod method) {
  const ContingencyTable t = build_table(data);
  if (!(t.n > 0.0)) throw Error(ErrorCode::kDegenerateTable, "empty table");
  const JointEstimate est = estimate_joint(data, method);
  TestResult r = lrt_statistic(t, est.joint, est.wx, est.wy);
  r.method = "lrt-" + joint_method_name(method);
  return r;
}

inline TestResult pearson_test(const PairDataset& data, JointMethod marginals = JointMethod::kMle) {
  if (data.pairs.empty()) throw Error(ErrorCode::kDegenerateTable, "no pairs");
  const ContingencyTable t = build_table(data);
  return pearson_test(t, detail::fit_marginal(data.a_stream(), data.design_a, marginals),
                      detail::fit_marginal(data.b_stream(), data.design_b, marginals));
}

/// Pearson statistic of the 2×2 table [[a, b], [c, d]]; 0 when a margin is empty.
inline double pearson_2x2(double a, double b, double c, double d) {
  const double n = a + b + c + d;
  const double denom = (a + b) * (c + d) * (a + c) * (b + d);
  if (!(denom > 0.0)) return 0.0;
  const double diff = a * d - b * c;
  return n * diff * diff / denom;
}

/// Classical Pearson test on a fully observed r × c table, df = (r−1)(c−1).
inline TestResult raw_table_pearson(const Eigen::MatrixXd& counts) {
  const double n = counts.sum();
  if (!(n > 0.0) || counts.rows() < 2 || counts.cols() < 2) {
    throw Error(ErrorCode::kDegenerateTable, "raw table needs positive counts and at least 2x2 cells");
  }
  const Eigen::VectorXd rows = counts.rowwise().sum();
  const Eigen::RowVectorXd cols = counts.colwise().sum();
  TestResult r;
  r.method = "pearson-raw";
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    for (Eigen::Index j = 0; j < counts.cols(); ++j) {
      const double expected = rows[i] * cols[j] / n;
      if (expected <= kExpectedCountFloor) continue;
      if (expected < kSmallExpectedCount) r.warnings = {"some expected counts are below 5"};
      r.statistic += (counts(i, j) - expected) * (counts(i, j) - expected) / expected;
    }
  }
  r.df = static_cast<int>((counts.rows() - 1) * (counts.cols() - 1));
  r.p_value = chi2_sf(r.statistic, r.df);
  return r;
}

/// One 2×2 test per coordinate pair (x, y); reject when min p_xy < α/(pq).
inline TestResult bonferroni_test(const ContingencyTable& t, double alpha) {
  if (!(t.n > 0.0)) throw Error(ErrorCode::kDegenerateTable, "empty table");
  const int p = t.p();
  const int q = t.q();
  TestResult r;
  r.method = "bonferroni";
  r.df = 1;
  double min_p = 1.0;
  for (int x = 0; x < p; ++x) {
    for (int y = 0; y < q; ++y) {
      double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
      for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const bool in_a = t.rows[i].contains(x);
        for (std::size_t j = 0; j < t.cols.size(); ++j) {
          const double c = t.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          if (c == 0.0) continue;
          const bool in_b = t.cols[j].contains(y);
          (in_a ? (in_b ? n11 : n10) : (in_b ? n01 : n00)) += c;
        }
      }
      const double stat = pearson_2x2(n11, n10, n01, n00);
      const double pv = chi2_sf(stat, 1);
      if (pv < min_p || (pv == min_p && stat > r.statistic)) {
        min_p = pv;
        r.statistic = stat;
      }
    }
  }
  r.p_value = std::min(1.0, p * q * min_p);
  r.rejected = min_p < alpha / (p * q);
  return r;
}

inline TestResult bonferroni_test(const PairDataset& data, double alpha) {
  return bonferroni_test(build_table(data), alpha);
}

using PairTest = std::function<TestResult(const PairDataset&)>;

/// Empirical null of the p-value from B copies with the A stream shuffled
/// against the B stream. Reported p-value: (1 + #{p_b ≤ p_obs}) / (B + 1).
inline TestResult permutation_calibrate(const PairTest& test, const PairDataset& data, int permutations,
                                        double alpha, std::uint64_t seed) {
  if (permutations < 99) throw Error(ErrorCode::kInvalidArgument, "use at least 99 permutations");
  TestResult observed = test(data);
  int at_most = 0;
  PairDataset shuffled = data;
  std::vector<Subset> a_stream;
  a_stream.reserve(data.pairs.size());
  for (int b = 0; b < permutations; ++b) {
    a_stream.clear();
    for (const auto& pr : data.pairs) a_stream.push_back(pr.a);
    Stream rng(seed, static_cast<std::uint64_t>(b));
    shuffle_in_place(a_stream, rng);
    for (std::size_t i = 0; i < a_stream.size(); ++i) shuffled.pairs[i].a = a_stream[i];
    if (test(shuffled).p_value <= observed.p_value) ++at_most;
  }
  observed.p_value = (1.0 + at_most) / (1.0 + permutations);
  observed.calibration = "permutation";
  observed.rejected = observed.p_value <= alpha;
  return observed;
}

// ---------------------------------------------------------------------------
// Two variables folded into one combined variable (row-major), observed
// through a single design on the combined alphabet.

namespace detail {

inline Eigen::VectorXd outer_cells(const std::vector<Distribution>& margins) {
  const int q = margins[1].size();
  Eigen::VectorXd w(margins[0].size() * q);
  for (int r = 0; r < margins[0].size(); ++r) {
    for (int c = 0; c < q; ++c) w[r * q + c] = margins[0][r] * margins[1][c];
  }
  return w;
}

/// MLE over product laws w = u ⊗ v by EM. The complete-data MLE of a
/// product multinomial is the outer product of its margins, so the M-step
/// takes margins of the expected counts.
inline Eigen::VectorXd product_em(const AggregatedObservations& agg, const CombinedSchema& schema,
                                  const Eigen::VectorXd& start, double tol = 1e-10, int max_iter = 10000) {
  Eigen::VectorXd w = start;
  double current = log_likelihood(w, agg);
  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(w.size());
    for (std::size_t k = 0; k < agg.subsets.size(); ++k) {
      const double mass = agg.subsets[k].mass(w);
      if (!(mass > 0.0)) continue;
      for (int x : agg.subsets[k].indices()) counts[x] += agg.weights[k] * w[x] / mass;
    }
    w = outer_cells(schema.marginals(Distribution(counts / counts.sum())));
    const double updated = log_likelihood(w, agg);
    const bool done = std::abs(updated - current) <= tol * std::max(std::abs(current), 1.0);
    current = updated;
    if (done) break;
  }
  return w;
}

}  // namespace detail

/// LRT on the combined alphabet. With MLE the null fit is the likelihood
/// maximizer over product laws; with MoM it is the product of the MoM
/// margins (plug-in).
inline TestResult combined_lrt(const Observations& obs, const ConditionalDesign& design,
                               const CombinedSchema& schema, JointMethod method) {
  if (schema.parts().size() != 2) throw Error(ErrorCode::kInvalidArgument, "needs two variables");
  if (design.p() != schema.size()) throw Error(ErrorCode::kInvalidArgument, "design/schema mismatch");
  const AggregatedObservations agg = aggregate(obs, design.p());
  if (!(agg.total > 0.0)) throw Error(ErrorCode::kDegenerateTable, "no observations");
  const Distribution free = method == JointMethod::kMle
                                ? detail::em_core(agg, uniform_start(design.p()), {}).w_hat
                                : mom_general(obs, design).w_hat;
  const Eigen::VectorXd plug_in = detail::outer_cells(schema.marginals(free));
  const Eigen::VectorXd null_w = method == JointMethod::kMle ? detail::product_em(agg, schema, plug_in) : plug_in;
  TestResult out;
  out.method = "lrt-" + joint_method_name(method);
  bool floored = false;
  for (std::size_t k = 0; k < agg.subsets.size(); ++k) {
    double num = agg.subsets[k].mass(free.vector());
    double den = agg.subsets[k].mass(null_w);
    if (num < kExpectedCountFloor || den < kExpectedCountFloor) {
      floored = true;
      num = std::max(num, kExpectedCountFloor);
      den = std::max(den, kExpectedCountFloor);
    }
    out.statistic += 2.0 * agg.weights[k] * std::log(num / den);
  }
  out.df = (schema.parts()[0].p() - 1) * (schema.parts()[1].p() - 1);
  if (floored) out.warnings.push_back("degenerate subset probabilities floored at 1e-12");
  if (out.statistic < -1e-6) out.warnings.push_back("negative LRT statistic from projected estimates");
  out.p_value = chi2_sf(std::max(out.statistic, 0.0), out.df);
  return out;
}

using CombinedTest = std::function<TestResult(const Observations&)>;

/// Null calibration for combined-variable data. Records hold one subset
/// each, so the two streams cannot be shuffled apart; instead each null copy
/// redraws n records from the product of the fitted margins through the
/// same design, using the null MLE. Reported p-value: (1 + #{p_b ≤ p_obs}) / (B + 1).
inline TestResult calibrate_combined_null(const CombinedTest& test, const Observations& obs,
                                          const ConditionalDesign& design, const CombinedSchema& schema,
                                          int replicates, double alpha, std::uint64_t seed) {
  if (replicates < 99) throw Error(ErrorCode::kInvalidArgument, "use at least 99 replicates");
  TestResult observed = test(obs);
  const AggregatedObservations agg = aggregate(obs, design.p());
  const Distribution free = detail::em_core(agg, uniform_start(design.p()), {}).w_hat;
  const Eigen::VectorXd null_w = detail::product_em(agg, schema, detail::outer_cells(schema.marginals(free)));
  const DiscreteSampler cells(std::span<const double>(null_w.data(), null_w.size()));
  const std::size_t n = obs.size();
  Observations resampled(n);
  int at_most = 0;
  for (int b = 0; b < replicates; ++b) {
    const std::uint64_t stream_seed = derive_seed(seed, static_cast<std::uint64_t>(b));
    for (std::size_t i = 0; i < n; ++i) {
      Stream rng(stream_seed, i);
      resampled[i] = {design.draw(static_cast<int>(cells.sample(rng)), rng), 1.0};
    }
    if (test(resampled).p_value <= observed.p_value) ++at_most;
  }
  observed.p_value = (1.0 + at_most) / (1.0 + replicates);
  observed.calibration = "null-resample";
  observed.rejected = observed.p_value <= alpha;
  return observed;
}

/// ROC AUC with p-values as scores (smaller means more evidence):
/// P(p_alt < p_null) + ½ P(p_alt = p_null).
inline double roc_auc(const std::vector<double>& null_pvalues, const std::vector<double>& alt_pvalues) {
  if (null_pvalues.empty() || alt_pvalues.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "AUC needs both classes");
  }
  std::vector<double> sorted_null = null_pvalues;
  std::sort(sorted_null.begin(), sorted_null.end());
  double wins = 0.0;
  for (double a : alt_pvalues) {
    const auto lo = std::lower_bound(sorted_null.begin(), sorted_null.end(), a);
    const auto hi = std::upper_bound(sorted_null.begin(), sorted_null.end(), a);
    wins += static_cast<double>(sorted_null.end() - hi) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(null_pvalues.size()) * static_cast<double>(alt_pvalues.size()));
}

}  // namespace subsetpriv
