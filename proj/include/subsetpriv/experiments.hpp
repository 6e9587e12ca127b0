#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "subsetpriv/adult.hpp"
#include "subsetpriv/design.hpp"
#include "subsetpriv/distribution.hpp"
#include "subsetpriv/independence.hpp"
#include "subsetpriv/rng.hpp"
#include "subsetpriv/simulate.hpp"

namespace subsetpriv {

inline const std::vector<std::string>& pair_test_methods() {
  static const std::vector<std::string> methods{"pearson", "lrt-mle", "lrt-mom", "bonferroni"};
  return methods;
}

inline TestResult run_pair_test(const std::string& method, const PairDataset& data, double alpha) {
  if (method == "pearson") return pearson_test(data);
  if (method == "lrt-mle") return lrt_test(data, JointMethod::kMle);
  if (method == "lrt-mom") return lrt_test(data, JointMethod::kMom);
  if (method == "bonferroni") return bonferroni_test(data, alpha);
  throw Error(ErrorCode::kInvalidArgument, "unknown test '" + method + "'");
}

/// p-values of each test over `null_reps` independent and `alt_reps`
/// dependent replications. Every replication draws fresh w_X, w_Y from the
/// flat Dirichlet and observes (X, Y) through uniform designs.
struct PairStudy {
  std::map<std::string, std::vector<double>> null_p;
  std::map<std::string, std::vector<double>> alt_p;

  double auc(const std::string& method) const { return roc_auc(null_p.at(method), alt_p.at(method)); }

  double power(const std::string& method, double alpha) const {
    const auto& ps = alt_p.at(method);
    double hits = 0;
    for (double p : ps) hits += p < alpha ? 1.0 : 0.0;
    return hits / static_cast<double>(ps.size());
  }
};

inline PairStudy pair_study(int p, int q, double rho, std::size_t n, int null_reps, int alt_reps,
                            std::uint64_t seed, double alpha = 0.05,
                            const std::vector<std::string>& methods = pair_test_methods()) {
  const IndependentDesign da = uniform_design(p);
  const IndependentDesign db = uniform_design(q);
  PairStudy out;
  for (int r = 0; r < null_reps + alt_reps; ++r) {
    const bool dependent = r >= null_reps;
    Stream rng(seed, static_cast<std::uint64_t>(r));
    const Distribution wx = random_distribution(p, rng);
    const Distribution wy = random_distribution(q, rng);
    const Eigen::MatrixXd joint = dependent_joint(wx, wy, dependent ? rho : 0.0);
    const PairDataset data = sample_pairs(joint, da, db, n, derive_seed(seed ^ 0xda7aULL, r));
    for (const auto& m : methods) {
      (dependent ? out.alt_p : out.null_p)[m].push_back(run_pair_test(m, data, alpha).p_value);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gender and income folded into one 4-category variable under the uniform
// p = 4 design.

struct CombinedScenario {
  Distribution population;  // law of the combined variable
  CombinedSchema schema;
  IndependentDesign design;

  static CombinedScenario gender_income(bool null_population = false) {
    return {null_population ? adult::gender_income_null() : adult::gender_income_distribution(),
            adult::gender_income_schema(), uniform_design(4)};
  }

  Observations sample(std::size_t n, std::uint64_t seed) const {
    return sample_dataset(population, design, n, seed).records;
  }
};

inline TestResult combined_test(const CombinedScenario& s, const Observations& obs, JointMethod method) {
  return combined_lrt(obs, induce_conditional(s.design), s.schema, method);
}

/// Asymptotic LRT p-values over `reps` replications of size n.
inline std::vector<double> combined_pvalues(const CombinedScenario& s, std::size_t n, int reps,
                                            std::uint64_t seed, JointMethod method = JointMethod::kMle) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    out.push_back(combined_test(s, s.sample(n, derive_seed(seed, static_cast<std::uint64_t>(r))), method).p_value);
  }
  return out;
}

/// Null-calibrated p-values (see calibrate_combined_null) over `reps`
/// replications of size n.
inline std::vector<double> combined_calibrated_pvalues(const CombinedScenario& s, std::size_t n, int reps,
                                                       int replicates, std::uint64_t seed,
                                                       JointMethod method = JointMethod::kMle,
                                                       double alpha = 0.05) {
  const ConditionalDesign design = induce_conditional(s.design);
  const CombinedTest test = [&](const Observations& obs) { return combined_lrt(obs, design, s.schema, method); };
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(r));
    const Observations obs = s.sample(n, rep_seed);
    out.push_back(calibrate_combined_null(test, obs, design, s.schema, replicates, alpha, rep_seed ^ 0xca1bULL).p_value);
  }
  return out;
}

inline double rejection_rate(const std::vector<double>& pvalues, double alpha) {
  if (pvalues.empty()) return 0.0;
  double hits = 0;
  for (double p : pvalues) hits += p < alpha ? 1.0 : 0.0;
  return hits / static_cast<double>(pvalues.size());
}

/// Calibrated p-values are rank fractions; rejection uses p <= alpha.
inline double calibrated_rejection_rate(const std::vector<double>& pvalues, double alpha) {
  if (pvalues.empty()) return 0.0;
  double hits = 0;
  for (double p : pvalues) hits += p <= alpha ? 1.0 : 0.0;
  return hits / static_cast<double>(pvalues.size());
}

}  // namespace subsetpriv
