#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subsetpriv/distribution.hpp"
#include "subsetpriv/error.hpp"
#include "subsetpriv/rng.hpp"
#include "subsetpriv/schema.hpp"
#include "subsetpriv/subset.hpp"

namespace subsetpriv {

inline constexpr double kIndependentSumTolerance = 1e-12;
inline constexpr double kRowSumTolerance = 1e-10;

struct WeightedSubset {
  Subset subset;
  double prob = 0.0;
};

namespace detail {

// Checks widths, merges duplicates, drops zero weights and sorts by mask.
inline std::vector<WeightedSubset> canonical_entries(int p, std::vector<WeightedSubset> in) {
  std::map<std::uint64_t, double> merged;
  for (const auto& e : in) {
    if (e.subset.width() != p) {
      throw Error(ErrorCode::kInvalidArgument, "design subset width does not match p");
    }
    if (!std::isfinite(e.prob) || e.prob < 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "design probabilities must be finite and >= 0");
    }
    merged[e.subset.bits()] += e.prob;
  }
  std::vector<WeightedSubset> out;
  out.reserve(merged.size());
  for (const auto& [bits, prob] : merged) {
    if (prob > 0.0) out.push_back({Subset(bits, p), prob});
  }
  return out;
}

inline double lookup(std::span<const WeightedSubset> entries, const Subset& a) {
  auto it = std::lower_bound(entries.begin(), entries.end(), a.bits(),
                             [](const WeightedSubset& e, std::uint64_t b) {
                               return e.subset.bits() < b;
                             });
  if (it != entries.end() && it->subset == a) return it->prob;
  return 0.0;
}

inline std::vector<double> probs_of(std::span<const WeightedSubset> entries) {
  std::vector<double> probs;
  probs.reserve(entries.size());
  for (const auto& e : entries) probs.push_back(e.prob);
  return probs;
}

}  // namespace detail

/// Independent mechanism: draws Ã ~ ν regardless of X, then reports Ã when
/// X ∈ Ã and its complement otherwise.
class IndependentDesign {
 public:
  IndependentDesign() = default;

  IndependentDesign(CategorySchema schema, std::vector<WeightedSubset> nu,
                    bool small_subsets_allowed = false)
      : schema_(std::move(schema)),
        nu_(detail::canonical_entries(schema_.p(), std::move(nu))),
        small_subsets_allowed_(small_subsets_allowed) {
    if (nu_.empty()) throw Error(ErrorCode::kInvalidArgument, "independent design is empty");
    const int p = schema_.p();
    double total = 0.0;
    for (const auto& e : nu_) {
      total += e.prob;
      const int k = e.subset.size();
      const bool forbidden = k == 0 || k == 1 || k == p - 1 || k == p;
      if (forbidden && !small_subsets_allowed_) {
        throw Error(ErrorCode::kInvalidArgument,
                    "independent design puts mass on a subset of size " + std::to_string(k) +
                        " (sizes 0, 1, p-1, p are excluded)");
      }
    }
    if (std::abs(total - 1.0) > kIndependentSumTolerance) {
      throw Error(ErrorCode::kInvalidArgument, "independent design probabilities do not sum to 1");
    }
    sampler_ = DiscreteSampler(detail::probs_of(nu_));
  }

  const CategorySchema& schema() const noexcept { return schema_; }
  int p() const noexcept { return schema_.p(); }
  std::span<const WeightedSubset> entries() const noexcept { return nu_; }
  bool small_subsets_allowed() const noexcept { return small_subsets_allowed_; }

  double probability(const Subset& a) const { return detail::lookup(nu_, a); }

  /// Draws Ã, independent of any respondent.
  Subset draw_tilde(Stream& rng) const { return nu_[sampler_.sample(rng)].subset; }

  bool is_complement_symmetric(double tol = kIndependentSumTolerance) const {
    for (const auto& e : nu_) {
      if (std::abs(e.prob - probability(e.subset.complement())) > tol) return false;
    }
    return true;
  }

  /// Set when every entry is exactly 1/denominator (analytic construction).
  std::optional<std::uint64_t> uniform_denominator() const noexcept { return denominator_; }

 private:
  friend IndependentDesign uniform_design(int p, int enumeration_cap);
  friend IndependentDesign with_schema(const IndependentDesign& design, CategorySchema schema);

  CategorySchema schema_;
  std::vector<WeightedSubset> nu_;
  bool small_subsets_allowed_ = false;
  DiscreteSampler sampler_;
  std::optional<std::uint64_t> denominator_;
};

/// Conditional mechanism: P(A = a | X = j) = μ_a 1{j ∈ a}. Construction only
/// checks shapes and signs; use validate_conditional() for the row-sum law.
class ConditionalDesign {
 public:
  ConditionalDesign() = default;

  ConditionalDesign(CategorySchema schema, std::vector<WeightedSubset> mu,
                    bool small_subsets_allowed = false)
      : schema_(std::move(schema)),
        mu_(detail::canonical_entries(schema_.p(), std::move(mu))),
        small_subsets_allowed_(small_subsets_allowed) {}

  const CategorySchema& schema() const noexcept { return schema_; }
  int p() const noexcept { return schema_.p(); }
  std::span<const WeightedSubset> entries() const noexcept { return mu_; }
  bool small_subsets_allowed() const noexcept { return small_subsets_allowed_; }
  double probability(const Subset& a) const { return detail::lookup(mu_, a); }

  std::vector<Subset> support() const {
    std::vector<Subset> out;
    out.reserve(mu_.size());
    for (const auto& e : mu_) out.push_back(e.subset);
    return out;
  }

  /// Draws A given X = x directly from the conditional law (the data
  /// publisher's view; requires knowing x).
  Subset draw(int x, Stream& rng) const {
    if (x < 0 || x >= p()) throw Error(ErrorCode::kInvalidArgument, "category out of range");
    const RowCache& rows = row_cache();
    const auto& row = rows.members[static_cast<std::size_t>(x)];
    if (row.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "no subset in the design contains category " + std::to_string(x));
    }
    return mu_[row[rows.samplers[static_cast<std::size_t>(x)].sample(rng)]].subset;
  }

 private:
  struct RowCache {
    std::once_flag once;
    std::vector<std::vector<std::size_t>> members;
    std::vector<DiscreteSampler> samplers;
  };

  const RowCache& row_cache() const {
    std::call_once(rows_->once, [this] {
      const int p = this->p();
      rows_->members.assign(static_cast<std::size_t>(p), {});
      rows_->samplers.assign(static_cast<std::size_t>(p), {});
      for (int j = 0; j < p; ++j) {
        std::vector<double> probs;
        auto& members = rows_->members[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < mu_.size(); ++i) {
          if (mu_[i].subset.contains(j)) {
            members.push_back(i);
            probs.push_back(mu_[i].prob);
          }
        }
        if (!members.empty()) rows_->samplers[static_cast<std::size_t>(j)] = DiscreteSampler(probs);
      }
    });
    return *rows_;
  }

  CategorySchema schema_;
  std::vector<WeightedSubset> mu_;
  bool small_subsets_allowed_ = false;
  std::shared_ptr<RowCache> rows_ = std::make_shared<RowCache>();
};

struct ValidationReport {
  std::vector<double> row_deviation;        // |Σ_{a∋j} μ_a − 1| per category
  std::vector<Subset> support_violations;   // |a| < 2 with μ_a > 0
  double max_deviation = 0.0;
  bool valid = false;
};

inline ValidationReport validate_conditional(const ConditionalDesign& design) {
  ValidationReport report;
  const int p = design.p();
  std::vector<double> row_sum(static_cast<std::size_t>(p), 0.0);
  for (const auto& e : design.entries()) {
    if (e.subset.size() < 2 && !design.small_subsets_allowed()) {
      report.support_violations.push_back(e.subset);
    }
    for (int j : e.subset.indices()) row_sum[static_cast<std::size_t>(j)] += e.prob;
  }
  for (double s : row_sum) {
    report.row_deviation.push_back(std::abs(s - 1.0));
    report.max_deviation = std::max(report.max_deviation, std::abs(s - 1.0));
  }
  report.valid = report.max_deviation <= kRowSumTolerance && report.support_violations.empty();
  return report;
}

/// ν_a = 1/(2^p − 2p − 2) on every subset of size 2..p−2.
inline IndependentDesign uniform_design(int p, int enumeration_cap = kDefaultEnumerationCap) {
  if (p < 4) {
    throw Error(ErrorCode::kDomainTooSmall,
                "the uniform design needs p >= 4 (use small_p_design for p = 2, 3)");
  }
  if (p > enumeration_cap || p > 62) {
    throw Error(ErrorCode::kDomainTooLarge,
                "p = " + std::to_string(p) + " exceeds the enumeration cap " +
                    std::to_string(enumeration_cap));
  }
  const std::uint64_t denominator = (std::uint64_t{1} << p) - 2 * static_cast<std::uint64_t>(p) - 2;
  const double prob = 1.0 / static_cast<double>(denominator);
  std::vector<WeightedSubset> nu;
  nu.reserve(denominator);
  for_each_subset(p, 2, p - 2, [&](const Subset& a) { nu.push_back({a, prob}); });
  IndependentDesign design(CategorySchema(p), std::move(nu));
  design.denominator_ = denominator;
  return design;
}

inline IndependentDesign with_schema(const IndependentDesign& design, CategorySchema schema) {
  if (schema.p() != design.p()) throw Error(ErrorCode::kInvalidArgument, "schema size mismatch");
  std::vector<WeightedSubset> nu(design.entries().begin(), design.entries().end());
  IndependentDesign out(std::move(schema), std::move(nu), design.small_subsets_allowed());
  out.denominator_ = design.denominator_;
  return out;
}

/// μ_a = ν_a + ν_{a^c}.
inline ConditionalDesign induce_conditional(const IndependentDesign& ind) {
  std::map<std::uint64_t, double> mu;
  for (const auto& e : ind.entries()) {
    mu[e.subset.bits()] += e.prob;
    mu[e.subset.complement().bits()] += e.prob;
  }
  std::vector<WeightedSubset> entries;
  for (const auto& [bits, prob] : mu) {
    if (bits != 0) entries.push_back({Subset(bits, ind.p()), prob});
  }
  return ConditionalDesign(ind.schema(), std::move(entries), ind.small_subsets_allowed());
}

/// One respondent's report under the independent mechanism. Always contains x.
inline Subset draw_subset(int x, const IndependentDesign& ind, Stream& rng) {
  if (x < 0 || x >= ind.p()) throw Error(ErrorCode::kInvalidArgument, "category out of range");
  const Subset tilde = ind.draw_tilde(rng);
  return tilde.contains(x) ? tilde : tilde.complement();
}

struct SubsetObservation {
  Subset subset;
  double weight = 1.0;
};

using Observations = std::vector<SubsetObservation>;

struct SampledDataset {
  Observations records;
  std::vector<int> truth;  // filled only when requested
};

/// n i.i.d. records: X_i ~ w, A_i drawn by the independent mechanism. Record i
/// uses sub-stream i of `seed`.
inline SampledDataset sample_dataset(const Distribution& w, const IndependentDesign& ind,
                                     std::size_t n, std::uint64_t seed, bool keep_truth = false) {
  if (w.size() != ind.p()) throw Error(ErrorCode::kInvalidArgument, "distribution size mismatch");
  const DiscreteSampler categories(std::span<const double>(w.vector().data(), w.vector().size()));
  SampledDataset out;
  out.records.reserve(n);
  if (keep_truth) out.truth.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(seed, i);
    const int x = static_cast<int>(categories.sample(rng));
    out.records.push_back({draw_subset(x, ind, rng), 1.0});
    if (keep_truth) out.truth.push_back(x);
  }
  return out;
}

/// Random independent design: U(0,1) weights on every allowed subset.
inline IndependentDesign random_independent_design(int p, Stream& rng,
                                                   int enumeration_cap = kDefaultEnumerationCap) {
  if (p < 4) throw Error(ErrorCode::kDomainTooSmall, "random designs need p >= 4");
  if (p > enumeration_cap) throw Error(ErrorCode::kDomainTooLarge, "p exceeds enumeration cap");
  std::vector<WeightedSubset> nu;
  double total = 0.0;
  for_each_subset(p, 2, p - 2, [&](const Subset& a) {
    const double u = rng.uniform() + 1e-12;
    nu.push_back({a, u});
    total += u;
  });
  for (auto& e : nu) e.prob /= total;
  double again = 0.0;
  for (const auto& e : nu) again += e.prob;
  nu.front().prob += 1.0 - again;
  return IndependentDesign(CategorySchema(p), std::move(nu));
}

/// A = {X}. Violates subset privacy; only a comparison baseline.
inline ConditionalDesign non_private_design(const CategorySchema& schema) {
  std::vector<WeightedSubset> mu;
  for (int j = 0; j < schema.p(); ++j) mu.push_back({Subset::singleton(j, schema.p()), 1.0});
  return ConditionalDesign(schema, std::move(mu), /*small_subsets_allowed=*/true);
}

/// A = [p] always.
inline ConditionalDesign fully_private_design(const CategorySchema& schema) {
  return ConditionalDesign(schema, {{Subset::full(schema.p()), 1.0}});
}

/// (1 − λ) a + λ b, entrywise on μ.
inline ConditionalDesign mix_designs(const ConditionalDesign& a, const ConditionalDesign& b,
                                     double lambda) {
  if (a.p() != b.p()) throw Error(ErrorCode::kInvalidArgument, "designs differ in p");
  std::vector<WeightedSubset> mu;
  for (const auto& e : a.entries()) mu.push_back({e.subset, (1.0 - lambda) * e.prob});
  for (const auto& e : b.entries()) mu.push_back({e.subset, lambda * e.prob});
  return ConditionalDesign(a.schema(), std::move(mu),
                           a.small_subsets_allowed() || b.small_subsets_allowed());
}

// ---------------------------------------------------------------------------
// Several variables

/// Row-major index map for a tuple of categorical variables:
/// index = ((j_1 · p_2) + j_2) · p_3 + ...
class CombinedSchema {
 public:
  CombinedSchema() = default;
  explicit CombinedSchema(std::vector<CategorySchema> parts) : parts_(std::move(parts)) {
    total_ = 1;
    for (const auto& s : parts_) total_ *= s.p();
  }

  int size() const noexcept { return total_; }
  const std::vector<CategorySchema>& parts() const noexcept { return parts_; }

  int encode(std::span<const int> values) const {
    if (values.size() != parts_.size()) throw Error(ErrorCode::kInvalidArgument, "arity mismatch");
    int index = 0;
    for (std::size_t k = 0; k < parts_.size(); ++k) {
      if (values[k] < 0 || values[k] >= parts_[k].p()) {
        throw Error(ErrorCode::kInvalidArgument, "value out of range for variable " +
                                                     std::to_string(k));
      }
      index = index * parts_[k].p() + values[k];
    }
    return index;
  }
  int encode(std::initializer_list<int> values) const {
    return encode(std::span<const int>(values.begin(), values.size()));
  }

  std::vector<int> decode(int index) const {
    if (index < 0 || index >= total_) throw Error(ErrorCode::kInvalidArgument, "index out of range");
    std::vector<int> out(parts_.size());
    for (std::size_t k = parts_.size(); k-- > 0;) {
      out[k] = index % parts_[k].p();
      index /= parts_[k].p();
    }
    return out;
  }

  CategorySchema schema() const {
    bool labelled = std::all_of(parts_.begin(), parts_.end(),
                                [](const CategorySchema& s) { return s.has_labels(); });
    if (!labelled) return CategorySchema(total_);
    std::vector<std::string> labels;
    for (int i = 0; i < total_; ++i) {
      std::string label;
      const auto values = decode(i);
      for (std::size_t k = 0; k < parts_.size(); ++k) {
        if (k > 0) label += "|";
        label += parts_[k].label(values[k]);
      }
      labels.push_back(std::move(label));
    }
    return CategorySchema(total_, std::move(labels));
  }

  std::vector<Distribution> marginals(const Distribution& joint) const {
    if (joint.size() != total_) throw Error(ErrorCode::kInvalidArgument, "joint size mismatch");
    std::vector<Eigen::VectorXd> acc;
    for (const auto& s : parts_) acc.push_back(Eigen::VectorXd::Zero(s.p()));
    for (int i = 0; i < total_; ++i) {
      const auto values = decode(i);
      for (std::size_t k = 0; k < parts_.size(); ++k) acc[k][values[k]] += joint[i];
    }
    std::vector<Distribution> out;
    for (auto& v : acc) out.push_back(Distribution(project_to_simplex(v)));
    return out;
  }

  /// For two variables: the joint vector reshaped to a p_1 × p_2 matrix.
  Eigen::MatrixXd as_matrix(const Eigen::VectorXd& joint) const {
    if (parts_.size() != 2) throw Error(ErrorCode::kInvalidArgument, "as_matrix needs 2 variables");
    Eigen::MatrixXd m(parts_[0].p(), parts_[1].p());
    for (int r = 0; r < parts_[0].p(); ++r) {
      for (int c = 0; c < parts_[1].p(); ++c) m(r, c) = joint[r * parts_[1].p() + c];
    }
    return m;
  }

 private:
  std::vector<CategorySchema> parts_;
  int total_ = 0;
};

inline CombinedSchema combine_variables(std::vector<CategorySchema> schemas,
                                        int cap = kDefaultEnumerationCap) {
  if (schemas.empty()) throw Error(ErrorCode::kInvalidArgument, "nothing to combine");
  long long total = 1;
  for (const auto& s : schemas) {
    if (s.p() < 2) throw Error(ErrorCode::kDomainTooSmall, "each variable needs p >= 2");
    total *= s.p();
    if (total > cap) {
      throw Error(ErrorCode::kDomainTooLarge,
                  "combined domain exceeds the cap of " + std::to_string(cap));
    }
  }
  return CombinedSchema(std::move(schemas));
}

/// Coordinate-wise conditional designs for a vector of variables; the
/// observation is the tuple of per-variable subsets.
class ProductDesign {
 public:
  explicit ProductDesign(std::vector<ConditionalDesign> components)
      : components_(std::move(components)) {
    if (components_.empty()) throw Error(ErrorCode::kInvalidArgument, "empty product design");
  }

  const std::vector<ConditionalDesign>& components() const noexcept { return components_; }

  std::vector<Subset> draw(std::span<const int> values, Stream& rng) const {
    if (values.size() != components_.size()) throw Error(ErrorCode::kInvalidArgument, "arity");
    std::vector<Subset> out;
    out.reserve(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) out.push_back(components_[k].draw(values[k], rng));
    return out;
  }

  /// P(A = a, B = b) = μ^A_a μ^B_b v_a^T W v_b for two variables.
  double joint_probability(const Subset& a, const Subset& b, const Eigen::MatrixXd& joint) const {
    if (components_.size() != 2) throw Error(ErrorCode::kInvalidArgument, "needs 2 variables");
    return components_[0].probability(a) * components_[1].probability(b) *
           (a.indicator().transpose() * joint * b.indicator())(0, 0);
  }

 private:
  std::vector<ConditionalDesign> components_;
};

// ---------------------------------------------------------------------------
// Enlarged domains with two dummy categories (indices p and p+1).

/// Population on [p+2] after mixing in dummy users: ((1−2α)w, α, α).
inline Eigen::VectorXd mixed_population(const Distribution& w, double alpha) {
  Eigen::VectorXd out(w.size() + 2);
  out.head(w.size()) = (1.0 - 2.0 * alpha) * w.vector();
  out[w.size()] = alpha;
  out[w.size() + 1] = alpha;
  return out;
}

/// Number of dummy records added to n true ones so that dummies make up a
/// fraction of exactly 2α of the combined data.
inline std::size_t dummy_record_count(std::size_t n, double alpha) {
  return static_cast<std::size_t>(std::llround(2.0 * alpha * static_cast<double>(n) /
                                               (1.0 - 2.0 * alpha)));
}

inline CategorySchema enlarged_schema(const CategorySchema& base) {
  const int p = base.p() + 2;
  if (!base.has_labels()) return CategorySchema(p);
  auto labels = base.labels();
  labels.push_back("dummy-1");
  labels.push_back("dummy-2");
  return CategorySchema(p, std::move(labels));
}

/// Coverage-floor wrapper around a complement-symmetric independent design.
/// Every emitted subset holds exactly one dummy category, each dummy carrying
/// population mass α, so every subset has size at least α.
class DummyDesign {
 public:
  DummyDesign(IndependentDesign base, double alpha)
      : base_(std::move(base)), alpha_(alpha) {
    if (!(alpha > 0.0 && alpha < 0.5)) {
      throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1/2)");
    }
    if (!base_.is_complement_symmetric()) {
      throw Error(ErrorCode::kAsymmetricBase, "dummy_wrap needs nu_a == nu_{a^c}");
    }
    const int p = base_.p();
    const ConditionalDesign base_mu = induce_conditional(base_);
    std::vector<WeightedSubset> mu;
    for (const auto& e : base_mu.entries()) {
      const Subset wide = e.subset.widened(p + 2);
      mu.push_back({wide.with(p), 0.5 * e.prob});
      mu.push_back({wide.with(p + 1), 0.5 * e.prob});
    }
    induced_ = ConditionalDesign(enlarged_schema(base_.schema()), std::move(mu));
  }

  const IndependentDesign& base() const noexcept { return base_; }
  double alpha() const noexcept { return alpha_; }
  int true_p() const noexcept { return base_.p(); }
  int enlarged_p() const noexcept { return base_.p() + 2; }
  const ConditionalDesign& induced() const noexcept { return induced_; }

  /// x in [p] is a true user, x in {p, p+1} a dummy user.
  Subset draw(int x, Stream& rng) const {
    const int p = base_.p();
    if (x < 0 || x >= p + 2) throw Error(ErrorCode::kInvalidArgument, "category out of range");
    if (x < p) {
      const Subset a = draw_subset(x, base_, rng).widened(p + 2);
      return a.with(rng.coin() ? p + 1 : p);
    }
    return base_.draw_tilde(rng).widened(p + 2).with(x);
  }

 private:
  IndependentDesign base_;
  double alpha_;
  ConditionalDesign induced_;
};

inline DummyDesign dummy_wrap(const IndependentDesign& ind, double alpha) {
  return DummyDesign(ind, alpha);
}

/// Independent design on [p+2] for p = 2 or 3: Ã is uniform over the pairs
/// {i, d} with i a real and d a dummy category. Restricted to the real
/// categories every report has size 1 or p−1; for p = 2 a real X gets {X,3}
/// or {X,4} and a dummy X gets {X,1} or {X,2}, each with probability 1/2.
inline IndependentDesign small_p_design(int p,
                                        const std::optional<CategorySchema>& labels = std::nullopt) {
  if (p != 2 && p != 3) throw Error(ErrorCode::kInvalidArgument, "small_p_design needs p in {2, 3}");
  const int width = p + 2;
  std::vector<WeightedSubset> nu;
  const double prob = 1.0 / (2.0 * p);
  for (int i = 0; i < p; ++i) {
    for (int d = p; d < p + 2; ++d) nu.push_back({Subset::from_indices({i, d}, width), prob});
  }
  CategorySchema schema = labels ? enlarged_schema(*labels) : CategorySchema(width);
  return IndependentDesign(std::move(schema), std::move(nu), /*small_subsets_allowed=*/true);
}

/// n true users drawn from w plus dummy_record_count(n, α) dummy users split
/// evenly over the two dummy categories, reported through `draw(x, rng)` and
/// returned in shuffled order.
template <typename Draw>
SampledDataset sample_with_dummies(const Distribution& w, double alpha, std::size_t n,
                                   std::uint64_t seed, Draw&& draw, bool keep_truth = false) {
  const int p = w.size();
  const std::size_t m = dummy_record_count(n, alpha);
  const DiscreteSampler categories(std::span<const double>(w.vector().data(), w.vector().size()));
  SampledDataset out;
  std::vector<int> truth;
  out.records.reserve(n + m);
  truth.reserve(n + m);
  for (std::size_t i = 0; i < n + m; ++i) {
    Stream rng(seed, i);
    const int x = i < n ? static_cast<int>(categories.sample(rng))
                        : p + static_cast<int>((i - n) % 2);
    out.records.push_back({draw(x, rng), 1.0});
    truth.push_back(x);
  }
  std::vector<std::size_t> order(n + m);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Stream shuffle_rng(seed, ~std::uint64_t{0});
  shuffle_in_place(order, shuffle_rng);
  Observations shuffled;
  shuffled.reserve(order.size());
  for (std::size_t i : order) {
    shuffled.push_back(out.records[i]);
    if (keep_truth) out.truth.push_back(truth[i]);
  }
  out.records = std::move(shuffled);
  return out;
}

}  // namespace subsetpriv
