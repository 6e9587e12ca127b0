#include <gtest/gtest.h>

#include <map>
#include <set>

#include "oracles.hpp"
#include "subsetpriv/design.hpp"
#include "subsetpriv/estimation.hpp"

using namespace subsetpriv;

namespace {

Subset S(std::initializer_list<int> idx, int p) { return Subset::from_indices(idx, p); }

std::map<oracle::Mask, double> nu_map(const IndependentDesign& d) {
  std::map<oracle::Mask, double> m;
  for (const auto& e : d.entries()) m[e.subset.bits()] = e.prob;
  return m;
}

}  // namespace

TEST(Subset, FormatAndParse) {
  const Subset a = S({0, 2, 3}, 5);
  EXPECT_EQ(format_subset(a), "0;2;3");
  EXPECT_EQ(parse_subset("0;2;3", 5), a);
  EXPECT_EQ(a.complement(), S({1, 4}, 5));
  EXPECT_THROW(parse_subset("2;1", 5), Error);
  EXPECT_THROW(parse_subset("", 5), Error);
  EXPECT_THROW(parse_subset("0;5", 5), Error);
  EXPECT_THROW(parse_subset("0;x", 5), Error);
}

TEST(Schema, Invariants) {
  EXPECT_THROW(CategorySchema(1), Error);
  EXPECT_THROW(CategorySchema(2, {"a"}), Error);
  EXPECT_THROW(CategorySchema(2, {"a", "a"}), Error);
  const CategorySchema s(3, {"x", "y", "z"});
  EXPECT_EQ(s.index_of("z"), 2);
  EXPECT_FALSE(s.index_of("w").has_value());
}

TEST(ValidateConditional, InducedUniformIsValid) {
  const ConditionalDesign mu = induce_conditional(uniform_design(4));
  const ValidationReport r = validate_conditional(mu);
  EXPECT_TRUE(r.valid);
  EXPECT_EQ(r.max_deviation, 0.0);
  // Six size-2 subsets with 1/3 each; every category lies in three of them.
  ASSERT_EQ(mu.entries().size(), 6u);
  for (const auto& e : mu.entries()) EXPECT_NEAR(e.prob, 1.0 / 3.0, 1e-15);
}

TEST(ValidateConditional, SingleSubsetMissesRows) {
  const ConditionalDesign mu(CategorySchema(4), {{S({0, 1}, 4), 1.0}});
  const ValidationReport r = validate_conditional(mu);
  EXPECT_FALSE(r.valid);
  EXPECT_EQ(r.row_deviation[0], 0.0);
  EXPECT_EQ(r.row_deviation[1], 0.0);
  EXPECT_EQ(r.row_deviation[2], 1.0);
  EXPECT_EQ(r.row_deviation[3], 1.0);
}

TEST(ValidateConditional, SingletonSupportIsViolation) {
  const ConditionalDesign mu(CategorySchema(4), {{S({0}, 4), 0.1}, {S({0, 1}, 4), 0.9}, {S({1, 2, 3}, 4), 0.1},
                                                  {S({2, 3}, 4), 0.9}});
  const ValidationReport r = validate_conditional(mu);
  EXPECT_FALSE(r.valid);
  ASSERT_EQ(r.support_violations.size(), 1u);
  EXPECT_EQ(r.support_violations[0], S({0}, 4));
}

TEST(UniformDesign, SupportAndProbabilities) {
  const IndependentDesign d4 = uniform_design(4);
  EXPECT_EQ(d4.entries().size(), 6u);
  for (const auto& e : d4.entries()) {
    EXPECT_EQ(e.subset.size(), 2);
    EXPECT_DOUBLE_EQ(e.prob, 1.0 / 6.0);
  }
  EXPECT_EQ(d4.uniform_denominator(), 6u);
  const IndependentDesign d5 = uniform_design(5);
  EXPECT_EQ(d5.entries().size(), 20u);
  for (const auto& e : d5.entries()) EXPECT_DOUBLE_EQ(e.prob, 1.0 / 20.0);
}

TEST(UniformDesign, DomainErrors) {
  try {
    uniform_design(3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDomainTooSmall);
  }
  try {
    uniform_design(21);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDomainTooLarge);
  }
  EXPECT_NO_THROW(uniform_design(12, 12));
}

TEST(IndependentDesign, RejectsForbiddenSizes) {
  EXPECT_THROW(IndependentDesign(CategorySchema(4), {{S({0}, 4), 1.0}}), Error);
  EXPECT_THROW(IndependentDesign(CategorySchema(4), {{S({0, 1, 2}, 4), 1.0}}), Error);
  EXPECT_THROW(IndependentDesign(CategorySchema(4), {{S({0, 1}, 4), 0.5}}), Error);
}

TEST(InduceConditional, Examples) {
  const ConditionalDesign mu5 = induce_conditional(uniform_design(5));
  EXPECT_EQ(mu5.entries().size(), 20u);
  for (const auto& e : mu5.entries()) EXPECT_NEAR(e.prob, 0.1, 1e-15);
  EXPECT_TRUE(validate_conditional(mu5).valid);

  const ConditionalDesign pair = induce_conditional(IndependentDesign(CategorySchema(4), {{S({0, 1}, 4), 1.0}}));
  ASSERT_EQ(pair.entries().size(), 2u);
  EXPECT_EQ(pair.probability(S({0, 1}, 4)), 1.0);
  EXPECT_EQ(pair.probability(S({2, 3}, 4)), 1.0);
}

TEST(InduceConditional, MatchesBranchEnumeration) {
  Stream rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 4 + trial % 3;
    const IndependentDesign ind = random_independent_design(p, rng);
    const ConditionalDesign mu = induce_conditional(ind);
    for (int x = 0; x < p; ++x) {
      const auto row = oracle::independent_row(nu_map(ind), p, x);
      double total = 0;
      for (const auto& [a, prob] : row) {
        EXPECT_NEAR(mu.probability(Subset(a, p)), prob, 1e-12);
        total += prob;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
    EXPECT_LE(validate_conditional(mu).max_deviation, 1e-10);
  }
}

TEST(InduceConditional, InvariantToComplementSymmetrization) {
  Stream rng(5);
  const IndependentDesign ind = random_independent_design(5, rng);
  std::vector<WeightedSubset> sym;
  for (const auto& e : ind.entries()) {
    sym.push_back({e.subset, 0.5 * e.prob});
    sym.push_back({e.subset.complement(), 0.5 * e.prob});
  }
  const ConditionalDesign a = induce_conditional(ind);
  const ConditionalDesign b = induce_conditional(IndependentDesign(ind.schema(), sym));
  ASSERT_EQ(a.entries().size(), b.entries().size());
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    EXPECT_EQ(a.entries()[i].subset, b.entries()[i].subset);
    EXPECT_NEAR(a.entries()[i].prob, b.entries()[i].prob, 1e-15);
  }
}

TEST(DrawSubset, BranchesOfTheMechanism) {
  const IndependentDesign d(CategorySchema(4), {{S({0, 1}, 4), 1.0}});
  Stream rng(1);
  EXPECT_EQ(draw_subset(0, d, rng), S({0, 1}, 4));
  EXPECT_EQ(draw_subset(2, d, rng), S({2, 3}, 4));
}

TEST(DrawSubset, FrequenciesFollowInducedRow) {
  const IndependentDesign d = uniform_design(4);
  std::map<Subset, int> counts;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Stream rng(99, static_cast<std::uint64_t>(i));
    ++counts[draw_subset(0, d, rng)];
  }
  ASSERT_EQ(counts.size(), 3u);
  for (const auto& [a, c] : counts) {
    EXPECT_TRUE(a.contains(0));
    EXPECT_NEAR(c / static_cast<double>(n), 1.0 / 3.0, 0.01);
  }
}

TEST(SampleDataset, Examples) {
  const IndependentDesign d = uniform_design(4);
  const SampledDataset degenerate = sample_dataset(Distribution{1.0, 0.0, 0.0, 0.0}, d, 1000, 3);
  for (const auto& o : degenerate.records) EXPECT_TRUE(o.subset.contains(0));
  EXPECT_TRUE(degenerate.truth.empty());

  const SampledDataset flat = sample_dataset(Distribution::uniform(4), d, 100000, 4);
  std::map<Subset, int> counts;
  for (const auto& o : flat.records) ++counts[o.subset];
  ASSERT_EQ(counts.size(), 6u);
  // P(A = a) = μ_a v_a^T w = (1/3)(1/2).
  for (const auto& [a, c] : counts) EXPECT_NEAR(c / 100000.0, 1.0 / 6.0, 0.01);

  EXPECT_TRUE(sample_dataset(Distribution::uniform(4), d, 0, 4).records.empty());
}

TEST(SampleDataset, DeterministicPerSeed) {
  const IndependentDesign d = uniform_design(6);
  const Distribution w = Distribution::uniform(6);
  const auto a = sample_dataset(w, d, 500, 17, true);
  const auto b = sample_dataset(w, d, 500, 17, true);
  const auto c = sample_dataset(w, d, 500, 18, true);
  ASSERT_EQ(a.truth.size(), 500u);
  bool differs = false;
  for (std::size_t i = 0; i < 500; ++i) {
    EXPECT_EQ(a.records[i].subset, b.records[i].subset);
    EXPECT_EQ(a.truth[i], b.truth[i]);
    differs |= a.records[i].subset != c.records[i].subset;
  }
  EXPECT_TRUE(differs);
}

TEST(Faithfulness, EveryDrawContainsX) {
  Stream meta(8);
  std::vector<IndependentDesign> designs;
  for (int p = 4; p <= 9; ++p) designs.push_back(random_independent_design(p, meta));
  long long misses = 0;
  for (std::uint64_t i = 0; i < 300000; ++i) {
    Stream rng(12, i);
    const IndependentDesign& d = designs[i % designs.size()];
    const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(d.p())));
    const Subset a = draw_subset(x, d, rng);
    misses += (!a.contains(x) || a.size() < 2) ? 1 : 0;
  }
  EXPECT_EQ(misses, 0);
}

TEST(NonInformativeness, PosteriorMatchesRestriction) {
  Stream rng(77);
  for (int p : {4, 5}) {
    for (int trial = 0; trial < 5; ++trial) {
      const IndependentDesign ind = random_independent_design(p, rng);
      const Distribution w = random_distribution(p, rng);
      const oracle::Joint joint = oracle::independent_joint(nu_map(ind), w.vector());
      for (const auto& [a, cells] : joint.cells) {
        const double pa = joint.prob_a(a);
        ASSERT_GT(pa, 0.0);
        const double la = oracle::mass(a, w.vector());
        for (int x = 0; x < p; ++x) {
          const double expected = oracle::has(a, x) ? w[x] / la : 0.0;
          EXPECT_NEAR(cells[static_cast<std::size_t>(x)] / pa, expected, 1e-10);
        }
      }
    }
  }
}

TEST(CombineVariables, RowMajor) {
  const CombinedSchema gi = combine_variables({CategorySchema(2, {"female", "male"}),
                                               CategorySchema(2, {"low", "high"})});
  EXPECT_EQ(gi.size(), 4);
  EXPECT_EQ(gi.encode({0, 1}), 1);
  EXPECT_EQ(gi.decode(1), (std::vector<int>{0, 1}));
  EXPECT_EQ(gi.schema().label(1), "female|high");
  EXPECT_EQ(combine_variables({CategorySchema(2), CategorySchema(3)}).size(), 6);

  const auto margins = gi.marginals(Distribution{0.3, 0.2, 0.4, 0.1});
  EXPECT_NEAR(margins[0][0], 0.5, 1e-15);
  EXPECT_NEAR(margins[0][1], 0.5, 1e-15);
  EXPECT_NEAR(margins[1][0], 0.7, 1e-15);
  EXPECT_NEAR(margins[1][1], 0.3, 1e-15);

  try {
    combine_variables({CategorySchema(5), CategorySchema(5)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDomainTooLarge);
  }
}

TEST(ProductDesign, JointLawByEnumeration) {
  // Three-category component designs (small-subset flag) and p = q = 4.
  const ConditionalDesign three(CategorySchema(3),
                                {{S({0, 1}, 3), 0.5}, {S({1, 2}, 3), 0.5}, {S({0, 2}, 3), 0.5}}, true);
  ASSERT_TRUE(validate_conditional(three).valid);
  Stream rng(3);
  const ConditionalDesign four = induce_conditional(random_independent_design(4, rng));
  for (const auto& [da, db] : {std::pair{three, three}, std::pair{four, four}}) {
    const int p = da.p();
    const int q = db.p();
    Eigen::MatrixXd joint = Eigen::MatrixXd::NullaryExpr(p, q, [&] { return rng.uniform() + 0.1; });
    joint /= joint.sum();
    const ProductDesign prod({da, db});
    double total = 0;
    for (const auto& ea : da.entries()) {
      for (const auto& eb : db.entries()) {
        // Σ_{x,y} W_xy P(a | x) P(b | y), straight from the conditional rows.
        double expected = 0;
        for (int x = 0; x < p; ++x) {
          for (int y = 0; y < q; ++y) {
            const double pa = ea.subset.contains(x) ? ea.prob : 0.0;
            const double pb = eb.subset.contains(y) ? eb.prob : 0.0;
            expected += joint(x, y) * pa * pb;
          }
        }
        EXPECT_NEAR(prod.joint_probability(ea.subset, eb.subset, joint), expected, 1e-14);
        total += expected;
      }
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(ProductDesign, DrawFrequencies) {
  const ConditionalDesign mu = induce_conditional(uniform_design(4));
  const ProductDesign prod({mu, mu});
  std::map<std::pair<Subset, Subset>, int> counts;
  const int values[] = {0, 3};
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    Stream rng(6, static_cast<std::uint64_t>(i));
    const auto ab = prod.draw(values, rng);
    ASSERT_TRUE(ab[0].contains(0));
    ASSERT_TRUE(ab[1].contains(3));
    ++counts[{ab[0], ab[1]}];
  }
  EXPECT_EQ(counts.size(), 9u);
  for (const auto& [ab, c] : counts) EXPECT_NEAR(c / static_cast<double>(n), 1.0 / 9.0, 0.01);
}

TEST(DummyDesign, TrueAndDummyUsers) {
  const DummyDesign dd = dummy_wrap(uniform_design(4), 0.2);
  EXPECT_EQ(dd.enlarged_p(), 6);
  EXPECT_TRUE(validate_conditional(dd.induced()).valid);
  for (const auto& e : dd.induced().entries()) {
    EXPECT_EQ(static_cast<int>(e.subset.contains(4)) + static_cast<int>(e.subset.contains(5)), 1);
  }
  int with_first = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    Stream rng(2, static_cast<std::uint64_t>(i));
    const Subset a = dd.draw(0, rng);
    ASSERT_TRUE(a.contains(0));
    ASSERT_EQ(a.size(), 3);
    ASSERT_NE(a.contains(4), a.contains(5));
    with_first += a.contains(4) ? 1 : 0;
  }
  EXPECT_NEAR(with_first / static_cast<double>(n), 0.5, 0.015);
  for (int i = 0; i < 2000; ++i) {
    Stream rng(3, static_cast<std::uint64_t>(i));
    const Subset a = dd.draw(4, rng);
    ASSERT_TRUE(a.contains(4));
    ASSERT_FALSE(a.contains(5));
    ASSERT_EQ(a.size(), 3);
  }
}

TEST(DummyDesign, DummyUserKeepsBaseDraw) {
  const IndependentDesign base(CategorySchema(4), {{S({0, 1}, 4), 0.5}, {S({2, 3}, 4), 0.5}});
  const DummyDesign dd(base, 0.25);
  std::set<Subset> seen;
  for (int i = 0; i < 200; ++i) {
    Stream rng(4, static_cast<std::uint64_t>(i));
    seen.insert(dd.draw(4, rng));
  }
  EXPECT_EQ(seen, (std::set<Subset>{S({0, 1, 4}, 6), S({2, 3, 4}, 6)}));
}

TEST(DummyDesign, Errors) {
  const IndependentDesign asym(CategorySchema(5), {{S({0, 1}, 5), 1.0}});
  try {
    dummy_wrap(asym, 0.2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAsymmetricBase);
  }
  EXPECT_THROW(dummy_wrap(uniform_design(4), 0.5), Error);
  EXPECT_THROW(dummy_wrap(uniform_design(4), 0.0), Error);
}

TEST(DummyDesign, RecordCountGivesExactFraction) {
  EXPECT_EQ(dummy_record_count(600, 0.2), 400u);
  const Distribution w{0.1, 0.2, 0.3, 0.4};
  const DummyDesign dd = dummy_wrap(uniform_design(4), 0.2);
  const SampledDataset data =
      sample_with_dummies(w, 0.2, 600, 5, [&](int x, Stream& rng) { return dd.draw(x, rng); }, true);
  ASSERT_EQ(data.records.size(), 1000u);
  int dummies = 0;
  for (int x : data.truth) dummies += x >= 4 ? 1 : 0;
  EXPECT_EQ(dummies, 400);
}

TEST(SmallPDesign, PTwo) {
  const IndependentDesign d = small_p_design(2);
  const ConditionalDesign mu = induce_conditional(d);
  EXPECT_TRUE(validate_conditional(mu).valid);
  std::map<Subset, int> real;
  std::map<Subset, int> dummy;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    Stream rng(8, static_cast<std::uint64_t>(i));
    ++real[draw_subset(0, d, rng)];
    ++dummy[draw_subset(2, d, rng)];
  }
  ASSERT_EQ(real.size(), 2u);
  EXPECT_NEAR(real[S({0, 2}, 4)] / static_cast<double>(n), 0.5, 0.015);
  EXPECT_NEAR(real[S({0, 3}, 4)] / static_cast<double>(n), 0.5, 0.015);
  ASSERT_EQ(dummy.size(), 2u);
  EXPECT_NEAR(dummy[S({0, 2}, 4)] / static_cast<double>(n), 0.5, 0.015);
  EXPECT_NEAR(dummy[S({1, 2}, 4)] / static_cast<double>(n), 0.5, 0.015);
  for (const auto& e : mu.entries()) {
    EXPECT_EQ(e.subset.size(), 2);
    EXPECT_NE(e.subset.contains(0), e.subset.contains(1));
    EXPECT_NE(e.subset.contains(2), e.subset.contains(3));
  }
}

TEST(SmallPDesign, PThree) {
  const ConditionalDesign mu = induce_conditional(small_p_design(3));
  EXPECT_EQ(mu.p(), 5);
  EXPECT_TRUE(validate_conditional(mu).valid);
  for (const auto& e : mu.entries()) {
    int real = 0;
    for (int j = 0; j < 3; ++j) real += e.subset.contains(j) ? 1 : 0;
    EXPECT_TRUE(real == 1 || real == 2);
    EXPECT_NE(e.subset.contains(3), e.subset.contains(4));
  }
  EXPECT_THROW(small_p_design(4), Error);
}

TEST(MixDesigns, StaysValid) {
  const ConditionalDesign u = induce_conditional(uniform_design(5));
  const ConditionalDesign f = fully_private_design(CategorySchema(5));
  for (double lambda : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    EXPECT_TRUE(validate_conditional(mix_designs(u, f, lambda)).valid) << lambda;
  }
}
