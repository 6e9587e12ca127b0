#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "subsetpriv/design.hpp"
#include "subsetpriv/distribution.hpp"
#include "subsetpriv/error.hpp"
#include "subsetpriv/schema.hpp"

namespace subsetpriv::adult {

inline constexpr std::size_t kRecords = 32561;

inline const std::vector<std::string>& race_labels() {
  static const std::vector<std::string> labels{"Amer-Indian-Eskimo", "Asian-Pac-Islander", "Black",
                                               "Other", "White"};
  return labels;
}

inline constexpr std::array<std::size_t, 5> kRaceCounts{311, 1039, 3124, 271, 27816};

/// Published race frequencies, rounded to six decimals.
inline Distribution race_distribution() {
  return Distribution{0.009551, 0.031909, 0.095943, 0.008323, 0.854274};
}

inline CategorySchema race_schema() { return CategorySchema(5, race_labels()); }
inline CategorySchema gender_schema() { return CategorySchema(2, {"Female", "Male"}); }
inline CategorySchema income_schema() { return CategorySchema(2, {"<=50K", ">50K"}); }

/// Gender (rows: Female, Male) by income (cols: <=50K, >50K).
inline Eigen::Matrix2d gender_income_counts() {
  Eigen::Matrix2d m;
  m << 9592.0, 1179.0, 15128.0, 6662.0;
  return m;
}

/// Empirical law of the combined gender-income variable, row-major.
inline Distribution gender_income_distribution() {
  const Eigen::Matrix2d m = gender_income_counts();
  return Distribution({m(0, 0) / m.sum(), m(0, 1) / m.sum(), m(1, 0) / m.sum(), m(1, 1) / m.sum()});
}

/// Product of the two margins of the empirical table (the null).
inline Distribution gender_income_null() {
  const Eigen::Matrix2d m = gender_income_counts() / gender_income_counts().sum();
  const Eigen::Vector2d g = m.rowwise().sum();
  const Eigen::Vector2d inc = m.colwise().sum().transpose();
  return Distribution({g[0] * inc[0], g[0] * inc[1], g[1] * inc[0], g[1] * inc[1]});
}

inline CombinedSchema gender_income_schema() {
  return combine_variables({gender_schema(), income_schema()});
}

}  // namespace subsetpriv::adult
