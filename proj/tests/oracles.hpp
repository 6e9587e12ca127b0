#pragma once

// Brute-force reference computations used by the tests. They work from the
// raw mechanism tables and never call the library's derived formulas.

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Mask = std::uint64_t;

inline bool has(Mask a, int j) { return ((a >> j) & 1u) != 0; }
inline Mask full(int p) { return (Mask{1} << p) - 1; }

/// P(A = a | X = x) of the independent mechanism, by running its two
/// branches over every Ã: report Ã if x ∈ Ã, else its complement.
inline std::map<Mask, double> independent_row(const std::map<Mask, double>& nu, int p, int x) {
  std::map<Mask, double> row;
  for (const auto& [tilde, prob] : nu) {
    const Mask a = has(tilde, x) ? tilde : (full(p) & ~tilde);
    row[a] += prob;
  }
  return row;
}

/// Joint table P(X = x, A = a) for a design given by its conditional rows.
struct Joint {
  int p = 0;
  std::map<Mask, std::vector<double>> cells;  // a -> P(x, a) over x

  double prob_a(Mask a) const {
    double s = 0;
    for (double v : cells.at(a)) s += v;
    return s;
  }
};

inline Joint joint_from_rows(const std::vector<std::map<Mask, double>>& rows, const Eigen::VectorXd& w) {
  Joint j;
  j.p = static_cast<int>(w.size());
  for (int x = 0; x < j.p; ++x) {
    for (const auto& [a, prob] : rows[static_cast<std::size_t>(x)]) {
      auto& v = j.cells[a];
      if (v.empty()) v.assign(static_cast<std::size_t>(j.p), 0.0);
      v[static_cast<std::size_t>(x)] += w[x] * prob;
    }
  }
  return j;
}

inline Joint independent_joint(const std::map<Mask, double>& nu, const Eigen::VectorXd& w) {
  const int p = static_cast<int>(w.size());
  std::vector<std::map<Mask, double>> rows;
  for (int x = 0; x < p; ++x) rows.push_back(independent_row(nu, p, x));
  return joint_from_rows(rows, w);
}

/// Conditional design μ: P(A = a | X = x) = μ_a 1{x ∈ a}.
inline Joint conditional_joint(const std::map<Mask, double>& mu, const Eigen::VectorXd& w) {
  const int p = static_cast<int>(w.size());
  std::vector<std::map<Mask, double>> rows(static_cast<std::size_t>(p));
  for (const auto& [a, prob] : mu) {
    for (int x = 0; x < p; ++x) {
      if (has(a, x)) rows[static_cast<std::size_t>(x)][a] += prob;
    }
  }
  return joint_from_rows(rows, w);
}

inline double mass(Mask a, const Eigen::VectorXd& w) {
  double s = 0;
  for (int j = 0; j < w.size(); ++j) {
    if (has(a, j)) s += w[j];
  }
  return s;
}

/// E L(A) where L(a) = P(X ∈ a).
inline double size_coverage(const Joint& j, const Eigen::VectorXd& w) {
  double tau = 0;
  for (const auto& [a, v] : j.cells) tau += j.prob_a(a) * mass(a, w);
  return tau;
}

/// I(X; A) in bits from the joint table.
inline double mutual_information(const Joint& j, const Eigen::VectorXd& w) {
  double mi = 0;
  for (const auto& [a, v] : j.cells) {
    const double pa = j.prob_a(a);
    for (int x = 0; x < j.p; ++x) {
      const double pxa = v[static_cast<std::size_t>(x)];
      if (pxa > 0) mi += pxa * std::log2(pxa / (pa * w[x]));
    }
  }
  return mi;
}

/// Best achievable P(guess = X): enumerate every deterministic guess per
/// subset and keep the best.
inline double prediction_risk(const Joint& j) {
  double r = 0;
  for (const auto& [a, v] : j.cells) {
    double best = 0;
    for (int guess = 0; guess < j.p; ++guess) best = std::max(best, v[static_cast<std::size_t>(guess)]);
    r += best;
  }
  return r;
}

inline double entropy_bits(const Eigen::VectorXd& w) {
  double h = 0;
  for (int j = 0; j < w.size(); ++j) {
    if (w[j] > 0) h -= w[j] * std::log2(w[j]);
  }
  return h;
}

/// Log-likelihood Σ_i ln(Σ_{j∈a_i} w_j) straight from masks.
inline double log_likelihood(const std::vector<Mask>& obs, const Eigen::VectorXd& w) {
  double ll = 0;
  for (Mask a : obs) ll += std::log(mass(a, w));
  return ll;
}

/// Maximum of the log-likelihood over the simplex grid {k / res} for p = 4,
/// using an integer-indexed log table (subset masses are multiples of 1/res).
inline double grid_max_loglik_p4(const std::vector<Mask>& obs, int res = 1000) {
  std::map<Mask, int> counts;
  for (Mask a : obs) ++counts[a];
  std::vector<std::pair<Mask, int>> items(counts.begin(), counts.end());
  std::vector<double> log_table(static_cast<std::size_t>(res) + 1);
  log_table[0] = -INFINITY;
  for (int k = 1; k <= res; ++k) log_table[static_cast<std::size_t>(k)] = std::log(static_cast<double>(k) / res);
  double best = -INFINITY;
  int m[4];
  for (m[0] = 0; m[0] <= res; ++m[0]) {
    for (m[1] = 0; m[0] + m[1] <= res; ++m[1]) {
      for (m[2] = 0; m[0] + m[1] + m[2] <= res; ++m[2]) {
        m[3] = res - m[0] - m[1] - m[2];
        double ll = 0;
        for (const auto& [a, c] : items) {
          int s = 0;
          for (int j = 0; j < 4; ++j) s += has(a, j) ? m[j] : 0;
          ll += c * log_table[static_cast<std::size_t>(s)];
          if (ll == -INFINITY) break;
        }
        best = std::max(best, ll);
      }
    }
  }
  return best;
}

}  // namespace oracle
