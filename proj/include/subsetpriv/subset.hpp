#pragma once

#include <bit>
#include <charconv>
#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "subsetpriv/error.hpp"

namespace subsetpriv {

inline constexpr int kMaxCategories = 64;

/// A subset of the category alphabet {0, ..., width-1}, stored as a bitmask.
class Subset {
 public:
  Subset() = default;

  Subset(std::uint64_t bits, int width) : bits_(bits), width_(width) {
    if (width < 1 || width > kMaxCategories) {
      throw Error(ErrorCode::kDomainTooLarge,
                  "subset width must be in [1, 64], got " + std::to_string(width));
    }
    if ((bits & ~full_mask(width)) != 0) {
      throw Error(ErrorCode::kInvalidArgument, "subset mask has bits beyond its width");
    }
  }

  static constexpr std::uint64_t full_mask(int width) {
    return width >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << width) - 1);
  }

  static Subset full(int width) { return Subset(full_mask(width), width); }
  static Subset empty_set(int width) { return Subset(0, width); }
  static Subset singleton(int j, int width) {
    check_index(j, width);
    return Subset(std::uint64_t{1} << j, width);
  }

  static Subset from_indices(std::span<const int> indices, int width) {
    std::uint64_t bits = 0;
    for (int j : indices) {
      check_index(j, width);
      bits |= std::uint64_t{1} << j;
    }
    return Subset(bits, width);
  }
  static Subset from_indices(std::initializer_list<int> indices, int width) {
    return from_indices(std::span<const int>(indices.begin(), indices.size()), width);
  }

  std::uint64_t bits() const noexcept { return bits_; }
  int width() const noexcept { return width_; }
  int size() const noexcept { return std::popcount(bits_); }
  bool empty() const noexcept { return bits_ == 0; }

  bool contains(int j) const noexcept {
    return j >= 0 && j < width_ && ((bits_ >> j) & 1u) != 0;
  }

  Subset complement() const { return Subset(~bits_ & full_mask(width_), width_); }

  Subset with(int j) const {
    check_index(j, width_);
    return Subset(bits_ | (std::uint64_t{1} << j), width_);
  }

  // Same members, embedded in a larger alphabet.
  Subset widened(int new_width) const {
    if (new_width < width_) {
      throw Error(ErrorCode::kInvalidArgument, "cannot shrink a subset");
    }
    return Subset(bits_, new_width);
  }

  std::vector<int> indices() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) {
      out.push_back(std::countr_zero(b));
    }
    return out;
  }

  /// v_a^T w: the probability mass of the subset under w.
  double mass(const Eigen::Ref<const Eigen::VectorXd>& w) const {
    double total = 0.0;
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) {
      total += w[std::countr_zero(b)];
    }
    return total;
  }

  /// Indicator vector v_a.
  Eigen::VectorXd indicator() const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(width_);
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) v[std::countr_zero(b)] = 1.0;
    return v;
  }

  friend bool operator==(const Subset&, const Subset&) = default;
  friend auto operator<=>(const Subset& a, const Subset& b) {
    if (auto c = a.width_ <=> b.width_; c != 0) return c;
    return a.bits_ <=> b.bits_;
  }

 private:
  static void check_index(int j, int width) {
    if (j < 0 || j >= width) {
      throw Error(ErrorCode::kInvalidArgument,
                  "category index " + std::to_string(j) + " outside [0, " +
                      std::to_string(width) + ")");
    }
  }

  std::uint64_t bits_ = 0;
  int width_ = 0;
};

struct SubsetHash {
  std::size_t operator()(const Subset& s) const noexcept {
    return std::hash<std::uint64_t>{}(s.bits() * 0x9E3779B97F4A7C15ull ^
                                      static_cast<std::uint64_t>(s.width()));
  }
};

/// "0;2;3" form used by the CSV formats.
inline std::string format_subset(const Subset& s) {
  std::string out;
  for (int j : s.indices()) {
    if (!out.empty()) out.push_back(';');
    out += std::to_string(j);
  }
  return out;
}

inline Subset parse_subset(std::string_view text, int width) {
  std::vector<int> idx;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(';', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view token = text.substr(pos, end - pos);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (!token.empty()) {
      int value = 0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw Error(ErrorCode::kParseError, "bad subset index '" + std::string(token) + "'");
      }
      if (value < 0 || value >= width) {
        throw Error(ErrorCode::kParseError, "subset index " + std::to_string(value) +
                                                " outside [0, " + std::to_string(width) + ")");
      }
      if (!idx.empty() && value <= idx.back()) {
        throw Error(ErrorCode::kParseError, "subset indices must be strictly ascending");
      }
      idx.push_back(value);
    }
    pos = end + 1;
  }
  if (idx.empty()) throw Error(ErrorCode::kParseError, "empty subset");
  return Subset::from_indices(idx, width);
}

/// Calls fn(Subset) for every subset of [width] whose size lies in
/// [min_size, max_size], in increasing mask order.
template <typename Fn>
void for_each_subset(int width, int min_size, int max_size, Fn&& fn) {
  const std::uint64_t limit = std::uint64_t{1} << width;
  for (std::uint64_t bits = 0; bits < limit; ++bits) {
    const int k = std::popcount(bits);
    if (k >= min_size && k <= max_size) fn(Subset(bits, width));
  }
}

}  // namespace subsetpriv
