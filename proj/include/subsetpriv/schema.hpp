#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "subsetpriv/error.hpp"
#include "subsetpriv/subset.hpp"

namespace subsetpriv {

// Any operation that enumerates all 2^p subsets refuses p above this.
inline constexpr int kDefaultEnumerationCap = 20;

/// The category alphabet [p], optionally with display labels.
class CategorySchema {
 public:
  CategorySchema() = default;

  explicit CategorySchema(int p, std::vector<std::string> labels = {})
      : p_(p), labels_(std::move(labels)) {
    if (p < 2) {
      throw Error(ErrorCode::kDomainTooSmall, "a schema needs at least 2 categories");
    }
    if (p > kMaxCategories) {
      throw Error(ErrorCode::kDomainTooLarge, "at most 64 categories are supported");
    }
    if (!labels_.empty()) {
      if (static_cast<int>(labels_.size()) != p) {
        throw Error(ErrorCode::kInvalidArgument, "label count does not match p");
      }
      std::set<std::string> seen(labels_.begin(), labels_.end());
      if (seen.size() != labels_.size()) {
        throw Error(ErrorCode::kInvalidArgument, "labels must be unique");
      }
    }
  }

  static CategorySchema with_labels(std::vector<std::string> labels) {
    const int p = static_cast<int>(labels.size());
    return CategorySchema(p, std::move(labels));
  }

  int p() const noexcept { return p_; }
  bool has_labels() const noexcept { return !labels_.empty(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::string label(int j) const {
    if (j < 0 || j >= p_) throw Error(ErrorCode::kInvalidArgument, "label index out of range");
    return has_labels() ? labels_[static_cast<std::size_t>(j)] : std::to_string(j);
  }

  std::optional<int> index_of(const std::string& label) const {
    for (int j = 0; j < p_; ++j) {
      if (this->label(j) == label) return j;
    }
    return std::nullopt;
  }

  std::vector<std::string> labels_of(const Subset& s) const {
    std::vector<std::string> out;
    for (int j : s.indices()) out.push_back(label(j));
    return out;
  }

  friend bool operator==(const CategorySchema&, const CategorySchema&) = default;

 private:
  int p_ = 0;
  std::vector<std::string> labels_;
};

}  // namespace subsetpriv
