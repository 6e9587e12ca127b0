#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "subsetpriv/distribution.hpp"
#include "subsetpriv/error.hpp"
#include "subsetpriv/io.hpp"
#include "subsetpriv/schema.hpp"

namespace subsetpriv {

/// Column name to label set, e.g. {"columns": {"race": ["Black", "White"]}}.
struct IngestSchema {
  std::vector<std::pair<std::string, CategorySchema>> columns;

  static IngestSchema from_json(const json& j) {
    IngestSchema s;
    try {
      const json& cols = j.contains("columns") ? j.at("columns") : j;
      if (!cols.is_object() || cols.empty()) throw Error(ErrorCode::kParseError, "ingest schema has no columns");
      for (const auto& [name, labels] : cols.items()) {
        s.columns.emplace_back(name, CategorySchema::with_labels(labels.get<std::vector<std::string>>()));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, std::string("ingest schema: ") + e.what());
    }
    return s;
  }
};

struct CategoricalColumn {
  std::string name;
  CategorySchema schema;
  std::vector<int> values;

  Eigen::VectorXd counts() const {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(schema.p());
    for (int v : values) c[v] += 1.0;
    return c;
  }

  Distribution distribution() const {
    if (values.empty()) throw Error(ErrorCode::kIngestError, "column '" + name + "' is empty");
    const Eigen::VectorXd c = counts();
    return Distribution::from_weights(c);
  }
};

struct CategoricalDataset {
  std::size_t rows = 0;
  std::vector<CategoricalColumn> columns;

  const CategoricalColumn& column(const std::string& name) const {
    for (const auto& c : columns) {
      if (c.name == name) return c;
    }
    throw Error(ErrorCode::kInvalidArgument, "no column '" + name + "'");
  }
};

/// Maps labelled CSV columns to 0-based category indices. Rows are numbered
/// from 1, not counting the header.
inline CategoricalDataset ingest(const CsvTable& table, const IngestSchema& schema) {
  CategoricalDataset out;
  out.rows = table.rows.size();
  for (const auto& [name, cats] : schema.columns) {
    const auto col = table.column(name);
    if (!col) throw Error(ErrorCode::kIngestError, "CSV has no column '" + name + "'");
    CategoricalColumn c{name, cats, {}};
    c.values.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const std::string value = *col < table.rows[r].size() ? table.rows[r][*col] : std::string();
      const auto idx = cats.index_of(value);
      if (!idx) {
        throw Error(ErrorCode::kIngestError, "row " + std::to_string(r + 1) + ": unknown value '" + value +
                                                 "' in column '" + name + "'");
      }
      c.values.push_back(*idx);
    }
    out.columns.push_back(std::move(c));
  }
  return out;
}

}  // namespace subsetpriv
