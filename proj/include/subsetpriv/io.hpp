#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "subsetpriv/design.hpp"
#include "subsetpriv/error.hpp"
#include "subsetpriv/estimation.hpp"
#include "subsetpriv/independence.hpp"
#include "subsetpriv/privacy.hpp"

namespace subsetpriv {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// CSV

/// Splits one CSV line; honors double quotes and trims unquoted whitespace.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  auto flush = [&] {
    if (!was_quoted) {
      const auto first = field.find_first_not_of(" \t\r");
      const auto last = field.find_last_not_of(" \t\r");
      field = first == std::string::npos ? std::string() : field.substr(first, last - first + 1);
    }
    out.push_back(std::move(field));
    field.clear();
    was_quoted = false;
  };
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
      field.clear();
    } else if (c == ',') {
      flush();
    } else if (c != '\r' && c != '\n') {
      field.push_back(c);
    }
  }
  flush();
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  }
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (!have_header) throw Error(ErrorCode::kParseError, "CSV has no header");
  return t;
}

inline CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return read_csv(in);
}

inline const std::string& csv_field(const CsvTable& t, std::size_t row, std::size_t col) {
  if (col >= t.rows[row].size()) {
    throw Error(ErrorCode::kParseError,
                "line " + std::to_string(t.line_numbers[row]) + ": missing column '" + t.header[col] + "'");
  }
  return t.rows[row][col];
}

inline Subset parse_subset_at(const CsvTable& t, std::size_t row, std::size_t col, int width) {
  try {
    return parse_subset(csv_field(t, row, col), width);
  } catch (const Error& e) {
    throw Error(ErrorCode::kParseError,
                "line " + std::to_string(t.line_numbers[row]) + ": " + e.message());
  }
}

/// Columns `subset` and optional `weight`.
inline Observations read_observations(std::istream& in, int p) {
  const CsvTable t = read_csv(in);
  const auto subset_col = t.column("subset");
  if (!subset_col) throw Error(ErrorCode::kParseError, "observations CSV needs a 'subset' column");
  const auto weight_col = t.column("weight");
  Observations out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    SubsetObservation o{parse_subset_at(t, r, *subset_col, p), 1.0};
    if (weight_col) {
      const std::string& text = csv_field(t, r, *weight_col);
      std::size_t used = 0;
      try {
        o.weight = std::stod(text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != text.size() || !(o.weight >= 0.0) || !std::isfinite(o.weight)) {
        throw Error(ErrorCode::kParseError, "line " + std::to_string(t.line_numbers[r]) +
                                                ": bad weight '" + text + "'");
      }
    }
    out.push_back(o);
  }
  return out;
}

inline Observations read_observations_file(const std::filesystem::path& path, int p) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return read_observations(in, p);
}

inline void write_observations(std::ostream& out, const Observations& obs) {
  const bool weighted = std::any_of(obs.begin(), obs.end(), [](const auto& o) { return o.weight != 1.0; });
  out << (weighted ? "subset,weight\n" : "subset\n");
  for (const auto& o : obs) {
    out << format_subset(o.subset);
    if (weighted) out << ',' << std::setprecision(17) << o.weight;
    out << '\n';
  }
}

/// Columns `subset_a` and `subset_b`.
inline std::vector<PairObservation> read_pairs(std::istream& in, int p, int q) {
  const CsvTable t = read_csv(in);
  const auto a_col = t.column("subset_a");
  const auto b_col = t.column("subset_b");
  if (!a_col || !b_col) {
    throw Error(ErrorCode::kParseError, "pair CSV needs 'subset_a' and 'subset_b' columns");
  }
  std::vector<PairObservation> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out.push_back({parse_subset_at(t, r, *a_col, p), parse_subset_at(t, r, *b_col, q)});
  }
  return out;
}

inline void write_pairs(std::ostream& out, const std::vector<PairObservation>& pairs) {
  out << "subset_a,subset_b\n";
  for (const auto& pr : pairs) out << format_subset(pr.a) << ',' << format_subset(pr.b) << '\n';
}

/// Writes to a sibling temp file, then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kIoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot rename onto " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, what + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Design files

enum class DesignKind { kUniform, kExplicit, kDummy, kSmallP, kConditional };

inline std::string design_kind_name(DesignKind k) {
  switch (k) {
    case DesignKind::kUniform: return "uniform";
    case DesignKind::kExplicit: return "explicit";
    case DesignKind::kDummy: return "dummy";
    case DesignKind::kSmallP: return "small_p";
    case DesignKind::kConditional: return "conditional";
  }
  return "?";
}

inline constexpr double kDefaultSmallPAlpha = 0.25;

/// A mechanism as described by a design file. `observed_p()` is the width of
/// emitted subsets: p for uniform/explicit/conditional, p + 2 otherwise.
class DesignSpec {
 public:
  static DesignSpec uniform(const CategorySchema& schema) {
    DesignSpec s;
    s.kind_ = DesignKind::kUniform;
    s.schema_ = schema;
    s.independent_ = with_schema(uniform_design(schema.p()), schema);
    s.finish();
    return s;
  }

  static DesignSpec explicit_independent(IndependentDesign ind) {
    DesignSpec s;
    s.kind_ = DesignKind::kExplicit;
    s.schema_ = ind.schema();
    s.independent_ = std::move(ind);
    s.finish();
    return s;
  }

  static DesignSpec dummy(IndependentDesign base, double alpha) {
    DesignSpec s;
    s.kind_ = DesignKind::kDummy;
    s.schema_ = base.schema();
    s.alpha_ = alpha;
    s.dummy_ = DummyDesign(base, alpha);
    s.independent_ = std::move(base);
    s.finish();
    return s;
  }

  static DesignSpec small_p(const CategorySchema& schema, double alpha = kDefaultSmallPAlpha) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1/2)");
    DesignSpec s;
    s.kind_ = DesignKind::kSmallP;
    s.schema_ = schema;
    s.alpha_ = alpha;
    s.independent_ = small_p_design(schema.p(), schema);
    s.finish();
    return s;
  }

  static DesignSpec conditional(ConditionalDesign design) {
    DesignSpec s;
    s.kind_ = DesignKind::kConditional;
    s.schema_ = design.schema();
    s.conditional_ = std::move(design);
    return s;
  }

  DesignKind kind() const noexcept { return kind_; }
  /// Schema of the variable of interest.
  const CategorySchema& schema() const noexcept { return schema_; }
  int p() const noexcept { return schema_.p(); }
  int observed_p() const noexcept { return conditional_.p(); }
  double alpha() const noexcept { return alpha_; }
  bool enlarged() const noexcept { return kind_ == DesignKind::kDummy || kind_ == DesignKind::kSmallP; }
  bool has_independent() const noexcept { return kind_ != DesignKind::kConditional; }

  /// Independent design that generates the emitted subsets: the base design
  /// for dummy, the enlarged design for small_p.
  const IndependentDesign& independent() const {
    if (!has_independent()) throw Error(ErrorCode::kInvalidArgument, "conditional design has no nu");
    return independent_;
  }

  /// Conditional law of the emitted subsets.
  const ConditionalDesign& conditional() const noexcept { return conditional_; }

  /// Emits A for a respondent with value x in [observed_p()).
  Subset draw(int x, Stream& rng) const {
    switch (kind_) {
      case DesignKind::kDummy: return dummy_->draw(x, rng);
      case DesignKind::kConditional: return conditional_.draw(x, rng);
      default: return draw_subset(x, independent_, rng);
    }
  }

  /// Samples n true records from w; enlarged kinds add dummy users.
  SampledDataset sample(const Distribution& w, std::size_t n, std::uint64_t seed,
                        bool keep_truth = false) const {
    if (w.size() != p()) throw Error(ErrorCode::kInvalidArgument, "distribution size mismatch");
    if (enlarged()) {
      return sample_with_dummies(w, alpha_, n, seed, [this](int x, Stream& rng) { return draw(x, rng); },
                                 keep_truth);
    }
    if (kind_ == DesignKind::kConditional) {
      const DiscreteSampler categories(std::span<const double>(w.vector().data(), w.vector().size()));
      SampledDataset out;
      for (std::size_t i = 0; i < n; ++i) {
        Stream rng(seed, i);
        const int x = static_cast<int>(categories.sample(rng));
        out.records.push_back({conditional_.draw(x, rng), 1.0});
        if (keep_truth) out.truth.push_back(x);
      }
      return out;
    }
    return sample_dataset(w, independent_, n, seed, keep_truth);
  }

 private:
  void finish() { conditional_ = dummy_ ? dummy_->induced() : induce_conditional(independent_); }

  DesignKind kind_ = DesignKind::kUniform;
  CategorySchema schema_;
  double alpha_ = 0.0;
  IndependentDesign independent_;
  std::optional<DummyDesign> dummy_;
  ConditionalDesign conditional_;
};

namespace detail {

inline std::vector<WeightedSubset> parse_weighted(const json& list, int p, const char* key) {
  if (!list.is_array()) throw Error(ErrorCode::kParseError, std::string("'") + key + "' must be an array");
  std::vector<WeightedSubset> out;
  for (const auto& item : list) {
    if (!item.contains("subset") || !item.contains("prob")) {
      throw Error(ErrorCode::kParseError, std::string("each '") + key + "' entry needs subset and prob");
    }
    std::vector<int> idx = item.at("subset").get<std::vector<int>>();
    for (std::size_t i = 1; i < idx.size(); ++i) {
      if (idx[i] <= idx[i - 1]) throw Error(ErrorCode::kParseError, "subset indices must ascend");
    }
    for (int j : idx) {
      if (j < 0 || j >= p) throw Error(ErrorCode::kParseError, "subset index out of range");
    }
    const double prob = item.at("prob").get<double>();
    if (!(prob >= 0.0) || !std::isfinite(prob)) throw Error(ErrorCode::kParseError, "bad probability");
    out.push_back({Subset::from_indices(std::span<const int>(idx), p), prob});
  }
  return out;
}

inline json weighted_to_json(std::span<const WeightedSubset> entries,
                             std::optional<std::uint64_t> denominator = std::nullopt) {
  json list = json::array();
  for (const auto& e : entries) {
    json item{{"subset", e.subset.indices()}, {"prob", e.prob}};
    if (denominator) item["prob_exact"] = "1/" + std::to_string(*denominator);
    list.push_back(std::move(item));
  }
  return list;
}

}  // namespace detail

inline DesignSpec design_from_json(const json& j) {
  try {
    if (!j.is_object()) throw Error(ErrorCode::kParseError, "design must be a JSON object");
    const int p = j.at("p").get<int>();
    std::vector<std::string> labels;
    if (j.contains("labels") && !j.at("labels").is_null()) labels = j.at("labels").get<std::vector<std::string>>();
    const CategorySchema schema(p, labels);
    const std::string kind = j.value("kind", std::string("explicit"));
    if (kind == "uniform") return DesignSpec::uniform(schema);
    if (kind == "small_p") return DesignSpec::small_p(schema, j.value("alpha", kDefaultSmallPAlpha));
    if (kind == "conditional") {
      ConditionalDesign mu(schema, detail::parse_weighted(j.at("mu"), p, "mu"), j.value("small_subsets", false));
      const ValidationReport report = validate_conditional(mu);
      if (!report.valid) {
        std::ostringstream msg;
        msg << "conditional design is invalid: max row-sum deviation " << report.max_deviation << ", "
            << report.support_violations.size() << " subsets smaller than 2";
        throw Error(ErrorCode::kInvalidArgument, msg.str());
      }
      return DesignSpec::conditional(std::move(mu));
    }
    if (kind == "explicit" || kind == "dummy") {
      IndependentDesign ind = j.contains("nu")
                                  ? IndependentDesign(schema, detail::parse_weighted(j.at("nu"), p, "nu"))
                                  : with_schema(uniform_design(p), schema);
      if (kind == "explicit") return DesignSpec::explicit_independent(std::move(ind));
      if (!j.contains("alpha")) throw Error(ErrorCode::kParseError, "dummy design needs alpha");
      return DesignSpec::dummy(std::move(ind), j.at("alpha").get<double>());
    }
    throw Error(ErrorCode::kParseError, "unknown design kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("design JSON: ") + e.what());
  }
}

inline DesignSpec load_design(const std::filesystem::path& path) {
  return design_from_json(parse_json(read_file(path), path.string()));
}

inline json design_to_json(const DesignSpec& spec) {
  json j{{"p", spec.p()}, {"kind", design_kind_name(spec.kind())}};
  if (spec.schema().has_labels()) j["labels"] = spec.schema().labels();
  switch (spec.kind()) {
    case DesignKind::kUniform:
      j["denominator"] = *spec.independent().uniform_denominator();
      j["nu"] = detail::weighted_to_json(spec.independent().entries(), spec.independent().uniform_denominator());
      break;
    case DesignKind::kExplicit:
    case DesignKind::kDummy:
      j["nu"] = detail::weighted_to_json(spec.independent().entries());
      break;
    case DesignKind::kSmallP:
      break;
    case DesignKind::kConditional:
      j["mu"] = detail::weighted_to_json(spec.conditional().entries());
      j["small_subsets"] = spec.conditional().small_subsets_allowed();
      break;
  }
  if (spec.enlarged()) j["alpha"] = spec.alpha();
  return j;
}

// ---------------------------------------------------------------------------
// Result documents

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline json estimate_to_json(const EstimateResult& r) {
  json j{{"method", r.method},
         {"w_hat", vector_to_json(r.w_hat.vector())},
         {"w_raw", vector_to_json(r.w_raw)},
         {"iterations", r.iterations}};
  j["covariance"] = r.diagnostics.covariance_available ? matrix_to_json(r.covariance) : json(nullptr);
  j["log_likelihood"] = r.log_likelihood ? json(*r.log_likelihood) : json(nullptr);
  j["diagnostics"] = {{"identifiable", r.diagnostics.identifiable},
                      {"mle_unique", r.diagnostics.mle_unique},
                      {"projection_applied", r.diagnostics.projection_applied},
                      {"singular_hessian", r.diagnostics.singular_hessian},
                      {"covariance_available", r.diagnostics.covariance_available},
                      {"small_pair_mass", r.diagnostics.small_pair_mass},
                      {"warnings", r.diagnostics.warnings}};
  return j;
}

inline json privacy_to_json(const PrivacyReport& r) {
  return {{"size_coverage", r.size_coverage},       {"size_leakage", r.size_leakage},
          {"mi_leakage", r.mi_leakage},             {"entropy_coverage", r.entropy_coverage},
          {"prediction_leakage", r.prediction_leakage}, {"prediction_coverage", r.prediction_coverage},
          {"entropy", r.entropy},                   {"blind_guess", r.blind_guess}};
}

inline json test_to_json(const TestResult& r) {
  json j{{"method", r.method},           {"statistic", r.statistic}, {"df", r.df},
         {"p_value", r.p_value},         {"calibration", r.calibration},
         {"warnings", r.warnings}};
  if (r.rejected) j["rejected"] = *r.rejected;
  return j;
}

/// record_id, subset, size_leakage, pred_guess, pred_posterior.
inline void write_per_record(std::ostream& out, const Observations& obs, const Eigen::VectorXd& w_hat,
                             const CategorySchema* labels = nullptr) {
  out << "record_id,subset,size_leakage,pred_guess,pred_posterior\n" << std::setprecision(10);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const RecordLeakage r = per_record_report(obs[i].subset, w_hat);
    out << i << ',' << format_subset(obs[i].subset) << ',' << r.size_leakage << ',';
    if (labels) {
      out << '"' << labels->label(r.guess) << '"';
    } else {
      out << r.guess;
    }
    out << ',' << r.posterior << '\n';
  }
}

}  // namespace subsetpriv
