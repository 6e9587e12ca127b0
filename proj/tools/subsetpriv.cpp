// subsetpriv command-line tool: simulate, estimate, audit, test, ingest, serve.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "subsetpriv/adult.hpp"
#include "subsetpriv/design.hpp"
#include "subsetpriv/estimation.hpp"
#include "subsetpriv/experiments.hpp"
#include "subsetpriv/independence.hpp"
#include "subsetpriv/ingest.hpp"
#include "subsetpriv/io.hpp"
#include "subsetpriv/privacy.hpp"
#include "subsetpriv/service.hpp"
#include "subsetpriv/simulate.hpp"

namespace fs = std::filesystem;
using namespace subsetpriv;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIdentifiability = 3;

// Effective run configuration: the --config file overlaid with explicit flags.
struct Config {
  json values = json::object();

  bool has(const std::string& key) const { return values.contains(key) && !values.at(key).is_null(); }

  std::string str(const std::string& key, const std::string& fallback = "") const {
    if (!has(key)) return fallback;
    const json& v = values.at(key);
    return v.is_string() ? v.get<std::string>() : v.dump();
  }

  std::string required(const std::string& key) const {
    if (!has(key)) throw Error(ErrorCode::kInvalidArgument, "--" + key + " is required");
    return str(key);
  }

  double num(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = values.at(key);
    if (v.is_number()) return v.get<double>();
    try {
      std::size_t used = 0;
      const double d = std::stod(v.get<std::string>(), &used);
      if (used == v.get<std::string>().size()) return d;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::kInvalidArgument, "--" + key + " must be a number");
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    const double d = num(key, static_cast<double>(fallback));
    if (d != std::floor(d) || d < 0) throw Error(ErrorCode::kInvalidArgument, "--" + key + " must be a whole number");
    return static_cast<std::int64_t>(d);
  }

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed", 1)); }

  /// Accepts a JSON array, a number, or a comma-separated string.
  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    if (!has(key)) return out;
    const json& v = values.at(key);
    if (v.is_array()) return v.get<std::vector<double>>();
    if (v.is_number()) return {v.get<double>()};
    std::stringstream ss(v.get<std::string>());
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kInvalidArgument, "--" + key + ": bad number '" + item + "'");
      }
    }
    return out;
  }
};

// Flags shared by every subcommand; all are read as text and typed later.
const std::vector<std::pair<std::string, std::string>> kFlags = {
    {"design", "design JSON file"},
    {"design-b", "design JSON for the second variable (pair data)"},
    {"data", "input CSV"},
    {"out", "output directory"},
    {"seed", "random seed"},
    {"n", "sample size (test: comma-separated list)"},
    {"k", "replications"},
    {"rho", "dependence parameter"},
    {"alpha", "significance level"},
    {"method", "estimator or test name, or 'all'"},
    {"calibration", "asymptotic | permutation"},
    {"permutations", "permutation / null replicates (default 199)"},
    {"w", "comma-separated distribution"},
    {"wy", "comma-separated distribution of the second variable"},
    {"p", "number of categories"},
    {"q", "number of categories of the second variable"},
    {"combined", "two sizes 'PxQ' when --data holds a combined variable"},
    {"scenario", "gender-income | pairs"},
    {"table", "comma-separated raw counts, row-major"},
    {"schema", "ingest schema JSON"},
    {"column", "column whose distribution to report"},
    {"host", "bind address"},
    {"port", "port"},
    {"log", "append-only store log"},
    {"ttl", "session lifetime in minutes"},
    {"register", "design JSON registered at startup as variable 'default'"},
};

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> flags;
};

void add_flags(Command& cmd) {
  cmd.app->add_option("--config", cmd.config_path, "JSON run configuration");
  for (const auto& [name, help] : kFlags) cmd.app->add_option("--" + name, cmd.flags[name], help);
}

Config resolve(const Command& cmd) {
  Config cfg;
  if (!cmd.config_path.empty()) {
    cfg.values = parse_json(read_file(cmd.config_path), cmd.config_path);
    if (!cfg.values.is_object()) throw Error(ErrorCode::kParseError, "config must be a JSON object");
  }
  for (const auto& [name, help] : kFlags) {
    if (cmd.app->count("--" + name) > 0) cfg.values[name] = cmd.flags.at(name);
  }
  return cfg;
}

Distribution parse_distribution(const Config& cfg, const std::string& key, int p) {
  const std::vector<double> w = cfg.list(key);
  if (w.empty()) return Distribution::uniform(p);
  if (static_cast<int>(w.size()) != p) {
    throw Error(ErrorCode::kInvalidArgument, "--" + key + " has " + std::to_string(w.size()) + " entries, expected " +
                                                 std::to_string(p));
  }
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  if ((v.array() < 0.0).any() || std::abs(v.sum() - 1.0) > 1e-6) {
    throw Error(ErrorCode::kInvalidArgument, "--" + key + " must be a probability vector");
  }
  return Distribution(project_to_simplex(v));
}

DesignSpec design_from(const Config& cfg, const std::string& key = "design", const std::string& p_key = "p") {
  if (cfg.has(key)) return load_design(cfg.str(key));
  if (cfg.has(p_key)) return DesignSpec::uniform(CategorySchema(static_cast<int>(cfg.integer(p_key, 4))));
  throw Error(ErrorCode::kInvalidArgument, "--" + key + " or --" + p_key + " is required");
}

fs::path out_dir(const Config& cfg) {
  fs::path dir = cfg.str("out", ".");
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

json envelope(const Config& cfg, const std::string& command) {
  return {{"command", command}, {"seed", cfg.seed()}, {"config", cfg.values}};
}

json dist_json(const Distribution& w) { return vector_to_json(w.vector()); }

// ---------------------------------------------------------------------------

int cmd_simulate(const Config& cfg) {
  const fs::path dir = out_dir(cfg);
  const std::uint64_t seed = cfg.seed();
  const auto n = static_cast<std::size_t>(cfg.integer("n", 1000));
  json doc = envelope(cfg, "simulate");
  if (cfg.has("q") || cfg.has("design-b")) {
    const DesignSpec da = design_from(cfg, "design", "p");
    const DesignSpec db = design_from(cfg, "design-b", "q");
    if (!da.has_independent() || da.enlarged() || !db.has_independent() || db.enlarged()) {
      throw Error(ErrorCode::kInvalidArgument, "pair simulation needs uniform or explicit designs");
    }
    const Distribution wx = parse_distribution(cfg, "w", da.p());
    const Distribution wy = parse_distribution(cfg, "wy", db.p());
    const double rho = cfg.num("rho", 0.0);
    const Eigen::MatrixXd joint = dependent_joint(wx, wy, rho);
    const PairDataset pairs = sample_pairs(joint, da.independent(), db.independent(), n, seed);
    std::ostringstream csv;
    write_pairs(csv, pairs.pairs);
    write_file_atomic(dir / "pairs.csv", csv.str());
    doc["n"] = n;
    doc["rho"] = rho;
    doc["wx"] = dist_json(wx);
    doc["wy"] = dist_json(wy);
    doc["joint"] = matrix_to_json(joint);
    doc["outputs"] = {"pairs.csv"};
  } else {
    const DesignSpec design = design_from(cfg);
    const Distribution w = parse_distribution(cfg, "w", design.p());
    const SampledDataset data = design.sample(w, n, seed);
    std::ostringstream csv;
    write_observations(csv, data.records);
    write_file_atomic(dir / "observations.csv", csv.str());
    doc["n"] = n;
    doc["records"] = data.records.size();
    doc["w"] = dist_json(w);
    doc["design"] = design_to_json(design);
    doc["outputs"] = {"observations.csv"};
  }
  write_json(dir / "simulate.json", doc);
  return 0;
}

std::vector<std::string> estimate_methods(const Config& cfg) {
  const std::string m = cfg.str("method", "all");
  if (m == "all") return {"em", "mom", "one-step"};
  if (m == "mle") return {"em"};
  if (m == "em" || m == "mom" || m == "one-step" || m == "mom-uniform") return {m};
  throw Error(ErrorCode::kInvalidArgument, "unknown method '" + m + "' (em | mle | mom | mom-uniform | one-step | all)");
}

int cmd_estimate(const Config& cfg) {
  const fs::path dir = out_dir(cfg);
  const DesignSpec design = design_from(cfg);
  json doc = envelope(cfg, "estimate");

  if (cfg.has("k")) {
    // Benchmark mode: Monte-Carlo scaled L2 loss against the limits.
    if (!design.has_independent() || design.enlarged()) {
      throw Error(ErrorCode::kInvalidArgument, "benchmarks need a uniform or explicit design");
    }
    const Distribution w = parse_distribution(cfg, "w", design.p());
    const auto n = static_cast<std::size_t>(cfg.integer("n", 1000));
    const int k = static_cast<int>(cfg.integer("k", 100));
    std::vector<std::string> methods{"sample"};
    for (const auto& m : estimate_methods(cfg)) methods.push_back(m == "mom-uniform" ? "mom" : m);
    const BenchmarkResult b = scaled_l2_benchmark(w, design.independent(), n, k, cfg.seed(), methods);
    std::ostringstream table;
    table << "method,mean,standard_error,limit\n" << std::setprecision(10);
    json rows = json::array();
    json timing{{"command", "estimate"}, {"seconds", json::object()}};
    for (const auto& l : b.losses) {
      json limit = nullptr;
      if (l.method == "em" || l.method == "one-step") limit = b.mle_limit;
      if (l.method == "mom") limit = b.mom_limit;
      table << l.method << ',' << l.mean << ',' << l.standard_error << ',';
      if (!limit.is_null()) table << limit.get<double>();
      table << '\n';
      rows.push_back({{"method", l.method}, {"mean", l.mean}, {"standard_error", l.standard_error}, {"limit", limit}});
      timing["seconds"][l.method] = l.seconds;
    }
    write_file_atomic(dir / "loss_table.csv", table.str());
    // Wall-clock timings vary between runs; kept apart from the
    // reproducible artifacts.
    write_json(dir / "timing.json", timing);
    doc["n"] = n;
    doc["k"] = k;
    doc["w"] = dist_json(w);
    doc["mle_limit"] = b.mle_limit;
    doc["mom_limit"] = b.mom_limit;
    doc["losses"] = rows;
    doc["outputs"] = {"benchmark.json", "loss_table.csv", "timing.json"};
    write_json(dir / "benchmark.json", doc);
    return 0;
  }

  const Observations obs = read_observations_file(cfg.required("data"), design.observed_p());
  json results = json::array();
  if (design.enlarged()) {
    // Enlarged domains are identifiable only with the known dummy mass.
    const std::string m = cfg.str("method", "mom");
    if (m != "mom" && m != "all") {
      throw Error(ErrorCode::kIdentifiabilityViolation,
                  "dummy-category designs support only --method mom (known dummy mass)");
    }
    results.push_back(estimate_to_json(mom_known_dummies(obs, design.conditional(), design.p(), design.alpha())));
  } else {
    std::optional<EstimateResult> mom;
    for (const auto& m : estimate_methods(cfg)) {
      if (m == "em") {
        results.push_back(estimate_to_json(em_mle(obs, uniform_start(design.p()), design.conditional())));
      } else if (m == "mom-uniform") {
        if (design.kind() != DesignKind::kUniform) {
          throw Error(ErrorCode::kInvalidArgument, "mom-uniform needs a uniform design");
        }
        results.push_back(estimate_to_json(mom_uniform(obs, design.p())));
      } else {
        if (!mom) mom = mom_general(obs, design.conditional());
        results.push_back(estimate_to_json(m == "mom" ? *mom : one_step(obs, design.conditional(), *mom)));
      }
    }
  }
  doc["n"] = obs.size();
  doc["labels"] = design.schema().has_labels() ? json(design.schema().labels()) : json(nullptr);
  doc["results"] = results;
  write_json(dir / "estimate.json", doc);
  return 0;
}

int cmd_audit(const Config& cfg) {
  const fs::path dir = out_dir(cfg);
  const DesignSpec design = design_from(cfg);
  json doc = envelope(cfg, "audit");
  std::optional<Observations> obs;
  Distribution w;
  if (cfg.has("w")) {
    w = parse_distribution(cfg, "w", design.p());
    doc["w_source"] = "given";
  } else if (cfg.has("data")) {
    obs = read_observations_file(cfg.str("data"), design.observed_p());
    w = design.enlarged() ? mom_known_dummies(*obs, design.conditional(), design.p(), design.alpha()).w_hat
                          : mom_general(*obs, design.conditional()).w_hat;
    doc["w_source"] = "mom-estimate";
  } else {
    throw Error(ErrorCode::kInvalidArgument, "audit needs --w or --data");
  }
  // The audited population lives on the emitted domain.
  const Eigen::VectorXd population = design.enlarged() ? mixed_population(w, design.alpha()) : w.vector();
  const CategorySchema observed(design.observed_p());
  doc["w"] = dist_json(w);
  doc["designs"] = {{"non_private", privacy_to_json(privacy_report(non_private_design(observed), population))},
                    {"design", privacy_to_json(privacy_report(design.conditional(), population))},
                    {"fully_private", privacy_to_json(privacy_report(fully_private_design(observed), population))}};
  doc["outputs"] = {"audit.json"};
  if (obs) {
    std::ostringstream csv;
    const CategorySchema labels = design.enlarged() ? enlarged_schema(design.schema()) : design.schema();
    write_per_record(csv, *obs, population, &labels);
    write_file_atomic(dir / "per_record.csv", csv.str());
    doc["outputs"].push_back("per_record.csv");
  }
  write_json(dir / "audit.json", doc);
  return 0;
}

std::vector<std::string> test_methods(const Config& cfg) {
  const std::string m = cfg.str("method", "all");
  if (m == "all") return pair_test_methods();
  for (const auto& known : pair_test_methods()) {
    if (m == known) return {m};
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown test '" + m + "' (pearson | lrt-mle | lrt-mom | bonferroni | all)");
}

int cmd_test(const Config& cfg) {
  const fs::path dir = out_dir(cfg);
  json doc = envelope(cfg, "test");
  const double alpha = cfg.num("alpha", 0.05);
  const std::string calibration = cfg.str("calibration", "asymptotic");
  if (calibration != "asymptotic" && calibration != "permutation") {
    throw Error(ErrorCode::kInvalidArgument, "--calibration must be asymptotic or permutation");
  }
  const int permutations = static_cast<int>(cfg.integer("permutations", kDefaultPermutations));

  if (cfg.has("table")) {
    const std::vector<double> counts = cfg.list("table");
    const int rows = static_cast<int>(cfg.integer("p", 2));
    if (counts.size() % static_cast<std::size_t>(rows) != 0) {
      throw Error(ErrorCode::kInvalidArgument, "--table size is not a multiple of --p");
    }
    const int cols = static_cast<int>(counts.size()) / rows;
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = counts[static_cast<std::size_t>(r * cols + c)];
    }
    doc["results"] = {test_to_json(raw_table_pearson(m))};
    write_json(dir / "test.json", doc);
    return 0;
  }

  if (cfg.has("k")) {
    // Replication mode: power and AUC tables.
    const int k = static_cast<int>(cfg.integer("k", 100));
    std::vector<double> sizes = cfg.list("n");
    if (sizes.empty()) sizes = {1000};
    const std::string scenario = cfg.str("scenario", "pairs");
    std::ostringstream power;
    power << std::setprecision(10);
    json rows = json::array();
    if (scenario == "gender-income") {
      power << "n,method,power\n";
      const CombinedScenario s = CombinedScenario::gender_income();
      for (double n : sizes) {
        for (JointMethod jm : {JointMethod::kMle, JointMethod::kMom}) {
          const auto ps = combined_pvalues(s, static_cast<std::size_t>(n), k,
                                           derive_seed(cfg.seed(), static_cast<std::uint64_t>(n)), jm);
          const double pw = rejection_rate(ps, alpha);
          const std::string name = "lrt-" + joint_method_name(jm);
          power << n << ',' << name << ',' << pw << '\n';
          rows.push_back({{"n", n}, {"method", name}, {"power", pw}});
        }
      }
    } else if (scenario == "pairs") {
      power << "n,rho,method,power,auc\n";
      const int p = static_cast<int>(cfg.integer("p", 4));
      const int q = static_cast<int>(cfg.integer("q", p));
      const double rho = cfg.num("rho", 0.05);
      const auto methods = test_methods(cfg);
      for (double n : sizes) {
        const PairStudy st = pair_study(p, q, rho, static_cast<std::size_t>(n), k / 2, k - k / 2,
                                        derive_seed(cfg.seed(), static_cast<std::uint64_t>(n)), alpha, methods);
        for (const auto& m : methods) {
          power << n << ',' << rho << ',' << m << ',' << st.power(m, alpha) << ',' << st.auc(m) << '\n';
          rows.push_back({{"n", n}, {"rho", rho}, {"method", m}, {"power", st.power(m, alpha)}, {"auc", st.auc(m)}});
        }
      }
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown scenario '" + scenario + "'");
    }
    write_file_atomic(dir / "power.csv", power.str());
    doc["rows"] = rows;
    write_json(dir / "power.json", doc);
    return 0;
  }

  json results = json::array();
  if (cfg.has("combined")) {
    // One subset per record over the row-major combination of two variables.
    const std::string spec = cfg.str("combined");
    const auto x = spec.find('x');
    if (x == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--combined expects 'PxQ'");
    const CombinedSchema schema = combine_variables(
        {CategorySchema(std::stoi(spec.substr(0, x))), CategorySchema(std::stoi(spec.substr(x + 1)))});
    const DesignSpec design = design_from(cfg);
    if (design.p() != schema.size() || design.enlarged()) {
      throw Error(ErrorCode::kInvalidArgument, "design must cover the combined alphabet");
    }
    const Observations obs = read_observations_file(cfg.required("data"), design.p());
    std::vector<JointMethod> jms;
    const std::string m = cfg.str("method", "all");
    if (m == "all" || m == "lrt-mle") jms.push_back(JointMethod::kMle);
    if (m == "all" || m == "lrt-mom") jms.push_back(JointMethod::kMom);
    if (jms.empty()) throw Error(ErrorCode::kInvalidArgument, "combined data supports lrt-mle and lrt-mom");
    for (JointMethod jm : jms) {
      const ConditionalDesign& mu = design.conditional();
      if (calibration == "permutation") {
        const CombinedTest test = [&](const Observations& o) { return combined_lrt(o, mu, schema, jm); };
        results.push_back(test_to_json(calibrate_combined_null(test, obs, mu, schema, permutations, alpha, cfg.seed())));
      } else {
        TestResult r = combined_lrt(obs, mu, schema, jm);
        r.rejected = r.p_value < alpha;
        results.push_back(test_to_json(r));
      }
    }
    doc["n"] = obs.size();
  } else {
    const DesignSpec da = design_from(cfg, "design", "p");
    const DesignSpec db = cfg.has("design-b") || cfg.has("q") ? design_from(cfg, "design-b", "q") : da;
    PairDataset data;
    {
      std::ifstream in(cfg.required("data"));
      if (!in) throw Error(ErrorCode::kIoError, "cannot open " + cfg.str("data"));
      data.pairs = read_pairs(in, da.observed_p(), db.observed_p());
    }
    data.design_a = da.conditional();
    data.design_b = db.conditional();
    for (const auto& m : test_methods(cfg)) {
      const PairTest test = [&](const PairDataset& d) { return run_pair_test(m, d, alpha); };
      if (calibration == "permutation") {
        results.push_back(test_to_json(permutation_calibrate(test, data, permutations, alpha, cfg.seed())));
      } else {
        TestResult r = test(data);
        if (!r.rejected) r.rejected = r.p_value < alpha;
        results.push_back(test_to_json(r));
      }
    }
    doc["n"] = data.pairs.size();
  }
  doc["results"] = results;
  write_json(dir / "test.json", doc);
  return 0;
}

int cmd_ingest(const Config& cfg) {
  const fs::path dir = out_dir(cfg);
  const IngestSchema schema = IngestSchema::from_json(parse_json(read_file(cfg.required("schema")), "schema"));
  const CategoricalDataset data = ingest(read_csv_file(cfg.required("data")), schema);
  std::ostringstream csv;
  for (std::size_t c = 0; c < data.columns.size(); ++c) csv << (c ? "," : "") << data.columns[c].name;
  csv << '\n';
  for (std::size_t r = 0; r < data.rows; ++r) {
    for (std::size_t c = 0; c < data.columns.size(); ++c) csv << (c ? "," : "") << data.columns[c].values[r];
    csv << '\n';
  }
  write_file_atomic(dir / "ingested.csv", csv.str());
  json doc = envelope(cfg, "ingest");
  doc["rows"] = data.rows;
  json tables = json::object();
  for (const auto& col : data.columns) {
    if (cfg.has("column") && cfg.str("column") != col.name) continue;
    const Eigen::VectorXd counts = col.counts();
    json entries = json::array();
    for (int j = 0; j < col.schema.p(); ++j) {
      entries.push_back({{"index", j},
                         {"label", col.schema.label(j)},
                         {"count", counts[j]},
                         {"frequency", data.rows ? counts[j] / static_cast<double>(data.rows) : 0.0}});
    }
    tables[col.name] = entries;
  }
  doc["distributions"] = tables;
  write_json(dir / "ingest.json", doc);
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const Config& cfg) {
  service::ServiceOptions options;
  options.session_ttl = std::chrono::seconds(static_cast<std::int64_t>(cfg.num("ttl", 30.0) * 60.0));
  if (cfg.has("log")) options.log_path = cfg.str("log");
  if (cfg.has("seed")) options.seed = cfg.seed();
  service::CollectionService svc(options);
  if (cfg.has("register")) {
    const auto ids = svc.store().variable_ids();
    if (std::find(ids.begin(), ids.end(), "default") == ids.end()) {
      svc.register_variable("default", parse_json(read_file(cfg.str("register")), cfg.str("register")));
    }
  }
  httplib::Server server;
  service::install_routes(server, svc);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  const std::string host = cfg.str("host", "127.0.0.1");
  const int port = static_cast<int>(cfg.integer("port", 8080));
  std::cerr << "listening on " << host << ':' << port << '\n';
  if (!server.listen(host, port)) throw Error(ErrorCode::kIoError, "cannot bind " + host + ":" + std::to_string(port));
  svc.store().compact();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subset-privacy toolkit: simulate, estimate, audit, test, ingest, serve"};
  app.require_subcommand(1);
  std::map<std::string, Command> commands;
  const std::vector<std::pair<std::string, std::string>> names = {
      {"simulate", "write simulated subset observations"},
      {"estimate", "estimate a distribution, or benchmark estimators with --k"},
      {"audit", "privacy report for a design"},
      {"test", "independence tests, or power studies with --k"},
      {"ingest", "map labelled CSV columns to category indices"},
      {"serve", "run the collection service"}};
  for (const auto& [name, help] : names) {
    Command& cmd = commands[name];
    cmd.app = app.add_subcommand(name, help);
    add_flags(cmd);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }
  try {
    for (auto& [name, cmd] : commands) {
      if (!cmd.app->parsed()) continue;
      const Config cfg = resolve(cmd);
      if (name == "simulate") return cmd_simulate(cfg);
      if (name == "estimate") return cmd_estimate(cfg);
      if (name == "audit") return cmd_audit(cfg);
      if (name == "test") return cmd_test(cfg);
      if (name == "ingest") return cmd_ingest(cfg);
      if (name == "serve") return cmd_serve(cfg);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kIdentifiabilityViolation ? kExitIdentifiability : kExitValidation;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitValidation;
}
