#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "subsetpriv/design.hpp"
#include "subsetpriv/error.hpp"
#include "subsetpriv/estimation.hpp"
#include "subsetpriv/io.hpp"
#include "subsetpriv/rng.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

namespace subsetpriv::service {

using Clock = std::function<std::chrono::system_clock::time_point()>;

inline std::int64_t unix_seconds(std::chrono::system_clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::seconds>(t.time_since_epoch()).count();
}

struct StoredRecord {
  std::uint64_t record_id = 0;
  std::string variable_id;
  Subset subset;
  std::int64_t timestamp = 0;
};

struct Variable {
  std::string id;
  DesignSpec design;
};

/// Append-only store of registered variables and collected subsets. With a
/// log path every event is appended as one JSON line; compact() folds the
/// log into `<log>.snapshot` and truncates the log.
class CollectionStore {
 public:
  CollectionStore() = default;
  explicit CollectionStore(std::filesystem::path log_path) : log_path_(std::move(log_path)) {
    if (log_path_.empty()) return;
    if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
    replay(snapshot_path());
    replay(log_path_);
    log_.open(log_path_, std::ios::app);
    if (!log_) throw Error(ErrorCode::kIoError, "cannot open log " + log_path_.string());
  }

  void add_variable(const std::string& id, const json& design_json) {
    DesignSpec spec = design_from_json(design_json);
    if (spec.kind() != DesignKind::kUniform && spec.kind() != DesignKind::kExplicit) {
      throw Error(ErrorCode::kInvalidArgument, "live collection needs a uniform or explicit design");
    }
    std::unique_lock lock(mutex_);
    if (variables_.count(id) != 0) throw Error(ErrorCode::kInvalidArgument, "variable '" + id + "' exists");
    append_line({{"type", "variable"}, {"id", id}, {"design", design_json}});
    variables_.emplace(id, Variable{id, std::move(spec)});
    order_.push_back(id);
  }

  std::optional<Variable> variable(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = variables_.find(id);
    if (it == variables_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> variable_ids() const {
    std::shared_lock lock(mutex_);
    return order_;
  }

  /// Validates the subset against the variable's design before appending.
  StoredRecord append(const std::string& variable_id, const Subset& subset, std::int64_t timestamp) {
    std::unique_lock lock(mutex_);
    auto it = variables_.find(variable_id);
    if (it == variables_.end()) throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + variable_id + "'");
    if (!(it->second.design.conditional().probability(subset) > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "subset outside the design support");
    }
    StoredRecord r{next_record_id_++, variable_id, subset, timestamp};
    append_line({{"type", "record"},
                 {"record_id", r.record_id},
                 {"variable_id", r.variable_id},
                 {"subset", r.subset.indices()},
                 {"timestamp", r.timestamp}});
    records_[variable_id].push_back(r);
    return r;
  }

  std::vector<StoredRecord> records(const std::string& variable_id) const {
    std::shared_lock lock(mutex_);
    if (variables_.count(variable_id) == 0) {
      throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + variable_id + "'");
    }
    auto it = records_.find(variable_id);
    return it == records_.end() ? std::vector<StoredRecord>{} : it->second;
  }

  Observations observations(const std::string& variable_id) const {
    Observations out;
    for (const auto& r : records(variable_id)) out.push_back({r.subset, 1.0});
    return out;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    std::size_t n = 0;
    for (const auto& [id, rs] : records_) n += rs.size();
    return n;
  }

  void compact() {
    if (log_path_.empty()) return;
    std::unique_lock lock(mutex_);
    std::ostringstream snap;
    for (const auto& id : order_) snap << variable_json_.at(id).dump() << '\n';
    // Records in id order, so replay can skip ids it has already seen.
    std::vector<const StoredRecord*> all;
    for (const auto& [id, rs] : records_) {
      for (const auto& r : rs) all.push_back(&r);
    }
    std::sort(all.begin(), all.end(), [](const auto* a, const auto* b) { return a->record_id < b->record_id; });
    for (const StoredRecord* r : all) {
      snap << json{{"type", "record"},
                   {"record_id", r->record_id},
                   {"variable_id", r->variable_id},
                   {"subset", r->subset.indices()},
                   {"timestamp", r->timestamp}}
                  .dump()
           << '\n';
    }
    write_file_atomic(snapshot_path(), snap.str());
    log_.close();
    log_.open(log_path_, std::ios::trunc);
    lines_since_compaction_ = 0;
  }

  std::size_t lines_since_compaction() const {
    std::shared_lock lock(mutex_);
    return lines_since_compaction_;
  }

  std::filesystem::path snapshot_path() const {
    std::filesystem::path s = log_path_;
    s += ".snapshot";
    return s;
  }

 private:
  void append_line(const json& line) {
    if (line.at("type") == "variable") variable_json_[line.at("id").get<std::string>()] = line;
    if (!log_.is_open()) return;
    log_ << line.dump() << '\n';
    log_.flush();
    ++lines_since_compaction_;
  }

  void replay(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return;
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(in, text)) {
      ++line_no;
      if (text.empty()) continue;
      const json line = parse_json(text, path.string() + ":" + std::to_string(line_no));
      const std::string type = line.value("type", "");
      if (type == "variable") {
        const std::string id = line.at("id").get<std::string>();
        if (variables_.count(id) != 0) continue;
        variables_.emplace(id, Variable{id, design_from_json(line.at("design"))});
        variable_json_[id] = line;
        order_.push_back(id);
      } else if (type == "record") {
        const std::string vid = line.at("variable_id").get<std::string>();
        auto it = variables_.find(vid);
        if (it == variables_.end()) throw Error(ErrorCode::kParseError, "record for unknown variable in log");
        const auto idx = line.at("subset").get<std::vector<int>>();
        StoredRecord r{line.at("record_id").get<std::uint64_t>(), vid,
                       Subset::from_indices(std::span<const int>(idx), it->second.design.observed_p()),
                       line.at("timestamp").get<std::int64_t>()};
        // Ids grow along the log; a repeat means the snapshot already holds it.
        if (r.record_id < next_record_id_) continue;
        next_record_id_ = r.record_id + 1;
        records_[vid].push_back(std::move(r));
      }
    }
  }

  mutable std::shared_mutex mutex_;
  std::filesystem::path log_path_;
  std::ofstream log_;
  std::map<std::string, Variable> variables_;
  std::map<std::string, json> variable_json_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<StoredRecord>> records_;
  std::uint64_t next_record_id_ = 1;
  std::size_t lines_since_compaction_ = 0;
};

enum class SessionStatus { kOpen, kAnswered, kExpired };

inline std::string status_name(SessionStatus s) {
  switch (s) {
    case SessionStatus::kOpen: return "open";
    case SessionStatus::kAnswered: return "answered";
    case SessionStatus::kExpired: return "expired";
  }
  return "?";
}

struct Session {
  std::string id;
  std::string variable_id;
  std::optional<Subset> pending;  // Ã
  SessionStatus status = SessionStatus::kOpen;
  std::chrono::system_clock::time_point created;
};

struct ServiceOptions {
  std::chrono::seconds session_ttl{30 * 60};
  std::filesystem::path log_path;  // empty keeps everything in memory
  std::optional<std::uint64_t> seed;  // fixed seed for reproducible questions
  std::size_t compact_every = 10000;  // log lines between compactions
  Clock clock = [] { return std::chrono::system_clock::now(); };
};

struct Question {
  std::vector<std::string> subset_labels;
};

struct Answer {
  std::vector<std::string> stored_subset;
  std::uint64_t record_id = 0;
};

/// Session logic of the collector. The respondent only ever sends a yes/no
/// bit; the stored record is Ã or its complement.
class CollectionService {
 public:
  explicit CollectionService(ServiceOptions options = {})
      : options_(std::move(options)), store_(options_.log_path) {
    seed_ = options_.seed ? *options_.seed : (std::uint64_t{std::random_device{}()} << 32) ^ std::random_device{}();
    token_rng_ = Stream(seed_ ^ 0x5eed5e55ULL, 0);
  }

  CollectionStore& store() noexcept { return store_; }
  const CollectionStore& store() const noexcept { return store_; }

  void register_variable(const std::string& id, const json& design_json) { store_.add_variable(id, design_json); }

  Session create_session(const std::string& variable_id) {
    if (!store_.variable(variable_id)) {
      throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + variable_id + "'");
    }
    std::lock_guard lock(sessions_mutex_);
    sweep_locked();
    Session s;
    s.variable_id = variable_id;
    s.created = options_.clock();
    do {
      s.id = new_token_locked();
    } while (sessions_.count(s.id) != 0);
    sessions_[s.id] = s;
    return s;
  }

  Question next_question(const std::string& session_id) {
    std::lock_guard lock(sessions_mutex_);
    Session& s = live_session_locked(session_id);
    if (s.status == SessionStatus::kAnswered) {
      throw Error(ErrorCode::kInvalidArgument, "session already answered");
    }
    if (s.pending) throw Error(ErrorCode::kQuestionPending, "a question is already pending");
    const auto var = store_.variable(s.variable_id);
    Stream rng(seed_, question_counter_++);
    s.pending = var->design.independent().draw_tilde(rng);
    return {var->design.schema().labels_of(*s.pending)};
  }

  Answer submit_answer(const std::string& session_id, bool in_subset) {
    std::string variable_id;
    Subset stored;
    {
      std::lock_guard lock(sessions_mutex_);
      Session& s = live_session_locked(session_id);
      if (!s.pending) throw Error(ErrorCode::kNoPendingQuestion, "no pending question");
      stored = in_subset ? *s.pending : s.pending->complement();
      s.pending.reset();
      s.status = SessionStatus::kAnswered;
      variable_id = s.variable_id;
    }
    const StoredRecord r = store_.append(variable_id, stored, unix_seconds(options_.clock()));
    if (options_.compact_every > 0 && store_.lines_since_compaction() >= options_.compact_every) {
      store_.compact();
    }
    const auto var = store_.variable(variable_id);
    return {var->design.schema().labels_of(stored), r.record_id};
  }

  std::optional<Session> session(const std::string& session_id) {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return std::nullopt;
    expire_if_due_locked(it->second);
    return it->second;
  }

  std::string export_csv(const std::string& variable_id) const {
    std::ostringstream out;
    write_observations(out, store_.observations(variable_id));
    return out.str();
  }

  EstimateResult estimate(const std::string& variable_id) const {
    const auto var = store_.variable(variable_id);
    if (!var) throw Error(ErrorCode::kUnknownVariable, "unknown variable '" + variable_id + "'");
    const Observations obs = store_.observations(variable_id);
    if (obs.empty()) throw Error(ErrorCode::kInvalidArgument, "no records yet");
    return mom_general(obs, var->design.conditional());
  }

 private:
  std::string new_token_locked() {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string token;
    for (int word = 0; word < 2; ++word) {
      std::uint64_t bits = token_rng_();
      for (int i = 0; i < 16; ++i, bits >>= 4) token.push_back(kHex[bits & 0xF]);
    }
    return token;
  }

  void expire_if_due_locked(Session& s) {
    if (s.status == SessionStatus::kOpen && options_.clock() - s.created >= options_.session_ttl) {
      s.status = SessionStatus::kExpired;
      s.pending.reset();
    }
  }

  Session& live_session_locked(const std::string& session_id) {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(ErrorCode::kUnknownSession, "unknown session");
    expire_if_due_locked(it->second);
    if (it->second.status == SessionStatus::kExpired) throw Error(ErrorCode::kSessionExpired, "session expired");
    return it->second;
  }

  // Drops sessions that are finished or past their lifetime.
  // Runs at most once per session lifetime so creation stays O(1) amortized.
  void sweep_locked() {
    const auto now = options_.clock();
    if (now - last_sweep_ < options_.session_ttl) return;
    last_sweep_ = now;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      expire_if_due_locked(it->second);
      const bool stale = options_.clock() - it->second.created >= 2 * options_.session_ttl;
      it = stale ? sessions_.erase(it) : std::next(it);
    }
  }

  ServiceOptions options_;
  CollectionStore store_;
  std::uint64_t seed_ = 0;
  Stream token_rng_{0};
  std::mutex sessions_mutex_;
  std::unordered_map<std::string, Session> sessions_;
  std::uint64_t question_counter_ = 0;
  std::chrono::system_clock::time_point last_sweep_{};
};

// ---------------------------------------------------------------------------
// HTTP

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownVariable:
    case ErrorCode::kUnknownSession: return 404;
    case ErrorCode::kQuestionPending:
    case ErrorCode::kNoPendingQuestion: return 409;
    case ErrorCode::kSessionExpired: return 410;
    default: return 400;
  }
}

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, const Error& e) {
  send_json(res, http_status(e.code()), {{"code", std::string(error_code_name(e.code()))}, {"message", e.message()}});
}

inline json request_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body = parse_json(req.body, "request body");
  if (!body.is_object()) throw Error(ErrorCode::kParseError, "request body must be a JSON object");
  return body;
}

template <typename Fn>
auto guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const json::exception& e) {
      send_error(res, Error(ErrorCode::kParseError, e.what()));
    }
  };
}

/// Installs the collection routes on `server`.
inline void install_routes(httplib::Server& server, CollectionService& svc) {
  server.set_tcp_nodelay(true);
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Post("/variables", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                const json body = request_body(req);
                const json design = body.contains("design") ? body.at("design") : body;
                std::string id = body.value("id", std::string());
                if (id.empty()) id = "v" + std::to_string(svc.store().variable_ids().size() + 1);
                svc.register_variable(id, design);
                const auto var = svc.store().variable(id);
                json labels = json::array();
                for (int j = 0; j < var->design.p(); ++j) labels.push_back(var->design.schema().label(j));
                send_json(res, 201, {{"variable_id", id}, {"p", var->design.p()}, {"labels", labels}});
              }));

  server.Post("/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                const json body = request_body(req);
                if (!body.contains("variable_id") || !body.at("variable_id").is_string()) {
                  throw Error(ErrorCode::kInvalidArgument, "variable_id is required");
                }
                const Session s = svc.create_session(body.at("variable_id").get<std::string>());
                send_json(res, 201, {{"session_id", s.id}, {"status", status_name(s.status)}});
              }));

  server.Get(R"(/sessions/([0-9a-f]+)/question)",
             guarded([&svc](const httplib::Request& req, httplib::Response& res) {
               const Question q = svc.next_question(req.matches[1]);
               send_json(res, 200, {{"subset_labels", q.subset_labels}});
             }));

  server.Post(R"(/sessions/([0-9a-f]+)/answer)",
              guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                const json body = request_body(req);
                // The only accepted field is the membership bit.
                for (const auto& [key, value] : body.items()) {
                  if (key != "in_subset") throw Error(ErrorCode::kInvalidArgument, "unexpected field '" + key + "'");
                }
                if (!body.contains("in_subset") || !body.at("in_subset").is_boolean()) {
                  throw Error(ErrorCode::kInvalidArgument, "in_subset must be a boolean");
                }
                const Answer a = svc.submit_answer(req.matches[1], body.at("in_subset").get<bool>());
                send_json(res, 200, {{"stored_subset", a.stored_subset}, {"record_id", a.record_id}});
              }));

  server.Get(R"(/variables/([^/]+)/export)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
               const std::string format = req.has_param("format") ? req.get_param_value("format") : "csv";
               if (format != "csv") throw Error(ErrorCode::kInvalidArgument, "only format=csv is supported");
               res.status = 200;
               res.set_content(svc.export_csv(req.matches[1]), "text/csv");
             }));

  server.Get(R"(/variables/([^/]+)/estimate)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
               const EstimateResult r = svc.estimate(req.matches[1]);
               send_json(res, 200, {{"variable_id", std::string(req.matches[1])},
                                    {"method", r.method},
                                    {"w_hat", vector_to_json(r.w_hat.vector())},
                                    {"n", svc.store().records(req.matches[1]).size()}});
             }));
}

}  // namespace subsetpriv::service
