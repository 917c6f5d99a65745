#include "viewclean/service.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <regex>

#include "httplib.h"

namespace viewclean {

using nlohmann::json;

struct SessionManager::Entry {
  std::mutex mutex;
  std::string id;
  std::string created_at;
  json request;  // normalized create request, enough to rebuild the session
  std::unique_ptr<CleaningSession> session;
};

namespace {

json value_json(const Value& v) {
  if (v.is_null()) return nullptr;
  if (v.is_number()) return v.as_number();
  return v.as_text();
}

json record_json(const Relation& rel, const Record& r) {
  json values = json::object();
  for (std::size_t c = 0; c < rel.schema().size(); ++c) values[rel.schema()[c].name] = value_json(r.values[c]);
  return {{"id", r.id}, {"values", values}};
}

json pair_json(const PairKey& p) { return json::array({p.first(), p.second()}); }

PairKey pair_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_unsigned() || !j[1].is_number_unsigned()) {
    throw ServiceError(400, "pair must be a two-element array of record ids");
  }
  const auto a = j[0].get<RecordId>();
  const auto b = j[1].get<RecordId>();
  if (a == b) throw ServiceError(400, "pair ids must differ");
  return PairKey(a, b);
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string problem_key(const std::string& dataset, const DashboardSpec& d) {
  std::string key = dataset + "|" + std::string(to_string(d.aggregation));
  for (const auto& v : d.views) key += "|" + v.name;
  return key;
}

json state_json(const CleaningSession& s) {
  json state = {{"labels_used", s.labels_used()},
                {"budget", s.config().budget},
                {"budget_remaining", s.budget_remaining()},
                {"batches_done", s.batches_submitted()},
                {"iterations", s.iterations()},
                {"outstanding", s.outstanding().size()},
                {"stopped", s.stopped()},
                {"reason", to_string(s.stop_reason())}};
  const auto change = s.last_change();
  state["last_view_change"] = change ? json(*change) : json(nullptr);
  return state;
}

json views_json(const CleaningSession& s, const std::vector<ViewResult>& results) {
  json out = json::array();
  const auto& specs = s.problem().candidates.dashboard.views;
  for (std::size_t i = 0; i < results.size(); ++i) {
    out.push_back({{"name", specs[i].name}, {"result", view_result_to_json(results[i])}});
  }
  return out;
}

json transcript_json(const CleaningSession& s) {
  json out = json::array();
  for (const auto& batch : s.transcript()) {
    json b = json::array();
    for (const auto& [key, dup] : batch) b.push_back({{"pair", pair_json(key)}, {"duplicate", dup}});
    out.push_back(b);
  }
  return out;
}

std::map<PairKey, bool> labels_from_json(const json& labels) {
  if (!labels.is_array()) throw ServiceError(400, "labels must be an array");
  std::map<PairKey, bool> out;
  for (const auto& item : labels) {
    if (!item.is_object() || !item.contains("pair") || !item.contains("duplicate") || !item["duplicate"].is_boolean()) {
      throw ServiceError(400, "each label needs a pair and a boolean duplicate field");
    }
    const auto key = pair_from_json(item["pair"]);
    if (!out.emplace(key, item["duplicate"].get<bool>()).second) {
      throw ServiceError(400, "pair (" + std::to_string(key.first()) + ", " + std::to_string(key.second()) +
                                  ") labeled twice");
    }
  }
  return out;
}

}  // namespace

SessionManager::SessionManager(ServiceOptions options) : options_(std::move(options)) {}
SessionManager::~SessionManager() = default;

void SessionManager::register_dataset(ExperimentInput input) {
  std::lock_guard lock(mutex_);
  const auto name = input.name;
  std::erase_if(problems_, [&](const auto& kv) { return kv.first.starts_with(name + "|"); });
  datasets_[name] = std::make_shared<const ExperimentInput>(std::move(input));
}

std::vector<std::string> SessionManager::load_datasets() {
  std::vector<std::string> skipped;
  if (options_.data_dir.empty()) return skipped;
  const auto dir = options_.data_dir / "datasets";
  if (!std::filesystem::is_directory(dir)) return skipped;
  std::vector<std::filesystem::path> manifests;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".json") manifests.push_back(e.path());
  }
  std::sort(manifests.begin(), manifests.end());
  for (const auto& path : manifests) {
    try {
      register_dataset(input_from_dataset(load_dataset(load_manifest(path))));
    } catch (const std::exception& e) {
      skipped.push_back(path.filename().string() + ": " + e.what());
    }
  }
  return skipped;
}

std::vector<std::string> SessionManager::dataset_names() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, _] : datasets_) out.push_back(name);
  return out;
}

json SessionManager::datasets() const {
  std::lock_guard lock(mutex_);
  json out = json::array();
  for (const auto& [name, input] : datasets_) {
    json views = json::array();
    for (const auto& [v, _] : input->views) views.push_back(v);
    out.push_back({{"name", name}, {"views", views}, {"records", input->relation.size()}});
  }
  return out;
}

std::vector<std::string> SessionManager::session_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + id + "'");
  return it->second;
}

std::shared_ptr<const CleaningProblem> SessionManager::problem_for(const std::string& dataset,
                                                                   const DashboardSpec& dashboard) {
  std::shared_ptr<const ExperimentInput> input;
  const auto key = problem_key(dataset, dashboard);
  {
    std::lock_guard lock(mutex_);
    if (auto it = problems_.find(key); it != problems_.end()) return it->second;
    input = datasets_.at(dataset);
  }
  auto problem = make_problem(input->relation, dashboard, input->features, input->blocking, options_.workers);
  std::lock_guard lock(mutex_);
  return problems_.emplace(key, problem).first->second;
}

std::shared_ptr<SessionManager::Entry> SessionManager::build(const json& request, const std::string& id,
                                                             const std::string& created_at) {
  if (!request.is_object()) throw ServiceError(400, "request body must be an object");
  if (!request.contains("dataset") || !request["dataset"].is_string()) throw ServiceError(400, "dataset is required");
  const auto dataset = request["dataset"].get<std::string>();
  std::vector<std::string> names;
  try {
    if (request.contains("views")) names = request["views"].get<std::vector<std::string>>();
    if (request.contains("view")) names.push_back(request["view"].get<std::string>());
  } catch (const json::exception&) {
    throw ServiceError(400, "views must be a list of view names");
  }
  if (names.empty()) throw ServiceError(400, "at least one view is required");

  DashboardSpec dashboard;
  CleaningConfig config;
  try {
    dashboard.aggregation = aggregation_from_string(request.value("aggregation", std::string("max")));
    config = cleaning_config_from_json(request.value("config", json::object()));
    config.validate();
  } catch (const ConfigError& e) {
    throw ServiceError(400, e.what());
  } catch (const json::exception& e) {
    throw ServiceError(400, e.what());
  }
  {
    std::lock_guard lock(mutex_);
    auto it = datasets_.find(dataset);
    if (it == datasets_.end()) throw ServiceError(404, "unknown dataset '" + dataset + "'");
    for (const auto& name : names) {
      auto v = it->second->views.find(name);
      if (v == it->second->views.end()) throw ServiceError(404, "unknown view '" + name + "' in '" + dataset + "'");
      dashboard.views.push_back(v->second);
    }
  }

  auto entry = std::make_shared<Entry>();
  entry->id = id;
  entry->created_at = created_at;
  entry->request = {{"dataset", dataset},
                    {"views", names},
                    {"aggregation", to_string(dashboard.aggregation)},
                    {"config", cleaning_config_to_json(config)}};
  if (request.contains("idempotency_key")) entry->request["idempotency_key"] = request["idempotency_key"];
  entry->session = std::make_unique<CleaningSession>(problem_for(dataset, dashboard), config);
  return entry;
}

json SessionManager::create(const json& request) {
  std::string key;
  if (request.is_object() && request.contains("idempotency_key")) {
    if (!request["idempotency_key"].is_string()) throw ServiceError(400, "idempotency_key must be a string");
    key = request["idempotency_key"].get<std::string>();
  }
  auto existing = [&]() -> std::optional<std::string> {
    std::lock_guard lock(mutex_);
    if (auto it = idempotency_.find(key); !key.empty() && it != idempotency_.end()) return it->second;
    return std::nullopt;
  };
  if (auto id = existing()) return descriptor(*id);

  std::string id;
  {
    std::lock_guard lock(mutex_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06zu", next_id_++);
    id = buf;
  }
  auto entry = build(request, id, now_iso());
  {
    std::lock_guard lock(mutex_);
    // A concurrent create with the same key may have won the race.
    if (auto it = idempotency_.find(key); !key.empty() && it != idempotency_.end()) {
      id = it->second;
      entry.reset();
    } else {
      if (!key.empty()) idempotency_[key] = id;
      sessions_[id] = entry;
    }
  }
  if (entry) {
    std::lock_guard lock(entry->mutex);
    checkpoint(*entry);
  }
  return descriptor(id);
}

json SessionManager::descriptor(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  json d = entry->request;
  d["id"] = entry->id;
  d["created_at"] = entry->created_at;
  d["state"] = state_json(*entry->session);
  return d;
}

json SessionManager::batch(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  const auto& s = *entry->session;
  if (s.stopped()) return {{"session", id}, {"stopped", true}, {"reason", to_string(s.stop_reason())}};
  json pairs = json::array();
  const auto& rel = s.problem().relation;
  for (const auto& r : s.outstanding_requests()) {
    pairs.push_back({{"pair", pair_json(r.pair)},
                     {"impact", r.impact},
                     {"left", record_json(rel, *r.left)},
                     {"right", record_json(rel, *r.right)}});
  }
  return {{"session", id},
          {"stopped", false},
          {"batch_index", s.batches_submitted()},
          {"initial", s.batches_submitted() == 0},
          {"pairs", pairs}};
}

json SessionManager::submit(const std::string& id, const json& body) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  auto& s = *entry->session;
  if (s.stopped()) throw ServiceError(409, "session has stopped (" + std::string(to_string(s.stop_reason())) + ")");
  if (!body.is_object() || !body.contains("labels")) throw ServiceError(400, "body must carry a labels array");
  const auto labels = labels_from_json(body["labels"]);
  try {
    s.submit(labels);
  } catch (const SubmissionError& e) {
    throw ServiceError(400, e.what());
  }
  checkpoint(*entry);
  const auto change = s.last_change();
  return {{"session", id},
          {"state", state_json(s)},
          {"views", views_json(s, s.current_views())},
          {"view_change", change ? json(*change) : json(nullptr)},
          {"stopped", s.stopped()},
          {"reason", to_string(s.stop_reason())}};
}

json SessionManager::view(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  const auto& s = *entry->session;
  const auto initial = s.initial_change();
  return {{"session", id},
          {"views", views_json(s, s.current_views())},
          {"dirty", views_json(s, s.dirty_views())},
          {"history", s.history()},
          {"initial_change", initial ? json(*initial) : json(nullptr)},
          {"state", state_json(s)}};
}

std::string SessionManager::digest(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  return entry->session->digest();
}

void SessionManager::checkpoint(const Entry& entry) const {
  if (options_.data_dir.empty()) return;
  const auto dir = options_.data_dir / "sessions";
  std::filesystem::create_directories(dir);
  const json doc = {{"id", entry.id},
                    {"created_at", entry.created_at},
                    {"request", entry.request},
                    {"transcript", transcript_json(*entry.session)},
                    {"digest", entry.session->digest()}};
  const auto tmp = dir / (entry.id + ".json.tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write checkpoint '" + tmp.string() + "'");
    out << doc.dump(1) << '\n';
  }
  std::filesystem::rename(tmp, dir / (entry.id + ".json"));
}

std::size_t SessionManager::restore() {
  if (options_.data_dir.empty()) return 0;
  const auto dir = options_.data_dir / "sessions";
  if (!std::filesystem::is_directory(dir)) return 0;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::size_t restored = 0;
  for (const auto& path : files) {
    std::ifstream in(path);
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.contains("id") || !doc.contains("request")) continue;
    const auto id = doc["id"].get<std::string>();
    auto entry = build(doc["request"], id, doc.value("created_at", std::string()));
    for (const auto& batch : doc.value("transcript", json::array())) entry->session->submit(labels_from_json(batch));
    if (doc.contains("digest") && doc["digest"] != entry->session->digest()) {
      throw DataError("checkpoint '" + path.string() + "' does not replay to the recorded state");
    }
    std::lock_guard lock(mutex_);
    sessions_[id] = entry;
    if (entry->request.contains("idempotency_key")) {
      idempotency_[entry->request["idempotency_key"].get<std::string>()] = id;
    }
    if (id.size() > 1 && id[0] == 's') {
      next_id_ = std::max(next_id_, static_cast<std::size_t>(std::stoull(id.substr(1))) + 1);
    }
    ++restored;
  }
  return restored;
}

// ---------------------------------------------------------------------------

void install_routes(httplib::Server& server, SessionManager& manager) {
  auto reply = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  auto guarded = [reply](auto fn) {
    return [reply, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const ServiceError& e) {
        reply(res, e.status(), {{"error", e.what()}});
      } catch (const json::exception& e) {
        reply(res, 400, {{"error", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
      }
    };
  };
  auto body_of = [](const httplib::Request& req) {
    json doc = json::parse(req.body, nullptr, false);
    if (doc.is_discarded()) throw ServiceError(400, "body is not valid JSON");
    return doc;
  };

  server.Post("/sessions", guarded([&manager, reply, body_of](const httplib::Request& req, httplib::Response& res) {
                reply(res, 201, manager.create(body_of(req)));
              }));
  server.Get("/datasets", guarded([&manager, reply](const httplib::Request&, httplib::Response& res) {
               reply(res, 200, {{"datasets", manager.datasets()}});
             }));
  server.Get(R"(/sessions/([^/]+))", guarded([&manager, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, 200, manager.descriptor(req.matches[1]));
             }));
  server.Get(R"(/sessions/([^/]+)/batch)",
             guarded([&manager, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, 200, manager.batch(req.matches[1]));
             }));
  server.Post(R"(/sessions/([^/]+)/labels)",
              guarded([&manager, reply, body_of](const httplib::Request& req, httplib::Response& res) {
                reply(res, 200, manager.submit(req.matches[1], body_of(req)));
              }));
  server.Get(R"(/sessions/([^/]+)/view)",
             guarded([&manager, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, 200, manager.view(req.matches[1]));
             }));
}

}  // namespace viewclean
