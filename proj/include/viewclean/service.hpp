#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewclean/cleaning.hpp"
#include "viewclean/experiment.hpp"

namespace httplib {
class Server;
}

namespace viewclean {

// Carries the HTTP status the error maps to.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ServiceOptions {
  // Holds datasets/*.json manifests and receives sessions/*.json checkpoints.
  // Empty disables both.
  std::filesystem::path data_dir;
  std::size_t workers = 0;
};

// Owns datasets and sessions. Every public call is safe to use from many
// threads; calls on one session are serialized by that session's lock.
//
// Request and response documents:
//   create   {"dataset", "views": [..] | "view", "aggregation"?, "config"?, "idempotency_key"?}
//            -> descriptor
//   batch    -> {"session", "batch_index", "initial", "pairs": [{"pair": [a, b], "impact",
//               "left": record, "right": record}]} or {"stopped": true, "reason"}
//   labels   {"labels": [{"pair": [a, b], "duplicate": bool}]}
//            -> {"state", "views", "view_change", "stopped", "reason"}
//   view     -> {"views", "dirty", "history", "initial_change"}
//   descriptor {"id", "dataset", "views", "aggregation", "config", "created_at", "state"}
class SessionManager {
 public:
  explicit SessionManager(ServiceOptions options = {});
  ~SessionManager();

  void register_dataset(ExperimentInput input);
  // Registers every manifest under data_dir/datasets whose files exist.
  // Returns one message per manifest that was skipped.
  std::vector<std::string> load_datasets();
  std::vector<std::string> dataset_names() const;
  // [{"name", "views", "records"}]
  nlohmann::json datasets() const;

  // Rebuilds checkpointed sessions by replaying their label transcripts.
  // Returns the number restored.
  std::size_t restore();

  nlohmann::json create(const nlohmann::json& request);
  nlohmann::json batch(const std::string& id);
  nlohmann::json submit(const std::string& id, const nlohmann::json& body);
  nlohmann::json view(const std::string& id);
  nlohmann::json descriptor(const std::string& id);
  std::vector<std::string> session_ids() const;

  // Read access for tests and replay checks.
  std::string digest(const std::string& id);

 private:
  struct Entry;
  std::shared_ptr<Entry> find(const std::string& id) const;
  std::shared_ptr<const CleaningProblem> problem_for(const std::string& dataset, const DashboardSpec& dashboard);
  void checkpoint(const Entry& entry) const;
  std::shared_ptr<Entry> build(const nlohmann::json& request, const std::string& id, const std::string& created_at);

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const ExperimentInput>> datasets_;
  std::map<std::string, std::shared_ptr<const CleaningProblem>> problems_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::map<std::string, std::string> idempotency_;
  std::size_t next_id_ = 1;
};

// Routes:
//   POST /sessions, GET /sessions/{id}, GET /sessions/{id}/batch,
//   POST /sessions/{id}/labels, GET /sessions/{id}/view, GET /datasets.
// Errors come back as {"error": message} with the matching status.
void install_routes(httplib::Server& server, SessionManager& manager);

}  // namespace viewclean
