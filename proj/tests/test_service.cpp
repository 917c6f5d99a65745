#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "viewclean/service.hpp"

using namespace viewclean;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const ExperimentInput& synthetic() {
  static const ExperimentInput input = synthetic_input({});
  return input;
}

json create_request() {
  return {{"dataset", "synthetic"}, {"views", {"Top3"}}, {"config", {{"budget", 73}, {"seed", 5}}}};
}

// Oracle answers for a batch response.
json answer(const json& batch) {
  json labels = json::array();
  for (const auto& p : batch["pairs"]) {
    const PairKey key(p["pair"][0].get<RecordId>(), p["pair"][1].get<RecordId>());
    labels.push_back({{"pair", p["pair"]}, {"duplicate", synthetic().truth.is_match(key)}});
  }
  return {{"labels", labels}};
}

int status_of(const std::function<void()>& call) {
  try {
    call();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 200;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("viewclean_service_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("sessions are created from known datasets and views") {
  SessionManager m;
  m.register_dataset(synthetic());
  CHECK(m.dataset_names() == std::vector<std::string>{"synthetic"});

  const auto d = m.create(create_request());
  CHECK(d["id"] == "s000001");
  CHECK(d["dataset"] == "synthetic");
  CHECK(d["state"]["labels_used"] == 0);
  CHECK(d["state"]["budget"] == 73);
  CHECK(d["state"]["stopped"] == false);
  CHECK(m.descriptor("s000001")["id"] == "s000001");

  CHECK(status_of([&] { m.create({{"dataset", "nope"}, {"views", {"Top3"}}}); }) == 404);
  CHECK(status_of([&] { m.create({{"dataset", "synthetic"}, {"views", {"Nope"}}}); }) == 404);
  CHECK(status_of([&] { m.create({{"dataset", "synthetic"}}); }) == 400);
  CHECK(status_of([&] { m.create({{"views", {"Top3"}}}); }) == 400);
  CHECK(status_of([&] { m.create(json::array()); }) == 400);
  CHECK(status_of([&] {
          m.create({{"dataset", "synthetic"}, {"views", {"Top3"}}, {"config", {{"budget", 5}}}});
        }) == 400);
  CHECK(status_of([&] {
          m.create({{"dataset", "synthetic"}, {"views", {"Top3"}}, {"config", {{"strategy", "best"}}}});
        }) == 400);
  CHECK(status_of([&] { m.batch("s999999"); }) == 404);
  CHECK(status_of([&] { m.view("s999999"); }) == 404);
  CHECK(m.session_ids().size() == 1);
}

TEST_CASE("an idempotency key returns the existing session") {
  SessionManager m;
  m.register_dataset(synthetic());
  auto req = create_request();
  req["idempotency_key"] = "abc";
  const auto a = m.create(req);
  const auto b = m.create(req);
  CHECK(a["id"] == b["id"]);
  CHECK(m.session_ids().size() == 1);
  req["idempotency_key"] = "def";
  CHECK(m.create(req)["id"] != a["id"]);
  req["idempotency_key"] = 3;
  CHECK(status_of([&] { m.create(req); }) == 400);
}

TEST_CASE("batches are stable until answered and submissions are atomic") {
  SessionManager m;
  m.register_dataset(synthetic());
  const auto id = m.create(create_request())["id"].get<std::string>();
  const auto b1 = m.batch(id);
  CHECK(b1["batch_index"] == 0);
  CHECK(b1["initial"] == true);
  REQUIRE(b1["pairs"].size() == 13);
  CHECK(m.batch(id) == b1);
  const auto& first = b1["pairs"][0];
  CHECK(first["left"]["values"].contains("name"));
  CHECK(first["left"]["id"] == first["pair"][0]);

  auto good = answer(b1);
  auto partial = good;
  partial["labels"].erase(partial["labels"].size() - 1);
  auto doubled = good;
  doubled["labels"].push_back(good["labels"][0]);
  auto foreign = good;
  foreign["labels"][0]["pair"] = {100000, 100001};
  auto malformed = good;
  malformed["labels"][0]["duplicate"] = "yes";
  for (const auto& bad : {partial, doubled, foreign, malformed, json{{"nope", 1}}, json{{"labels", 1}}}) {
    CHECK(status_of([&] { m.submit(id, bad); }) == 400);
  }
  CHECK(m.descriptor(id)["state"]["labels_used"] == 0);
  CHECK(m.batch(id) == b1);

  const auto r = m.submit(id, good);
  CHECK(r["state"]["labels_used"] == 13);
  CHECK(r["state"]["iterations"] == 1);
  CHECK(r["views"].size() == 1);
  CHECK(r["views"][0]["name"] == "Top3");
  CHECK(r["view_change"].is_number());
  const auto b2 = m.batch(id);
  CHECK(b2["batch_index"] == 1);
  CHECK(b2["initial"] == false);
  CHECK(b2["pairs"].size() == 20);

  const auto v = m.view(id);
  CHECK(v["history"].empty());
  CHECK(v["initial_change"].is_number());
  CHECK(v["dirty"].size() == 1);
}

TEST_CASE("stopped sessions refuse labels") {
  SessionManager m;
  m.register_dataset(synthetic());
  auto req = create_request();
  req["config"]["window"] = 16;
  const auto id = m.create(req)["id"].get<std::string>();
  json last;
  for (int guard = 0; guard < 10; ++guard) {
    const auto b = m.batch(id);
    if (b["stopped"] == true) break;
    last = m.submit(id, answer(b));
  }
  CHECK(last["stopped"] == true);
  CHECK(last["reason"] == "budget");
  CHECK(last["state"]["labels_used"] == 73);
  const auto b = m.batch(id);
  CHECK(b["stopped"] == true);
  CHECK(b["reason"] == "budget");
  CHECK_FALSE(b.contains("pairs"));
  CHECK(status_of([&] { m.submit(id, {{"labels", json::array()}}); }) == 409);
  CHECK(m.view(id)["history"].size() == 3);
}

TEST_CASE("the service replays to the same state as the oracle driver") {
  SessionManager m;
  m.register_dataset(synthetic());
  const auto id = m.create(create_request())["id"].get<std::string>();
  for (auto b = m.batch(id); b["stopped"] != true; b = m.batch(id)) m.submit(id, answer(b));

  auto problem = make_problem(synthetic().relation, {{synthetic().views.at("Top3")}, Aggregation::kMax},
                              synthetic().features, synthetic().blocking);
  CleaningConfig cfg;
  cfg.budget = 73;
  cfg.seed = 5;
  OracleLabeler oracle(synthetic().truth);
  auto session = run_cleaning(problem, oracle, cfg);
  CHECK(m.digest(id) == session.digest());
}

TEST_CASE("checkpoints restore sessions mid-flight") {
  const auto dir = scratch("restore");
  std::string id;
  std::string digest;
  json pending;
  {
    SessionManager m({dir, 0});
    m.register_dataset(synthetic());
    auto req = create_request();
    req["idempotency_key"] = "k1";
    id = m.create(req)["id"].get<std::string>();
    m.submit(id, answer(m.batch(id)));
    m.submit(id, answer(m.batch(id)));
    digest = m.digest(id);
    pending = m.batch(id);
    CHECK(fs::exists(dir / "sessions" / (id + ".json")));
    CHECK_FALSE(fs::exists(dir / "sessions" / (id + ".json.tmp")));
  }
  SessionManager m({dir, 0});
  m.register_dataset(synthetic());
  CHECK(m.restore() == 1);
  CHECK(m.digest(id) == digest);
  CHECK(m.batch(id) == pending);
  auto req = create_request();
  req["idempotency_key"] = "k1";
  CHECK(m.create(req)["id"] == id);
  CHECK(m.create(create_request())["id"] == "s000002");

  // A tampered checkpoint no longer replays to its digest.
  const auto path = dir / "sessions" / (id + ".json");
  std::ifstream in(path);
  json doc = json::parse(in);
  in.close();
  doc["digest"] = "0";
  std::ofstream(path) << doc.dump();
  SessionManager broken({dir, 0});
  broken.register_dataset(synthetic());
  CHECK_THROWS_AS(broken.restore(), DataError);
}

TEST_CASE("concurrent sessions progress independently") {
  SessionManager m;
  m.register_dataset(synthetic());
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(m.create(create_request())["id"].get<std::string>());
  std::vector<std::jthread> threads;
  for (const auto& id : ids) {
    threads.emplace_back([&m, id] {
      for (auto b = m.batch(id); b["stopped"] != true; b = m.batch(id)) m.submit(id, answer(b));
    });
  }
  threads.clear();
  for (const auto& id : ids) CHECK(m.digest(id) == m.digest(ids[0]));
}

TEST_CASE("http routes") {
  SessionManager m;
  m.register_dataset(synthetic());
  httplib::Server server;
  install_routes(server, m);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto datasets = client.Get("/datasets");
  REQUIRE(datasets);
  CHECK(datasets->status == 200);
  const auto listed = json::parse(datasets->body)["datasets"];
  REQUIRE(listed.size() == 1);
  CHECK(listed[0]["name"] == "synthetic");
  CHECK(listed[0]["views"] == json::array({"Top3"}));

  auto created = client.Post("/sessions", create_request().dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const auto id = json::parse(created->body)["id"].get<std::string>();

  CHECK(client.Post("/sessions", "{not json", "application/json")->status == 400);
  CHECK(client.Post("/sessions", R"({"dataset": "nope", "views": ["Top3"]})", "application/json")->status == 404);
  auto missing = client.Get("/sessions/s424242");
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body).contains("error"));

  CHECK(client.Get("/sessions/" + id)->status == 200);
  for (int guard = 0; guard < 10; ++guard) {
    auto b = client.Get("/sessions/" + id + "/batch");
    REQUIRE(b);
    CHECK(b->status == 200);
    const auto batch = json::parse(b->body);
    if (batch["stopped"] == true) break;
    auto r = client.Post("/sessions/" + id + "/labels", answer(batch).dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 200);
  }
  auto late = client.Post("/sessions/" + id + "/labels", R"({"labels": []})", "application/json");
  CHECK(late->status == 409);
  auto view = client.Get("/sessions/" + id + "/view");
  CHECK(view->status == 200);
  CHECK(json::parse(view->body)["state"]["labels_used"] == 73);

  server.stop();
  listener.join();
}
