#include <gtest/gtest.h>

#include "eqsel/http_api.hpp"

using namespace eqsel;
using nlohmann::json;

namespace {

class Api : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = api_.start("127.0.0.1", 0);
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(10, 0);
  }
  void TearDown() override { api_.stop(); }

  httplib::Result post(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  std::string create(int humans, double b = 0.4, int rounds = 3) {
    const auto r = post("/sessions", {{"config", {{"b", b}, {"rounds", rounds}, {"seed", 5}}}, {"humans", humans}});
    EXPECT_EQ(r->status, 201) << r->body;
    return json::parse(r->body).at("id");
  }

  static std::string error_of(const httplib::Result& r) { return json::parse(r->body).value("error", ""); }

  SessionManager manager_{ServerOptions{false, 30.0}};
  HttpApi api_{manager_};
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace

TEST_F(Api, CreateJoinChooseState) {
  const auto id = create(2);
  EXPECT_EQ(SessionId::parse(id).symbol, 'P');
  auto r = post("/sessions/" + id + "/join", {{"token", "a"}});
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["seat"], 1);
  EXPECT_EQ(json::parse(r->body)["state"]["phase"], "lobby");
  r = post("/sessions/" + id + "/join", {{"token", "b"}});
  EXPECT_EQ(json::parse(r->body)["state"]["phase"], "round_open");

  r = post("/sessions/" + id + "/choice", {{"token", "a"}, {"strategy", 4}});
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["t"], 1);
  r = client_->Get("/sessions/" + id + "/state?token=a");
  auto st = json::parse(r->body);
  EXPECT_EQ(st["submitted"], true);
  EXPECT_EQ(st["t"], 1);
  post("/sessions/" + id + "/choice", {{"token", "b"}, {"strategy", 5}});
  st = json::parse(client_->Get("/sessions/" + id + "/state?token=b")->body);
  EXPECT_EQ(st["t"], 2);
  EXPECT_EQ(st["feedback"]["strategy"], 5);
  EXPECT_EQ(st["submitted"], false);
}

TEST_F(Api, ErrorCodes) {
  EXPECT_EQ(client_->Get("/sessions/nope/state")->status, 404);
  auto r = post("/sessions", {{"config", {{"b", 0.5}}}});
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(error_of(r), "TreatmentRejected");
  r = post("/sessions", {{"config", {{"rounds", 0}}}});
  EXPECT_EQ(error_of(r), "InvalidConfig");
  r = client_->Post("/sessions", "{not json", "application/json");
  EXPECT_EQ(r->status, 400);

  const auto id = create(1);
  r = post("/sessions/" + id + "/choice", {{"token", "a"}, {"strategy", 1}});
  EXPECT_EQ(r->status, 403);
  EXPECT_EQ(error_of(r), "UnknownToken");
  post("/sessions/" + id + "/join", {{"token", "a"}});
  r = post("/sessions/" + id + "/join", {{"token", "a"}});
  EXPECT_EQ(r->status, 409);
  EXPECT_EQ(error_of(r), "DuplicateToken");
  r = post("/sessions/" + id + "/choice", {{"token", "a"}, {"strategy", 9}});
  EXPECT_EQ(error_of(r), "InvalidStrategy");
  r = client_->Get("/sessions/" + id + "/log");
  EXPECT_EQ(r->status, 409);
  EXPECT_EQ(error_of(r), "SessionNotFinished");
}

TEST_F(Api, LogsFullAndPartial) {
  const auto id = create(1, 0.8, 4);
  post("/sessions/" + id + "/join", {{"token", "h"}});
  post("/sessions/" + id + "/choice", {{"token", "h"}, {"strategy", 2}});
  auto r = client_->Get("/sessions/" + id + "/log?partial=1");
  ASSERT_EQ(r->status, 200);
  std::istringstream part(r->body);
  const auto p = read_jsonl(part);
  EXPECT_TRUE(p.partial);
  EXPECT_EQ(p.records.size(), 1u);
  for (int t = 0; t < 3; ++t) post("/sessions/" + id + "/choice", {{"token", "h"}, {"strategy", 4}});
  r = client_->Get("/sessions/" + id + "/log");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->body, to_jsonl(manager_.get(id)->export_log()));

  const auto bots = json::parse(post("/sessions", {{"config", {{"b", -0.4}, {"rounds", 20}, {"seed", 3}}}, {"humans", 0}})->body);
  EXPECT_EQ(bots["phase"], "finished");
  EXPECT_EQ(client_->Get("/sessions/" + bots["id"].get<std::string>() + "/log")->status, 200);
}

TEST_F(Api, FillBotsAndSeatList) {
  auto r = post("/sessions", {{"config", {{"b", 0.0}, {"rounds", 2}}}, {"seats", {"human", "bot", "bot", "bot", "bot"}}});
  ASSERT_EQ(r->status, 201);
  const std::string id = json::parse(r->body)["id"];
  r = post("/sessions/" + id + "/fill-bots", json::object());
  EXPECT_EQ(json::parse(r->body)["phase"], "finished");
  r = post("/sessions", {{"config", json::object()}, {"seats", {"robot"}}});
  EXPECT_EQ(error_of(r), "InvalidSeatPlan");
}

TEST_F(Api, EventStreamEndsOnFinished) {
  const auto id = create(1, 0.4, 2);
  post("/sessions/" + id + "/join", {{"token", "h"}});
  std::string stream;
  std::thread reader([&] {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(10, 0);
    c.Get("/sessions/" + id + "/events?token=h", [&](const char* data, std::size_t n) {
      stream.append(data, n);
      return true;
    });
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  post("/sessions/" + id + "/choice", {{"token", "h"}, {"strategy", 1}});
  post("/sessions/" + id + "/choice", {{"token", "h"}, {"strategy", 2}});
  reader.join();
  for (const char* ev : {"event: joined", "event: round_open", "event: round_result", "event: finished"})
    EXPECT_NE(stream.find(ev), std::string::npos) << ev;
  EXPECT_NE(stream.find("\"feedback\""), std::string::npos);
  EXPECT_EQ(stream.find("\"seats\""), std::string::npos);
  EXPECT_LT(stream.find("event: round_result"), stream.find("event: finished"));
  EXPECT_EQ(client_->Get("/sessions/" + id + "/events?token=zz")->status, 403);

  // resuming from an id replays only later events
  const auto r = client_->Get("/sessions/" + id + "/events", httplib::Headers{{"Last-Event-ID", "3"}});
  EXPECT_EQ(r->body.find("id: 3\n"), std::string::npos);
  EXPECT_NE(r->body.find("id: 4\n"), std::string::npos);
}
