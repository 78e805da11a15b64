#pragma once

// HTTP binding of SessionManager: JSON request/response endpoints plus a
// server-sent event stream per session.
//
//   POST /sessions                  {config, humans | seats}  -> {id, ...}
//   POST /sessions/{id}/join        {token}                   -> {seat, state}
//   POST /sessions/{id}/fill-bots                             -> state
//   POST /sessions/{id}/choice      {token, strategy}         -> {ok, t}
//   GET  /sessions/{id}/state?token=                          -> state
//   GET  /sessions/{id}/events?token=&from=                   -> text/event-stream
//   GET  /sessions/{id}/log?partial=1                         -> JSONL

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <thread>

// Eigen must be parsed before httplib: <resolv.h> defines a `_res` macro
// that collides with Eigen parameter names.
#include "eqsel/session_server.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace eqsel {

namespace detail {

inline void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& code, const std::string& msg) {
  send_json(res, {{"error", code}, {"message", msg}}, status);
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const SessionError& e) {
    send_error(res, e.http_status(), e.code(), e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, "BadRequest", e.what());
  } catch (const InvalidArgument& e) {
    send_error(res, 400, "InvalidArgument", e.what());
  }
}

inline std::vector<SeatKind> plan_from_json(const nlohmann::json& body, int players) {
  if (body.contains("seats")) {
    std::vector<SeatKind> plan;
    for (const auto& s : body.at("seats")) {
      const auto k = s.get<std::string>();
      if (k == "human") plan.push_back(SeatKind::Human);
      else if (k == "bot") plan.push_back(SeatKind::Bot);
      else throw SessionError("InvalidSeatPlan", "seat kinds are 'human' or 'bot'", 400);
    }
    return plan;
  }
  return seat_plan(players, body.value("humans", players));
}

}  // namespace detail

class HttpApi {
 public:
  explicit HttpApi(SessionManager& manager) : manager_(manager) { routes(); }
  ~HttpApi() { stop(); }

  httplib::Server& server() { return server_; }

  /// Serves static files (the browser client) under `/`.
  bool mount(const std::string& dir) { return server_.set_mount_point("/", dir); }

  /// Binds, starts the deadline ticker and serves on a background thread.
  /// Returns the bound port (useful with port 0).
  int start(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    running_ = true;
    ticker_ = std::thread([this] {
      while (running_) {
        manager_.tick(Clock::now());
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
    });
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  /// Blocking variant for the CLI.
  void run(const std::string& host, int port) {
    start(host, port);
    if (listener_.joinable()) listener_.join();
  }

  void stop() {
    running_ = false;
    server_.stop();
    if (listener_.joinable()) listener_.join();
    if (ticker_.joinable()) ticker_.join();
  }

 private:
  void routes() {
    using httplib::Request;
    using httplib::Response;
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server_.Options(R"(/.*)", [](const Request&, Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server_.Post("/sessions", [this](const Request& req, Response& res) {
      detail::guarded(res, [&] {
        const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
        SessionConfig config;
        try {
          config = config_from_json(body.value("config", nlohmann::json::object()));
        } catch (const InvalidArgument& e) {
          throw SessionError("InvalidConfig", e.what(), 400);
        }
        const auto s = manager_.create(config, detail::plan_from_json(body, config.players));
        detail::send_json(res,
                          {{"id", s->id()}, {"permutation", config.permutation.code()}, {"phase", to_string(s->phase())}},
                          201);
      });
    });

    server_.Post(R"(/sessions/([^/]+)/join)", [this](const Request& req, Response& res) {
      detail::guarded(res, [&] {
        const auto s = manager_.get(req.matches[1]);
        const auto token = nlohmann::json::parse(req.body).at("token").get<std::string>();
        const int seat = s->join(token);
        detail::send_json(res, {{"seat", seat + 1}, {"state", s->state_view(token)}});
      });
    });

    server_.Post(R"(/sessions/([^/]+)/fill-bots)", [this](const Request& req, Response& res) {
      detail::guarded(res, [&] {
        const auto s = manager_.get(req.matches[1]);
        s->fill_with_bots();
        detail::send_json(res, s->state_view(""));
      });
    });

    server_.Post(R"(/sessions/([^/]+)/choice)", [this](const Request& req, Response& res) {
      detail::guarded(res, [&] {
        const auto s = manager_.get(req.matches[1]);
        const auto body = nlohmann::json::parse(req.body);
        const int t = s->round();
        s->submit(body.at("token").get<std::string>(), body.at("strategy").get<int>());
        detail::send_json(res, {{"ok", true}, {"t", t}});
      });
    });

    server_.Get(R"(/sessions/([^/]+)/state)", [this](const Request& req, Response& res) {
      detail::guarded(res, [&] {
        const auto s = manager_.get(req.matches[1]);
        detail::send_json(res, s->state_view(req.get_param_value("token")));
      });
    });

    server_.Get(R"(/sessions/([^/]+)/log)", [this](const Request& req, Response& res) {
      detail::guarded(res, [&] {
        const auto s = manager_.get(req.matches[1]);
        const bool partial = req.get_param_value("partial") == "1" || req.get_param_value("partial") == "true";
        res.set_content(to_jsonl(s->export_log(partial)), "application/x-ndjson");
      });
    });

    server_.Get(R"(/sessions/([^/]+)/events)", [this](const Request& req, Response& res) {
      detail::guarded(res, [&] {
        const auto s = manager_.get(req.matches[1]);
        const std::string token = req.get_param_value("token");
        if (!token.empty() && !s->seat_for(token)) throw SessionError("UnknownToken", "token is not seated", 403);
        std::size_t from = 0;
        if (req.has_header("Last-Event-ID")) from = std::stoul(req.get_header_value("Last-Event-ID")) + 1;
        if (req.has_param("from")) from = std::stoul(req.get_param_value("from"));
        auto next = std::make_shared<std::size_t>(from);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [this, s, token, next](std::size_t, httplib::DataSink& sink) {
          if (!running_) return false;
          const auto evs = s->wait_events(*next, token, std::chrono::milliseconds(500));
          if (evs.empty()) {
            const std::string ping = ": ping\n\n";
            return sink.write(ping.data(), ping.size());
          }
          for (const auto& [seq, ev] : evs) {
            const std::string msg = "id: " + std::to_string(seq) + "\nevent: " + ev.at("type").get<std::string>() +
                                    "\ndata: " + ev.dump() + "\n\n";
            if (!sink.write(msg.data(), msg.size())) return false;
            *next = seq + 1;
            if (ev.at("type") == "finished") {
              sink.done();
              return true;
            }
          }
          return true;
        });
      });
    });
  }

  SessionManager& manager_;
  httplib::Server server_;
  std::atomic<bool> running_{false};
  std::thread ticker_;
  std::thread listener_;
};

}  // namespace eqsel
