#pragma once

// Live sessions: lobby, round state machine with deadlines, bot seats, and
// per-seat feedback events. Rounds resolve through SessionEngine, the same
// code path the batch simulator uses.

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "eqsel/agents.hpp"

namespace eqsel {

using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// Errors

class SessionError : public Error {
 public:
  SessionError(std::string code, const std::string& what, int status = 409)
      : Error(what), code_(std::move(code)), status_(status) {}
  const std::string& code() const { return code_; }
  int http_status() const { return status_; }

 private:
  std::string code_;
  int status_;
};

inline SessionError session_not_found(const std::string& id) {
  return {"SessionNotFound", "no session '" + id + "'", 404};
}

// ---------------------------------------------------------------------------
// Session id: date digits (last digit of year, month, day), period letter,
// two-digit server code, treatment symbol and intensity, repetition digit.

struct SessionId {
  int year_digit = 0;
  int month = 1;
  int day = 1;
  char period = 'A';
  int server = 0;
  char symbol = 'o';
  int intensity = 1;
  int repetition = 1;

  std::string str() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d%02d%02d%c%02d%c%d%d", year_digit, month, day, period, server, symbol, intensity,
                  repetition);
    return buf;
  }

  static SessionId parse(const std::string& s) {
    SessionId id;
    const auto digit = [&](std::size_t i) {
      if (i >= s.size() || s[i] < '0' || s[i] > '9') throw InvalidArgument("malformed session id '" + s + "'");
      return s[i] - '0';
    };
    if (s.size() != 11) throw InvalidArgument("malformed session id '" + s + "'");
    id.year_digit = digit(0);
    id.month = digit(1) * 10 + digit(2);
    id.day = digit(3) * 10 + digit(4);
    id.period = s[5];
    id.server = digit(6) * 10 + digit(7);
    id.symbol = s[8];
    id.intensity = digit(9);
    id.repetition = digit(10);
    if (id.month < 1 || id.month > 12 || id.day < 1 || id.day > 31 || id.period < 'A' || id.period > 'Z' ||
        (id.symbol != 'N' && id.symbol != 'o' && id.symbol != 'P'))
      throw InvalidArgument("malformed session id '" + s + "'");
    return id;
  }

  /// Symbol and intensity for a treatment value. b = 0 carries intensity 1,
  /// as in the reference session list.
  static std::pair<char, int> treatment_code(double b) {
    if (std::abs(b) < 1e-12) return {'o', 1};
    return {b < 0 ? 'N' : 'P', static_cast<int>(std::lround(std::abs(b) / 0.4))};
  }

  bool matches(double b) const {
    const auto [sym, inten] = treatment_code(b);
    return sym == symbol && inten == intensity;
  }
};

// ---------------------------------------------------------------------------
// Live session

enum class Phase { Lobby, RoundOpen, RoundResolved, Finished };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Lobby: return "lobby";
    case Phase::RoundOpen: return "round_open";
    case Phase::RoundResolved: return "round_resolved";
    case Phase::Finished: return "finished";
  }
  return "?";
}

enum class SeatKind { Human, Bot };

struct Seat {
  SeatKind kind = SeatKind::Bot;
  std::string token;  // empty until a human joins
};

struct Transition {
  Phase phase;
  int t;
  friend bool operator==(const Transition&, const Transition&) = default;
};

struct RankEntry {
  int seat;
  double cumulative;
  double rank;  // 1 = best; ties share the average of their positions
};

/// Seats by cumulative score, best first; tied seats share averaged ranks.
inline std::vector<RankEntry> rank_seats(const std::vector<double>& cumulative) {
  std::vector<RankEntry> out;
  for (std::size_t s = 0; s < cumulative.size(); ++s) out.push_back({int(s), cumulative[s], 0.0});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.cumulative > b.cumulative; });
  for (std::size_t i = 0; i < out.size();) {
    std::size_t j = i;
    while (j < out.size() && out[j].cumulative == out[i].cumulative) ++j;
    const double avg = (double(i + 1) + double(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) out[k].rank = avg;
    i = j;
  }
  return out;
}

inline constexpr double kDefaultRoundTimeout = 5.0;

class LiveSession {
 public:
  LiveSession(std::string id, const SessionConfig& config, std::vector<SeatKind> plan,
              double timeout_seconds = kDefaultRoundTimeout, Clock::time_point now = Clock::now())
      : id_(std::move(id)), engine_(config), timeout_(timeout_seconds) {
    if (plan.size() != std::size_t(config.players))
      throw SessionError("InvalidSeatPlan", "seat plan must list one entry per player", 400);
    if (!(timeout_seconds > 0)) throw SessionError("InvalidTimeout", "round timeout must be positive", 400);
    for (auto k : plan) seats_.push_back({k, {}});
    pending_.assign(plan.size(), std::nullopt);
    transitions_.push_back({Phase::Lobby, 0});
    maybe_start(now);
  }

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return engine_.config(); }

  Phase phase() const {
    std::lock_guard lock(mutex_);
    return phase_;
  }
  /// Open round index, or the last resolved one.
  int round() const {
    std::lock_guard lock(mutex_);
    return current_round();
  }
  std::vector<Transition> transitions() const {
    std::lock_guard lock(mutex_);
    return transitions_;
  }
  std::vector<RoundRecord> history() const {
    std::lock_guard lock(mutex_);
    return engine_.history();
  }

  int join(const std::string& token, Clock::time_point now = Clock::now()) {
    std::lock_guard lock(mutex_);
    if (token.empty()) throw SessionError("InvalidToken", "token must be non-empty", 400);
    for (const auto& s : seats_)
      if (s.token == token) throw SessionError("DuplicateToken", "token already seated");
    if (phase_ != Phase::Lobby) throw SessionError("SessionInProgress", "session has already started");
    for (std::size_t s = 0; s < seats_.size(); ++s) {
      if (seats_[s].kind == SeatKind::Human && seats_[s].token.empty()) {
        seats_[s].token = token;
        push_event({{"type", "joined"}, {"seat", s + 1}, {"joined", joined_count()}});
        maybe_start(now);
        return static_cast<int>(s);
      }
    }
    throw SessionError("SessionFull", "no free human seat");
  }

  /// Lobby only: remaining empty human seats become bots and play starts.
  void fill_with_bots(Clock::time_point now = Clock::now()) {
    std::lock_guard lock(mutex_);
    if (phase_ != Phase::Lobby) throw SessionError("SessionInProgress", "bots can only fill seats in the lobby");
    for (auto& s : seats_)
      if (s.kind == SeatKind::Human && s.token.empty()) s.kind = SeatKind::Bot;
    maybe_start(now);
  }

  /// Records a 1-based strategy choice for the seat holding `token`.
  void submit(const std::string& token, int strategy, Clock::time_point now = Clock::now()) {
    std::lock_guard lock(mutex_);
    const std::size_t seat = seat_of(token);
    if (phase_ != Phase::RoundOpen) throw SessionError("OutOfPhase", "no round is open");
    if (strategy < 1 || strategy > int(kStrategies))
      throw SessionError("InvalidStrategy", "strategy must be between 1 and 5", 400);
    if (pending_[seat]) throw SessionError("DoubleSubmission", "choice already submitted this round");
    pending_[seat] = strategy;
    if (all_submitted()) resolve_open_round(now);
  }

  /// Fills missing choices once the round deadline has passed. Returns true
  /// if a round was resolved.
  bool tick(Clock::time_point now) {
    std::lock_guard lock(mutex_);
    if (phase_ != Phase::RoundOpen || now < deadline_) return false;
    force_timeout(now);
    return true;
  }

  /// Resolves the open round now, filling every missing choice.
  void timeout_now(Clock::time_point now = Clock::now()) {
    std::lock_guard lock(mutex_);
    if (phase_ != Phase::RoundOpen) throw SessionError("OutOfPhase", "no round is open");
    force_timeout(now);
  }

  std::optional<int> seat_for(const std::string& token) const {
    std::lock_guard lock(mutex_);
    for (std::size_t s = 0; s < seats_.size(); ++s)
      if (!token.empty() && seats_[s].token == token) return static_cast<int>(s);
    return std::nullopt;
  }

  /// Snapshot for one seat (or an observer when token is empty).
  nlohmann::json state_view(const std::string& token, Clock::time_point now = Clock::now()) const {
    std::lock_guard lock(mutex_);
    nlohmann::json j = {{"id", id_},
                        {"phase", to_string(phase_)},
                        {"t", current_round()},
                        {"rounds", engine_.config().rounds},
                        {"players", engine_.players()},
                        {"joined", joined_count()},
                        {"humans", human_count()},
                        {"timeout_ms", std::lround(timeout_ * 1000.0)}};
    if (phase_ == Phase::RoundOpen) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline_ - now).count();
      j["deadline_ms"] = std::max<long long>(0, left);
    }
    if (!token.empty()) {
      const std::size_t seat = seat_of(token);
      j["seat"] = seat + 1;
      j["submitted"] = phase_ == Phase::RoundOpen && pending_[seat].has_value();
      if (!engine_.history().empty()) {
        j["feedback"] = feedback(engine_.history().back(), seat);
      }
      j["cumulative"] = engine_.history().empty() ? 0.0 : engine_.history().back().cumulative[seat];
    }
    if (phase_ == Phase::Finished) j["ranking"] = ranking_json();
    return j;
  }

  /// Events with sequence number >= from. With a token, round results carry
  /// only that seat's feedback.
  std::vector<std::pair<std::size_t, nlohmann::json>> events_since(std::size_t from, const std::string& token) const {
    std::lock_guard lock(mutex_);
    return collect_events(from, token);
  }

  /// Blocks until an event with sequence number >= from exists, or timeout.
  std::vector<std::pair<std::size_t, nlohmann::json>> wait_events(std::size_t from, const std::string& token,
                                                                  std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return events_.size() > from; });
    return collect_events(from, token);
  }

  std::vector<RankEntry> ranking() const {
    std::lock_guard lock(mutex_);
    return ranking_unlocked();
  }

  /// Log in the simulator's schema. Requires a finished session unless
  /// `partial`.
  SessionLog export_log(bool partial = false) const {
    std::lock_guard lock(mutex_);
    if (phase_ != Phase::Finished && !partial)
      throw SessionError("SessionNotFinished", "session is still running; request a partial export");
    SessionLog log;
    log.id = id_;
    log.config = engine_.config();
    log.records = engine_.history();
    log.partial = phase_ != Phase::Finished;
    return log;
  }

 private:
  int current_round() const {
    const int resolved = static_cast<int>(engine_.history().size());
    return phase_ == Phase::RoundOpen ? resolved + 1 : resolved;
  }

  int joined_count() const {
    int n = 0;
    for (const auto& s : seats_) n += s.kind == SeatKind::Human && !s.token.empty();
    return n;
  }
  int human_count() const {
    int n = 0;
    for (const auto& s : seats_) n += s.kind == SeatKind::Human;
    return n;
  }

  std::size_t seat_of(const std::string& token) const {
    for (std::size_t s = 0; s < seats_.size(); ++s)
      if (!token.empty() && seats_[s].token == token) return s;
    throw SessionError("UnknownToken", "token is not seated in this session", 403);
  }

  bool all_submitted() const {
    return std::all_of(pending_.begin(), pending_.end(), [](const auto& c) { return c.has_value(); });
  }

  void transition(Phase p, int t) {
    phase_ = p;
    transitions_.push_back({p, t});
  }

  void maybe_start(Clock::time_point now) {
    if (phase_ != Phase::Lobby) return;
    for (const auto& s : seats_)
      if (s.kind == SeatKind::Human && s.token.empty()) return;
    open_round(now);
  }

  void open_round(Clock::time_point now) {
    // Bot-only sessions resolve every round immediately; loop instead of
    // recursing.
    while (true) {
      transition(Phase::RoundOpen, engine_.next_round());
      deadline_ = now + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(timeout_));
      pending_.assign(seats_.size(), std::nullopt);
      for (std::size_t s = 0; s < seats_.size(); ++s)
        if (seats_[s].kind == SeatKind::Bot) pending_[s] = engine_.decide(s);
      push_event({{"type", "round_open"}, {"t", engine_.next_round()}, {"timeout_ms", std::lround(timeout_ * 1000.0)}});
      if (!all_submitted()) return;
      if (!finish_round()) return;
    }
  }

  void force_timeout(Clock::time_point now) {
    std::vector<int> late;
    for (std::size_t s = 0; s < seats_.size(); ++s) {
      if (!pending_[s]) {
        pending_[s] = engine_.timeout_choice(s);
        late.push_back(static_cast<int>(s));
      }
    }
    resolve_open_round(now, std::move(late));
  }

  void resolve_open_round(Clock::time_point now, std::vector<int> late = {}) {
    late_ = std::move(late);
    if (finish_round()) open_round(now);
  }

  /// Resolves the pending choices. Returns true when another round follows.
  bool finish_round() {
    std::vector<int> choices;
    for (const auto& c : pending_) choices.push_back(*c);
    const RoundRecord& r = engine_.resolve(choices, std::exchange(late_, {}));
    transition(Phase::RoundResolved, r.t);
    nlohmann::json seats = nlohmann::json::array();
    for (std::size_t s = 0; s < seats_.size(); ++s) seats.push_back(feedback(r, s));
    nlohmann::json ev = {{"type", "round_result"}, {"t", r.t}, {"seats", seats}};
    if (!r.timed_out.empty()) ev["timed_out"] = r.timed_out;
    push_event(std::move(ev));
    if (engine_.finished()) {
      transition(Phase::Finished, r.t);
      push_event({{"type", "finished"}, {"t", r.t}, {"ranking", ranking_json()}});
      return false;
    }
    return true;
  }

  static nlohmann::json feedback(const RoundRecord& r, std::size_t seat) {
    return {{"strategy", r.choices[seat]},  {"counts", r.counts.counts()},     {"game_earn", r.game_payoffs[seat]},
            {"reward", r.rewards[seat]},    {"tax", r.taxes[seat]},             {"round_sum", r.totals[seat]},
            {"cumulative", r.cumulative[seat]}};
  }

  std::vector<RankEntry> ranking_unlocked() const {
    if (engine_.history().empty()) return rank_seats(std::vector<double>(seats_.size(), 0.0));
    return rank_seats(engine_.history().back().cumulative);
  }

  nlohmann::json ranking_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : ranking_unlocked())
      out.push_back({{"seat", e.seat + 1}, {"cumulative", e.cumulative}, {"rank", e.rank}});
    return out;
  }

  void push_event(nlohmann::json ev) {
    ev["seq"] = events_.size();
    events_.push_back(std::move(ev));
    cv_.notify_all();
  }

  std::vector<std::pair<std::size_t, nlohmann::json>> collect_events(std::size_t from, const std::string& token) const {
    std::optional<std::size_t> seat;
    if (!token.empty()) seat = seat_of(token);
    std::vector<std::pair<std::size_t, nlohmann::json>> out;
    for (std::size_t k = from; k < events_.size(); ++k) {
      nlohmann::json ev = events_[k];
      if (seat && ev["type"] == "round_result") {
        ev["feedback"] = ev["seats"][*seat];
        ev.erase("seats");
      }
      out.emplace_back(k, std::move(ev));
    }
    return out;
  }

  std::string id_;
  SessionEngine engine_;
  double timeout_;
  std::vector<Seat> seats_;
  std::vector<std::optional<int>> pending_;
  std::vector<int> late_;
  Phase phase_ = Phase::Lobby;
  std::vector<Transition> transitions_;
  Clock::time_point deadline_{};
  std::vector<nlohmann::json> events_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
};

// ---------------------------------------------------------------------------
// Registry

struct ServerOptions {
  bool allow_any_b = false;
  double round_timeout = kDefaultRoundTimeout;
  int server_code = 1;
  char period = 'A';
};

class SessionManager {
 public:
  explicit SessionManager(ServerOptions opt = {}) : opt_(opt) {}

  const ServerOptions& options() const { return opt_; }

  /// Creates a session in the lobby (bot-only sessions play out at once).
  std::shared_ptr<LiveSession> create(const SessionConfig& config, const std::vector<SeatKind>& plan,
                                      Clock::time_point now = Clock::now()) {
    try {
      config.validate();
    } catch (const InvalidArgument& e) {
      throw SessionError("InvalidConfig", e.what(), 400);
    }
    if (!opt_.allow_any_b && !is_standard_treatment(config.b))
      throw SessionError("TreatmentRejected", "b is not one of the configured treatments", 400);
    std::lock_guard lock(mutex_);
    SessionId sid = today();
    const auto [sym, inten] = SessionId::treatment_code(config.b);
    sid.symbol = sym;
    sid.intensity = std::min(inten, 9);
    sid.server = opt_.server_code % 100;
    sid.period = opt_.period;
    std::string id;
    for (int rep = 1;; ++rep) {
      sid.repetition = rep % 10;
      id = sid.str();
      if (!sessions_.count(id)) break;
      if (rep > 10) id = sid.str() + "-" + std::to_string(++overflow_);
      if (!sessions_.count(id)) break;
    }
    auto s = std::make_shared<LiveSession>(id, config, plan, opt_.round_timeout, now);
    sessions_.emplace(id, s);
    order_.push_back(id);
    return s;
  }

  std::shared_ptr<LiveSession> get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw session_not_found(id);
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::lock_guard lock(mutex_);
    return order_;
  }

  /// Applies deadlines to every session; returns the number of rounds forced.
  int tick(Clock::time_point now) {
    std::vector<std::shared_ptr<LiveSession>> all;
    {
      std::lock_guard lock(mutex_);
      for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    int n = 0;
    for (const auto& s : all) n += s->tick(now);
    return n;
  }

 private:
  static SessionId today() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    SessionId id;
    id.year_digit = (tm.tm_year + 1900) % 10;
    id.month = tm.tm_mon + 1;
    id.day = tm.tm_mday;
    return id;
  }

  ServerOptions opt_;
  std::map<std::string, std::shared_ptr<LiveSession>> sessions_;
  std::vector<std::string> order_;
  int overflow_ = 0;
  mutable std::mutex mutex_;
};

inline std::vector<SeatKind> seat_plan(int players, int humans) {
  if (humans < 0 || humans > players) throw SessionError("InvalidSeatPlan", "human seats out of range", 400);
  std::vector<SeatKind> plan(std::size_t(players), SeatKind::Bot);
  for (int s = 0; s < humans; ++s) plan[std::size_t(s)] = SeatKind::Human;
  return plan;
}

}  // namespace eqsel
