#pragma once

// Finite-population round engine. One SessionEngine resolves rounds for both
// the batch simulator and the live session server, so both produce identical
// records for identical choices.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iomanip>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "eqsel/controller.hpp"
#include "eqsel/game.hpp"
#include "eqsel/rng.hpp"

namespace eqsel {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Policy and configuration

enum class DecisionRule { PairwiseImitation, Logit, NoisyBestResponse };

inline const char* to_string(DecisionRule r) {
  switch (r) {
    case DecisionRule::PairwiseImitation: return "pairwise-imitation";
    case DecisionRule::Logit: return "logit";
    case DecisionRule::NoisyBestResponse: return "noisy-best-response";
  }
  return "?";
}

struct AgentPolicy {
  DecisionRule rule = DecisionRule::Logit;
  /// Logit choice intensity.
  double beta = 3.0;
  /// Noisy best response: probability of a uniform pick.
  double epsilon = 0.1;
  /// Probability per agent per round of a uniform pick, before the rule.
  double mutation = 0.01;
  /// Probability per agent per round of reconsidering at all.
  double revision = 0.2;
  /// Logit and best response: weight of the newest observation in an agent's
  /// running estimate of the reward/tax attached to the strategy it played.
  /// Strategies it has never played carry an estimate of zero.
  double control_learning = 0.5;
  /// Use last round's reward/tax for every strategy instead of the agent's own
  /// experience; the agent then knows the control rule.
  bool informed = true;

  void validate() const {
    if (!(beta >= 0)) throw InvalidArgument("logit beta must be >= 0");
    if (!(epsilon >= 0 && epsilon <= 1)) throw InvalidArgument("epsilon must lie in [0,1]");
    if (!(mutation >= 0 && mutation <= 1)) throw InvalidArgument("mutation rate must lie in [0,1]");
    if (!(revision > 0 && revision <= 1)) throw InvalidArgument("revision rate must lie in (0,1]");
    if (!(control_learning > 0 && control_learning <= 1))
      throw InvalidArgument("control learning weight must lie in (0,1]");
  }

  static AgentPolicy imitation(double mu = 0.01) {
    AgentPolicy p;
    p.rule = DecisionRule::PairwiseImitation;
    p.mutation = mu;
    p.revision = 1.0;
    return p;
  }
  static AgentPolicy logit(double beta, double mu = 0.0, double revision = 1.0) {
    AgentPolicy p;
    p.rule = DecisionRule::Logit;
    p.beta = beta;
    p.mutation = mu;
    p.revision = revision;
    return p;
  }

  /// "imitation", "logit", "logit:<beta>", "nbr", "nbr:<eps>"; other fields
  /// keep their defaults.
  static AgentPolicy parse(const std::string& spec) {
    AgentPolicy p;
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    const std::optional<double> arg =
        colon == std::string::npos ? std::nullopt : std::optional<double>(std::stod(spec.substr(colon + 1)));
    if (name == "imitation" || name == "pairwise-imitation") {
      p.rule = DecisionRule::PairwiseImitation;
    } else if (name == "logit") {
      p.rule = DecisionRule::Logit;
      if (arg) p.beta = *arg;
    } else if (name == "nbr" || name == "noisy-best-response") {
      p.rule = DecisionRule::NoisyBestResponse;
      if (arg) p.epsilon = *arg;
    } else {
      throw InvalidArgument("unknown policy '" + spec + "'");
    }
    p.validate();
    return p;
  }

  friend bool operator==(const AgentPolicy&, const AgentPolicy&) = default;
};

inline ojson to_json(const AgentPolicy& p) {
  return {{"rule", to_string(p.rule)}, {"beta", p.beta}, {"epsilon", p.epsilon},
          {"mutation", p.mutation},    {"revision", p.revision},
          {"control_learning", p.control_learning}, {"informed", p.informed}};
}

inline AgentPolicy policy_from_json(const nlohmann::json& j) {
  AgentPolicy p = AgentPolicy::parse(j.at("rule").get<std::string>());
  p.beta = j.value("beta", p.beta);
  p.epsilon = j.value("epsilon", p.epsilon);
  p.mutation = j.value("mutation", p.mutation);
  p.revision = j.value("revision", p.revision);
  p.control_learning = j.value("control_learning", p.control_learning);
  p.informed = j.value("informed", p.informed);
  p.validate();
  return p;
}

/// Treatment label for a b value: N2, N1, o, P1, P2 for the standard set.
inline std::string treatment_label(double b) {
  const long intensity = std::lround(std::abs(b) / 0.4);
  if (std::abs(b) < 1e-12) return "o";
  return std::string(b < 0 ? "N" : "P") + std::to_string(intensity);
}

inline bool is_standard_treatment(double b) {
  return std::any_of(kTreatmentBs.begin(), kTreatmentBs.end(),
                     [b](double t) { return std::abs(t - b) < 1e-9; });
}

/// Reward/tax scale used by sessions unless configured otherwise.
inline constexpr double kSessionGain = 8.0;

struct SessionConfig {
  double b = 0.0;
  StrategyPermutation permutation;
  int rounds = 360;
  int players = 5;
  AgentPolicy policy;
  ControlMode mode = ControlMode::payoff(kSessionGain);
  std::uint64_t seed = 0;

  void validate() const {
    if (rounds < 1) throw InvalidArgument("rounds must be >= 1");
    if (players < 2) throw InvalidArgument("a session needs at least two players");
    if (mode.kind != ControlModeKind::Payoff)
      throw InvalidArgument("sessions realize control through payoffs; use payoff mode");
    if (!(mode.gain_scale > 0)) throw InvalidArgument("gain scale must be positive");
    policy.validate();
  }
};

inline ojson to_json(const SessionConfig& c) {
  return {{"b", c.b},
          {"treatment", treatment_label(c.b)},
          {"permutation", c.permutation.code()},
          {"rounds", c.rounds},
          {"players", c.players},
          {"policy", to_json(c.policy)},
          {"mode", {{"kind", to_string(c.mode.kind)}, {"gain_scale", c.mode.gain_scale}}},
          {"seed", c.seed}};
}

inline SessionConfig config_from_json(const nlohmann::json& j) {
  SessionConfig c;
  c.b = j.value("b", 0.0);
  c.permutation = StrategyPermutation::parse(j.value("permutation", std::string("00")));
  c.rounds = j.value("rounds", 360);
  c.players = j.value("players", 5);
  if (j.contains("policy")) c.policy = policy_from_json(j.at("policy"));
  if (j.contains("mode")) {
    const auto& m = j.at("mode");
    c.mode.kind = parse_mode(m.value("kind", std::string("payoff")));
    c.mode.gain_scale = m.value("gain_scale", kSessionGain);
  }
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Records

struct RoundRecord {
  int t = 0;
  /// 1-based strategies in the session (relabelled) frame.
  std::vector<int> choices;
  SocialState counts;
  /// Counts mapped back to the canonical strategy labels.
  SocialState canonical_counts;
  std::vector<double> game_payoffs;
  std::vector<double> rewards;
  std::vector<double> taxes;
  std::vector<double> totals;
  std::vector<double> cumulative;
  /// Seats (0-based) whose choice was filled by the timeout policy.
  std::vector<int> timed_out;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

inline ojson to_json(const RoundRecord& r) {
  ojson j = {{"t", r.t},
             {"choices", r.choices},
             {"counts", r.counts.counts()},
             {"canonical_counts", r.canonical_counts.counts()},
             {"game_payoffs", r.game_payoffs},
             {"rewards", r.rewards},
             {"taxes", r.taxes},
             {"totals", r.totals},
             {"cumulative", r.cumulative}};
  if (!r.timed_out.empty()) j["timed_out"] = r.timed_out;
  return j;
}

inline RoundRecord record_from_json(const nlohmann::json& j) {
  RoundRecord r;
  r.t = j.at("t").get<int>();
  r.choices = j.at("choices").get<std::vector<int>>();
  r.counts = SocialState(j.at("counts").get<Vec<int>>());
  r.canonical_counts = SocialState(j.value("canonical_counts", j.at("counts").get<Vec<int>>()));
  r.game_payoffs = j.at("game_payoffs").get<std::vector<double>>();
  r.rewards = j.at("rewards").get<std::vector<double>>();
  r.taxes = j.at("taxes").get<std::vector<double>>();
  r.totals = j.at("totals").get<std::vector<double>>();
  r.cumulative = j.at("cumulative").get<std::vector<double>>();
  if (j.contains("timed_out")) r.timed_out = j.at("timed_out").get<std::vector<int>>();
  if (SocialState::from_choices(r.choices) != r.counts)
    throw InvalidArgument("round " + std::to_string(r.t) + ": counts disagree with choices");
  return r;
}

struct SessionLog {
  std::string id;
  SessionConfig config;
  std::vector<RoundRecord> records;
  bool partial = false;

  /// Canonical-frame shares per round.
  std::vector<Vec<double>> canonical_series() const {
    std::vector<Vec<double>> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.canonical_counts.shares());
    return out;
  }
  std::vector<Vec<double>> session_frame_series() const {
    std::vector<Vec<double>> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.counts.shares());
    return out;
  }
};

inline constexpr const char* kLogFormat = "eqsel-session-log/1";

/// JSONL: the config object, then one object per round.
inline void write_jsonl(std::ostream& os, const SessionLog& log) {
  ojson head = to_json(log.config);
  head["id"] = log.id;
  head["format"] = kLogFormat;
  head["partial"] = log.partial;
  os << head.dump() << '\n';
  for (const auto& r : log.records) os << to_json(r).dump() << '\n';
}

inline std::string to_jsonl(const SessionLog& log) {
  std::ostringstream os;
  write_jsonl(os, log);
  return os.str();
}

inline SessionLog read_jsonl(std::istream& is) {
  SessionLog log;
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("empty session log");
  const auto head = nlohmann::json::parse(line);
  if (head.value("format", std::string(kLogFormat)) != kLogFormat)
    throw InvalidArgument("unsupported log format");
  log.config = config_from_json(head);
  log.id = head.value("id", std::string());
  log.partial = head.value("partial", false);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    log.records.push_back(record_from_json(nlohmann::json::parse(line)));
  }
  if (!log.partial && static_cast<int>(log.records.size()) != log.config.rounds)
    throw InvalidArgument("log has " + std::to_string(log.records.size()) + " records, expected " +
                          std::to_string(log.config.rounds));
  for (std::size_t k = 0; k < log.records.size(); ++k)
    if (log.records[k].t != static_cast<int>(k) + 1) throw InvalidArgument("round indices out of order");
  return log;
}

inline SessionLog read_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  return read_jsonl(in);
}

/// Flat per-round counts, canonical frame by default.
inline void write_counts_csv(std::ostream& os, const SessionLog& log, bool canonical = true) {
  os << "t,n1,n2,n3,n4,n5\n";
  for (const auto& r : log.records) {
    const auto& c = canonical ? r.canonical_counts : r.counts;
    os << r.t;
    for (int v : c.counts()) os << ',' << v;
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Engine

class SessionEngine {
 public:
  explicit SessionEngine(const SessionConfig& config,
                         const PayoffMatrix<double>& game = PayoffMatrix<double>::canonical())
      : SessionEngine(config, game, design_controller(game, config.b)) {}

  SessionEngine(const SessionConfig& config, const PayoffMatrix<double>& game, const ControlDesign& design)
      : config_(config),
        game_(apply_permutation(config.permutation, game)),
        design_(apply_permutation(config.permutation, design)) {
    config_.validate();
    streams_.reserve(std::size_t(config_.players));
    for (int s = 0; s < config_.players; ++s) streams_.emplace_back(config_.seed, std::uint64_t(s));
    cumulative_.assign(std::size_t(config_.players), 0.0);
    control_estimate_.assign(std::size_t(config_.players), Vec<double>{});
  }

  const SessionConfig& config() const { return config_; }
  /// Relabelled game and design the players actually face.
  const PayoffMatrix<double>& game() const { return game_; }
  const ControlDesign& design() const { return design_; }

  int players() const { return config_.players; }
  int next_round() const { return static_cast<int>(history_.size()) + 1; }
  bool finished() const { return static_cast<int>(history_.size()) >= config_.rounds; }
  const std::vector<RoundRecord>& history() const { return history_; }

  /// Bot decision of `seat` for the next round. Consumes only that seat's
  /// stream.
  int decide(std::size_t seat) {
    Stream& rng = streams_.at(seat);
    if (history_.empty()) return uniform_choice(rng);
    const RoundRecord& last = history_.back();
    const int current = last.choices[seat];
    const AgentPolicy& p = config_.policy;
    if (!rng.bernoulli(p.revision)) return current;
    if (rng.bernoulli(p.mutation)) return uniform_choice(rng);
    switch (p.rule) {
      case DecisionRule::PairwiseImitation: return imitate(seat, rng);
      case DecisionRule::Logit: return logit_choice(seat, rng);
      case DecisionRule::NoisyBestResponse: return best_response(seat, rng);
    }
    return current;
  }

  std::vector<int> decide_all() {
    std::vector<int> out(std::size_t(config_.players));
    for (std::size_t s = 0; s < out.size(); ++s) out[s] = decide(s);
    return out;
  }

  /// Choice substituted for a seat that missed the round deadline: its
  /// previous choice, or a uniform pick in round 1.
  int timeout_choice(std::size_t seat) {
    if (history_.empty()) return uniform_choice(streams_.at(seat));
    return history_.back().choices.at(seat);
  }

  /// Resolves one round from 1-based choices in the session frame.
  const RoundRecord& resolve(const std::vector<int>& choices, std::vector<int> timed_out = {}) {
    if (finished()) throw InvalidArgument("session already finished");
    if (choices.size() != std::size_t(config_.players)) throw InvalidArgument("need one choice per seat");
    RoundRecord r;
    r.t = next_round();
    r.choices = choices;
    r.counts = SocialState::from_choices(choices);
    r.canonical_counts = apply_permutation(config_.permutation, r.counts);
    const auto game_pay = round_payoffs(game_, r.counts);
    const auto control = control_payoffs(design_, config_.mode, r.counts);
    const std::size_t n = choices.size();
    r.game_payoffs.resize(n);
    r.rewards.resize(n);
    r.taxes.resize(n);
    r.totals.resize(n);
    r.cumulative.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
      const auto k = std::size_t(choices[s] - 1);
      r.game_payoffs[s] = game_pay[k];
      r.rewards[s] = control[k].reward;
      r.taxes[s] = control[k].tax;
      r.totals[s] = r.game_payoffs[s] + r.rewards[s] + r.taxes[s];
      cumulative_[s] += r.totals[s];
      r.cumulative[s] = cumulative_[s];
      double& est = control_estimate_[s][k];
      est += config_.policy.control_learning * (r.rewards[s] + r.taxes[s] - est);
    }
    std::sort(timed_out.begin(), timed_out.end());
    r.timed_out = std::move(timed_out);
    history_.push_back(std::move(r));
    return history_.back();
  }

  /// Value a seat assigns to each strategy: game payoff against the other
  /// seats' last choices plus its reward/tax estimate for that strategy.
  Vec<double> counterfactual_totals(std::size_t seat) const {
    const RoundRecord& last = history_.back();
    Vec<int> opp = last.counts.counts();
    --opp[std::size_t(last.choices[seat] - 1)];
    Vec<double> control = control_estimate_.at(seat);
    if (config_.policy.informed) {
      const auto now = control_payoffs(design_, config_.mode, last.counts);
      for (std::size_t k = 0; k < kStrategies; ++k) control[k] = now[k].reward + now[k].tax;
    }
    Vec<double> out{};
    for (std::size_t k = 0; k < kStrategies; ++k) out[k] = payoff_against(game_, k, opp) + control[k];
    return out;
  }

 private:
  static int uniform_choice(Stream& rng) { return static_cast<int>(rng.below(kStrategies)) + 1; }

  int imitate(std::size_t seat, Stream& rng) const {
    const RoundRecord& last = history_.back();
    const auto n = std::uint64_t(config_.players);
    auto peer = std::size_t(rng.below(n - 1));
    if (peer >= seat) ++peer;
    const double u = rng.uniform();
    const auto [lo, hi] = std::minmax_element(last.totals.begin(), last.totals.end());
    const double gap = *hi - *lo;
    const double diff = last.totals[peer] - last.totals[seat];
    if (diff > 0 && gap > 0 && u < diff / gap) return last.choices[peer];
    return last.choices[seat];
  }

  int logit_choice(std::size_t seat, Stream& rng) const {
    const auto pay = counterfactual_totals(seat);
    const double top = *std::max_element(pay.begin(), pay.end());
    Vec<double> w{};
    double sum = 0.0;
    for (std::size_t k = 0; k < kStrategies; ++k) {
      w[k] = std::exp(config_.policy.beta * (pay[k] - top));
      sum += w[k];
    }
    const double u = rng.uniform() * sum;
    double acc = 0.0;
    for (std::size_t k = 0; k < kStrategies; ++k) {
      acc += w[k];
      if (u < acc) return static_cast<int>(k) + 1;
    }
    return static_cast<int>(kStrategies);
  }

  int best_response(std::size_t seat, Stream& rng) const {
    if (rng.bernoulli(config_.policy.epsilon)) return uniform_choice(rng);
    const auto pay = counterfactual_totals(seat);
    const double top = *std::max_element(pay.begin(), pay.end());
    std::vector<int> best;
    for (std::size_t k = 0; k < kStrategies; ++k)
      if (pay[k] >= top - 1e-12) best.push_back(static_cast<int>(k) + 1);
    const int current = history_.back().choices[seat];
    if (std::find(best.begin(), best.end(), current) != best.end()) return current;
    return best[std::size_t(rng.below(best.size()))];
  }

  SessionConfig config_;
  PayoffMatrix<double> game_;
  ControlDesign design_;
  std::vector<Stream> streams_;
  std::vector<double> cumulative_;
  std::vector<Vec<double>> control_estimate_;
  std::vector<RoundRecord> history_;
};

// ---------------------------------------------------------------------------
// Batch runs

inline std::string default_session_id(const SessionConfig& c) {
  return "sim-" + treatment_label(c.b) + "-" + c.permutation.code() + "-" + std::to_string(c.seed);
}

/// Plays one bot round: every seat decides, then the round resolves.
inline const RoundRecord& step_round(SessionEngine& engine) { return engine.resolve(engine.decide_all()); }

inline SessionLog run_session(const SessionConfig& config, const ControlDesign& design,
                              const PayoffMatrix<double>& game = PayoffMatrix<double>::canonical(),
                              std::string id = {}) {
  SessionEngine engine(config, game, design);
  while (!engine.finished()) step_round(engine);
  SessionLog log;
  log.id = id.empty() ? default_session_id(config) : std::move(id);
  log.config = config;
  log.records = engine.history();
  return log;
}

inline SessionLog run_session(const SessionConfig& config, std::string id = {}) {
  return run_session(config, design_controller(config.b), PayoffMatrix<double>::canonical(), std::move(id));
}

/// Runs fn(k) for k in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned workers = 0) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, unsigned(std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < n; k = next++) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// n sessions with seeds seed_base + k; the design is computed once.
inline std::vector<SessionLog> run_treatment(const SessionConfig& config_template, int n_sessions,
                                             std::uint64_t seed_base, unsigned workers = 0) {
  if (n_sessions < 1) throw InvalidArgument("need at least one session");
  config_template.validate();
  const auto design = design_controller(config_template.b);
  std::vector<SessionLog> logs(static_cast<std::size_t>(n_sessions));
  parallel_for(
      logs.size(),
      [&](std::size_t k) {
        SessionConfig c = config_template;
        c.seed = seed_base + k;
        logs[k] = run_session(c, design);
      },
      workers);
  return logs;
}

}  // namespace eqsel
