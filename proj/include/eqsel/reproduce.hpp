#pragma once

// Batch runs over a treatment list: manifest, per-treatment simulation and
// aggregation, figure CSVs and a summary of directional checks.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eqsel/agents.hpp"
#include "eqsel/measurements.hpp"

namespace eqsel {

inline constexpr const char* kManifestFormat = "eqsel-manifest/1";
inline constexpr std::uint64_t kSeedStride = 1000;

struct TreatmentPlan {
  double b = 0.0;
  int sessions = 8;
  std::uint64_t seed_base = 0;
};

struct RunManifest {
  std::vector<TreatmentPlan> treatments;
  int rounds = 360;
  AgentPolicy policy;
  ControlMode mode = ControlMode::payoff(kSessionGain);
  StrategyPermutation permutation;
  std::uint64_t master_seed = 0;
  bool allow_any_b = false;
  unsigned workers = 0;

  /// Session counts 8, 8, 8, 12, 12 for b = -0.8 .. 0.8.
  static RunManifest standard(std::uint64_t master_seed) {
    RunManifest m;
    m.master_seed = master_seed;
    const int counts[] = {8, 8, 8, 12, 12};
    for (std::size_t k = 0; k < kTreatmentBs.size(); ++k)
      m.treatments.push_back({kTreatmentBs[k], counts[k], master_seed + kSeedStride * k});
    return m;
  }

  /// Small profile: 3 sessions of 120 rounds per treatment.
  static RunManifest quick(std::uint64_t master_seed) {
    RunManifest m = standard(master_seed);
    m.rounds = 120;
    for (auto& t : m.treatments) t.sessions = 3;
    return m;
  }

  /// Same sessions-per-treatment everywhere, seeds re-derived.
  void set_sessions(int n) {
    for (std::size_t k = 0; k < treatments.size(); ++k) {
      treatments[k].sessions = n;
      treatments[k].seed_base = master_seed + kSeedStride * k;
    }
  }

  void validate() const {
    if (treatments.empty()) throw InvalidArgument("manifest lists no treatments");
    if (rounds < 2) throw InvalidArgument("manifest rounds must be >= 2");
    policy.validate();
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (const auto& t : treatments) {
      if (t.sessions < 1) throw InvalidArgument("each treatment needs at least one session");
      if (!allow_any_b && !is_standard_treatment(t.b))
        throw InvalidArgument("b = " + std::to_string(t.b) + " is not a standard treatment");
      ranges.emplace_back(t.seed_base, t.seed_base + std::uint64_t(t.sessions));
    }
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t k = 1; k < ranges.size(); ++k)
      if (ranges[k].first < ranges[k - 1].second) throw InvalidArgument("session seeds overlap between treatments");
  }

  SessionConfig session_template(const TreatmentPlan& t) const {
    SessionConfig c;
    c.b = t.b;
    c.rounds = rounds;
    c.policy = policy;
    c.mode = mode;
    c.permutation = permutation;
    return c;
  }
};

inline ojson to_json(const RunManifest& m) {
  ojson ts = ojson::array();
  for (const auto& t : m.treatments)
    ts.push_back({{"b", t.b}, {"label", treatment_label(t.b)}, {"sessions", t.sessions}, {"seed_base", t.seed_base}});
  return {{"format", kManifestFormat},
          {"log_format", kLogFormat},
          {"master_seed", m.master_seed},
          {"rounds", m.rounds},
          {"permutation", m.permutation.code()},
          {"policy", to_json(m.policy)},
          {"mode", {{"kind", to_string(m.mode.kind)}, {"gain_scale", m.mode.gain_scale}}},
          {"treatments", ts}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.master_seed = j.value("master_seed", std::uint64_t{0});
  m.rounds = j.value("rounds", 360);
  m.permutation = StrategyPermutation::parse(j.value("permutation", std::string("00")));
  if (j.contains("policy")) m.policy = policy_from_json(j.at("policy"));
  if (j.contains("mode")) m.mode.gain_scale = j.at("mode").value("gain_scale", kSessionGain);
  m.allow_any_b = j.value("allow_any_b", false);
  for (const auto& t : j.at("treatments"))
    m.treatments.push_back({t.at("b").get<double>(), t.at("sessions").get<int>(), t.at("seed_base").get<std::uint64_t>()});
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------

struct Check {
  std::string name;
  bool pass;
  std::string detail;
};

struct ReproduceResult {
  std::vector<TreatmentReport> reports;
  std::vector<Check> checks;
};

inline const TreatmentReport* find_report(const std::vector<TreatmentReport>& rs, double b) {
  for (const auto& r : rs)
    if (std::abs(r.b - b) < 1e-9) return &r;
  return nullptr;
}

/// Directional checks on whatever standard treatments are present.
inline std::vector<Check> directional_checks(const std::vector<TreatmentReport>& rs) {
  std::vector<Check> out;
  const auto* lo = find_report(rs, -0.8);
  const auto* zero = find_report(rs, 0.0);
  const auto* hi = find_report(rs, 0.8);
  if (lo && hi) {
    const double m_lo = mass(lo->distribution.rho_bar, {1, 2, 3});
    const double m_hi = mass(hi->distribution.rho_bar, {1, 2, 3});
    const bool flip = m_lo > 0.5 && m_hi < 0.5;
    out.push_back({"mass ordering flips between b=-0.8 and b=0.8", flip,
                   "mass{1,2,3}: " + detail::num(m_lo) + " vs " + detail::num(m_hi)});
  }
  if (zero && hi) {
    out.push_back({"|L|(b=0.8) < |L|(b=0)", hi->abs_l_mean < zero->abs_l_mean,
                   detail::num(hi->abs_l_mean) + " vs " + detail::num(zero->abs_l_mean)});
  }
  return out;
}

inline ReproduceResult run_manifest(const RunManifest& m, const std::filesystem::path& log_dir = {}) {
  m.validate();
  ReproduceResult res;
  for (const auto& t : m.treatments) {
    const auto logs = run_treatment(m.session_template(t), t.sessions, t.seed_base, m.workers);
    if (!log_dir.empty()) {
      std::filesystem::create_directories(log_dir);
      for (const auto& log : logs) {
        std::ofstream out(log_dir / (log.id + ".jsonl"), std::ios::binary);
        write_jsonl(out, log);
      }
    }
    res.reports.push_back(aggregate_treatment(logs));
  }
  res.checks = directional_checks(res.reports);
  return res;
}

/// Writes fig3.csv, fig4.csv, fig5.csv, manifest.json and summary.json.
inline void write_outputs(const std::filesystem::path& dir, const RunManifest& m, const ReproduceResult& res) {
  std::filesystem::create_directories(dir);
  const auto write = [&](const char* name, auto&& fn) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    fn(out);
  };
  write("fig3.csv", [&](std::ostream& os) { write_fig3_csv(os, res.reports); });
  write("fig4.csv", [&](std::ostream& os) { write_fig4_csv(os, res.reports); });
  write("fig5.csv", [&](std::ostream& os) { write_fig5_csv(os, res.reports); });
  write("manifest.json", [&](std::ostream& os) { os << to_json(m).dump(2) << '\n'; });
  ojson checks = ojson::array();
  for (const auto& c : res.checks) checks.push_back({{"check", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  ojson treatments = ojson::array();
  for (const auto& r : res.reports) {
    treatments.push_back({{"b", r.b},
                          {"sessions", r.sessions},
                          {"target", to_string(r.target)},
                          {"rho_bar", r.distribution.rho_bar},
                          {"absL", r.abs_l_mean},
                          {"absL_se", r.abs_l_se}});
  }
  write("summary.json", [&](std::ostream& os) { os << ojson{{"treatments", treatments}, {"checks", checks}}.dump(2) << '\n'; });
}

}  // namespace eqsel
