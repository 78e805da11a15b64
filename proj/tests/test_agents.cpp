#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "eqsel/agents.hpp"
#include "eqsel/measurements.hpp"

using namespace eqsel;

namespace {

SessionConfig config(double b, std::uint64_t seed, int rounds = 360) {
  SessionConfig c;
  c.b = b;
  c.seed = seed;
  c.rounds = rounds;
  return c;
}

double tail_mass(const SessionLog& log, std::initializer_list<int> s) {
  const auto series = StateSeries::from_log(log);
  return mass(mean_distribution(series, int(series.size()) - 99), s);
}

}  // namespace

TEST(Policy, ParseAndValidate) {
  EXPECT_EQ(AgentPolicy::parse("imitation").rule, DecisionRule::PairwiseImitation);
  EXPECT_EQ(AgentPolicy::parse("logit:1.5").beta, 1.5);
  EXPECT_EQ(AgentPolicy::parse("nbr:0.25").epsilon, 0.25);
  EXPECT_THROW(AgentPolicy::parse("fictitious"), InvalidArgument);
  EXPECT_THROW(AgentPolicy::parse("logit:-1"), InvalidArgument);
  EXPECT_THROW(AgentPolicy::parse("nbr:2"), InvalidArgument);
  AgentPolicy p;
  p.mutation = 1.5;
  EXPECT_THROW(p.validate(), InvalidArgument);
  const auto q = AgentPolicy::parse("nbr:0.3");
  EXPECT_EQ(policy_from_json(to_json(q)), q);
}

TEST(Config, Validation) {
  auto c = config(0, 1);
  c.rounds = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = config(0, 1);
  c.players = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = config(0, 1);
  c.mode = ControlMode::velocity();
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_EQ(treatment_label(-0.8), "N2");
  EXPECT_EQ(treatment_label(-0.4), "N1");
  EXPECT_EQ(treatment_label(0.0), "o");
  EXPECT_EQ(treatment_label(0.4), "P1");
  EXPECT_EQ(treatment_label(0.8), "P2");
}

TEST(Engine, ImitationCannotInventStrategies) {
  auto c = config(0, 5, 50);
  c.policy = AgentPolicy::imitation(0.0);
  SessionEngine e(c);
  e.resolve({4, 4, 4, 4, 4});
  while (!e.finished()) {
    const auto& r = step_round(e);
    for (int s : r.choices) EXPECT_EQ(s, 4);
  }
}

TEST(Engine, ZeroIntensityLogitIsUniform) {
  auto c = config(0.8, 9, 4001);
  c.policy = AgentPolicy::logit(0.0);
  SessionEngine e(c);
  std::array<int, 5> hist{};
  e.resolve({1, 1, 1, 1, 1});
  while (!e.finished())
    for (int s : step_round(e).choices) ++hist[std::size_t(s - 1)];
  for (int h : hist) EXPECT_NEAR(h / 20000.0, 0.2, 0.012);
}

TEST(Engine, RecordInvariants) {
  const auto log = run_session(config(-0.8, 42, 60));
  const auto a = PayoffMatrix<double>::canonical();
  std::vector<double> cum(5, 0.0);
  for (const auto& r : log.records) {
    EXPECT_EQ(SocialState::from_choices(r.choices), r.counts);
    double sum = 0, brute = 0;
    for (std::size_t s = 0; s < 5; ++s) {
      EXPECT_DOUBLE_EQ(r.totals[s], r.game_payoffs[s] + r.rewards[s] + r.taxes[s]);
      EXPECT_GE(r.rewards[s], 0.0);
      EXPECT_LE(r.taxes[s], 0.0);
      cum[s] += r.totals[s];
      EXPECT_NEAR(r.cumulative[s], cum[s], 1e-9);
      sum += r.game_payoffs[s];
      for (std::size_t o = 0; o < 5; ++o)
        if (o != s) brute += a(std::size_t(r.choices[s] - 1), std::size_t(r.choices[o] - 1));
    }
    EXPECT_NEAR(sum, brute, 1e-12);
  }
}

TEST(Engine, ZeroTreatmentHasNoControl) {
  for (const auto& r : run_session(config(0.0, 3, 100)).records)
    for (std::size_t s = 0; s < 5; ++s) {
      EXPECT_EQ(r.rewards[s], 0.0);
      EXPECT_EQ(r.taxes[s], 0.0);
    }
}

TEST(Engine, DeterministicAndSeedSensitive) {
  const auto a = to_jsonl(run_session(config(0.0, 42, 2)));
  EXPECT_EQ(a, to_jsonl(run_session(config(0.0, 42, 2))));
  const auto b = to_jsonl(run_session(config(0.4, 7)));
  EXPECT_EQ(b, to_jsonl(run_session(config(0.4, 7))));
  EXPECT_NE(b, to_jsonl(run_session(config(0.4, 8))));
}

TEST(Engine, SingleRound) {
  const auto log = run_session(config(0.4, 1, 1));
  ASSERT_EQ(log.records.size(), 1u);
  EXPECT_EQ(log.records[0].t, 1);
}

TEST(Engine, FirstRoundUniformInEveryFrame) {
  // the first draw of each seat does not depend on the permutation
  std::array<std::array<int, 5>, 2> hist{};
  for (int f = 0; f < 2; ++f) {
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
      auto c = config(0.0, seed, 1);
      if (f) c.permutation = StrategyPermutation::parse("14");
      const auto r = run_session(c).records[0];
      for (int s : r.choices) ++hist[std::size_t(f)][std::size_t(s - 1)];
    }
  }
  EXPECT_EQ(hist[0], hist[1]);
  for (int h : hist[0]) EXPECT_NEAR(h / 10000.0, 0.2, 0.015);
}

TEST(Engine, ResolveValidation) {
  SessionEngine e(config(0, 1, 1));
  EXPECT_THROW(e.resolve({1, 2, 3}), InvalidArgument);
  EXPECT_THROW(e.resolve({1, 2, 3, 4, 6}), InvalidArgument);
  e.resolve({1, 2, 3, 4, 5});
  EXPECT_THROW(e.resolve({1, 2, 3, 4, 5}), InvalidArgument);
}

TEST(Engine, InformedValuationIncludesControl) {
  auto c = config(-0.8, 1, 5);
  c.mode = ControlMode::payoff(4);
  SessionEngine e(c, PayoffMatrix<double>::canonical(), design_with_gain(-0.8, {0.5247, 0.9485, -1.4732, -1.8335, 0.2335}));
  e.resolve({1, 2, 3, 4, 5});
  const auto v = e.counterfactual_totals(0);
  // seat 0 faces one opponent on each of 2..5
  const auto a = PayoffMatrix<double>::canonical();
  for (std::size_t k = 0; k < 5; ++k) {
    const double game = a(k, 1) + a(k, 2) + a(k, 3) + a(k, 4);
    EXPECT_NEAR(v[k], game + (k >= 3 ? -1.28 : 0.0), 1e-9);
  }
}

TEST(Selection, DirectionalOutcomes) {
  double lo = 0, hi = 0;
  for (std::uint64_t s = 0; s < 8; ++s) {
    lo += tail_mass(run_session(config(-0.8, 100 + s)), {1, 2, 3}) / 8;
    hi += tail_mass(run_session(config(0.8, 200 + s)), {4, 5}) / 8;
  }
  EXPECT_GE(lo, 0.7);
  EXPECT_GE(hi, 0.7);
}

TEST(Selection, ImitationWithoutControlStaysNearNash1) {
  auto c = config(0.0, 0);
  c.policy = AgentPolicy::imitation(0.01);
  const auto logs = run_treatment(c, 20, 500);
  double m123 = 0, m45 = 0;
  for (const auto& l : logs) {
    m123 += tail_mass(l, {1, 2, 3});
    m45 += tail_mass(l, {4, 5});
  }
  EXPECT_GT(m123, m45);
}

TEST(Selection, PermutedSessionsMatchStatistically) {
  auto base = config(0.8, 0);
  auto perm = base;
  perm.permutation = StrategyPermutation::parse("14");
  const auto a = aggregate_treatment(run_treatment(base, 20, 1000));
  const auto b = aggregate_treatment(run_treatment(perm, 20, 3000));
  for (std::size_t k = 0; k < 5; ++k) EXPECT_LT(std::abs(a.distribution.rho_bar[k] - b.distribution.rho_bar[k]), 0.05);
}

TEST(Treatment, SeedsAndDeterminism) {
  const auto logs = run_treatment(config(0.0, 0, 30), 8, 77, 3);
  ASSERT_EQ(logs.size(), 8u);
  std::set<std::uint64_t> seeds;
  for (std::size_t k = 0; k < logs.size(); ++k) {
    EXPECT_EQ(logs[k].config.seed, 77 + k);
    seeds.insert(logs[k].config.seed);
  }
  EXPECT_EQ(seeds.size(), 8u);
  const auto again = run_treatment(config(0.0, 0, 30), 8, 77, 1);
  for (std::size_t k = 0; k < logs.size(); ++k) EXPECT_EQ(to_jsonl(logs[k]), to_jsonl(again[k]));
  EXPECT_THROW(run_treatment(config(0.0, 0, 30), 0, 1), InvalidArgument);
}

TEST(Log, JsonlRoundTrip) {
  auto c = config(0.4, 5, 25);
  c.permutation = StrategyPermutation::parse("25");
  const auto log = run_session(c);
  const auto text = to_jsonl(log);
  std::istringstream is(text);
  const auto back = read_jsonl(is);
  EXPECT_EQ(back.records, log.records);
  EXPECT_EQ(back.config.permutation.code(), "25");
  EXPECT_EQ(to_jsonl(back), text);

  std::istringstream first(text.substr(0, text.find('\n') + 1));
  const auto head = nlohmann::json::parse(first);
  for (const char* key : {"b", "treatment", "permutation", "rounds", "players", "policy", "mode", "seed", "id"})
    EXPECT_TRUE(head.contains(key)) << key;

  // truncated logs are rejected unless flagged partial
  const auto cut = text.substr(0, text.find("\"t\":3,") - 1);
  std::istringstream trunc(cut);
  EXPECT_THROW(read_jsonl(trunc), InvalidArgument);
}

TEST(Log, RejectsInconsistentRecords) {
  const auto log = run_session(config(0.0, 5, 2));
  auto j = to_json(log.records[0]);
  j["counts"] = {5, 0, 0, 0, 0};
  EXPECT_THROW(record_from_json(nlohmann::json::parse(j.dump())), InvalidArgument);
}

TEST(Log, CountsCsvCanonicalFrame) {
  auto c = config(0.0, 5, 3);
  c.permutation = StrategyPermutation::parse("14");
  const auto log = run_session(c);
  std::ostringstream canon, raw;
  write_counts_csv(canon, log);
  write_counts_csv(raw, log, false);
  EXPECT_EQ(canon.str().substr(0, 16), "t,n1,n2,n3,n4,n5");
  const auto& r = log.records[0];
  EXPECT_EQ(r.canonical_counts[0], r.counts[3]);
  EXPECT_EQ(r.canonical_counts[3], r.counts[0]);
}
