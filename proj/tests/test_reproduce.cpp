#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "eqsel/reproduce.hpp"

using namespace eqsel;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunManifest tiny(std::uint64_t seed) {
  auto m = RunManifest::quick(seed);
  m.rounds = 40;
  m.set_sessions(2);
  return m;
}

}  // namespace

TEST(Manifest, StandardShape) {
  const auto m = RunManifest::standard(7);
  ASSERT_EQ(m.treatments.size(), 5u);
  const int counts[] = {8, 8, 8, 12, 12};
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(m.treatments[k].b, kTreatmentBs[k]);
    EXPECT_EQ(m.treatments[k].sessions, counts[k]);
  }
  EXPECT_EQ(m.mode.gain_scale, kSessionGain);
  EXPECT_NO_THROW(m.validate());
}

TEST(Manifest, JsonRoundTripAndValidation) {
  auto m = RunManifest::quick(11);
  m.permutation = StrategyPermutation::parse("25");
  m.policy = AgentPolicy::logit(2.0);
  const auto j = nlohmann::json::parse(to_json(m).dump());
  const auto back = manifest_from_json(j);
  EXPECT_EQ(to_json(back).dump(), to_json(m).dump());

  auto bad = m;
  bad.treatments[1].seed_base = bad.treatments[0].seed_base + 1;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = m;
  bad.treatments[0].b = 0.3;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad.allow_any_b = true;
  EXPECT_NO_THROW(bad.validate());
  bad = m;
  bad.treatments.clear();
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Reproduce, ByteIdenticalAcrossRuns) {
  const auto root = fs::temp_directory_path() / "eqsel-repro-test";
  fs::remove_all(root);
  auto m = tiny(31);
  write_outputs(root / "a", m, run_manifest(m, root / "logs"));
  m.workers = 3;
  write_outputs(root / "b", m, run_manifest(m));
  for (const char* f : {"fig3.csv", "fig4.csv", "fig5.csv", "summary.json"}) {
    const auto a = slurp(root / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(root / "b" / f)) << f;
  }
  std::size_t logs = 0;
  for (const auto& e : fs::directory_iterator(root / "logs")) logs += e.path().extension() == ".jsonl";
  EXPECT_EQ(logs, 10u);
  const auto other = tiny(32);
  write_outputs(root / "c", other, run_manifest(other));
  EXPECT_NE(slurp(root / "a" / "fig5.csv"), slurp(root / "c" / "fig5.csv"));
  fs::remove_all(root);
}

TEST(Reproduce, DirectionalChecks) {
  TreatmentReport lo, zero, hi;
  lo.b = -0.8;
  zero.b = 0.0;
  hi.b = 0.8;
  lo.distribution.rho_bar = {0.3, 0.3, 0.3, 0.05, 0.05};
  hi.distribution.rho_bar = {0.05, 0.05, 0.05, 0.45, 0.4};
  zero.abs_l_mean = 0.02;
  hi.abs_l_mean = 0.002;
  auto c = directional_checks({lo, zero, hi});
  ASSERT_EQ(c.size(), 2u);
  EXPECT_TRUE(c[0].pass);
  EXPECT_TRUE(c[1].pass);
  hi.abs_l_mean = 0.05;
  hi.distribution.rho_bar = lo.distribution.rho_bar;
  c = directional_checks({lo, zero, hi});
  EXPECT_FALSE(c[0].pass);
  EXPECT_FALSE(c[1].pass);
  EXPECT_TRUE(directional_checks({zero}).empty());
}
