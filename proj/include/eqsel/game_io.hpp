#pragma once

// Game file: {"payoff_matrix": 5x5, "equilibria": [{"label", "shares"}]}.
// Entries may be integers, decimals, or "p/q" strings; everything is held as
// exact rationals.

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "eqsel/game.hpp"

namespace eqsel {

using json = nlohmann::json;

namespace detail {

inline Rational parse_rational(const json& v) {
  if (v.is_number_integer()) return Rational(v.get<std::int64_t>());
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    const auto slash = s.find('/');
    try {
      if (slash == std::string::npos) return Rational(std::stoll(s));
      return Rational(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
    } catch (const std::exception&) {
      throw InvalidArgument("cannot parse rational '" + s + "'");
    }
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    std::int64_t den = 1;
    for (int k = 0; k <= 9; ++k, den *= 10) {
      const double scaled = d * static_cast<double>(den);
      const double r = std::round(scaled);
      if (std::abs(scaled - r) < 1e-9 * std::max(1.0, std::abs(scaled))) {
        Rational q(static_cast<std::int64_t>(r), den);
        if (to_double(q) == d) return q;
      }
    }
    throw InvalidArgument("value " + v.dump() + " is not a short decimal; write it as \"p/q\"");
  }
  throw InvalidArgument("expected a number or \"p/q\" string, got " + v.dump());
}

inline json rational_to_json(const Rational& q) {
  if (q.denominator() == 1) return q.numerator();
  return std::to_string(q.numerator()) + "/" + std::to_string(q.denominator());
}

}  // namespace detail

struct GameFile {
  PayoffMatrix<Rational> payoff_matrix = PayoffMatrix<Rational>::canonical();
  EquilibriumSet equilibria = EquilibriumSet::canonical();
};

inline GameFile game_from_json(const json& j) {
  const auto& m = j.at("payoff_matrix");
  if (!m.is_array() || m.size() != kStrategies)
    throw InvalidArgument("payoff_matrix must be a 5x5 array");
  PayoffMatrix<Rational>::Rows rows{};
  for (std::size_t i = 0; i < kStrategies; ++i) {
    if (!m[i].is_array() || m[i].size() != kStrategies)
      throw InvalidArgument("payoff_matrix must be a 5x5 array");
    for (std::size_t k = 0; k < kStrategies; ++k) rows[i][k] = detail::parse_rational(m[i][k]);
  }
  GameFile g;
  g.payoff_matrix = PayoffMatrix<Rational>(rows);
  std::vector<LabeledPoint> pts;
  for (const auto& e : j.value("equilibria", json::array())) {
    const auto& sh = e.at("shares");
    if (!sh.is_array() || sh.size() != kStrategies)
      throw InvalidArgument("equilibrium shares must have five entries");
    Vec<Rational> s{};
    for (std::size_t k = 0; k < kStrategies; ++k) s[k] = detail::parse_rational(sh[k]);
    pts.push_back({e.at("label").get<std::string>(), SimplexPoint<Rational>(s)});
  }
  g.equilibria = EquilibriumSet(std::move(pts), g.payoff_matrix);
  return g;
}

inline json game_to_json(const GameFile& g) {
  json m = json::array();
  for (std::size_t i = 0; i < kStrategies; ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < kStrategies; ++k)
      row.push_back(detail::rational_to_json(g.payoff_matrix(i, k)));
    m.push_back(row);
  }
  json eq = json::array();
  for (const auto& p : g.equilibria.points()) {
    json sh = json::array();
    for (const auto& v : p.point.shares()) sh.push_back(detail::rational_to_json(v));
    eq.push_back({{"label", p.label}, {"shares", sh}});
  }
  return {{"payoff_matrix", m}, {"equilibria", eq}};
}

inline GameFile load_game(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open game file " + path);
  return game_from_json(json::parse(in));
}

}  // namespace eqsel
