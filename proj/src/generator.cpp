#include "modnet/generator.hpp"

#include "modnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace modnet {

ScenarioStyle parse_style(const std::string& name) {
  if (name == "uniform") return ScenarioStyle::kUniform;
  if (name == "grid") return ScenarioStyle::kGrid;
  if (name == "surrogate") return ScenarioStyle::kSurrogate;
  throw Error(ErrorCode::kInvalidInput, "unknown scenario style '" + name + "'");
}

std::string to_string(ScenarioStyle style) {
  switch (style) {
    case ScenarioStyle::kUniform: return "uniform";
    case ScenarioStyle::kGrid: return "grid";
    case ScenarioStyle::kSurrogate: return "surrogate";
  }
  return "?";
}

namespace {

double distance(const Eigen::MatrixX2d& xy, int i, int j) { return (xy.row(i) - xy.row(j)).norm(); }

// p_ij proportional to attraction_j * exp(-d_ij / scale).
Matrix gravity_routing(const Eigen::MatrixX2d& xy, const Vector& attraction, double scale) {
  const auto n = static_cast<int>(xy.rows());
  Matrix p = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) p(i, j) = attraction(j) * std::exp(-distance(xy, i, j) / scale);
    }
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Scenario uniform_style(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0), rate(0.5, 2.0), skew(-1.0, 1.0);
  Scenario s;
  Eigen::MatrixX2d xy(n, 2);
  for (int i = 0; i < n; ++i) xy.row(i) << unit(rng), unit(rng);
  s.lambda.resize(n);
  for (int i = 0; i < n; ++i) s.lambda(i) = rate(rng);
  Vector attraction(n);
  for (int j = 0; j < n; ++j) attraction(j) = std::exp(skew(rng));
  s.p = gravity_routing(xy, attraction, 0.3);
  s.t = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) s.t(i, j) = std::max(distance(xy, i, j), 0.01) / 0.1;
    }
  }
  s.coords = xy;
  return s;
}

Scenario grid_style(int n, std::mt19937_64& rng) {
  if (n > 25) throw Error(ErrorCode::kInvalidInput, "grid style holds at most 25 stations");
  std::uniform_int_distribution<int> cell(0, 24);
  std::uniform_real_distribution<double> rate(0.5, 1.5), skew(-0.5, 0.5);
  std::set<int> used;
  Eigen::MatrixX2d xy(n, 2);
  for (int i = 0; i < n; ++i) {
    int c = cell(rng);
    while (used.count(c)) c = cell(rng);
    used.insert(c);
    xy.row(i) << c % 5, c / 5;
  }
  Scenario s;
  s.time_unit = "step";
  s.lambda.resize(n);
  for (int i = 0; i < n; ++i) s.lambda(i) = rate(rng);
  Vector attraction(n);
  for (int j = 0; j < n; ++j) attraction(j) = std::exp(skew(rng));
  s.p = gravity_routing(xy, attraction, 2.0);
  s.t = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) s.t(i, j) = distance(xy, i, j) / 0.2;
    }
  }
  s.coords = xy;
  return s;
}

Scenario surrogate_style(int n, std::mt19937_64& rng) {
  // 3 km x 3 km, 4 demand clusters, 15 km/h plus 2 minutes of pickup/dropoff.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.45), spread(0.0, 0.6);
  Eigen::MatrixX2d centers(4, 2);
  for (int c = 0; c < 4; ++c) centers.row(c) << 0.5 + 2.0 * unit(rng), 0.5 + 2.0 * unit(rng);
  Eigen::MatrixX2d xy(n, 2);
  for (int i = 0; i < n; ++i) {
    const int c = i % 4;
    xy(i, 0) = std::clamp(centers(c, 0) + jitter(rng), 0.0, 3.0);
    xy(i, 1) = std::clamp(centers(c, 1) + jitter(rng), 0.0, 3.0);
  }
  Vector production(n), attraction(n);
  for (int i = 0; i < n; ++i) {
    production(i) = std::exp(spread(rng));
    attraction(i) = std::exp(spread(rng));
  }
  Scenario s;
  s.lambda = production / production.sum() * 40.0;  // trips per minute
  s.p = gravity_routing(xy, attraction, 1.2);
  s.t = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) s.t(i, j) = 2.0 + distance(xy, i, j) / 0.25;
    }
  }
  s.coords = xy;
  return s;
}

}  // namespace

Scenario generate_scenario(int n, std::uint64_t seed, ScenarioStyle style) {
  if (n < 2) throw Error(ErrorCode::kInvalidInput, "need at least two stations");
  std::mt19937_64 rng(seed);
  switch (style) {
    case ScenarioStyle::kGrid: return grid_style(n, rng);
    case ScenarioStyle::kSurrogate: return surrogate_style(n, rng);
    case ScenarioStyle::kUniform: break;
  }
  return uniform_style(n, rng);
}

}  // namespace modnet
