#pragma once

#include "modnet/scenario.hpp"

#include <cstdint>
#include <string>

namespace modnet {

// kUniform: stations uniform in the unit square, lambda ~ U[0.5, 2],
//   gravity routing with a random destination skew, t = distance / 0.1.
// kGrid: stations on distinct points of a 5x5 integer grid, rates per time
//   step, t = distance / 0.2 (constant-speed loss-model study).
// kSurrogate: a downtown-like system in minutes with clustered stations
//   and unequal trip generation and attraction, hence strongly unbalanced.
enum class ScenarioStyle { kUniform, kGrid, kSurrogate };

ScenarioStyle parse_style(const std::string& name);
std::string to_string(ScenarioStyle style);

Scenario generate_scenario(int n, std::uint64_t seed, ScenarioStyle style = ScenarioStyle::kUniform);

// Seeded instances used by the sizing, MMRP and closed-loop studies.
inline constexpr std::uint64_t kSurrogateSeed = 7;
inline Scenario surrogate_scenario() { return generate_scenario(20, kSurrogateSeed, ScenarioStyle::kSurrogate); }

}  // namespace modnet
