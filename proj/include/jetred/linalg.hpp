#pragma once

#include <optional>
#include <vector>

#include "jetred/expr.hpp"

namespace jetred {

using RationalMatrix = std::vector<std::vector<Rational>>;

// Solves A c = b exactly by Gaussian elimination over Q. Free unknowns are set
// to zero; nullopt when the system is inconsistent.
std::optional<std::vector<Rational>> solve_rational(RationalMatrix a, std::vector<Rational> b);

// Rank over Q.
int rank_rational(RationalMatrix a);

}  // namespace jetred
