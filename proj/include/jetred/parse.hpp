#pragma once

#include <map>
#include <set>
#include <string>

#include "jetred/expr.hpp"

namespace jetred {

struct ParseContext {
    JetSpace space;
    std::set<std::string> parameters;
    std::map<std::string, int> functions;  // opaque function name -> arity
    std::map<std::string, Expr> symbols;   // names bound to expressions
};

// Grammar: sums, products, quotients, powers (right associative, unary minus
// binds looser than ^), rationals (3, 1/2, 0.25, 1e-3), declared names,
// derivatives u_x / u_xx / u_{(3)} / d(u, x, 2), and exp log sin cos sqrt.
Expr parse_expr(const std::string& text, const ParseContext& ctx);

// Exact rational from a decimal literal such as "0.25" or "1e-3".
Rational parse_rational_literal(const std::string& text);

}  // namespace jetred
