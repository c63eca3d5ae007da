#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "jetred/calculus.hpp"
#include "jetred/parse.hpp"

namespace jetred {

struct Driver {
    std::string name;
    bool wiener = false;
    std::vector<Expr> coeffs;  // one per model generator; may use parameters and functionals
};

// Value of expr at x = x0 on the current solution, e.g. at(v_x, 0).
struct Functional {
    std::string name;
    Expr expr;
    Rational x0;
};

struct UserFlow {
    std::string generator;
    std::vector<std::pair<std::string, Expr>> maps;  // coordinate name -> pullback
};

struct OdeConstraintSpec {
    int order = 0;
    std::vector<std::string> coeffs;  // mu^0 .. mu^{n-1}: h = u_(n) + sum mu^k u_(k)
};

struct SPDEModel {
    std::string title;
    JetSpace space;
    std::vector<std::pair<std::string, Rational>> parameters;
    std::vector<std::pair<std::string, std::string>> functions;  // opaque name -> builtin
    std::vector<std::string> gen_names;
    std::vector<EvolutionField> generators;
    std::vector<Functional> functionals;
    std::vector<Driver> drivers;
    std::vector<std::vector<Rational>> correlation;  // over Wiener drivers; empty means identity
    std::string mode = "transported";                // or "ode"
    std::string form = "stratonovich";               // or "ito"
    std::vector<std::string> order;
    std::vector<std::string> reduction_params;
    std::string drift;
    std::vector<std::pair<std::string, Expr>> initial;
    std::vector<UserFlow> flows;
    std::optional<OdeConstraintSpec> constraint;
    std::vector<std::pair<std::string, Rational>> state0;
    std::vector<std::pair<std::string, Expr>> outputs;
    Rational x_min = 0, x_max = 1;
    std::string boundary = "oracle";  // or "extrapolate"

    ParseContext context(bool with_generators = false) const;
    int generator_index(const std::string& name) const;
    int wiener_count() const;
    // Substitutes numeric parameter values.
    Expr bind(const Expr& e) const;
    Bindings parameter_bindings() const;
    FunctionTable function_table() const;
    std::vector<std::vector<double>> correlation_matrix() const;
};

SPDEModel parse_model(const std::string& text);
SPDEModel load_model(const std::string& path);
std::string print_model(const SPDEModel& m);

std::vector<std::string> bundled_models();
std::string bundled_model(const std::string& name);

// Smooth step S with S' a normalized C-infinity bump on [-1, 1]; E(x) = int_{-inf}^x S'(y)^2 dy.
double builtin_value(const std::string& builtin, const std::vector<int>& dorders, double x);
bool is_builtin(const std::string& builtin);

}  // namespace jetred
