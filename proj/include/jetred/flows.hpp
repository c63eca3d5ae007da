#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jetred/calculus.hpp"

namespace jetred {

struct CharacteristicField {
    EvolutionField F;
    std::vector<Expr> h;
    std::map<JetCoord, Expr> components;  // x^i and u^j_sigma up to the computed order
    int order = 0;
};

CharacteristicField characteristic_field(const JetSpace& space, const EvolutionField& F, const std::vector<Expr>& h,
                                         int order);

// Drift h for F linear in first derivatives with a common coefficient:
// F^j = c_i u^j_{x^i} + g^j gives h^i = c_i; zero otherwise.
std::vector<Expr> propose_drift(const JetSpace& space, const EvolutionField& F);

struct FlowMap {
    std::string param;
    std::map<JetCoord, Expr> pullbacks;
    std::string source;
    int tracked_order = 0;

    JetCoord param_coord() const { return JetCoord::parameter(param); }
    const Expr* find(const JetCoord& c) const;
};

// Exact flow of the characteristic field, or nullopt when the order-0 system
// does not match the triangular catalog.
std::optional<FlowMap> catalog_flow(const JetSpace& space, const EvolutionField& F, const std::vector<Expr>& h,
                                    const std::string& param, const std::string& source = "");

Verdict verify_flow(const JetSpace& space, const CharacteristicField& field, const FlowMap& flow, int order);

FlowMap prolong_flow_1d(const JetSpace& space, const FlowMap& flow, int n);

// Phi^{1*}(Phi^{2*}(...Phi^{h*}(e))): the last flow acts first.
Expr compose_pullback(const JetSpace& space, const std::vector<FlowMap>& flows, const Expr& e);

// int_0^a p(s) ds for p polynomial in s times exp of affine functions of s.
std::optional<Expr> integrate_poly_exp(const Expr& p, const JetCoord& s, const Expr& upper);

}  // namespace jetred
