#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jetred/calculus.hpp"

namespace jetred {

using ExprMatrix = std::vector<std::vector<Expr>>;

// W_i = sum_l phi[i][l] d/da^l for each generator in table order.
struct PhiTable {
    std::vector<std::string> params;
    std::vector<std::string> generators;
    std::vector<int> source_index;  // algebra basis index of each row
    std::vector<std::vector<Expr>> phi;
    int drift = -1;  // row of the drift generator (always 0 when present)

    std::size_t size() const { return phi.size(); }
    JetCoord param(std::size_t l) const { return JetCoord::parameter(params[l]); }
    std::string str() const;
};

// Rewrites products of exponentials into a single exp per term and clears
// exponential monomial denominators.
Expr normalize_poly_exp(const Expr& e);
bool in_poly_exp_class(const Expr& e);

// exp(t A) for a rational matrix whose eigenvalues are rational; nullopt otherwise.
std::optional<ExprMatrix> exp_matrix(const std::vector<std::vector<Rational>>& A, const Expr& t);
std::optional<std::vector<Rational>> rational_eigenvalues(const std::vector<std::vector<Rational>>& A);

// ordering lists algebra basis indices; the flow of ordering[0] is applied last.
PhiTable solve_phi(const LieAlgebra& alg, const std::vector<int>& ordering, const std::vector<std::string>& params = {});

// The drift generator becomes row 0 with parameter params[0]; its flow acts first.
PhiTable solve_phi_with_drift(const LieAlgebra& alg, int drift_index, const std::vector<int>& ordering,
                              const std::vector<std::string>& params = {});

// solve_phi, retrying other orderings on NonTriangularOrdering when dim <= 5.
PhiTable solve_phi_search(const LieAlgebra& alg, const std::vector<int>& ordering,
                          const std::vector<std::string>& params = {});

Verdict verify_phi(const PhiTable& t, const LieAlgebra& alg);

}  // namespace jetred
