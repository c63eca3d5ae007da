#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "jetred/flows.hpp"
#include "jetred/model.hpp"
#include "jetred/phi.hpp"

namespace jetred {

struct TransversalityRow {
    int order = 0;  // sigma
    int component = 0;
};

struct TransversalitySample {
    double x = 0;
    int rank = 0;
    std::vector<TransversalityRow> rows;
};

struct TransversalityResult {
    bool transversal = false;
    int dimension = 0;
    std::vector<TransversalitySample> samples;
    std::string detail;
};

// Rank of D^sigma(G_l^j) on the jets of the initial curve; full rank at some sample point passes.
TransversalityResult check_transversality(const SPDEModel& model, const std::vector<EvolutionField>& basis,
                                          const std::vector<double>& sample_points);

// Per Wiener pair: 1/2 rho V_{F_a}(F_b), the drift to subtract when converting Ito to Stratonovich.
struct ItoCorrection {
    int first = 0, second = 0;  // driver indices
    EvolutionField field;
};
std::vector<ItoCorrection> ito_correction(const SPDEModel& model);
// Model with drivers rewritten in Stratonovich form (identity when already Stratonovich).
SPDEModel to_stratonovich(const SPDEModel& model);

struct TangencyResult {
    std::vector<std::string> generators;
    std::vector<std::vector<Expr>> mu_field;  // V(mu^k) per generator
    std::vector<std::vector<Expr>> boundary;  // V(u_(j)) at x = 0 per generator
};

// Rewrites u_(n+j) with h = 0 and its x-derivatives until every order is below n.
Expr reduce_modulo_constraint(const JetSpace& space, const Expr& e, const OdeConstraintSpec& c);
TangencyResult ode_constraint_tangency(const JetSpace& space, const std::vector<EvolutionField>& generators,
                                       const std::vector<std::string>& names, const OdeConstraintSpec& c);

struct ReducedSystem {
    SPDEModel model;  // Stratonovich form, parameters still symbolic
    std::string mode;
    std::vector<JetCoord> state;
    std::vector<double> initial_state;
    std::vector<std::string> drivers;
    std::vector<bool> wiener;
    std::vector<std::vector<double>> rho;
    std::vector<std::vector<Expr>> coeffs;  // dA^i = coeffs[alpha][i] o dS^alpha, numeric parameters bound

    // transported
    LieAlgebra algebra;
    PhiTable phi;
    std::vector<FlowMap> flows;            // composition order, drift excluded
    std::vector<Expr> relations;           // R_j(x, u; a) = 0
    std::vector<Expr> closed_form;         // u_j = K_j(x; a) when the relation is solvable
    std::vector<std::pair<std::string, Expr>> outputs;  // in jet coordinates

    // ode constraint
    TangencyResult tangency;

    std::vector<std::string> state_names() const;
};

ReducedSystem build_reduced_sde(const SPDEModel& model);
ReducedSystem build_ode_constraint_sde(const SPDEModel& model, const TangencyResult& t);

struct Reconstruction {
    std::vector<double> x;
    std::vector<std::vector<double>> dependents;  // [j][grid]
    std::vector<std::string> output_names;
    std::vector<std::vector<double>> outputs;  // [k][grid]
    double max_residual = 0;
};

// Evaluates the reconstruction map; keeps the Newton warm start between calls.
class Reconstructor {
public:
    explicit Reconstructor(const ReducedSystem& sys);
    Reconstruction operator()(const std::vector<double>& a, const std::vector<double>& x);
    bool closed() const { return closed_; }

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
    bool closed_ = false;
};

Reconstruction reconstruct_transported(const ReducedSystem& sys, const std::vector<double>& a,
                                       const std::vector<double>& x);

// y' = companion(mu) y from the boundary state; returns u on the grid.
std::vector<double> reconstruct_linear_ode(const std::vector<double>& mu, const std::vector<double>& boundary,
                                           const std::vector<double>& x);
// Order-two closed forms: distinct real roots or complex pair; nullopt on a repeated root.
std::optional<double> order2_branch(double L, double M, double u0, double ux0, double x);

}  // namespace jetred
