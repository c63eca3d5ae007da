#include "jetred/reduction.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <unsupported/Eigen/MatrixFunctions>

namespace jetred {

namespace {

using Index = std::size_t;

std::vector<Expr> initial_derivatives(const SPDEModel& m, const Expr& f, int upto, const Bindings& fixed) {
    std::vector<Expr> out;
    Expr cur = substitute(m.bind(f), fixed);
    JetCoord x = m.space.x(0);
    for (int k = 0; k <= upto; ++k) {
        out.push_back(cur);
        cur = diff(cur, x);
    }
    return out;
}

Bindings zero_reduction_params(const SPDEModel& m) {
    Bindings b;
    for (const auto& p : m.reduction_params) b[JetCoord::parameter(p)] = Expr();
    return b;
}

const Expr& initial_of(const SPDEModel& m, int j) {
    const std::string& name = m.space.dependents()[static_cast<Index>(j)];
    for (const auto& [d, e] : m.initial)
        if (d == name) return e;
    throw model_error("ModelSyntax", "no initial condition for " + name);
}

std::vector<EvolutionField> bound_generators(const SPDEModel& m) {
    std::vector<EvolutionField> out;
    for (const auto& g : m.generators) {
        EvolutionField b = g;
        for (auto& c : b.components) c = m.bind(c);
        out.push_back(b);
    }
    return out;
}

// Case-2 semigroup: d/da f(x, a) against F(f) by central differences.
void check_semigroup(const SPDEModel& m, const std::string& param) {
    const EvolutionField& F = m.generators[static_cast<Index>(m.generator_index(m.drift))];
    JetCoord x = m.space.x(0), a = JetCoord::parameter(param);
    FunctionTable ft = m.function_table();
    std::mt19937_64 rng(0x5e3f);
    std::uniform_real_distribution<double> ux(m.x_min.get_d(), m.x_max.get_d()), ua(0.0, 1.0);
    for (int j = 0; j < m.space.n(); ++j) {
        Expr f = m.bind(initial_of(m, j));
        Bindings jets;
        Expr cur = f;
        for (int s = 0; s <= F.order(); ++s) {
            for (int q = 0; q < m.space.n(); ++q)
                if (q == j) jets[m.space.derivative(q, s)] = cur;
            cur = diff(cur, x);
        }
        for (int q = 0; q < m.space.n(); ++q) {
            if (q == j) continue;
            Expr g = m.bind(initial_of(m, q));
            for (int s = 0; s <= F.order(); ++s) {
                jets[m.space.derivative(q, s)] = g;
                g = diff(g, x);
            }
        }
        Expr rhs = substitute(m.bind(F[static_cast<Index>(j)]), jets);
        for (int t = 0; t < 10; ++t) {
            double xv = ux(rng), av = ua(rng), h = 1e-5;
            double up = eval_numeric(f, {{x, xv}, {a, av + h}}, ft);
            double dn = eval_numeric(f, {{x, xv}, {a, av - h}}, ft);
            double want = eval_numeric(rhs, {{x, xv}, {a, av}}, ft);
            double got = (up - dn) / (2 * h);
            if (std::fabs(got - want) > 1e-4 * std::max(1.0, std::fabs(want)))
                throw model_error("SemigroupMismatch", "initial family does not follow " + m.drift + " at x = " +
                                                          std::to_string(xv) + ", " + param + " = " +
                                                          std::to_string(av));
        }
    }
}

// Combination sum_k c_k G_k as a field, with parameters bound.
EvolutionField combination(const SPDEModel& m, const Driver& d) {
    EvolutionField f(std::vector<Expr>(m.space.dependents().size()));
    for (Index k = 0; k < d.coeffs.size(); ++k)
        if (!d.coeffs[k].is_zero()) f = f + m.bind(d.coeffs[k]) * m.generators[k];
    return f;
}

std::vector<std::vector<Rational>> generator_coordinates(const SPDEModel& m, const LieAlgebra& alg) {
    std::vector<std::vector<Rational>> out;
    for (Index k = 0; k < m.generators.size(); ++k) {
        auto c = decompose_in_basis(m.generators[k], alg.basis);
        if (!c) throw math_error("DecompositionFailure", m.gen_names[k] + " is not in the span of the algebra");
        out.push_back(*c);
    }
    return out;
}

FlowMap user_flow(const SPDEModel& m, const UserFlow& uf, const std::string& param) {
    FlowMap fm;
    fm.param = param;
    fm.source = "user";
    ParseContext ctx = m.context();
    Bindings ren = {{JetCoord::parameter("__flow"), Expr::coord(JetCoord::parameter(param))}};
    for (const auto& [name, e] : uf.maps) {
        JetCoord c = *free_coords(parse_expr(name, ctx)).begin();
        fm.pullbacks[c] = m.bind(substitute(e, ren));
        fm.tracked_order = std::max(fm.tracked_order, c.order());
    }
    return fm;
}

}  // namespace

TransversalityResult check_transversality(const SPDEModel& m, const std::vector<EvolutionField>& basis,
                                          const std::vector<double>& sample_points) {
    TransversalityResult res;
    int h = static_cast<int>(basis.size());
    res.dimension = h;
    int n = m.space.n();
    int k = 0;
    for (const auto& g : basis) k = std::max(k, g.order());
    int max_sigma = k + h;
    Bindings fixed = zero_reduction_params(m);
    FunctionTable ft = m.function_table();
    JetCoord x = m.space.x(0);

    std::vector<std::vector<Expr>> jets;
    for (int j = 0; j < n; ++j) jets.push_back(initial_derivatives(m, initial_of(m, j), max_sigma + k, fixed));
    Bindings on_curve;
    for (int j = 0; j < n; ++j)
        for (int s = 0; s <= max_sigma + k; ++s)
            on_curve[m.space.derivative(j, s)] = jets[static_cast<Index>(j)][static_cast<Index>(s)];

    std::vector<std::vector<Expr>> rows_expr;  // [sigma*n + j][l]
    std::vector<TransversalityRow> labels;
    for (int s = 0; s <= max_sigma; ++s) {
        for (int j = 0; j < n; ++j) {
            std::vector<Expr> row;
            for (int l = 0; l < h; ++l) {
                Expr g = m.bind(basis[static_cast<Index>(l)][static_cast<Index>(j)]);
                for (int r = 0; r < s; ++r) g = total_derivative(m.space, g, 0);
                row.push_back(substitute(g, on_curve));
            }
            rows_expr.push_back(row);
            labels.push_back({s, j});
        }
    }

    bool any_evaluated = false;
    for (double xv : sample_points) {
        TransversalitySample smp;
        smp.x = xv;
        Eigen::MatrixXd chosen(0, h);
        for (Index r = 0; r < rows_expr.size() && smp.rank < h; ++r) {
            Eigen::RowVectorXd row(h);
            try {
                for (int l = 0; l < h; ++l)
                    row(l) = eval_numeric(rows_expr[r][static_cast<Index>(l)], {{x, xv}}, ft);
            } catch (const Error& e) {
                if (e.kind() == "UnsupportedDerivative") break;
                if (e.family() == ErrorFamily::Math) continue;
                throw;
            }
            any_evaluated = true;
            Eigen::MatrixXd trial(chosen.rows() + 1, h);
            trial << chosen, row;
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(trial.transpose());
            qr.setThreshold(1e-10);
            if (static_cast<int>(qr.rank()) > smp.rank) {
                chosen = trial;
                smp.rank = static_cast<int>(qr.rank());
                smp.rows.push_back(labels[r]);
            }
        }
        if (smp.rank == h) res.transversal = true;
        res.samples.push_back(smp);
    }
    if (!any_evaluated && !sample_points.empty())
        throw math_error("EvaluationDomainError", "initial condition could not be evaluated at any sample point");
    if (!res.transversal) res.detail = "Degenerate: no full-rank row choice at the sample points";
    return res;
}

std::vector<ItoCorrection> ito_correction(const SPDEModel& m) {
    std::vector<ItoCorrection> out;
    std::vector<int> w;
    for (Index i = 0; i < m.drivers.size(); ++i)
        if (m.drivers[i].wiener) w.push_back(static_cast<int>(i));
    for (Index a = 0; a < w.size(); ++a) {
        for (Index b = 0; b < w.size(); ++b) {
            Rational r = m.correlation.empty() ? Rational(a == b ? 1 : 0) : m.correlation[a][b];
            if (r == 0) continue;
            EvolutionField fa = combination(m, m.drivers[static_cast<Index>(w[a])]);
            EvolutionField fb = combination(m, m.drivers[static_cast<Index>(w[b])]);
            std::vector<Expr> comps;
            for (Index j = 0; j < fb.size(); ++j)
                comps.push_back(Expr(Rational(r / 2)) * evolution_apply(m.space, fa, fb[j]));
            out.push_back({w[a], w[b], EvolutionField(comps)});
        }
    }
    return out;
}

SPDEModel to_stratonovich(const SPDEModel& m) {
    if (m.form == "stratonovich") return m;
    SPDEModel s = m;
    s.form = "stratonovich";
    EvolutionField total(std::vector<Expr>(m.space.dependents().size()));
    for (const auto& c : ito_correction(m)) total = total - c.field;
    if (total.is_zero()) return s;
    auto coords = decompose_in_basis(total, bound_generators(m));
    if (!coords) throw math_error("DecompositionFailure", "Ito correction is not a constant combination of generators");
    for (auto& d : s.drivers) {
        if (d.wiener) continue;
        for (Index k = 0; k < d.coeffs.size(); ++k) d.coeffs[k] = d.coeffs[k] + Expr((*coords)[k]);
    }
    return s;
}

Expr reduce_modulo_constraint(const JetSpace& space, const Expr& e, const OdeConstraintSpec& c) {
    int n = c.order;
    int top = analyze(e).max_order;
    if (top >= space.max_order())
        throw math_error("ReductionNonTermination", "expression order exceeds the configured cap");
    // rules[m - n] rewrites u_(m) in terms of u .. u_(n-1)
    std::vector<Expr> rules;
    Expr r;
    for (int k = 0; k < n; ++k)
        r -= Expr::coord(JetCoord::parameter(c.coeffs[static_cast<Index>(k)])) * Expr::coord(space.derivative(0, k));
    rules.push_back(r);
    for (int m = n + 1; m <= top; ++m) {
        Expr d = total_derivative(space, rules.back(), 0);
        d = substitute(d, {{space.derivative(0, n), rules.front()}});
        rules.push_back(d);
    }
    Bindings b;
    for (int m = n; m <= top; ++m) b[space.derivative(0, m)] = rules[static_cast<Index>(m - n)];
    return substitute(e, b);
}

TangencyResult ode_constraint_tangency(const JetSpace& space, const std::vector<EvolutionField>& generators,
                                       const std::vector<std::string>& names, const OdeConstraintSpec& c) {
    if (space.n() != 1) throw model_error("UnsupportedDimension", "linear ODE constraints need one dependent variable");
    int n = c.order;
    TangencyResult res;
    res.generators = names;
    JetCoord x = space.x(0);
    for (Index g = 0; g < generators.size(); ++g) {
        const Expr& F = generators[g][0];
        // V_F(h) without the unknown V(mu) terms
        Expr vh = F;
        for (int k = 0; k < n; ++k) vh = total_derivative(space, vh, 0);
        Expr dk = F;
        for (int k = 0; k < n; ++k) {
            vh += Expr::coord(JetCoord::parameter(c.coeffs[static_cast<Index>(k)])) * dk;
            dk = total_derivative(space, dk, 0);
        }
        Expr red = reduce_modulo_constraint(space, vh, c);
        std::vector<Expr> mu(static_cast<Index>(n));
        Expr rest = red;
        for (int k = 0; k < n; ++k) {
            JetCoord uk = space.derivative(0, k);
            Expr coef = diff(red, uk);
            for (const auto& fc : free_coords(coef))
                if (!fc.is_parameter())
                    throw math_error("CoefficientInconsistency",
                                     names[g] + ": coefficient of " + uk.name + " depends on " + fc.name);
            mu[static_cast<Index>(k)] = -coef;
            rest -= coef * Expr::coord(uk);
        }
        if (!rest.is_zero())
            throw math_error("CoefficientInconsistency", names[g] + ": residual " + rest.str() + " after reduction");
        // certificate: V(h) including the mu terms vanishes modulo the constraint
        Expr cert = red;
        for (int k = 0; k < n; ++k) cert += mu[static_cast<Index>(k)] * Expr::coord(space.derivative(0, k));
        if (!cert.is_zero()) throw math_error("CoefficientInconsistency", names[g] + ": tangency certificate failed");
        res.mu_field.push_back(mu);

        std::vector<Expr> bnd;
        Expr d = F;
        for (int j = 0; j < n; ++j) {
            Expr v = substitute(reduce_modulo_constraint(space, d, c), {{x, Expr()}});
            bnd.push_back(v);
            d = total_derivative(space, d, 0);
        }
        res.boundary.push_back(bnd);
    }
    return res;
}

std::vector<std::string> ReducedSystem::state_names() const {
    std::vector<std::string> out;
    for (const auto& c : state) out.push_back(c.name);
    return out;
}

namespace {

void fill_drivers(ReducedSystem& sys, const SPDEModel& m) {
    for (const auto& d : m.drivers) {
        sys.drivers.push_back(d.name);
        sys.wiener.push_back(d.wiener);
    }
    sys.rho = m.correlation_matrix();
}

// Symbolic value of a functional on the closed-form reconstruction.
Expr functional_value(const SPDEModel& m, const Functional& f, const std::vector<Expr>& closed) {
    Bindings b;
    int top = analyze(f.expr).max_order;
    JetCoord x = m.space.x(0);
    for (int j = 0; j < m.space.n(); ++j) {
        Expr cur = closed[static_cast<Index>(j)];
        for (int s = 0; s <= top; ++s) {
            b[m.space.derivative(j, s)] = cur;
            cur = diff(cur, x);
        }
    }
    return substitute(substitute(m.bind(f.expr), b), {{x, Expr(f.x0)}});
}

}  // namespace

ReducedSystem build_reduced_sde(const SPDEModel& input) {
    if (input.mode == "ode") {
        SPDEModel m = to_stratonovich(input);
        OdeConstraintSpec c = *m.constraint;
        return build_ode_constraint_sde(m, ode_constraint_tangency(m.space, bound_generators(m), m.gen_names, c));
    }
    SPDEModel m = to_stratonovich(input);
    ReducedSystem sys;
    sys.model = m;
    sys.mode = "transported";
    fill_drivers(sys, m);

    std::vector<EvolutionField> gens = bound_generators(m);
    ClosureResult cl = lie_closure(m.space, gens, m.gen_names);
    if (!cl.closed) throw math_error("NotClosed", cl.reason + (cl.witness.empty() ? "" : " witness " + cl.witness));
    sys.algebra = cl.algebra;
    const LieAlgebra& alg = sys.algebra;
    std::size_t h = alg.dim();

    int drift_index = -1;
    if (!m.drift.empty()) drift_index = m.generator_index(m.drift);
    std::vector<int> ordering;
    for (const auto& o : m.order) {
        int i = m.generator_index(o);
        if (i != drift_index) ordering.push_back(i);
    }
    for (int i = 0; i < static_cast<int>(h); ++i)
        if (i != drift_index && std::find(ordering.begin(), ordering.end(), i) == ordering.end()) ordering.push_back(i);

    std::vector<std::string> params = m.reduction_params;
    if (!params.empty() && params.size() != h)
        throw model_error("BadParameters", "the algebra has dimension " + std::to_string(h) + " but " +
                                               std::to_string(params.size()) + " parameters are declared");
    if (drift_index >= 0) {
        sys.phi = solve_phi_with_drift(alg, drift_index, ordering, params);
    } else {
        sys.phi = solve_phi_search(alg, ordering, params);
    }
    const PhiTable& t = sys.phi;
    if (t.drift >= 0) check_semigroup(m, t.params[0]);
    for (const auto& p : t.params) sys.state.push_back(JetCoord::parameter(p));
    sys.initial_state.assign(h, 0.0);

    // flows in composition order
    for (Index i = 0; i < t.size(); ++i) {
        if (static_cast<int>(i) == t.drift) continue;
        int b = t.source_index[i];
        const EvolutionField& F = alg.basis[static_cast<Index>(b)];
        const std::string& name = alg.names[static_cast<Index>(b)];
        std::optional<FlowMap> fm;
        for (const auto& uf : m.flows)
            if (uf.generator == name) fm = user_flow(m, uf, t.params[i]);
        auto hdrift = propose_drift(m.space, F);
        if (!fm) fm = catalog_flow(m.space, F, hdrift, t.params[i], name);
        if (!fm) throw model_error("NoFlow", "no catalog flow for " + name + "; declare one in [flows]");
        Verdict v = verify_flow(m.space, characteristic_field(m.space, F, hdrift, 1), *fm, 1);
        if (!v.ok()) throw math_error("FlowVerificationFailed", name + ": " + v.detail);
        sys.flows.push_back(*fm);
    }

    // relations and the closed form when the pullback is Moebius in a single u
    int n = m.space.n();
    JetCoord x = m.space.x(0);
    Expr px = compose_pullback(m.space, sys.flows, Expr::coord(x));
    for (int j = 0; j < n; ++j) {
        Expr f = m.bind(initial_of(m, j));
        sys.relations.push_back(compose_pullback(m.space, sys.flows, Expr::coord(m.space.u(j)) - f));
    }
    bool x_free = true;
    for (const auto& c : free_coords(px))
        if (c.kind == JetCoord::Kind::Dependent) x_free = false;
    if (n == 1 && x_free) {
        JetCoord u = m.space.u(0);
        Expr pu = compose_pullback(m.space, sys.flows, Expr::coord(u));
        Expr w = substitute(m.bind(initial_of(m, 0)), {{x, px}});
        Expr lin = Expr::fraction(pu.num(), Poly(Rational(1))) - w * Expr::fraction(pu.den(), Poly(Rational(1)));
        Expr c1 = diff(lin, u);
        if (!depends_on(c1, u)) {
            Expr c0 = substitute(lin, {{u, Expr()}});
            sys.closed_form.push_back(-c0 / c1);
        }
    }

    sys.outputs = m.outputs;
    if (sys.outputs.empty())
        for (int j = 0; j < n; ++j) sys.outputs.emplace_back(m.space.dependents()[static_cast<Index>(j)],
                                                             Expr::coord(m.space.u(j)));

    Bindings functionals;
    for (const auto& f : m.functionals) {
        if (sys.closed_form.empty())
            throw model_error("UnsupportedFunctional", f.name + " needs a closed-form reconstruction");
        functionals[JetCoord::parameter(f.name)] = functional_value(m, f, sys.closed_form);
    }

    auto gc = generator_coordinates(m, alg);
    std::vector<int> row_of(h, -1);
    for (Index i = 0; i < t.size(); ++i) row_of[static_cast<Index>(t.source_index[i])] = static_cast<int>(i);
    for (const auto& d : m.drivers) {
        std::vector<Expr> basis_coef(h);
        for (Index k = 0; k < d.coeffs.size(); ++k) {
            Expr ck = substitute(m.bind(d.coeffs[k]), functionals);
            for (Index b = 0; b < h; ++b)
                if (gc[k][b] != 0) basis_coef[b] += Expr(gc[k][b]) * ck;
        }
        std::vector<Expr> row(h);
        for (Index b = 0; b < h; ++b) {
            if (basis_coef[b].is_zero()) continue;
            const auto& phi_row = t.phi[static_cast<Index>(row_of[b])];
            for (Index l = 0; l < h; ++l) row[l] += basis_coef[b] * phi_row[l];
        }
        sys.coeffs.push_back(row);
    }
    return sys;
}

ReducedSystem build_ode_constraint_sde(const SPDEModel& m, const TangencyResult& tg) {
    ReducedSystem sys;
    sys.model = m;
    sys.mode = "ode";
    sys.tangency = tg;
    fill_drivers(sys, m);
    const OdeConstraintSpec& c = *m.constraint;
    for (const auto& k : c.coeffs) sys.state.push_back(JetCoord::parameter(k));
    for (int j = 0; j < c.order; ++j) sys.state.push_back(m.space.derivative(0, j));
    for (const auto& s : sys.state) {
        double v = 0;
        bool found = false;
        for (const auto& [k, val] : m.state0)
            if (k == s.name) {
                v = val.get_d();
                found = true;
            }
        if (!found) throw model_error("ModelSyntax", "[state] lacks a value for " + s.name);
        sys.initial_state.push_back(v);
    }
    for (const auto& d : m.drivers) {
        std::vector<Expr> row(sys.state.size());
        for (Index k = 0; k < d.coeffs.size(); ++k) {
            if (d.coeffs[k].is_zero()) continue;
            Expr ck = m.bind(d.coeffs[k]);
            for (int i = 0; i < c.order; ++i) {
                row[static_cast<Index>(i)] += ck * tg.mu_field[k][static_cast<Index>(i)];
                row[static_cast<Index>(c.order + i)] += ck * tg.boundary[k][static_cast<Index>(i)];
            }
        }
        sys.coeffs.push_back(row);
    }
    sys.outputs = m.outputs;
    if (sys.outputs.empty()) sys.outputs.emplace_back(m.space.dependents()[0], Expr::coord(m.space.u(0)));
    return sys;
}

std::vector<double> reconstruct_linear_ode(const std::vector<double>& mu, const std::vector<double>& boundary,
                                           const std::vector<double>& x) {
    int n = static_cast<int>(mu.size());
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) C(i, i + 1) = 1.0;
    for (int k = 0; k < n; ++k) C(n - 1, k) = -mu[static_cast<Index>(k)];
    Eigen::VectorXd y0(n);
    for (int k = 0; k < n; ++k) y0(k) = boundary[static_cast<Index>(k)];
    std::vector<double> out;
    out.reserve(x.size());
    for (double xv : x) {
        Eigen::MatrixXd E = (C * xv).exp();
        out.push_back((E * y0)(0));
    }
    return out;
}

std::optional<double> order2_branch(double L, double M, double u0, double ux0, double x) {
    double disc = L * L - 4.0 * M;
    double scale = std::max(1.0, L * L + 4.0 * std::fabs(M));
    if (std::fabs(disc) <= 1e-14 * scale) return std::nullopt;
    if (disc > 0) {
        double s = std::sqrt(disc);
        double C = (-L + s) / 2.0, D = (-L - s) / 2.0;
        double A = (D * u0 - ux0) / (D - C);
        double B = (-C * u0 + ux0) / (D - C);
        return A * std::exp(C * x) + B * std::exp(D * x);
    }
    double R = -L / 2.0, O = std::sqrt(-disc) / 2.0;
    double A = u0, B = (-R * u0 + ux0) / O;
    return std::exp(R * x) * (A * std::cos(O * x) + B * std::sin(O * x));
}

// ---------------------------------------------------------------------------

struct Reconstructor::Impl {
    const ReducedSystem* sys = nullptr;
    int n = 0;
    std::vector<JetCoord> slots;  // x, u_j, u_j_x, a
    std::vector<CompiledExpr> closed, closed_x;
    std::vector<CompiledExpr> outputs;
    std::vector<CompiledExpr> R, Rx;   // residuals and x-partials
    std::vector<CompiledExpr> J;       // row-major n x n
    std::vector<CompiledExpr> initial;  // f_j(x) for the first guess
    std::vector<double> left;          // warm start for the left end
    bool need_dx = false;
};

Reconstructor::Reconstructor(const ReducedSystem& sys) : impl_(std::make_shared<Impl>()) {
    Impl& I = *impl_;
    I.sys = &sys;
    const SPDEModel& m = sys.model;
    I.n = m.space.n();
    JetCoord x = m.space.x(0);
    I.slots.push_back(x);
    for (int j = 0; j < I.n; ++j) I.slots.push_back(m.space.u(j));
    for (int j = 0; j < I.n; ++j) I.slots.push_back(m.space.derivative(j, 1));
    for (const auto& s : sys.state) I.slots.push_back(s);
    FunctionTable ft = m.function_table();
    for (const auto& [name, e] : sys.outputs) {
        int ord = analyze(e).max_order;
        if (ord > 1 && sys.closed_form.empty())
            throw model_error("UnsupportedOutput", name + " needs derivatives beyond first order");
        if (ord >= 1) I.need_dx = true;
    }
    if (sys.mode == "ode") return;
    closed_ = !sys.closed_form.empty();
    if (closed_) {
        // outputs become explicit functions of x and a
        Bindings b;
        for (int j = 0; j < I.n; ++j) {
            Expr cur = sys.closed_form[static_cast<Index>(j)];
            for (int s = 0; s <= 3; ++s) {
                b[m.space.derivative(j, s)] = cur;
                cur = diff(cur, x);
            }
            I.closed.emplace_back(sys.closed_form[static_cast<Index>(j)], I.slots, ft);
        }
        for (const auto& [name, e] : sys.outputs) I.outputs.emplace_back(substitute(m.bind(e), b), I.slots, ft);
        return;
    }
    for (int j = 0; j < I.n; ++j) {
        const Expr& r = sys.relations[static_cast<Index>(j)];
        I.R.emplace_back(r, I.slots, ft);
        I.Rx.emplace_back(diff(r, x), I.slots, ft);
        for (int k = 0; k < I.n; ++k) I.J.emplace_back(diff(r, m.space.u(k)), I.slots, ft);
        I.initial.emplace_back(m.bind(initial_of(m, j)), I.slots, ft);
    }
    for (const auto& [name, e] : sys.outputs) I.outputs.emplace_back(m.bind(e), I.slots, ft);
}

Reconstruction Reconstructor::operator()(const std::vector<double>& a, const std::vector<double>& xs) {
    Impl& I = *impl_;
    const ReducedSystem& sys = *I.sys;
    Reconstruction out;
    out.x = xs;
    int n = I.n;
    for (const auto& [name, e] : sys.outputs) out.output_names.push_back(name);
    out.dependents.assign(static_cast<Index>(n), std::vector<double>(xs.size()));
    out.outputs.assign(sys.outputs.size(), std::vector<double>(xs.size()));
    std::vector<double> v(I.slots.size(), 0.0);
    std::size_t base = static_cast<std::size_t>(1 + 2 * n);
    for (Index i = 0; i < a.size(); ++i) v[base + i] = a[i];

    if (sys.mode == "ode") {
        int order = sys.model.constraint->order;
        std::vector<double> mu(a.begin(), a.begin() + order), bnd(a.begin() + order, a.begin() + 2 * order);
        out.dependents[0] = reconstruct_linear_ode(mu, bnd, xs);
        out.outputs[0] = out.dependents[0];
        return out;
    }

    if (closed_) {
        for (Index i = 0; i < xs.size(); ++i) {
            v[0] = xs[i];
            for (int j = 0; j < n; ++j) out.dependents[static_cast<Index>(j)][i] = I.closed[static_cast<Index>(j)](v);
            for (Index k = 0; k < I.outputs.size(); ++k) out.outputs[k][i] = I.outputs[k](v);
        }
        return out;
    }

    std::vector<double> guess;
    Eigen::VectorXd r(n), step(n);
    Eigen::MatrixXd J(n, n);
    auto residual = [&](std::vector<double>& vals) {
        for (int j = 0; j < n; ++j) r(j) = I.R[static_cast<Index>(j)](vals);
        return r.cwiseAbs().maxCoeff();
    };
    for (Index i = 0; i < xs.size(); ++i) {
        v[0] = xs[i];
        if (i == 0) {
            if (I.left.size() == static_cast<Index>(n)) {
                guess = I.left;
            } else {
                guess.assign(static_cast<Index>(n), 0.0);
                for (int j = 0; j < n; ++j) guess[static_cast<Index>(j)] = I.initial[static_cast<Index>(j)](v);
            }
        }
        for (int j = 0; j < n; ++j) v[static_cast<Index>(1 + j)] = guess[static_cast<Index>(j)];
        double res = residual(v);
        int it = 0;
        while (res > 1e-12) {
            if (++it > 50) break;
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) J(j, k) = I.J[static_cast<Index>(j * n + k)](v);
            step = J.partialPivLu().solve(-r);
            if (!step.allFinite()) break;
            double lambda = 1.0;
            std::vector<double> trial = v;
            double res_new = res;
            for (int half = 0; half < 20; ++half) {
                for (int j = 0; j < n; ++j)
                    trial[static_cast<Index>(1 + j)] = v[static_cast<Index>(1 + j)] + lambda * step(j);
                Eigen::VectorXd keep = r;
                try {
                    res_new = residual(trial);
                } catch (const Error&) {
                    res_new = INFINITY;
                }
                if (res_new < res || res_new <= 1e-12) break;
                r = keep;
                lambda /= 2.0;
            }
            if (!(res_new < res) && res_new > 1e-12) break;
            v = trial;
            res = res_new;
            residual(v);
        }
        if (!(res <= 1e-12))
            throw runtime_failure("NewtonDiverged", "reconstruction failed at x = " + std::to_string(xs[i]) +
                                                       " (residual " + std::to_string(res) + ")");
        out.max_residual = std::max(out.max_residual, res);
        for (int j = 0; j < n; ++j) {
            guess[static_cast<Index>(j)] = v[static_cast<Index>(1 + j)];
            out.dependents[static_cast<Index>(j)][i] = v[static_cast<Index>(1 + j)];
        }
        if (i == 0) I.left = guess;
        if (I.need_dx) {
            // implicit differentiation: J u_x = -R_x
            for (int j = 0; j < n; ++j) {
                r(j) = -I.Rx[static_cast<Index>(j)](v);
                for (int k = 0; k < n; ++k) J(j, k) = I.J[static_cast<Index>(j * n + k)](v);
            }
            Eigen::VectorXd ux = J.partialPivLu().solve(r);
            for (int j = 0; j < n; ++j) v[static_cast<Index>(1 + n + j)] = ux(j);
        }
        for (Index k = 0; k < I.outputs.size(); ++k) out.outputs[k][i] = I.outputs[k](v);
    }
    return out;
}

Reconstruction reconstruct_transported(const ReducedSystem& sys, const std::vector<double>& a,
                                       const std::vector<double>& x) {
    Reconstructor r(sys);
    return r(a, x);
}

}  // namespace jetred
