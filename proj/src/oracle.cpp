#include "jetred/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace jetred {

namespace {

using Index = std::size_t;

// First and second differences; one-sided second-order stencils at the ends.
double d1(const std::vector<double>& y, Index i, double dx) {
    Index n = y.size();
    if (i == 0) return (-3 * y[0] + 4 * y[1] - y[2]) / (2 * dx);
    if (i == n - 1) return (3 * y[n - 1] - 4 * y[n - 2] + y[n - 3]) / (2 * dx);
    return (y[i + 1] - y[i - 1]) / (2 * dx);
}

double d2(const std::vector<double>& y, Index i, double dx) {
    Index n = y.size();
    if (i == 0) return (2 * y[0] - 5 * y[1] + 4 * y[2] - y[3]) / (dx * dx);
    if (i == n - 1) return (2 * y[n - 1] - 5 * y[n - 2] + 4 * y[n - 3] - y[n - 4]) / (dx * dx);
    return (y[i + 1] - 2 * y[i] + y[i - 1]) / (dx * dx);
}

struct Discretization {
    int n = 0;
    std::vector<JetCoord> slots;  // x, u_j, u_j_x, u_j_xx, functionals
    // per driver and component
    std::vector<std::vector<CompiledExpr>> F, Fx, Fxx;
    std::vector<std::vector<bool>> has_x, has_xx;
    std::vector<bool> wiener;
    std::vector<CompiledExpr> functional_exprs;
    std::vector<Index> functional_index;
    std::vector<CompiledExpr> outputs;
};

}  // namespace

std::vector<double> uniform_grid(double x0, double x1, double dx) {
    int n = static_cast<int>(std::llround((x1 - x0) / dx));
    std::vector<double> x(static_cast<Index>(n + 1));
    for (int i = 0; i <= n; ++i) x[static_cast<Index>(i)] = x0 + (x1 - x0) * i / n;
    return x;
}

GridSolution fd_solve_spde(const SPDEModel& input, const std::vector<double>& x, const DriverPath& path,
                           FdOptions& opts) {
    SPDEModel m = to_stratonovich(input);
    Discretization D;
    int n = m.space.n();
    D.n = n;
    JetCoord xc = m.space.x(0);
    D.slots.push_back(xc);
    for (int k = 0; k <= 2; ++k)
        for (int j = 0; j < n; ++j) D.slots.push_back(m.space.derivative(j, k));
    for (const auto& f : m.functionals) D.slots.push_back(JetCoord::parameter(f.name));
    FunctionTable ft = m.function_table();
    for (const auto& g : m.generators)
        if (g.order() > 2) throw model_error("UnsupportedOrder", "finite differences need generators of order <= 2");

    for (const auto& d : m.drivers) {
        std::vector<CompiledExpr> F, Fx, Fxx;
        std::vector<bool> hx, hxx;
        for (int j = 0; j < n; ++j) {
            Expr e;
            for (Index k = 0; k < d.coeffs.size(); ++k)
                if (!d.coeffs[k].is_zero()) e += m.bind(d.coeffs[k]) * m.bind(m.generators[k][static_cast<Index>(j)]);
            Expr ex = diff(e, m.space.derivative(j, 1)), exx = diff(e, m.space.derivative(j, 2));
            F.emplace_back(e, D.slots, ft);
            Fx.emplace_back(ex, D.slots, ft);
            Fxx.emplace_back(exx, D.slots, ft);
            hx.push_back(!ex.is_zero());
            hxx.push_back(!exx.is_zero());
        }
        D.F.push_back(std::move(F));
        D.Fx.push_back(std::move(Fx));
        D.Fxx.push_back(std::move(Fxx));
        D.has_x.push_back(hx);
        D.has_xx.push_back(hxx);
        D.wiener.push_back(d.wiener);
    }
    double dx = x[1] - x[0];
    for (const auto& f : m.functionals) {
        D.functional_exprs.emplace_back(m.bind(f.expr), D.slots, ft);
        double pos = (f.x0.get_d() - x.front()) / dx;
        long idx = std::lround(pos);
        if (idx < 0 || idx >= static_cast<long>(x.size()) || std::fabs(pos - static_cast<double>(idx)) > 1e-9)
            throw model_error("GridMismatch", "functional point " + f.name + " is not a grid node");
        D.functional_index.push_back(static_cast<Index>(idx));
    }
    std::vector<std::pair<std::string, Expr>> outs = m.outputs;
    if (outs.empty())
        for (int j = 0; j < n; ++j) outs.emplace_back(m.space.dependents()[static_cast<Index>(j)], Expr::coord(m.space.u(j)));
    for (const auto& [name, e] : outs) D.outputs.emplace_back(m.bind(e), D.slots, ft);

    Index N = x.size();
    bool dirichlet = m.boundary == "oracle";
    if (dirichlet && !opts.dirichlet) throw model_error("MissingBoundary", "oracle boundaries need boundary data");
    std::size_t nslots = D.slots.size();

    auto fill_slots = [&](const std::vector<std::vector<double>>& y, Index i, std::vector<double>& s) {
        s[0] = x[i];
        for (int j = 0; j < n; ++j) {
            const auto& yj = y[static_cast<Index>(j)];
            s[static_cast<Index>(1 + j)] = yj[i];
            s[static_cast<Index>(1 + n + j)] = d1(yj, i, dx);
            s[static_cast<Index>(1 + 2 * n + j)] = d2(yj, i, dx);
        }
    };
    auto functionals = [&](const std::vector<std::vector<double>>& y, std::vector<double>& s) {
        for (Index f = 0; f < D.functional_exprs.size(); ++f) {
            fill_slots(y, D.functional_index[f], s);
            s[static_cast<Index>(1 + 3 * n) + f] = D.functional_exprs[f](s);
        }
    };
    Index first = dirichlet ? 1 : 0, last = N - 1;  // points evolved: [first, last)
    auto rhs = [&](const std::vector<std::vector<double>>& y, const std::vector<double>& dS,
                   std::vector<std::vector<double>>& out) {
        std::vector<double> s(nslots, 0.0);
        functionals(y, s);
        for (auto& o : out) std::fill(o.begin(), o.end(), 0.0);
        for (Index i = first; i < last; ++i) {
            fill_slots(y, i, s);
            for (Index al = 0; al < D.F.size(); ++al) {
                if (dS[al] == 0.0) continue;
                for (int j = 0; j < n; ++j) {
                    auto uj = static_cast<Index>(j);
                    double v;
                    if (!D.wiener[al] && D.has_x[al][uj]) {
                        // upwind transport for the time driver
                        double c = D.Fx[al][uj](s) * dS[al];
                        const auto& yj = y[uj];
                        double keep = s[static_cast<Index>(1 + n + j)];
                        if (c > 0 && i + 1 < N)
                            s[static_cast<Index>(1 + n + j)] = (yj[i + 1] - yj[i]) / dx;
                        else if (c < 0 && i > 0)
                            s[static_cast<Index>(1 + n + j)] = (yj[i] - yj[i - 1]) / dx;
                        v = D.F[al][uj](s);
                        s[static_cast<Index>(1 + n + j)] = keep;
                    } else {
                        v = D.F[al][uj](s);
                    }
                    out[uj][i] += v * dS[al];
                }
            }
        }
        if (!dirichlet)
            for (auto& o : out) o[N - 1] = 2 * o[N - 2] - o[N - 3];
    };
    auto apply_bc = [&](std::vector<std::vector<double>>& y, double t) {
        if (dirichlet) {
            auto b = opts.dirichlet(t);
            for (int j = 0; j < n; ++j) {
                y[static_cast<Index>(j)][0] = b[static_cast<Index>(j)][0];
                y[static_cast<Index>(j)][N - 1] = b[static_cast<Index>(j)][1];
            }
        }
    };
    auto speed = [&](const std::vector<std::vector<double>>& y, const std::vector<double>& dS) {
        std::vector<double> s(nslots, 0.0);
        functionals(y, s);
        double adv = 0, dif = 0;
        for (Index i = first; i < last; ++i) {
            fill_slots(y, i, s);
            double a = 0, d = 0;
            for (Index al = 0; al < D.F.size(); ++al)
                for (int j = 0; j < n; ++j) {
                    auto uj = static_cast<Index>(j);
                    if (D.has_x[al][uj]) a += std::fabs(D.Fx[al][uj](s) * dS[al]);
                    if (D.has_xx[al][uj]) d += std::fabs(D.Fxx[al][uj](s) * dS[al]);
                }
            adv = std::max(adv, a / dx);
            dif = std::max(dif, d / (dx * dx));
        }
        return std::max(adv / opts.cfl, dif / (opts.cfl / 2));
    };

    // initial values from the reconstruction at the initial state
    GridSolution sol;
    sol.x = x;
    sol.boundary = dirichlet ? "oracle" : "extrapolate";
    for (const auto& [name, e] : outs) sol.names.push_back(name);
    std::vector<std::vector<double>> y(static_cast<Index>(n), std::vector<double>(N));
    if (m.mode == "ode") {
        auto value = [&](const std::string& name) {
            for (const auto& [k, v] : m.state0)
                if (k == name) return v.get_d();
            throw model_error("ModelSyntax", "[state] lacks a value for " + name);
        };
        const OdeConstraintSpec& c = *m.constraint;
        std::vector<double> mu, bnd;
        for (const auto& k : c.coeffs) mu.push_back(value(k));
        for (int j = 0; j < c.order; ++j) bnd.push_back(value(m.space.derivative(0, j).name));
        y[0] = reconstruct_linear_ode(mu, bnd, x);
    } else {
        Bindings zero;
        for (const auto& p : m.reduction_params) zero[JetCoord::parameter(p)] = Expr();
        for (int j = 0; j < n; ++j) {
            Expr f;
            for (const auto& [d, e] : m.initial)
                if (d == m.space.dependents()[static_cast<Index>(j)]) f = substitute(m.bind(e), zero);
            CompiledExpr cf(f, {xc}, ft);
            for (Index i = 0; i < N; ++i) y[static_cast<Index>(j)][i] = cf(std::vector<double>{x[i]});
        }
    }

    auto snapshot = [&](double t) {
        std::vector<double> s(nslots, 0.0);
        functionals(y, s);
        std::vector<std::vector<double>> vals(D.outputs.size(), std::vector<double>(N));
        for (Index i = 0; i < N; ++i) {
            fill_slots(y, i, s);
            for (Index k = 0; k < D.outputs.size(); ++k) vals[k][i] = D.outputs[k](s);
        }
        sol.times.push_back(t);
        sol.values.push_back(vals);
    };
    std::vector<int> snap_steps;
    for (int k = 1; k <= opts.snapshots; ++k)
        snap_steps.push_back(static_cast<int>(std::llround(static_cast<double>(k) * path.steps / opts.snapshots)));
    snapshot(0.0);

    std::vector<std::vector<double>> k1(static_cast<Index>(n), std::vector<double>(N)), k2 = k1, ys = y;
    std::vector<double> sub(path.wiener.size());
    opts.substep_count = 0;
    for (int st = 0; st < path.steps; ++st) {
        const auto& dS = path.dS[static_cast<Index>(st)];
        try {
            int ns = std::max(1, static_cast<int>(std::ceil(speed(y, dS))));
            for (Index al = 0; al < dS.size(); ++al) sub[al] = dS[al] / ns;
            for (int q = 0; q < ns; ++q) {
                double t1 = path.t(st) + path.dt * (q + 1) / ns;
                rhs(y, sub, k1);
                for (int j = 0; j < n; ++j)
                    for (Index i = 0; i < N; ++i)
                        ys[static_cast<Index>(j)][i] = y[static_cast<Index>(j)][i] + k1[static_cast<Index>(j)][i];
                apply_bc(ys, t1);
                rhs(ys, sub, k2);
                for (int j = 0; j < n; ++j)
                    for (Index i = 0; i < N; ++i) {
                        double& v = y[static_cast<Index>(j)][i];
                        v += 0.5 * (k1[static_cast<Index>(j)][i] + k2[static_cast<Index>(j)][i]);
                        if (!std::isfinite(v) || std::fabs(v) > opts.bound)
                            throw runtime_failure("Exploded", "grid value left the bound");
                    }
                apply_bc(y, t1);
            }
            opts.substep_count += ns;
        } catch (const Error& e) {
            sol.exploded = true;
            sol.t_explode = path.t(st + 1);
            sol.reason = e.what();
            return sol;
        }
        if (std::find(snap_steps.begin(), snap_steps.end(), st + 1) != snap_steps.end()) snapshot(path.t(st + 1));
    }
    return sol;
}

std::vector<double> hjm_closed_form(const std::function<double(double)>& f, const std::function<double(double)>& fp,
                                    const std::array<double, 4>& s, const std::vector<double>& x) {
    auto [A, B, C, D] = s;
    (void)B;
    std::vector<double> out;
    for (double xv : x) {
        double den = 1 + D * f(xv - A);
        out.push_back(std::exp(-C) * fp(xv - A) / (den * den));
    }
    return out;
}

std::array<std::vector<double>, 2> hunter_saxton_closed_form(const std::function<double(int, double)>& f,
                                                             const std::function<double(int, double)>& g,
                                                             const std::array<double, 3>& s,
                                                             const std::vector<double>& x) {
    auto [A, B, C] = s;
    double eA = std::exp(A);
    std::array<std::vector<double>, 2> out;
    double u = f(0, x.front()), v = g(0, x.front());
    for (double xv : x) {
        for (int it = 0;; ++it) {
            double xi = xv / eA - B * u + B * B * eA * v / 4 - C;
            double r1 = u - B * eA * v / 2 - f(0, xi);
            double r2 = eA * v - g(0, xi);
            if (std::max(std::fabs(r1), std::fabs(r2)) <= 1e-13) break;
            if (it == 50) throw runtime_failure("NewtonDiverged", "implicit system at x = " + std::to_string(xv));
            double fp = f(1, xi), gp = g(1, xi);
            // d xi/du = -B, d xi/dv = B^2 e^A / 4
            double j11 = 1 + B * fp, j12 = -B * eA / 2 - fp * B * B * eA / 4;
            double j21 = B * gp, j22 = eA - gp * B * B * eA / 4;
            double det = j11 * j22 - j12 * j21;
            u -= (r1 * j22 - r2 * j12) / det;
            v -= (j11 * r2 - j21 * r1) / det;
        }
        out[0].push_back(u);
        out[1].push_back(v);
    }
    return out;
}

std::vector<double> filtering_closed_form(double L, double M, double u0, double ux0, const std::vector<double>& x) {
    std::vector<double> out;
    bool fallback = false;
    for (double xv : x) {
        auto v = order2_branch(L, M, u0, ux0, xv);
        if (!v) {
            fallback = true;
            break;
        }
        out.push_back(*v);
    }
    if (fallback) return reconstruct_linear_ode({M, L}, {u0, ux0}, x);
    return out;
}

std::vector<std::vector<Metrics>> compare(const GridSolution& a, const GridSolution& b, double margin) {
    if (a.x.size() != b.x.size() || a.values.size() != b.values.size() || a.names.size() != b.names.size())
        throw model_error("GridMismatch", "solutions live on different grids");
    for (Index i = 0; i < a.x.size(); ++i)
        if (std::fabs(a.x[i] - b.x[i]) > 1e-12) throw model_error("GridMismatch", "grid nodes differ");
    double lo = a.x.front(), hi = a.x.back(), w = hi - lo;
    double dx = a.x.size() > 1 ? a.x[1] - a.x[0] : 1.0;
    std::vector<std::vector<Metrics>> out;
    for (Index s = 0; s < a.values.size(); ++s) {
        std::vector<Metrics> row;
        for (Index k = 0; k < a.names.size(); ++k) {
            Metrics mt;
            double ref = 0;
            for (Index i = 0; i < a.x.size(); ++i) {
                if (a.x[i] < lo + margin * w - 1e-12 || a.x[i] > hi - margin * w + 1e-12) continue;
                double e = a.values[s][k][i] - b.values[s][k][i];
                mt.l2 += e * e * dx;
                mt.linf = std::max(mt.linf, std::fabs(e));
                ref += b.values[s][k][i] * b.values[s][k][i] * dx;
            }
            mt.l2 = std::sqrt(mt.l2);
            ref = std::sqrt(ref);
            mt.rel_l2 = ref > 0 ? mt.l2 / ref : mt.l2;
            row.push_back(mt);
        }
        out.push_back(row);
    }
    return out;
}

Metrics worst(const std::vector<std::vector<Metrics>>& m) {
    Metrics w;
    for (const auto& row : m)
        for (const auto& e : row) {
            w.l2 = std::max(w.l2, e.l2);
            w.linf = std::max(w.linf, e.linf);
            w.rel_l2 = std::max(w.rel_l2, e.rel_l2);
        }
    return w;
}

GridSolution reduced_solution(const ReducedSystem& sys, const SamplePath& path, const std::vector<double>& x,
                              int snapshots, double* max_residual) {
    GridSolution sol;
    sol.x = x;
    Reconstructor rec(sys);
    for (const auto& [name, e] : sys.outputs) sol.names.push_back(name);
    int steps = static_cast<int>(path.state.size()) - 1;
    std::vector<int> at = {0};
    for (int k = 1; k <= snapshots; ++k) at.push_back(static_cast<int>(std::llround(static_cast<double>(k) * steps / snapshots)));
    for (int s : at) {
        auto r = rec(path.state[static_cast<Index>(s)], x);
        if (max_residual) *max_residual = std::max(*max_residual, r.max_residual);
        sol.times.push_back(path.t[static_cast<Index>(s)]);
        sol.values.push_back(r.outputs);
    }
    if (path.status == SamplePath::Status::Exploded) {
        sol.exploded = true;
        sol.t_explode = path.t_explode;
        sol.reason = path.reason;
    }
    return sol;
}

ValidationReport validate_model(const SPDEModel& model, const ValidationOptions& o) {
    ReducedSystem sys = build_reduced_sde(model);
    DriverPath path = make_driver_path(driver_spec(sys), o.t_final, o.dt, o.seed, o.path_index);
    return validate_model(model, o, path);
}

ValidationReport validate_model(const SPDEModel& model, const ValidationOptions& o, const DriverPath& path) {
    ValidationReport rep;
    ReducedSystem sys = build_reduced_sde(model);
    rep.path = integrate_stratonovich(compile_system(sys), sys.initial_state, path);
    if (rep.path.status == SamplePath::Status::Exploded)
        throw runtime_failure("Exploded", "reduced state exploded at t = " + std::to_string(rep.path.t_explode));
    std::vector<double> x = uniform_grid(model.x_min.get_d(), model.x_max.get_d(), o.dx);
    rep.reduced = reduced_solution(sys, rep.path, x, o.snapshots, &rep.max_newton_residual);

    FdOptions fo;
    fo.snapshots = o.snapshots;
    Reconstructor edge(sys);
    std::vector<std::array<double, 2>> ends;  // boundary values per step, dependents flattened
    int n = model.space.n();
    std::vector<std::vector<std::array<double, 2>>> table;
    if (model.boundary == "oracle") {
        for (const auto& a : rep.path.state) {
            auto r = edge(a, {x.front(), x.back()});
            std::vector<std::array<double, 2>> row;
            for (int j = 0; j < n; ++j)
                row.push_back({r.dependents[static_cast<Index>(j)][0], r.dependents[static_cast<Index>(j)][1]});
            table.push_back(row);
        }
        double dt = path.dt;
        fo.dirichlet = [&table, dt, n](double t) {
            double pos = t / dt;
            auto s = static_cast<Index>(std::min<double>(std::floor(pos), static_cast<double>(table.size() - 2)));
            double w = pos - static_cast<double>(s);
            std::vector<std::array<double, 2>> out;
            for (int j = 0; j < n; ++j) {
                const auto& p = table[s][static_cast<Index>(j)];
                const auto& q = table[s + 1][static_cast<Index>(j)];
                out.push_back({(1 - w) * p[0] + w * q[0], (1 - w) * p[1] + w * q[1]});
            }
            return out;
        };
    }
    rep.fd = fd_solve_spde(model, x, path, fo);
    rep.substeps = fo.substep_count;
    if (rep.fd.exploded) throw runtime_failure("Exploded", "finite-difference solution: " + rep.fd.reason);
    rep.metrics = compare(rep.reduced, rep.fd);
    rep.worst = worst(rep.metrics);
    return rep;
}

}  // namespace jetred
