#include "jetred/flows.hpp"

#include <set>

namespace jetred {

namespace {

std::vector<std::vector<int>> multi_indices_up_to(int m, int order) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(m), 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == m) {
            out.push_back(cur);
            return;
        }
        for (int k = 0; k <= left; ++k) {
            cur[static_cast<std::size_t>(pos)] = k;
            rec(pos + 1, left - k);
        }
        cur[static_cast<std::size_t>(pos)] = 0;
    };
    rec(0, order);
    return out;
}

bool is_order_zero(const JetCoord& c) {
    return c.kind == JetCoord::Kind::Independent || (c.kind == JetCoord::Kind::Dependent && c.order() == 0);
}

const JetCoord& dummy_variable() {
    static const JetCoord s = JetCoord::parameter("__s");
    return s;
}

Verdict worst(const Verdict& a, const Verdict& b) {
    if (!a.ok()) return a;
    if (!b.ok()) return b;
    return a.kind == Verdict::Kind::EqualNumeric ? a : b;
}

}  // namespace

CharacteristicField characteristic_field(const JetSpace& space, const EvolutionField& F, const std::vector<Expr>& h,
                                         int order) {
    CharacteristicField cf;
    cf.F = F;
    cf.h = h;
    cf.order = order;
    EvolutionOperator op(space, F);
    for (int i = 0; i < space.m(); ++i) cf.components[space.x(i)] = -h[static_cast<std::size_t>(i)];
    for (int j = 0; j < space.n(); ++j) {
        for (const auto& sigma : multi_indices_up_to(space.m(), order)) {
            JetCoord c = space.derivative(j, sigma);
            Expr comp = op.prolonged(j, sigma);
            for (int i = 0; i < space.m(); ++i) {
                const Expr& hi = h[static_cast<std::size_t>(i)];
                if (!hi.is_zero()) comp -= hi * Expr::coord(space.shifted(c, i));
            }
            cf.components[c] = comp;
        }
    }
    return cf;
}

std::vector<Expr> propose_drift(const JetSpace& space, const EvolutionField& F) {
    std::vector<Expr> h(static_cast<std::size_t>(space.m()));
    for (int i = 0; i < space.m(); ++i) {
        std::optional<Expr> common;
        bool ok = true;
        for (int j = 0; j < space.n() && ok; ++j) {
            JetCoord ux = space.shifted(space.u(j), i);
            Expr c = diff(F[static_cast<std::size_t>(j)], ux);
            // the coefficient may only involve x and u
            for (const auto& k : free_coords(c))
                if (k.kind == JetCoord::Kind::Dependent && k.order() > 0) ok = false;
            if (!common)
                common = c;
            else if (!(*common == c))
                ok = false;
        }
        h[static_cast<std::size_t>(i)] = ok && common ? *common : Expr();
    }
    return h;
}

const Expr* FlowMap::find(const JetCoord& c) const {
    auto it = pullbacks.find(c);
    return it == pullbacks.end() ? nullptr : &it->second;
}

std::optional<Expr> integrate_poly_exp(const Expr& p, const JetCoord& s, const Expr& upper) {
    if (depends_on(Expr::fraction(p.den(), Poly(Rational(1))), s)) return std::nullopt;
    Expr den = Expr::fraction(p.den(), Poly(Rational(1)));
    Expr total;
    for (const auto& t : p.num().terms()) {
        int n = 0;
        Expr exp_arg;
        bool has_exp = false;
        Expr rest(t.coef);
        for (const auto& f : t.mono) {
            Expr atom_e = Expr::from_atom(f.atom);
            if (f.atom->kind == AtomKind::Coord && f.atom->coord == s) {
                n += f.exp;
            } else if (f.atom->kind == AtomKind::Exp && depends_on(atom_e, s)) {
                exp_arg += Expr(f.exp) * f.atom->args[0];
                has_exp = true;
            } else if (depends_on(atom_e, s)) {
                return std::nullopt;
            } else {
                rest *= pow(atom_e, static_cast<long>(f.exp));
            }
        }
        if (!has_exp) {
            total += rest * pow(upper, static_cast<long>(n + 1)) / Expr(n + 1);
            continue;
        }
        Expr k = diff(exp_arg, s);
        auto kc = k.constant_value();
        if (!kc) return std::nullopt;
        Expr c0 = substitute(exp_arg, {{s, Expr()}});
        if (*kc == 0) {
            total += rest * exp(c0) * pow(upper, static_cast<long>(n + 1)) / Expr(n + 1);
            continue;
        }
        // antiderivative e^{ks} sum_j (-1)^j n!/(n-j)! s^{n-j} / k^{j+1}
        auto anti = [&](const Expr& at) {
            Expr sum;
            Rational fall(1);
            for (int j = 0; j <= n; ++j) {
                if (j > 0) fall *= (n - j + 1);
                Rational kpow(1);
                for (int r = 0; r <= j; ++r) kpow *= *kc;
                Rational c = (j % 2 == 0 ? fall : Rational(-fall)) / kpow;
                sum += Expr(c) * pow(at, static_cast<long>(n - j));
            }
            return sum;
        };
        total += rest * (exp(c0 + Expr(*kc) * upper) * anti(upper) - exp(c0) * anti(Expr()));
    }
    return total / den;
}

std::optional<FlowMap> catalog_flow(const JetSpace& space, const EvolutionField& F, const std::vector<Expr>& h,
                                    const std::string& param, const std::string& source) {
    CharacteristicField cf = characteristic_field(space, F, h, 0);
    for (const auto& [c, comp] : cf.components)
        for (const auto& k : free_coords(comp))
            if (!k.is_parameter() && !is_order_zero(k)) return std::nullopt;

    JetCoord a = JetCoord::parameter(param);
    Expr ae = Expr::coord(a);
    const JetCoord& s = dummy_variable();
    std::map<JetCoord, Expr> solved;
    std::set<JetCoord> remaining;
    for (const auto& [c, comp] : cf.components) remaining.insert(c);

    while (!remaining.empty()) {
        bool progress = false;
        for (auto it = remaining.begin(); it != remaining.end();) {
            const JetCoord& c = *it;
            const Expr& comp = cf.components.at(c);
            bool ready = true;
            for (const auto& k : free_coords(comp))
                if (!k.is_parameter() && !(k == c) && !solved.count(k)) ready = false;
            if (!ready) {
                ++it;
                continue;
            }
            Expr ce = Expr::coord(c);
            // substitute solved flows at parameter value s
            Bindings at_s;
            for (const auto& [k, phi] : solved) at_s[k] = substitute(phi, {{a, Expr::coord(s)}});
            std::optional<Expr> phi;
            if (!depends_on(comp, c)) {
                auto integral = integrate_poly_exp(substitute(comp, at_s), s, ae);
                if (integral) phi = ce + *integral;
            } else if (comp.is_polynomial()) {
                AtomPtr catom = ce.num().terms().front().mono.front().atom;
                auto coefs = comp.num().coefficients(catom);
                Rational dscale = comp.den().constant_value();
                auto coef = [&](std::size_t d) {
                    return d < coefs.size() ? Expr::fraction(coefs[d], Poly(dscale)) : Expr();
                };
                Expr k0 = coef(0), k1 = coef(1), k2 = coef(2);
                auto coordinate_free = [](const Expr& e) {
                    for (const auto& k : free_coords(e))
                        if (!k.is_parameter()) return false;
                    return true;
                };
                if (coefs.size() > 3) {
                    // unsupported degree
                } else if (!k2.is_zero()) {
                    if (k1.is_zero() && k0.is_zero() && coordinate_free(k2)) phi = ce / (Expr(1) - k2 * ae * ce);
                } else if (coordinate_free(k1)) {
                    if (k0.is_zero()) {
                        phi = exp(k1 * ae) * ce;
                    } else if (auto k1c = k1.constant_value()) {
                        Expr integrand = exp(Expr(-*k1c) * Expr::coord(s)) * substitute(k0, at_s);
                        auto integral = integrate_poly_exp(integrand, s, ae);
                        if (integral) phi = exp(k1 * ae) * (ce + *integral);
                    }
                }
            }
            if (!phi) return std::nullopt;
            solved[c] = *phi;
            it = remaining.erase(it);
            progress = true;
        }
        if (!progress) return std::nullopt;
    }
    FlowMap fm;
    fm.param = param;
    fm.pullbacks = solved;
    fm.source = source;
    fm.tracked_order = 0;
    return fm;
}

FlowMap prolong_flow_1d(const JetSpace& space, const FlowMap& flow, int n) {
    if (space.m() != 1) throw model_error("UnsupportedDimension", "flow prolongation needs one independent variable");
    FlowMap out = flow;
    if (n <= out.tracked_order) return out;
    const Expr* px = out.find(space.x(0));
    Expr phix = px ? *px : Expr::coord(space.x(0));
    Expr jac = total_derivative(space, phix, 0);
    if (jac.is_zero()) throw math_error("DegenerateJacobian", "D_x of the pulled-back x vanishes identically");
    for (int j = 0; j < space.n(); ++j) {
        for (int k = 1; k <= n; ++k) {
            JetCoord c = space.derivative(j, k);
            if (out.pullbacks.count(c)) continue;
            JetCoord lower = space.derivative(j, k - 1);
            const Expr* pl = out.find(lower);
            Expr prev = pl ? *pl : Expr::coord(lower);
            out.pullbacks[c] = total_derivative(space, prev, 0) / jac;
        }
    }
    out.tracked_order = n;
    return out;
}

Verdict verify_flow(const JetSpace& space, const CharacteristicField& field, const FlowMap& flow_in, int order) {
    FlowMap flow = flow_in;
    if (space.m() == 1 && flow.tracked_order < order + 1) flow = prolong_flow_1d(space, flow, order + 1);
    Bindings all = flow.pullbacks;
    JetCoord a = flow.param_coord();
    Verdict total;
    for (const auto& [c, comp] : field.components) {
        if (c.kind == JetCoord::Kind::Dependent && c.order() > order) continue;
        const Expr* pc = flow.find(c);
        Expr phi = pc ? *pc : Expr::coord(c);
        Verdict v0 = equal(substitute(phi, {{a, Expr()}}), Expr::coord(c));
        if (!v0.ok()) {
            v0.detail = "initial value at " + c.name + ": " + v0.detail;
            return v0;
        }
        for (const auto& k : free_coords(comp)) {
            if (!k.is_parameter() && !flow.find(k) && !is_order_zero(k)) {
                Verdict v;
                v.kind = Verdict::Kind::NotEqual;
                v.detail = "coordinate " + k.name + " is not tracked by the flow";
                return v;
            }
        }
        // higher prolongations get large; compare those numerically through the composition
        Verdict v = is_order_zero(c) ? equal(diff(phi, a), substitute(comp, all))
                                     : equal_composed(diff(phi, a), comp, all);
        if (!v.ok()) {
            v.detail = "flow equation fails at coordinate " + c.name + ": " + v.detail;
            return v;
        }
        total = worst(total, v);
        total = worst(total, v0);
    }
    return total;
}

Expr compose_pullback(const JetSpace& space, const std::vector<FlowMap>& flows_in, const Expr& e) {
    int need = analyze(e).max_order;
    Expr out = e;
    for (auto it = flows_in.rbegin(); it != flows_in.rend(); ++it) {
        FlowMap flow = *it;
        if (flow.tracked_order < need) {
            if (space.m() != 1)
                throw model_error("UntrackedCoordinate", "flow " + flow.param + " does not track order " +
                                                             std::to_string(need));
            flow = prolong_flow_1d(space, flow, need);
        }
        for (const auto& c : free_coords(out)) {
            if (c.is_parameter()) continue;
            if (!flow.find(c) && !is_order_zero(c))
                throw model_error("UntrackedCoordinate", c.name + " is not tracked by flow " + flow.param);
        }
        out = substitute(out, flow.pullbacks);
        need = std::max(need, analyze(out).max_order);
    }
    return out;
}

}  // namespace jetred
