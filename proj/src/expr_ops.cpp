#include <cmath>
#include <random>
#include <unordered_map>

#include "jetred/expr.hpp"

namespace jetred {

namespace {

bool atom_depends(AtomPtr a, const JetCoord& c) {
    return std::binary_search(a->support.begin(), a->support.end(), c);
}

Expr atom_partial(AtomPtr a, const JetCoord& c) {
    switch (a->kind) {
        case AtomKind::Coord: return a->coord == c ? Expr(1) : Expr();
        case AtomKind::Exp: return Expr::from_atom(a) * diff(a->args[0], c);
        case AtomKind::Log: return diff(a->args[0], c) / a->args[0];
        case AtomKind::Sin: return cos(a->args[0]) * diff(a->args[0], c);
        case AtomKind::Cos: return -sin(a->args[0]) * diff(a->args[0], c);
        case AtomKind::Root:
            return diff(a->args[0], c) * Expr::from_atom(a) / (Expr(a->q) * a->args[0]);
        case AtomKind::Func: {
            Expr out;
            for (std::size_t r = 0; r < a->args.size(); ++r) {
                Expr da = diff(a->args[r], c);
                if (da.is_zero()) continue;
                std::vector<int> d = a->dorders;
                d[r] += 1;
                out += func(a->fname, a->args, d) * da;
            }
            return out;
        }
    }
    return Expr();
}

Expr poly_derivative(const Poly& p, const JetCoord& c) {
    std::set<AtomPtr> atoms;
    p.collect_atoms(atoms);
    Expr out;
    for (AtomPtr a : atoms) {
        if (!atom_depends(a, c)) continue;
        Expr da = atom_partial(a, c);
        if (da.is_zero()) continue;
        out += Expr::fraction(p.partial(a), Poly(Rational(1))) * da;
    }
    return out;
}

void collect_support(const Poly& p, std::set<JetCoord>& out) {
    std::set<AtomPtr> atoms;
    p.collect_atoms(atoms);
    for (AtomPtr a : atoms) out.insert(a->support.begin(), a->support.end());
}

struct SubstState {
    const Bindings& bindings;
    std::unordered_map<AtomPtr, Expr> cache;

    bool touches(AtomPtr a) const {
        for (const auto& c : a->support)
            if (bindings.count(c)) return true;
        return false;
    }

    const Expr& atom(AtomPtr a) {
        auto it = cache.find(a);
        if (it != cache.end()) return it->second;
        Expr v;
        if (!touches(a)) {
            v = Expr::from_atom(a);
        } else {
            switch (a->kind) {
                case AtomKind::Coord: v = bindings.at(a->coord); break;
                case AtomKind::Exp: v = exp(expr(a->args[0])); break;
                case AtomKind::Log: v = log(expr(a->args[0])); break;
                case AtomKind::Sin: v = sin(expr(a->args[0])); break;
                case AtomKind::Cos: v = cos(expr(a->args[0])); break;
                case AtomKind::Root: v = root(expr(a->args[0]), a->q); break;
                case AtomKind::Func: {
                    std::vector<Expr> args;
                    for (const auto& x : a->args) args.push_back(expr(x));
                    v = func(a->fname, args, a->dorders);
                    break;
                }
            }
        }
        return cache.emplace(a, std::move(v)).first->second;
    }

    // Evaluates p at substituted atoms over a common denominator, returning (num, den).
    std::pair<Poly, Poly> poly(const Poly& p) {
        std::map<AtomPtr, int> max_exp;
        for (const auto& t : p.terms())
            for (const auto& f : t.mono) max_exp[f.atom] = std::max(max_exp[f.atom], f.exp);
        struct Powers {
            std::vector<Poly> num, den;
            bool unit_den;
        };
        std::map<AtomPtr, Powers> powers;
        Poly den(Rational(1));
        for (const auto& [a, e] : max_exp) {
            const Expr& v = atom(a);
            Powers pw;
            pw.unit_den = v.den().is_constant();
            pw.num.push_back(Poly(Rational(1)));
            pw.den.push_back(Poly(Rational(1)));
            for (int k = 1; k <= e; ++k) {
                pw.num.push_back(pw.num.back() * v.num());
                if (!pw.unit_den) pw.den.push_back(pw.den.back() * v.den());
            }
            if (!pw.unit_den) den = den * pw.den[static_cast<std::size_t>(e)];
            powers.emplace(a, std::move(pw));
        }
        Poly num;
        for (const auto& t : p.terms()) {
            Poly term(t.coef);
            std::map<AtomPtr, int> used;
            for (const auto& f : t.mono) {
                term = term * powers[f.atom].num[static_cast<std::size_t>(f.exp)];
                used[f.atom] = f.exp;
            }
            for (const auto& [a, e] : max_exp) {
                const auto& pw = powers[a];
                if (pw.unit_den) continue;
                int missing = e - (used.count(a) ? used[a] : 0);
                if (missing > 0) term = term * pw.den[static_cast<std::size_t>(missing)];
            }
            num = num + term;
        }
        return {num, den};
    }

    Expr expr(const Expr& e) {
        bool any = false;
        std::set<AtomPtr> atoms;
        e.num().collect_atoms(atoms);
        e.den().collect_atoms(atoms);
        for (AtomPtr a : atoms) any = any || touches(a);
        if (!any) return e;
        auto [nn, nd] = poly(e.num());
        if (e.den().is_constant()) return Expr::fraction(nn, nd.scaled(e.den().constant_value()));
        auto [dn, dd] = poly(e.den());
        return Expr::fraction(nn * dd, nd * dn);
    }
};

double ipow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}

struct Evaluator {
    const Assignment& assignment;
    const FunctionTable& functions;
    std::unordered_map<AtomPtr, double> cache;

    double atom(AtomPtr a) {
        auto it = cache.find(a);
        if (it != cache.end()) return it->second;
        double v = 0.0;
        switch (a->kind) {
            case AtomKind::Coord: {
                auto f = assignment.find(a->coord);
                if (f == assignment.end()) throw math_error("MissingBinding", "no value for " + a->coord.name);
                v = f->second;
                break;
            }
            case AtomKind::Exp: v = std::exp(expr(a->args[0])); break;
            case AtomKind::Log: {
                double x = expr(a->args[0]);
                if (x <= 0) throw math_error("DomainError", "log of non-positive value");
                v = std::log(x);
                break;
            }
            case AtomKind::Sin: v = std::sin(expr(a->args[0])); break;
            case AtomKind::Cos: v = std::cos(expr(a->args[0])); break;
            case AtomKind::Root: {
                double x = expr(a->args[0]);
                if (x < 0 && a->q % 2 == 0) throw math_error("DomainError", "even root of negative value");
                v = a->q == 2 ? std::sqrt(x) : std::copysign(std::pow(std::fabs(x), 1.0 / a->q), x);
                break;
            }
            case AtomKind::Func: {
                if (!functions) throw math_error("MissingBinding", "no numeric table for function " + a->fname);
                std::vector<double> args;
                for (const auto& x : a->args) args.push_back(expr(x));
                v = functions(a->fname, a->dorders, args);
                break;
            }
        }
        cache.emplace(a, v);
        return v;
    }

    double poly(const Poly& p) {
        double s = 0.0;
        for (const auto& t : p.terms()) {
            double m = t.coef.get_d();
            for (const auto& f : t.mono) m *= ipow(atom(f.atom), f.exp);
            s += m;
        }
        return s;
    }

    double expr(const Expr& e) {
        double n = poly(e.num());
        if (e.den().is_constant()) return n / e.den().constant_value().get_d();
        double d = poly(e.den());
        if (d == 0.0) throw math_error("DomainError", "division by zero during evaluation");
        return n / d;
    }
};

}  // namespace

Expr diff(const Expr& e, const JetCoord& c) {
    if (!depends_on(e, c)) return Expr();
    Expr dn = poly_derivative(e.num(), c);
    if (e.den().is_constant()) return dn;
    Expr dd = poly_derivative(e.den(), c);
    if (!dn.is_polynomial() || !dd.is_polynomial()) {
        Expr n = Expr::fraction(e.num(), Poly(Rational(1)));
        Expr d = Expr::fraction(e.den(), Poly(Rational(1)));
        return (dn * d - n * dd) / (d * d);
    }
    // (N'D - ND')/D^2 with g = gcd(D, D') removed up front
    const Poly& D = e.den();
    Poly g = gcd(D, dd.num());
    Poly dg = g.is_constant() ? D : *divide_exact(D, g);
    Poly ddg = g.is_constant() ? dd.num() : *divide_exact(dd.num(), g);
    return Expr::fraction(dn.num() * dg - e.num() * ddg, D * dg);
}

Expr substitute(const Expr& e, const Bindings& bindings) {
    if (bindings.empty()) return e;
    SubstState st{bindings, {}};
    return st.expr(e);
}

std::set<JetCoord> free_coords(const Expr& e) {
    std::set<JetCoord> out;
    collect_support(e.num(), out);
    collect_support(e.den(), out);
    return out;
}

Analysis analyze(const Expr& e) {
    Analysis a;
    a.free_coords = free_coords(e);
    for (const auto& c : a.free_coords)
        if (c.kind == JetCoord::Kind::Dependent) a.max_order = std::max(a.max_order, c.order());
    return a;
}

bool depends_on(const Expr& e, const JetCoord& c) {
    for (const Poly* p : {&e.num(), &e.den()})
        for (const auto& t : p->terms())
            for (const auto& f : t.mono)
                if (atom_depends(f.atom, c)) return true;
    return false;
}

double eval_numeric(const Expr& e, const Assignment& assignment, const FunctionTable& functions) {
    Evaluator ev{assignment, functions, {}};
    double v = ev.expr(e);
    if (!std::isfinite(v)) throw math_error("DomainError", "non-finite value");
    return v;
}

double test_function(const std::string& name, const std::vector<int>& dorders, const std::vector<double>& args) {
    std::size_t h = std::hash<std::string>()(name);
    double out = 1.0;
    for (std::size_t r = 0; r < args.size(); ++r) {
        std::size_t hr = h ^ (0x9e3779b97f4a7c15ULL * (r + 1));
        double w = 0.6 + static_cast<double>(hr % 97) / 97.0;
        double phase = static_cast<double>((hr >> 8) % 101) / 101.0 * 6.283185307179586;
        double kappa = 0.2 + static_cast<double>((hr >> 16) % 53) / 106.0;
        int k = dorders.empty() ? 0 : dorders[r];
        double y = args[r];
        double g = ipow(w, k) * std::sin(w * y + phase + k * 1.5707963267948966) +
                   0.5 * ipow(kappa, k) * std::exp(kappa * y);
        out *= g;
    }
    return out;
}

namespace {

template <class Eval>
Verdict sample_compare(const std::set<JetCoord>& coords, int samples, Eval eval) {
    Verdict v;
    std::mt19937_64 rng(0x6a657472ULL);
    std::uniform_int_distribution<int> pnum(-24, 24), pden(1, 7);
    for (int s = 0; s < samples; ++s) {
        bool evaluated = false;
        for (int attempt = 0; attempt < 6 && !evaluated; ++attempt) {
            Assignment point;
            for (const auto& c : coords) point[c] = static_cast<double>(pnum(rng)) / (6.0 * pden(rng) / 4.0);
            try {
                auto [va, vb] = eval(point);
                evaluated = true;
                double scale = std::max({1.0, std::fabs(va), std::fabs(vb)});
                if (std::fabs(va - vb) > 1e-10 * scale) {
                    v.kind = Verdict::Kind::NotEqual;
                    v.witness = point;
                    v.detail = "values " + std::to_string(va) + " vs " + std::to_string(vb);
                    return v;
                }
            } catch (const Error& e) {
                if (e.kind() != "DomainError") throw;
            }
        }
        if (!evaluated) throw math_error("EvaluationDomainError", "no admissible sample point after resampling");
    }
    v.kind = Verdict::Kind::EqualNumeric;
    return v;
}

}  // namespace

Verdict equal(const Expr& a, const Expr& b, int samples) {
    if (a == b) return Verdict{};
    std::set<JetCoord> coords = free_coords(a);
    for (const auto& c : free_coords(b)) coords.insert(c);
    return sample_compare(coords, samples, [&](const Assignment& point) {
        return std::pair{eval_numeric(a, point, test_function), eval_numeric(b, point, test_function)};
    });
}

Verdict equal_composed(const Expr& a, const Expr& b, const Bindings& subs, int samples) {
    std::set<JetCoord> coords = free_coords(a);
    for (const auto& c : free_coords(b))
        if (!subs.count(c)) coords.insert(c);
    for (const auto& [c, e] : subs)
        for (const auto& k : free_coords(e)) coords.insert(k);
    return sample_compare(coords, samples, [&](const Assignment& point) {
        Assignment inner = point;
        for (const auto& [c, e] : subs) inner[c] = eval_numeric(e, point, test_function);
        return std::pair{eval_numeric(a, point, test_function), eval_numeric(b, inner, test_function)};
    });
}

CompiledExpr::CompiledExpr(const Expr& e, const std::vector<JetCoord>& slots, FunctionTable functions)
    : functions_(std::move(functions)) {
    std::map<AtomPtr, int> seen;
    root_ = compile_expr(e, slots, seen);
}

CompiledExpr::PolyCode CompiledExpr::compile_poly(const Poly& p, const std::vector<JetCoord>& slots,
                                                  std::map<AtomPtr, int>& seen) {
    PolyCode code;
    for (const auto& t : p.terms()) {
        std::vector<std::pair<int, int>> fs;
        for (const auto& f : t.mono) {
            auto it = seen.find(f.atom);
            int idx;
            if (it != seen.end()) {
                idx = it->second;
            } else {
                Node node;
                node.kind = f.atom->kind;
                node.q = f.atom->q;
                node.fname = f.atom->fname;
                node.dorders = f.atom->dorders;
                if (node.kind == AtomKind::Coord) {
                    auto pos = std::find(slots.begin(), slots.end(), f.atom->coord);
                    if (pos == slots.end())
                        throw math_error("MissingBinding", "no slot for " + f.atom->coord.name);
                    node.slot = static_cast<int>(pos - slots.begin());
                }
                for (const auto& arg : f.atom->args) node.arg_exprs.push_back(compile_expr(arg, slots, seen));
                idx = static_cast<int>(nodes_.size());
                nodes_.push_back(std::move(node));
                seen[f.atom] = idx;
            }
            fs.emplace_back(idx, f.exp);
        }
        code.coefs.push_back(t.coef.get_d());
        code.factors.push_back(std::move(fs));
    }
    return code;
}

int CompiledExpr::compile_expr(const Expr& e, const std::vector<JetCoord>& slots, std::map<AtomPtr, int>& seen) {
    Rat r;
    r.num = compile_poly(e.num(), slots, seen);
    r.den = compile_poly(e.den(), slots, seen);
    exprs_.push_back(std::move(r));
    return static_cast<int>(exprs_.size()) - 1;
}

double CompiledExpr::eval_poly(const PolyCode& p, const std::vector<double>& regs) const {
    double s = 0.0;
    for (std::size_t i = 0; i < p.coefs.size(); ++i) {
        double m = p.coefs[i];
        for (const auto& [idx, e] : p.factors[i]) m *= ipow(regs[static_cast<std::size_t>(idx)], e);
        s += m;
    }
    return s;
}

double CompiledExpr::eval_rat(int idx, const std::vector<double>& regs) const {
    const Rat& r = exprs_[static_cast<std::size_t>(idx)];
    double d = eval_poly(r.den, regs);
    if (d == 0.0) throw math_error("DomainError", "division by zero during evaluation");
    return eval_poly(r.num, regs) / d;
}

double CompiledExpr::operator()(const double* values) const {
    std::vector<double> regs(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        switch (n.kind) {
            case AtomKind::Coord: regs[i] = values[n.slot]; break;
            case AtomKind::Exp: regs[i] = std::exp(eval_rat(n.arg_exprs[0], regs)); break;
            case AtomKind::Log: {
                double x = eval_rat(n.arg_exprs[0], regs);
                if (x <= 0) throw math_error("DomainError", "log of non-positive value");
                regs[i] = std::log(x);
                break;
            }
            case AtomKind::Sin: regs[i] = std::sin(eval_rat(n.arg_exprs[0], regs)); break;
            case AtomKind::Cos: regs[i] = std::cos(eval_rat(n.arg_exprs[0], regs)); break;
            case AtomKind::Root: {
                double x = eval_rat(n.arg_exprs[0], regs);
                if (x < 0 && n.q % 2 == 0) throw math_error("DomainError", "even root of negative value");
                regs[i] = n.q == 2 ? std::sqrt(x) : std::copysign(std::pow(std::fabs(x), 1.0 / n.q), x);
                break;
            }
            case AtomKind::Func: {
                if (!functions_) throw math_error("MissingBinding", "no numeric table for function " + n.fname);
                std::vector<double> args;
                for (int a : n.arg_exprs) args.push_back(eval_rat(a, regs));
                regs[i] = functions_(n.fname, n.dorders, args);
                break;
            }
        }
    }
    double v = eval_rat(root_, regs);
    if (!std::isfinite(v)) throw math_error("DomainError", "non-finite value");
    return v;
}

}  // namespace jetred
