#include "jetred/phi.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "jetred/flows.hpp"

namespace jetred {

namespace {

using RMatrix = std::vector<std::vector<Rational>>;

Expr merge_terms(const Poly& p) {
    Expr out;
    for (const auto& t : p.terms()) {
        Expr rest(t.coef);
        Expr arg;
        for (const auto& f : t.mono) {
            if (f.atom->kind == AtomKind::Exp)
                arg += Expr(f.exp) * f.atom->args[0];
            else
                rest *= pow(Expr::from_atom(f.atom), static_cast<long>(f.exp));
        }
        out += rest * exp(arg);
    }
    return out;
}

bool exp_monomial(const Expr& d, Rational& coef, Expr& arg) {
    if (!d.is_polynomial() || d.num().terms().size() != 1) return false;
    const Term& t = d.num().terms().front();
    arg = Expr();
    for (const auto& f : t.mono) {
        if (f.atom->kind != AtomKind::Exp) return false;
        arg += Expr(f.exp) * f.atom->args[0];
    }
    coef = t.coef / d.den().constant_value();
    return true;
}

std::vector<Rational> char_poly(const RMatrix& A) {
    // Faddeev-LeVerrier, coefficients c[0..n] of det(lambda I - A)
    std::size_t n = A.size();
    std::vector<Rational> c(n + 1, Rational(0));
    c[n] = 1;
    RMatrix M(n, std::vector<Rational>(n, Rational(0)));
    for (std::size_t k = 1; k <= n; ++k) {
        RMatrix next(n, std::vector<Rational>(n, Rational(0)));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                Rational s = 0;
                for (std::size_t l = 0; l < n; ++l) s += A[i][l] * M[l][j];
                next[i][j] = s;
            }
        for (std::size_t i = 0; i < n; ++i) next[i][i] += c[n - k + 1];
        M = next;
        Rational tr = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = 0; l < n; ++l) tr += A[i][l] * M[l][i];
        c[n - k] = -tr / Rational(static_cast<long>(k));
    }
    return c;
}

std::vector<mpz_class> divisors(mpz_class v) {
    v = abs(v);
    std::vector<mpz_class> out;
    for (mpz_class d = 1; d * d <= v; ++d) {
        if (v % d == 0) {
            out.push_back(d);
            if (d * d != v) out.push_back(v / d);
        }
    }
    return out;
}

Rational horner(const std::vector<Rational>& c, const Rational& x) {
    Rational v = 0;
    for (std::size_t i = c.size(); i-- > 0;) v = v * x + c[i];
    return v;
}

std::vector<Rational> deflate(const std::vector<Rational>& c, const Rational& r) {
    std::size_t n = c.size() - 1;
    std::vector<Rational> q(n, Rational(0));
    Rational carry = 0;
    for (std::size_t i = n; i-- > 0;) {
        carry = c[i + 1] + carry * r;
        q[i] = carry;
    }
    return q;
}

RMatrix identity(std::size_t n) {
    RMatrix I(n, std::vector<Rational>(n, Rational(0)));
    for (std::size_t i = 0; i < n; ++i) I[i][i] = 1;
    return I;
}

RMatrix mul(const RMatrix& a, const RMatrix& b) {
    std::size_t n = a.size();
    RMatrix out(n, std::vector<Rational>(n, Rational(0)));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < n; ++l)
            if (a[i][l] != 0)
                for (std::size_t j = 0; j < n; ++j) out[i][j] += a[i][l] * b[l][j];
    return out;
}

bool is_zero(const RMatrix& a) {
    for (const auto& row : a)
        for (const auto& v : row)
            if (v != 0) return false;
    return true;
}

ExprMatrix mul(const ExprMatrix& a, const ExprMatrix& b) {
    std::size_t n = a.size();
    ExprMatrix out(n, std::vector<Expr>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            Expr s;
            for (std::size_t l = 0; l < n; ++l)
                if (!a[i][l].is_zero() && !b[l][j].is_zero()) s += a[i][l] * b[l][j];
            out[i][j] = normalize_poly_exp(s);
        }
    return out;
}

// Gauss-Jordan inverse over the fraction field; entries kept in merged form.
ExprMatrix inverse(ExprMatrix a) {
    std::size_t n = a.size();
    ExprMatrix inv(n, std::vector<Expr>(n));
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = Expr(1);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        while (piv < n && a[piv][col].is_zero()) ++piv;
        if (piv == n) throw math_error("SingularTransport", "transport matrix is singular");
        std::swap(a[piv], a[col]);
        std::swap(inv[piv], inv[col]);
        Expr p = a[col][col];
        for (std::size_t j = 0; j < n; ++j) {
            a[col][j] = normalize_poly_exp(a[col][j] / p);
            inv[col][j] = normalize_poly_exp(inv[col][j] / p);
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col || a[r][col].is_zero()) continue;
            Expr f = a[r][col];
            for (std::size_t j = 0; j < n; ++j) {
                a[r][j] = normalize_poly_exp(a[r][j] - f * a[col][j]);
                inv[r][j] = normalize_poly_exp(inv[r][j] - f * inv[col][j]);
            }
        }
    }
    return inv;
}

std::vector<std::string> default_params(std::size_t h, bool drift) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < h; ++i) out.push_back("a" + std::to_string(drift ? i : i + 1));
    return out;
}

// Rows of -N^{-1}, N's columns being Ad(e^{a_1 X_1} ... e^{a_{i-1} X_{i-1}}) e_i.
ExprMatrix transport_fields(const LieAlgebra& alg, const std::vector<int>& order, const std::vector<JetCoord>& params) {
    std::size_t h = order.size();
    auto lam = [&](std::size_t i, std::size_t j, std::size_t k) {
        return alg.lambda[static_cast<std::size_t>(order[i])][static_cast<std::size_t>(order[j])]
                         [static_cast<std::size_t>(order[k])];
    };
    ExprMatrix T(h, std::vector<Expr>(h));
    for (std::size_t i = 0; i < h; ++i) T[i][i] = Expr(1);
    ExprMatrix N(h, std::vector<Expr>(h));
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t r = 0; r < h; ++r) N[r][i] = T[r][i];
        if (i + 1 == h) break;
        RMatrix ad(h, std::vector<Rational>(h, Rational(0)));
        bool zero = true;
        for (std::size_t l = 0; l < h; ++l)
            for (std::size_t j = 0; j < h; ++j) {
                ad[l][j] = lam(i, j, l);
                if (ad[l][j] != 0) zero = false;
            }
        if (zero) continue;
        auto E = exp_matrix(ad, Expr::coord(params[i]));
        if (!E)
            throw math_error("PhiClassExceeded",
                             "ad of " + alg.names[static_cast<std::size_t>(order[i])] + " has non-rational eigenvalues");
        T = mul(T, *E);
    }
    ExprMatrix inv = inverse(N);
    ExprMatrix W(h, std::vector<Expr>(h));
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t l = 0; l < h; ++l) {
            W[i][l] = -inv[l][i];
            if (!in_poly_exp_class(W[i][l]))
                throw math_error("NonTriangularOrdering", "coefficient of d/d" + params[l].name + " in W of " +
                                                              alg.names[static_cast<std::size_t>(order[i])] +
                                                              " leaves the polynomial-exponential class");
        }
    return W;
}

void check_ordering(const LieAlgebra& alg, const std::vector<int>& order) {
    std::vector<int> s = order;
    std::sort(s.begin(), s.end());
    bool ok = s.size() == alg.lambda.size();
    for (std::size_t i = 0; i < s.size() && ok; ++i) ok = s[i] == static_cast<int>(i);
    if (!ok)
        throw model_error("BadOrdering", "ordering must be a permutation of the algebra basis");
}

std::string name_of(const LieAlgebra& alg, int i) {
    auto k = static_cast<std::size_t>(i);
    return k < alg.names.size() ? alg.names[k] : "G" + std::to_string(i + 1);
}

}  // namespace

Expr normalize_poly_exp(const Expr& e) {
    if (e.is_zero()) return e;
    Expr n = merge_terms(e.num());
    Expr d = merge_terms(e.den());
    Rational c;
    Expr arg;
    if (exp_monomial(d, c, arg)) {
        if (arg.is_zero()) return n / Expr(c);
        return merge_terms((n * exp(-arg)).num()) / Expr(c);
    }
    return n / d;
}

bool in_poly_exp_class(const Expr& e) {
    if (!e.is_polynomial()) return false;
    std::set<AtomPtr> atoms;
    e.num().collect_atoms(atoms);
    for (auto a : atoms)
        if (a->kind != AtomKind::Coord && a->kind != AtomKind::Exp) return false;
    return true;
}

std::optional<std::vector<Rational>> rational_eigenvalues(const RMatrix& A) {
    std::vector<Rational> c = char_poly(A);
    std::vector<Rational> roots;
    while (c.size() > 1 && c[0] == 0) {
        roots.push_back(0);
        c.erase(c.begin());
    }
    while (c.size() > 1) {
        mpz_class l = 1;
        for (const auto& v : c) l = lcm(l, v.get_den());
        mpz_class a0 = Rational(c.front() * l).get_num(), an = Rational(c.back() * l).get_num();
        bool found = false;
        for (const auto& p : divisors(a0)) {
            for (const auto& q : divisors(an)) {
                for (int sgn : {1, -1}) {
                    Rational r{mpz_class(p * sgn), q};
                    r.canonicalize();
                    if (horner(c, r) == 0) {
                        roots.push_back(r);
                        c = deflate(c, r);
                        found = true;
                        break;
                    }
                }
                if (found) break;
            }
            if (found) break;
        }
        if (!found) return std::nullopt;
    }
    return roots;
}

std::optional<ExprMatrix> exp_matrix(const RMatrix& A, const Expr& t) {
    auto eig = rational_eigenvalues(A);
    if (!eig) return std::nullopt;
    std::size_t n = A.size();
    // Putzer: exp(tA) = sum_k r_k(t) P_{k-1}
    JetCoord tau = JetCoord::parameter("__tau");
    JetCoord s = JetCoord::parameter("__s");
    Expr te = Expr::coord(tau);
    std::vector<Expr> r;
    RMatrix P = identity(n);
    ExprMatrix out(n, std::vector<Expr>(n));
    for (std::size_t k = 0; k < n && !is_zero(P); ++k) {
        const Rational& lk = (*eig)[k];
        Expr rk;
        if (k == 0) {
            rk = exp(Expr(lk) * te);
        } else {
            Expr prev = substitute(r.back(), {{tau, Expr::coord(s)}});
            auto I = integrate_poly_exp(normalize_poly_exp(exp(Expr(-lk) * Expr::coord(s)) * prev), s, te);
            if (!I) return std::nullopt;
            rk = normalize_poly_exp(exp(Expr(lk) * te) * *I);
        }
        r.push_back(rk);
        Expr rt = substitute(rk, {{tau, t}});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (P[i][j] != 0) out[i][j] += Expr(P[i][j]) * rt;
        RMatrix shift = A;
        for (std::size_t i = 0; i < n; ++i) shift[i][i] -= lk;
        P = mul(P, shift);
    }
    for (auto& row : out)
        for (auto& v : row) v = normalize_poly_exp(v);
    return out;
}

std::string PhiTable::str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        os << "V_" << generators[i] << " =";
        bool any = false;
        for (std::size_t l = 0; l < phi[i].size(); ++l) {
            if (phi[i][l].is_zero()) continue;
            os << (any ? " + " : " ") << "(" << phi[i][l].str() << ")*d/d" << params[l];
            any = true;
        }
        if (!any) os << " 0";
        os << "\n";
    }
    return os.str();
}

PhiTable solve_phi(const LieAlgebra& alg, const std::vector<int>& ordering, const std::vector<std::string>& params) {
    check_ordering(alg, ordering);
    std::size_t h = ordering.size();
    PhiTable t;
    t.params = params.empty() ? default_params(h, false) : params;
    if (t.params.size() != h) throw model_error("BadParameters", "one parameter per generator is required");
    std::vector<JetCoord> pc;
    for (const auto& p : t.params) pc.push_back(JetCoord::parameter(p));
    t.phi = transport_fields(alg, ordering, pc);
    t.source_index = ordering;
    for (int i : ordering) t.generators.push_back(name_of(alg, i));
    Verdict v = verify_phi(t, alg);
    if (!v.ok()) throw math_error("PhiVerificationFailed", v.detail);
    return t;
}

PhiTable solve_phi_with_drift(const LieAlgebra& alg, int drift_index, const std::vector<int>& ordering,
                              const std::vector<std::string>& params) {
    std::vector<int> comp = ordering;
    comp.push_back(drift_index);
    check_ordering(alg, comp);
    std::size_t h = comp.size();
    PhiTable t;
    t.params = params.empty() ? default_params(h, true) : params;
    if (t.params.size() != h) throw model_error("BadParameters", "one parameter per generator is required");
    // composition order puts the drift flow innermost
    std::vector<JetCoord> pc;
    for (std::size_t i = 1; i < h; ++i) pc.push_back(JetCoord::parameter(t.params[i]));
    pc.push_back(JetCoord::parameter(t.params[0]));
    ExprMatrix W = transport_fields(alg, comp, pc);
    auto table_col = [&](std::size_t l) { return l + 1 == h ? 0 : l + 1; };
    t.phi.assign(h, std::vector<Expr>(h));
    for (std::size_t i = 0; i < h; ++i) {
        std::size_t row = table_col(i);
        for (std::size_t l = 0; l < h; ++l) t.phi[row][table_col(l)] = row == 0 ? -W[i][l] : W[i][l];
    }
    t.drift = 0;
    t.source_index.push_back(drift_index);
    for (int i : ordering) t.source_index.push_back(i);
    for (int i : t.source_index) t.generators.push_back(name_of(alg, i));
    Verdict v = verify_phi(t, alg);
    if (!v.ok()) throw math_error("PhiVerificationFailed", v.detail);
    return t;
}

PhiTable solve_phi_search(const LieAlgebra& alg, const std::vector<int>& ordering,
                          const std::vector<std::string>& params) {
    try {
        return solve_phi(alg, ordering, params);
    } catch (const Error& e) {
        if (e.kind() != "NonTriangularOrdering" || ordering.size() > 5) throw;
        std::vector<int> perm = ordering;
        std::sort(perm.begin(), perm.end());
        do {
            if (perm == ordering) continue;
            try {
                return solve_phi(alg, perm, params);
            } catch (const Error& inner) {
                if (inner.kind() != "NonTriangularOrdering") throw;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        throw;
    }
}

Verdict verify_phi(const PhiTable& t, const LieAlgebra& alg) {
    std::size_t h = t.size();
    Verdict total;
    auto fail = [](std::string detail) {
        Verdict v;
        v.kind = Verdict::Kind::NotEqual;
        v.detail = std::move(detail);
        return v;
    };
    auto lam = [&](std::size_t i, std::size_t j, std::size_t k) {
        return alg.lambda[static_cast<std::size_t>(t.source_index[i])][static_cast<std::size_t>(t.source_index[j])]
                         [static_cast<std::size_t>(t.source_index[k])];
    };
    auto W = [&](std::size_t i, std::size_t l) {
        return static_cast<int>(i) == t.drift ? -t.phi[i][l] : t.phi[i][l];
    };

    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t l = 0; l < h; ++l)
            for (const auto& c : free_coords(t.phi[i][l]))
                if (!c.is_parameter())
                    return fail("coefficient of " + t.generators[i] + " depends on " + c.name);

    // boundary data on the slices
    for (std::size_t i = 0; i < h; ++i) {
        Bindings zero;
        for (std::size_t k = 0; k < h; ++k) {
            if (static_cast<int>(k) == t.drift) continue;
            if (static_cast<int>(i) == t.drift || k < i) zero[t.param(k)] = Expr();
        }
        for (std::size_t l = 0; l < h; ++l) {
            Expr want = l == i ? Expr(static_cast<int>(i) == t.drift ? 1 : -1) : Expr();
            Expr got = normalize_poly_exp(substitute(t.phi[i][l], zero));
            if (got != want)
                return fail("boundary value of " + t.generators[i] + " along d/d" + t.params[l] + " is " + got.str());
        }
    }

    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = i + 1; j < h; ++j)
            for (std::size_t l = 0; l < h; ++l) {
                Expr lhs, rhs;
                for (std::size_t m = 0; m < h; ++m) {
                    lhs += W(i, m) * diff(W(j, l), t.param(m)) - W(j, m) * diff(W(i, l), t.param(m));
                    if (lam(i, j, m) != 0) rhs += Expr(lam(i, j, m)) * W(m, l);
                }
                lhs = normalize_poly_exp(lhs);
                rhs = normalize_poly_exp(rhs);
                Verdict v = equal(lhs, rhs);
                if (!v.ok()) {
                    v.detail = "bracket (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") along d/d" +
                               t.params[l] + ": " + v.detail;
                    return v;
                }
                if (v.kind == Verdict::Kind::EqualNumeric) total = v;
            }
    return total;
}

}  // namespace jetred
