#include <algorithm>
#include <memory>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "jetred/expr.hpp"

namespace jetred {

namespace {

std::size_t mix(std::size_t h, std::size_t v) { return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)); }

std::size_t hash_rational(const Rational& r) {
    return mix(std::hash<long>()(mpz_get_si(r.get_num_mpz_t())), std::hash<long>()(mpz_get_si(r.get_den_mpz_t())));
}

std::size_t hash_poly(const Poly& p) {
    std::size_t h = 17;
    for (const auto& t : p.terms()) {
        h = mix(h, hash_rational(t.coef));
        for (const auto& f : t.mono) h = mix(mix(h, f.atom->hash), static_cast<std::size_t>(f.exp));
    }
    return h;
}

std::size_t hash_expr(const Expr& e) { return mix(hash_poly(e.num()), hash_poly(e.den())); }

std::size_t hash_coord(const JetCoord& c) {
    std::size_t h = mix(static_cast<std::size_t>(c.kind), static_cast<std::size_t>(c.index));
    if (c.kind == JetCoord::Kind::Parameter) return mix(h, std::hash<std::string>()(c.name));
    if (c.kind == JetCoord::Kind::Dependent) {
        // trailing zeros in sigma are not significant
        std::size_t n = c.sigma.size();
        while (n > 0 && c.sigma[n - 1] == 0) --n;
        for (std::size_t i = 0; i < n; ++i) h = mix(h, static_cast<std::size_t>(c.sigma[i]));
    }
    return h;
}

bool same_atom(const Atom& a, const Atom& b) {
    if (a.kind != b.kind) return false;
    if (a.kind == AtomKind::Coord) return a.coord == b.coord;
    return a.q == b.q && a.fname == b.fname && a.dorders == b.dorders && a.args == b.args;
}

class AtomTable {
public:
    AtomPtr intern(Atom atom) {
        std::size_t h = 0;
        if (atom.kind == AtomKind::Coord) {
            h = hash_coord(atom.coord);
        } else {
            h = mix(static_cast<std::size_t>(atom.kind) + 101, static_cast<std::size_t>(atom.q));
            h = mix(h, std::hash<std::string>()(atom.fname));
            for (int d : atom.dorders) h = mix(h, static_cast<std::size_t>(d));
            for (const auto& a : atom.args) h = mix(h, hash_expr(a));
        }
        atom.hash = h;
        std::lock_guard<std::mutex> lock(mu_);
        auto range = table_.equal_range(h);
        for (auto it = range.first; it != range.second; ++it)
            if (same_atom(*it->second, atom)) return it->second.get();
        if (atom.kind == AtomKind::Coord) {
            atom.support = {atom.coord};
        } else {
            std::set<JetCoord> s;
            for (const auto& a : atom.args)
                for (const auto& c : free_coords(a)) s.insert(c);
            atom.support.assign(s.begin(), s.end());
        }
        auto owned = std::make_unique<Atom>(std::move(atom));
        AtomPtr p = owned.get();
        table_.emplace(h, std::move(owned));
        return p;
    }

private:
    std::mutex mu_;
    std::unordered_multimap<std::size_t, std::unique_ptr<Atom>> table_;
};

AtomTable& atom_table() {
    static AtomTable table;
    return table;
}

int kind_rank(AtomKind k) {
    switch (k) {
        case AtomKind::Coord: return 0;
        case AtomKind::Func: return 1;
        case AtomKind::Root: return 2;
        case AtomKind::Exp: return 3;
        case AtomKind::Log: return 4;
        case AtomKind::Sin: return 5;
        case AtomKind::Cos: return 6;
    }
    return 7;
}

AtomPtr make_kernel(AtomKind kind, std::vector<Expr> args, int q = 0) {
    Atom a;
    a.kind = kind;
    a.args = std::move(args);
    a.q = q;
    return atom_table().intern(std::move(a));
}

bool has_reducible_root(const Poly& p) {
    for (const auto& t : p.terms())
        for (const auto& f : t.mono)
            if (f.atom->kind == AtomKind::Root && f.exp >= f.atom->q) return true;
    return false;
}

// Rewrites root(b, q)^e with e >= q as b^(e div q) * root(b, q)^(e mod q).
Expr reduce_roots(const Poly& p) {
    Expr out;
    for (const auto& t : p.terms()) {
        Monomial kept;
        Expr extra(1);
        for (const auto& f : t.mono) {
            if (f.atom->kind == AtomKind::Root && f.exp >= f.atom->q) {
                int k = f.exp / f.atom->q, r = f.exp % f.atom->q;
                extra *= pow(f.atom->args[0], k);
                if (r > 0) kept.push_back({f.atom, r});
            } else {
                kept.push_back(f);
            }
        }
        out += Expr::fraction(Poly::from_terms({Term{kept, t.coef}}), Poly(Rational(1))) * extra;
    }
    return out;
}

std::optional<Rational> exact_root(const Rational& v, int q) {
    if (v < 0 && q % 2 == 0) return std::nullopt;
    mpz_class n = abs(v.get_num()), d = v.get_den();
    mpz_class rn, rd;
    if (!mpz_root(rn.get_mpz_t(), n.get_mpz_t(), static_cast<unsigned long>(q))) return std::nullopt;
    if (!mpz_root(rd.get_mpz_t(), d.get_mpz_t(), static_cast<unsigned long>(q))) return std::nullopt;
    Rational r(rn, rd);
    r.canonicalize();
    return v < 0 ? Rational(-r) : r;
}

std::string coord_name(const JetCoord& c) { return c.name; }

std::string atom_str(AtomPtr a);

std::string monomial_str(const Monomial& m) {
    std::string s;
    for (const auto& f : m) {
        if (!s.empty()) s += "*";
        s += atom_str(f.atom);
        if (f.exp != 1) s += "^" + std::to_string(f.exp);
    }
    return s;
}

std::string poly_str(const Poly& p) {
    if (p.is_zero()) return "0";
    std::string s;
    bool first = true;
    for (const auto& t : p.terms()) {
        Rational c = t.coef;
        bool neg = c < 0;
        if (neg) c = -c;
        if (first)
            s += neg ? "-" : "";
        else
            s += neg ? " - " : " + ";
        first = false;
        if (t.mono.empty()) {
            s += c.get_str();
        } else if (c == 1) {
            s += monomial_str(t.mono);
        } else {
            s += c.get_str() + "*" + monomial_str(t.mono);
        }
    }
    return s;
}

bool needs_parens_as_factor(const Poly& p) {
    if (p.terms().size() > 1) return true;
    return false;
}

std::string atom_str(AtomPtr a) {
    switch (a->kind) {
        case AtomKind::Coord: return coord_name(a->coord);
        case AtomKind::Exp: return "exp(" + a->args[0].str() + ")";
        case AtomKind::Log: return "log(" + a->args[0].str() + ")";
        case AtomKind::Sin: return "sin(" + a->args[0].str() + ")";
        case AtomKind::Cos: return "cos(" + a->args[0].str() + ")";
        case AtomKind::Root:
            if (a->q == 2) return "sqrt(" + a->args[0].str() + ")";
            return "(" + a->args[0].str() + ")^(1/" + std::to_string(a->q) + ")";
        case AtomKind::Func: {
            std::string name = a->fname;
            int total = 0;
            for (int d : a->dorders) total += d;
            if (total > 0) {
                if (a->dorders.size() == 1 && total <= 3) {
                    name += std::string(static_cast<std::size_t>(total), '\'');
                } else {
                    name += "_{";
                    for (std::size_t i = 0; i < a->dorders.size(); ++i)
                        name += (i ? "," : "") + std::to_string(a->dorders[i]);
                    name += "}";
                }
            }
            std::string s = name + "(";
            for (std::size_t i = 0; i < a->args.size(); ++i) s += (i ? ", " : "") + a->args[i].str();
            return s + ")";
        }
    }
    return "?";
}

}  // namespace

int compare_atoms(AtomPtr a, AtomPtr b) {
    if (a == b) return 0;
    int ra = kind_rank(a->kind), rb = kind_rank(b->kind);
    if (ra != rb) return ra < rb ? -1 : 1;
    if (a->kind == AtomKind::Coord) return compare(a->coord, b->coord);
    if (a->fname != b->fname) return a->fname < b->fname ? -1 : 1;
    if (a->dorders != b->dorders) return a->dorders < b->dorders ? -1 : 1;
    if (a->q != b->q) return a->q < b->q ? -1 : 1;
    std::size_t n = std::min(a->args.size(), b->args.size());
    for (std::size_t i = 0; i < n; ++i) {
        int c = compare(a->args[i], b->args[i]);
        if (c != 0) return c;
    }
    if (a->args.size() != b->args.size()) return a->args.size() < b->args.size() ? -1 : 1;
    return 0;
}

int compare(const Expr& a, const Expr& b) {
    int c = compare(a.num(), b.num());
    return c != 0 ? c : compare(a.den(), b.den());
}

Expr::Expr() : num_(), den_(Rational(1)) {}
Expr::Expr(int v) : num_(Rational(v)), den_(Rational(1)) {}
Expr::Expr(long v) : num_(Rational(v)), den_(Rational(1)) {}
Expr::Expr(const Rational& v) : num_(v), den_(Rational(1)) {}

Expr Expr::coord(const JetCoord& c) {
    Atom a;
    a.kind = AtomKind::Coord;
    a.coord = c;
    return from_atom(atom_table().intern(std::move(a)));
}

Expr Expr::from_atom(AtomPtr a) {
    Expr e;
    e.num_ = Poly::atom(a);
    return e;
}

Expr Expr::fraction(const Poly& num, const Poly& den) {
    if (den.is_zero()) throw math_error("DomainError", "division by zero");
    if (has_reducible_root(num) || has_reducible_root(den)) {
        Expr n = has_reducible_root(num) ? reduce_roots(num) : fraction(num, Poly(Rational(1)));
        Expr d = has_reducible_root(den) ? reduce_roots(den) : fraction(den, Poly(Rational(1)));
        return n / d;
    }
    Expr e;
    if (num.is_zero()) return e;
    if (den.is_constant()) {
        e.num_ = num.scaled(1 / den.constant_value());
        return e;
    }
    Poly g = gcd(num, den);
    Poly n = num, d = den;
    if (!g.is_constant()) {
        n = *divide_exact(num, g);
        d = *divide_exact(den, g);
    }
    Rational lc = d.leading_coef();
    e.num_ = n.scaled(1 / lc);
    e.den_ = d.scaled(1 / lc);
    if (e.den_.is_constant()) e.den_ = Poly(Rational(1));
    return e;
}

std::optional<Rational> Expr::constant_value() const {
    if (!is_constant()) return std::nullopt;
    return num_.constant_value() / den_.constant_value();
}

std::string Expr::str() const {
    if (den_.is_constant()) return poly_str(num_);
    std::string n = poly_str(num_);
    std::string d = poly_str(den_);
    if (needs_parens_as_factor(num_)) n = "(" + n + ")";
    const auto& dt = den_.terms();
    bool bare = dt.size() == 1 && dt[0].coef == 1 && dt[0].mono.size() == 1 && dt[0].mono[0].exp == 1;
    if (!bare) d = "(" + d + ")";
    return n + "/" + d;
}

Expr Expr::operator-() const {
    Expr e = *this;
    e.num_ = -e.num_;
    return e;
}

Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.den_ == b.den_) {
        if (a.den_.is_constant()) {
            Expr e;
            e.num_ = a.num_ + b.num_;
            return e;
        }
        return Expr::fraction(a.num_ + b.num_, a.den_);
    }
    if (a.den_.is_constant()) return Expr::fraction(a.num_ * b.den_ + b.num_, b.den_);
    if (b.den_.is_constant()) return Expr::fraction(a.num_ + b.num_ * a.den_, a.den_);
    Poly g = gcd(a.den_, b.den_);
    Poly da = *divide_exact(a.den_, g);
    Poly db = *divide_exact(b.den_, g);
    return Expr::fraction(a.num_ * db + b.num_ * da, a.den_ * db);
}

Expr operator-(const Expr& a, const Expr& b) { return a + (-b); }

Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_zero() || b.is_zero()) return Expr();
    if (a.is_polynomial() && b.is_polynomial()) {
        Poly n = a.num_ * b.num_;
        if (has_reducible_root(n)) return Expr::fraction(n, Poly(Rational(1)));
        Expr e;
        e.num_ = std::move(n);
        return e;
    }
    Poly g1 = gcd(a.num_, b.den_);
    Poly g2 = gcd(b.num_, a.den_);
    Poly n1 = g1.is_constant() ? a.num_ : *divide_exact(a.num_, g1);
    Poly d2 = g1.is_constant() ? b.den_ : *divide_exact(b.den_, g1);
    Poly n2 = g2.is_constant() ? b.num_ : *divide_exact(b.num_, g2);
    Poly d1 = g2.is_constant() ? a.den_ : *divide_exact(a.den_, g2);
    Poly n = n1 * n2, d = d1 * d2;
    if (has_reducible_root(n) || has_reducible_root(d)) return Expr::fraction(n, d);
    Expr e;
    Rational lc = d.leading_coef();
    e.num_ = n.scaled(1 / lc);
    e.den_ = d.is_constant() ? Poly(Rational(1)) : d.scaled(1 / lc);
    return e;
}

Expr operator/(const Expr& a, const Expr& b) {
    if (b.is_zero()) throw math_error("DomainError", "division by zero");
    Expr inv;
    Rational lc = b.num_.leading_coef();
    inv.num_ = b.den_.scaled(1 / lc);
    inv.den_ = b.num_.scaled(1 / lc);
    if (inv.den_.is_constant()) inv.den_ = Poly(Rational(1));
    return a * inv;
}

Expr pow(const Expr& e, long k) {
    if (k == 0) return Expr(1);
    if (k < 0) return Expr(1) / pow(e, -k);
    if (e.is_polynomial() && !has_reducible_root(e.num())) {
        Poly p = e.num().pow(static_cast<unsigned>(k));
        if (!has_reducible_root(p)) return Expr::fraction(p, Poly(Rational(1)));
    }
    Expr result(1), base = e;
    while (k) {
        if (k & 1) result *= base;
        k >>= 1;
        if (k) base *= base;
    }
    return result;
}

Expr pow(const Expr& e, const Rational& p) {
    if (p.get_den() == 1) return pow(e, p.get_num().get_si());
    long q = p.get_den().get_si();
    return pow(root(e, static_cast<int>(q)), p.get_num().get_si());
}

Expr root(const Expr& e, int q) {
    if (q == 1) return e;
    if (e.is_zero()) return e;
    if (auto c = e.constant_value()) {
        if (auto r = exact_root(*c, q)) return Expr(*r);
        if (*c < 0 && q % 2 == 0) throw math_error("DomainError", "even root of a negative constant");
    }
    return Expr::from_atom(make_kernel(AtomKind::Root, {e}, q));
}

Expr sqrt(const Expr& e) { return root(e, 2); }

Expr exp(const Expr& e) {
    if (e.is_zero()) return Expr(1);
    if (e.den().is_constant() && e.den().constant_value() == 1 && e.num().terms().size() == 1) {
        const Term& t = e.num().terms().front();
        if (t.coef == 1 && t.mono.size() == 1 && t.mono[0].exp == 1 && t.mono[0].atom->kind == AtomKind::Log)
            return t.mono[0].atom->args[0];
    }
    return Expr::from_atom(make_kernel(AtomKind::Exp, {e}));
}

Expr log(const Expr& e) {
    if (auto c = e.constant_value()) {
        if (*c <= 0) throw math_error("DomainError", "log of a non-positive constant");
        if (*c == 1) return Expr();
    }
    if (e.is_polynomial() && e.num().terms().size() == 1) {
        const Term& t = e.num().terms().front();
        if (t.coef == 1 && t.mono.size() == 1 && t.mono[0].exp == 1 && t.mono[0].atom->kind == AtomKind::Exp)
            return t.mono[0].atom->args[0];
    }
    return Expr::from_atom(make_kernel(AtomKind::Log, {e}));
}

Expr sin(const Expr& e) {
    if (e.is_zero()) return Expr();
    return Expr::from_atom(make_kernel(AtomKind::Sin, {e}));
}

Expr cos(const Expr& e) {
    if (e.is_zero()) return Expr(1);
    return Expr::from_atom(make_kernel(AtomKind::Cos, {e}));
}

Expr func(const std::string& name, const std::vector<Expr>& args, std::vector<int> dorders) {
    if (dorders.empty()) dorders.assign(args.size(), 0);
    if (dorders.size() != args.size()) throw model_error("ArityMismatch", "derivative orders for " + name);
    Atom a;
    a.kind = AtomKind::Func;
    a.fname = name;
    a.args = args;
    a.dorders = std::move(dorders);
    return Expr::from_atom(atom_table().intern(std::move(a)));
}

std::string to_string(Verdict::Kind k) {
    switch (k) {
        case Verdict::Kind::EqualCanonical: return "EqualCanonical";
        case Verdict::Kind::EqualNumeric: return "EqualNumeric";
        case Verdict::Kind::NotEqual: return "NotEqual";
    }
    return "?";
}

}  // namespace jetred
