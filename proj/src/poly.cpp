#include <algorithm>
#include <cassert>

#include "jetred/expr.hpp"

namespace jetred {

namespace {

Monomial mul_monomials(const Monomial& a, const Monomial& b) {
    Monomial out;
    out.reserve(a.size() + b.size());
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        int c = compare_atoms(a[i].atom, b[j].atom);
        if (c > 0) {
            out.push_back(a[i++]);
        } else if (c < 0) {
            out.push_back(b[j++]);
        } else {
            out.push_back({a[i].atom, a[i].exp + b[j].exp});
            ++i;
            ++j;
        }
    }
    for (; i < a.size(); ++i) out.push_back(a[i]);
    for (; j < b.size(); ++j) out.push_back(b[j]);
    return out;
}

// a / b if every exponent of b fits in a.
std::optional<Monomial> div_monomials(const Monomial& a, const Monomial& b) {
    Monomial out;
    std::size_t i = 0, j = 0;
    while (j < b.size()) {
        if (i == a.size()) return std::nullopt;
        int c = compare_atoms(a[i].atom, b[j].atom);
        if (c > 0) {
            out.push_back(a[i++]);
        } else if (c < 0) {
            return std::nullopt;
        } else {
            int e = a[i].exp - b[j].exp;
            if (e < 0) return std::nullopt;
            if (e > 0) out.push_back({a[i].atom, e});
            ++i;
            ++j;
        }
    }
    for (; i < a.size(); ++i) out.push_back(a[i]);
    return out;
}

bool same_monomial(const Monomial& a, const Monomial& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].atom != b[i].atom || a[i].exp != b[i].exp) return false;
    return true;
}

Poly merge_add(const Poly& a, const Poly& b, bool negate_b) {
    std::vector<Term> out;
    const auto& ta = a.terms();
    const auto& tb = b.terms();
    out.reserve(ta.size() + tb.size());
    std::size_t i = 0, j = 0;
    while (i < ta.size() || j < tb.size()) {
        int c;
        if (i == ta.size())
            c = -1;
        else if (j == tb.size())
            c = 1;
        else
            c = compare_monomials(ta[i].mono, tb[j].mono);
        if (c > 0) {
            out.push_back(ta[i++]);
        } else if (c < 0) {
            out.push_back(tb[j++]);
            if (negate_b) out.back().coef = -out.back().coef;
        } else {
            Rational s = negate_b ? Rational(ta[i].coef - tb[j].coef) : Rational(ta[i].coef + tb[j].coef);
            if (s != 0) out.push_back({ta[i].mono, s});
            ++i;
            ++j;
        }
    }
    return Poly::from_terms(std::move(out));
}


using UPoly = std::vector<Rational>;

void trim(UPoly& p) {
    while (!p.empty() && p.back() == 0) p.pop_back();
}

Rational atom_sample(AtomPtr a, int salt) {
    return Rational(static_cast<long>((a->hash >> (3 * salt)) % 23) + 2 + 5 * salt);
}

UPoly univariate_image(const Poly& p, AtomPtr v, int salt) {
    UPoly out(static_cast<std::size_t>(p.degree(v)) + 1);
    for (const auto& t : p.terms()) {
        Rational c = t.coef;
        int d = 0;
        for (const auto& f : t.mono) {
            if (f.atom == v) {
                d = f.exp;
            } else {
                Rational s = atom_sample(f.atom, salt);
                for (int k = 0; k < f.exp; ++k) c *= s;
            }
        }
        out[static_cast<std::size_t>(d)] += c;
    }
    return out;
}

int univariate_gcd_degree(UPoly a, UPoly b) {
    trim(a);
    trim(b);
    if (a.size() < b.size()) std::swap(a, b);
    while (!b.empty()) {
        while (a.size() >= b.size() && !a.empty()) {
            Rational q = a.back() / b.back();
            std::size_t shift = a.size() - b.size();
            for (std::size_t i = 0; i < b.size(); ++i) a[i + shift] -= q * b[i];
            a.pop_back();
            trim(a);
        }
        std::swap(a, b);
    }
    return static_cast<int>(a.size()) - 1;
}

// True when the images prove deg_v gcd(a, b) = 0.
bool coprime_in(const Poly& a, const Poly& b, AtomPtr v) {
    for (int salt = 0; salt < 2; ++salt) {
        UPoly ia = univariate_image(a, v, salt), ib = univariate_image(b, v, salt);
        if (ia.back() == 0 || ib.back() == 0) continue;
        return univariate_gcd_degree(ia, ib) == 0;
    }
    return false;
}

Poly prem(const Poly& a, const Poly& b, AtomPtr v) {
    int db = b.degree(v);
    auto bc = b.coefficients(v);
    const Poly& lb = bc.back();
    Poly r = a;
    while (!r.is_zero()) {
        int dr = r.degree(v);
        if (dr < db) break;
        Poly lr = r.coefficients(v).back();
        r = lb * r - lr * Poly::atom(v, dr - db) * b;
    }
    return r;
}

Poly content(const Poly& p, AtomPtr v) {
    auto cs = p.coefficients(v);
    std::sort(cs.begin(), cs.end(),
              [](const Poly& x, const Poly& y) { return x.terms().size() < y.terms().size(); });
    Poly g;
    for (const auto& c : cs) {
        if (c.is_zero()) continue;
        g = g.is_zero() ? monic(c) : gcd(g, c);
        if (g.is_constant()) return Poly(Rational(1));
    }
    return g;
}

Poly primitive_part(const Poly& p, AtomPtr v) {
    Poly c = content(p, v);
    if (c.is_constant()) return monic(p);
    auto q = divide_exact(p, c);
    assert(q);
    return monic(*q);
}

Poly monomial_gcd(const Poly& mono, const Poly& other) {
    // mono has one term; gcd is the common monomial factor.
    Monomial m = mono.terms().front().mono;
    for (const auto& t : other.terms()) {
        Monomial next;
        std::size_t i = 0, j = 0;
        while (i < m.size() && j < t.mono.size()) {
            int c = compare_atoms(m[i].atom, t.mono[j].atom);
            if (c > 0) {
                ++i;
            } else if (c < 0) {
                ++j;
            } else {
                next.push_back({m[i].atom, std::min(m[i].exp, t.mono[j].exp)});
                ++i;
                ++j;
            }
        }
        m = std::move(next);
        if (m.empty()) break;
    }
    return Poly::from_terms({Term{m, Rational(1)}});
}

}  // namespace

int compare_monomials(const Monomial& a, const Monomial& b) {
    std::size_t i = 0;
    for (;; ++i) {
        bool ea = i == a.size(), eb = i == b.size();
        if (ea && eb) return 0;
        if (ea) return -1;
        if (eb) return 1;
        int c = compare_atoms(a[i].atom, b[i].atom);
        if (c != 0) return c;
        if (a[i].exp != b[i].exp) return a[i].exp < b[i].exp ? -1 : 1;
    }
}

Poly::Poly(const Rational& c) {
    if (c != 0) terms_.push_back({{}, c});
}

Poly Poly::atom(AtomPtr a, int exp) {
    Poly p;
    if (exp == 0)
        p.terms_.push_back({{}, Rational(1)});
    else
        p.terms_.push_back({{{a, exp}}, Rational(1)});
    return p;
}

Poly Poly::from_terms(std::vector<Term> terms) {
    auto greater = [](const Term& x, const Term& y) { return compare_monomials(x.mono, y.mono) > 0; };
    if (!std::is_sorted(terms.begin(), terms.end(), greater)) std::sort(terms.begin(), terms.end(), greater);
    Poly p;
    for (auto& t : terms) {
        if (!p.terms_.empty() && same_monomial(p.terms_.back().mono, t.mono)) {
            p.terms_.back().coef += t.coef;
            if (p.terms_.back().coef == 0) p.terms_.pop_back();
        } else if (t.coef != 0) {
            p.terms_.push_back(std::move(t));
        }
    }
    return p;
}

bool Poly::is_constant() const {
    return terms_.empty() || (terms_.size() == 1 && terms_[0].mono.empty());
}

Rational Poly::constant_value() const { return terms_.empty() ? Rational(0) : terms_[0].coef; }

AtomPtr Poly::main_atom() const {
    if (terms_.empty() || terms_[0].mono.empty()) return nullptr;
    return terms_[0].mono[0].atom;
}

int Poly::degree(AtomPtr a) const {
    int d = 0;
    for (const auto& t : terms_)
        for (const auto& f : t.mono)
            if (f.atom == a) d = std::max(d, f.exp);
    return d;
}

bool Poly::contains(AtomPtr a) const {
    for (const auto& t : terms_)
        for (const auto& f : t.mono)
            if (f.atom == a) return true;
    return false;
}

void Poly::collect_atoms(std::set<AtomPtr>& out) const {
    for (const auto& t : terms_)
        for (const auto& f : t.mono) out.insert(f.atom);
}

Poly Poly::operator-() const {
    Poly p = *this;
    for (auto& t : p.terms_) t.coef = -t.coef;
    return p;
}

Poly operator+(const Poly& a, const Poly& b) { return merge_add(a, b, false); }
Poly operator-(const Poly& a, const Poly& b) { return merge_add(a, b, true); }

Poly operator*(const Poly& a, const Poly& b) {
    if (a.is_zero() || b.is_zero()) return Poly();
    if (a.is_constant()) return b.scaled(a.constant_value());
    if (b.is_constant()) return a.scaled(b.constant_value());
    std::vector<Term> out;
    out.reserve(a.terms().size() * b.terms().size());
    for (const auto& x : a.terms())
        for (const auto& y : b.terms()) out.push_back({mul_monomials(x.mono, y.mono), x.coef * y.coef});
    return Poly::from_terms(std::move(out));
}

Poly Poly::scaled(const Rational& c) const {
    if (c == 0) return Poly();
    Poly p = *this;
    for (auto& t : p.terms_) t.coef *= c;
    return p;
}

Poly Poly::pow(unsigned k) const {
    Poly result(Rational(1));
    Poly base = *this;
    while (k) {
        if (k & 1u) result = result * base;
        k >>= 1u;
        if (k) base = base * base;
    }
    return result;
}

Poly Poly::partial(AtomPtr a) const {
    std::vector<Term> out;
    for (const auto& t : terms_) {
        for (std::size_t i = 0; i < t.mono.size(); ++i) {
            if (t.mono[i].atom != a) continue;
            Term nt{t.mono, t.coef * t.mono[i].exp};
            if (--nt.mono[i].exp == 0) nt.mono.erase(nt.mono.begin() + static_cast<long>(i));
            out.push_back(std::move(nt));
        }
    }
    return from_terms(std::move(out));
}

std::vector<Poly> Poly::coefficients(AtomPtr a) const {
    std::vector<std::vector<Term>> buckets(static_cast<std::size_t>(degree(a)) + 1);
    for (const auto& t : terms_) {
        Term nt{{}, t.coef};
        int d = 0;
        for (const auto& f : t.mono) {
            if (f.atom == a)
                d = f.exp;
            else
                nt.mono.push_back(f);
        }
        buckets[static_cast<std::size_t>(d)].push_back(std::move(nt));
    }
    std::vector<Poly> out;
    out.reserve(buckets.size());
    for (auto& b : buckets) out.push_back(from_terms(std::move(b)));
    return out;
}

Poly Poly::from_coefficients(AtomPtr a, const std::vector<Poly>& coefs) {
    Poly out;
    for (std::size_t d = 0; d < coefs.size(); ++d) out = out + coefs[d] * atom(a, static_cast<int>(d));
    return out;
}

bool operator==(const Poly& a, const Poly& b) {
    if (a.terms_.size() != b.terms_.size()) return false;
    for (std::size_t i = 0; i < a.terms_.size(); ++i) {
        if (a.terms_[i].coef != b.terms_[i].coef) return false;
        if (!same_monomial(a.terms_[i].mono, b.terms_[i].mono)) return false;
    }
    return true;
}

int compare(const Poly& a, const Poly& b) {
    const auto& ta = a.terms();
    const auto& tb = b.terms();
    for (std::size_t i = 0; i < ta.size() && i < tb.size(); ++i) {
        int c = compare_monomials(ta[i].mono, tb[i].mono);
        if (c != 0) return c;
        int k = cmp(ta[i].coef, tb[i].coef);
        if (k != 0) return k < 0 ? -1 : 1;
    }
    if (ta.size() != tb.size()) return ta.size() < tb.size() ? -1 : 1;
    return 0;
}

std::optional<Poly> divide_exact(const Poly& a, const Poly& b) {
    if (b.is_zero()) return std::nullopt;
    if (b.is_constant()) return a.scaled(1 / b.constant_value());
    const Term& lb = b.terms().front();
    std::vector<Term> q;
    Poly r = a;
    while (!r.is_zero()) {
        const Term& lr = r.terms().front();
        auto m = div_monomials(lr.mono, lb.mono);
        if (!m) return std::nullopt;
        Term t{*m, lr.coef / lb.coef};
        r = r - Poly::from_terms({t}) * b;
        q.push_back(std::move(t));
    }
    return Poly::from_terms(std::move(q));
}

Poly monic(const Poly& p) {
    if (p.is_zero()) return p;
    return p.scaled(1 / p.leading_coef());
}

Poly gcd(const Poly& a, const Poly& b) {
    if (a.is_zero()) return monic(b);
    if (b.is_zero()) return monic(a);
    if (a.is_constant() || b.is_constant()) return Poly(Rational(1));
    if (a.terms().size() == 1) return monomial_gcd(a, b);
    if (b.terms().size() == 1) return monomial_gcd(b, a);
    if (a == b) return monic(a);

    std::set<AtomPtr> sa, sb;
    a.collect_atoms(sa);
    b.collect_atoms(sb);
    AtomPtr v = nullptr;
    for (auto it = sa.begin(); it != sa.end(); ++it) {
        if (sb.count(*it) && (v == nullptr || compare_atoms(*it, v) > 0)) v = *it;
    }
    if (v == nullptr) return Poly(Rational(1));

    // Variables appearing in only one argument divide out through the content.
    AtomPtr va = a.main_atom(), vb = b.main_atom();
    if (va != v && !b.contains(va)) return gcd(content(a, va), b);
    if (vb != v && !a.contains(vb)) return gcd(a, content(b, vb));

    if (coprime_in(a, b, v)) return gcd(content(a, v), content(b, v));

    Poly ca = content(a, v), cb = content(b, v);
    Poly c = gcd(ca, cb);
    Poly pa = ca.is_constant() ? monic(a) : monic(*divide_exact(a, ca));
    Poly pb = cb.is_constant() ? monic(b) : monic(*divide_exact(b, cb));
    if (pa.degree(v) < pb.degree(v)) std::swap(pa, pb);
    Poly g;
    for (;;) {
        Poly r = prem(pa, pb, v);
        if (r.is_zero()) {
            g = pb;
            break;
        }
        if (r.degree(v) == 0) {
            g = Poly(Rational(1));
            break;
        }
        pa = pb;
        pb = primitive_part(r, v);
    }
    return monic(c * g);
}

}  // namespace jetred
