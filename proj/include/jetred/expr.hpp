#pragma once

#include <gmpxx.h>

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "jetred/errors.hpp"

namespace jetred {

using Rational = mpq_class;

inline constexpr int kDefaultMaxOrder = 32;

struct JetCoord {
    enum class Kind { Independent, Dependent, Parameter };

    Kind kind = Kind::Parameter;
    int index = 0;
    std::vector<int> sigma;  // derivative orders per independent variable (Dependent only)
    std::string name;

    static JetCoord independent(int i, std::string name);
    static JetCoord dependent(int j, std::vector<int> sigma, std::string name);
    static JetCoord parameter(std::string name);

    int order() const;
    bool is_parameter() const { return kind == Kind::Parameter; }
};

int compare(const JetCoord& a, const JetCoord& b);
inline bool operator==(const JetCoord& a, const JetCoord& b) { return compare(a, b) == 0; }
inline bool operator!=(const JetCoord& a, const JetCoord& b) { return compare(a, b) != 0; }
inline bool operator<(const JetCoord& a, const JetCoord& b) { return compare(a, b) < 0; }

// Names of the independent and dependent variables; mints coordinates with
// printable names (u_x, u_xx, u_{(4)}, d(u, x, 1, y, 2)).
class JetSpace {
public:
    JetSpace() = default;
    JetSpace(std::vector<std::string> independents, std::vector<std::string> dependents,
             int max_order = kDefaultMaxOrder);

    int m() const { return static_cast<int>(independents_.size()); }
    int n() const { return static_cast<int>(dependents_.size()); }
    int max_order() const { return max_order_; }
    const std::vector<std::string>& independents() const { return independents_; }
    const std::vector<std::string>& dependents() const { return dependents_; }

    JetCoord x(int i) const;
    JetCoord u(int j) const;
    JetCoord derivative(int j, const std::vector<int>& sigma) const;
    // Shorthand for m = 1.
    JetCoord derivative(int j, int order) const;
    JetCoord shifted(const JetCoord& c, int i) const;  // u_sigma -> u_{sigma + 1_i}

    std::optional<int> independent_index(const std::string& name) const;
    std::optional<int> dependent_index(const std::string& name) const;

private:
    std::vector<std::string> independents_;
    std::vector<std::string> dependents_;
    int max_order_ = kDefaultMaxOrder;
};

class Expr;
struct Atom;
using AtomPtr = const Atom*;  // atoms are interned and live for the whole process

int compare_atoms(AtomPtr a, AtomPtr b);

struct Factor {
    AtomPtr atom;
    int exp;
};
using Monomial = std::vector<Factor>;  // sorted by atom, greatest first

int compare_monomials(const Monomial& a, const Monomial& b);

struct Term {
    Monomial mono;
    Rational coef;
};

// Sparse multivariate polynomial over Q, terms sorted by decreasing lex order.
class Poly {
public:
    Poly() = default;
    explicit Poly(const Rational& c);
    static Poly atom(AtomPtr a, int exp = 1);
    static Poly from_terms(std::vector<Term> terms);  // sorts and merges

    const std::vector<Term>& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    bool is_constant() const;
    Rational constant_value() const;  // requires is_constant()
    const Rational& leading_coef() const { return terms_.front().coef; }
    AtomPtr main_atom() const;  // greatest atom present, nullptr if constant
    int degree(AtomPtr a) const;
    bool contains(AtomPtr a) const;
    void collect_atoms(std::set<AtomPtr>& out) const;

    Poly operator-() const;
    friend Poly operator+(const Poly& a, const Poly& b);
    friend Poly operator-(const Poly& a, const Poly& b);
    friend Poly operator*(const Poly& a, const Poly& b);
    Poly scaled(const Rational& c) const;
    Poly pow(unsigned k) const;
    Poly partial(AtomPtr a) const;

    // Coefficients as polynomials in the remaining atoms, indexed by degree in a.
    std::vector<Poly> coefficients(AtomPtr a) const;
    static Poly from_coefficients(AtomPtr a, const std::vector<Poly>& coefs);

    friend bool operator==(const Poly& a, const Poly& b);
    friend bool operator!=(const Poly& a, const Poly& b) { return !(a == b); }

private:
    std::vector<Term> terms_;
};

int compare(const Poly& a, const Poly& b);
std::optional<Poly> divide_exact(const Poly& a, const Poly& b);
Poly gcd(const Poly& a, const Poly& b);
Poly monic(const Poly& p);

// Canonical rational function num/den over atoms. The denominator's leading
// coefficient is 1 and gcd(num, den) = 1.
class Expr {
public:
    Expr();
    Expr(int v);
    Expr(long v);
    Expr(const Rational& v);
    static Expr coord(const JetCoord& c);
    static Expr from_atom(AtomPtr a);
    static Expr fraction(const Poly& num, const Poly& den);

    const Poly& num() const { return num_; }
    const Poly& den() const { return den_; }

    bool is_zero() const { return num_.is_zero(); }
    bool is_polynomial() const { return den_.is_constant(); }
    bool is_constant() const { return num_.is_constant() && den_.is_constant(); }
    std::optional<Rational> constant_value() const;

    std::string str() const;

    Expr operator-() const;
    friend Expr operator+(const Expr& a, const Expr& b);
    friend Expr operator-(const Expr& a, const Expr& b);
    friend Expr operator*(const Expr& a, const Expr& b);
    friend Expr operator/(const Expr& a, const Expr& b);
    Expr& operator+=(const Expr& b) { return *this = *this + b; }
    Expr& operator-=(const Expr& b) { return *this = *this - b; }
    Expr& operator*=(const Expr& b) { return *this = *this * b; }

    friend bool operator==(const Expr& a, const Expr& b) { return a.num_ == b.num_ && a.den_ == b.den_; }
    friend bool operator!=(const Expr& a, const Expr& b) { return !(a == b); }

private:
    Poly num_;
    Poly den_;
};

int compare(const Expr& a, const Expr& b);

Expr pow(const Expr& e, long k);
Expr pow(const Expr& e, const Rational& p);
Expr exp(const Expr& e);
Expr log(const Expr& e);
Expr sin(const Expr& e);
Expr cos(const Expr& e);
Expr sqrt(const Expr& e);
Expr root(const Expr& e, int q);
// Opaque function f with derivative orders per argument (f, f', D_{1,0}f, ...).
Expr func(const std::string& name, const std::vector<Expr>& args, std::vector<int> dorders = {});

enum class AtomKind { Coord, Func, Exp, Log, Sin, Cos, Root };

struct Atom {
    AtomKind kind;
    JetCoord coord;
    std::vector<Expr> args;
    int q = 0;
    std::string fname;
    std::vector<int> dorders;
    std::size_t hash = 0;
    std::vector<JetCoord> support;  // sorted coordinates this atom depends on
};

Expr diff(const Expr& e, const JetCoord& c);
using Bindings = std::map<JetCoord, Expr>;
Expr substitute(const Expr& e, const Bindings& bindings);

std::set<JetCoord> free_coords(const Expr& e);
struct Analysis {
    std::set<JetCoord> free_coords;
    int max_order = 0;
};
Analysis analyze(const Expr& e);
bool depends_on(const Expr& e, const JetCoord& c);

using Assignment = std::map<JetCoord, double>;
// Numeric value of f^{(dorders)}(args) for opaque function atoms.
using FunctionTable =
    std::function<double(const std::string& name, const std::vector<int>& dorders, const std::vector<double>& args)>;

double eval_numeric(const Expr& e, const Assignment& assignment, const FunctionTable& functions = {});

struct Verdict {
    enum class Kind { EqualCanonical, EqualNumeric, NotEqual };
    Kind kind = Kind::EqualCanonical;
    Assignment witness;
    std::string detail;

    bool ok() const { return kind != Kind::NotEqual; }
    bool canonical() const { return kind == Kind::EqualCanonical; }
};
std::string to_string(Verdict::Kind k);

Verdict equal(const Expr& a, const Expr& b, int samples = 8);
// Numeric comparison of a against b with subs applied, without forming the substitution.
Verdict equal_composed(const Expr& a, const Expr& b, const Bindings& subs, int samples = 8);

// Smooth deterministic stand-ins for opaque functions used by equal().
double test_function(const std::string& name, const std::vector<int>& dorders, const std::vector<double>& args);

// Bytecode evaluator with coordinates bound to slots.
class CompiledExpr {
public:
    CompiledExpr() = default;
    CompiledExpr(const Expr& e, const std::vector<JetCoord>& slots, FunctionTable functions = {});
    double operator()(const double* values) const;
    double operator()(const std::vector<double>& values) const { return (*this)(values.data()); }

private:
    struct Node {
        AtomKind kind;
        int slot = -1;
        int q = 0;
        std::vector<int> arg_exprs;
        std::string fname;
        std::vector<int> dorders;
    };
    struct PolyCode {
        std::vector<double> coefs;
        std::vector<std::vector<std::pair<int, int>>> factors;
    };
    struct Rat {
        PolyCode num, den;
    };
    int compile_expr(const Expr& e, const std::vector<JetCoord>& slots, std::map<AtomPtr, int>& seen);
    PolyCode compile_poly(const Poly& p, const std::vector<JetCoord>& slots, std::map<AtomPtr, int>& seen);
    double eval_poly(const PolyCode& p, const std::vector<double>& regs) const;
    double eval_rat(int idx, const std::vector<double>& regs) const;

    std::vector<Node> nodes_;
    std::vector<Rat> exprs_;
    int root_ = -1;
    FunctionTable functions_;
};

}  // namespace jetred
