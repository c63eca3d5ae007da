#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "jetred/linalg.hpp"
#include "jetred/parse.hpp"
#include "jetred/phi.hpp"

using namespace jetred;

namespace {

using Lambda = std::vector<std::vector<std::vector<Rational>>>;

Lambda zero_lambda(std::size_t h) {
    return Lambda(h, std::vector<std::vector<Rational>>(h, std::vector<Rational>(h, Rational(0))));
}

void set_bracket(Lambda& L, int i, int j, int k, Rational c) {
    L[i][j][k] = c;
    L[j][i][k] = -c;
}

struct Params {
    ParseContext ctx;
    explicit Params(std::set<std::string> names) { ctx.parameters = std::move(names); }
    Expr operator()(const std::string& s) const { return parse_expr(s, ctx); }
};

LieAlgebra algebra_of(const JetSpace& space, const std::vector<std::string>& gens, ParseContext& ctx) {
    ctx.space = space;
    std::vector<EvolutionField> g;
    for (const auto& s : gens) g.push_back(EvolutionField::scalar(parse_expr(s, ctx)));
    auto res = lie_closure(space, g);
    REQUIRE(res.closed);
    return res.algebra;
}

using RM = std::vector<std::vector<Rational>>;

RM commutator(const RM& a, const RM& b) {
    std::size_t n = a.size();
    RM out(n, std::vector<Rational>(n, Rational(0)));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t l = 0; l < n; ++l) out[i][j] += a[i][l] * b[l][j] - b[i][l] * a[l][j];
    return out;
}

std::vector<Rational> flat(const RM& m) {
    std::vector<Rational> v;
    for (const auto& row : m) v.insert(v.end(), row.begin(), row.end());
    return v;
}

RationalMatrix columns(const std::vector<RM>& basis) {
    std::size_t rows = basis.front().size() * basis.front().size();
    RationalMatrix A(rows, std::vector<Rational>(basis.size(), Rational(0)));
    for (std::size_t k = 0; k < basis.size(); ++k) {
        auto v = flat(basis[k]);
        for (std::size_t r = 0; r < rows; ++r) A[r][k] = v[r];
    }
    return A;
}

// Random subalgebra of upper-triangular 3x3 matrices spanned by elementary
// matrices, in a flag-preserving random basis, presented in shuffled order.
std::optional<Lambda> random_solvable(std::mt19937_64& rng) {
    // ordered so that each tail span is an ideal of the next larger one
    const std::vector<std::pair<int, int>> units = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {1, 2}, {0, 2}};
    auto unit = [](std::pair<int, int> ij) {
        RM m(3, std::vector<Rational>(3, Rational(0)));
        m[ij.first][ij.second] = 1;
        return m;
    };
    std::uniform_int_distribution<int> coin(0, 1), entry(-2, 2), scale(1, 3);
    std::vector<RM> chosen;
    for (const auto& u : units)
        if (coin(rng)) chosen.push_back(unit(u));
    std::size_t h = chosen.size();
    if (h < 2 || h > 5) return std::nullopt;
    RationalMatrix A = columns(chosen);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < h; ++j)
            if (!solve_rational(A, flat(commutator(chosen[i], chosen[j])))) return std::nullopt;
    std::vector<RM> basis(h, RM(3, std::vector<Rational>(3, Rational(0))));
    for (std::size_t k = 0; k < h; ++k)
        for (std::size_t l = k; l < h; ++l) {
            Rational c = l == k ? Rational(scale(rng)) : Rational(entry(rng));
            for (int r = 0; r < 3; ++r)
                for (int q = 0; q < 3; ++q) basis[k][r][q] += c * chosen[l][r][q];
        }
    std::shuffle(basis.begin(), basis.end(), rng);
    Lambda L = zero_lambda(h);
    RationalMatrix B = columns(basis);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < h; ++j) {
            auto c = solve_rational(B, flat(commutator(basis[i], basis[j])));
            REQUIRE(c.has_value());
            L[i][j] = *c;
        }
    return L;
}

}  // namespace

TEST_CASE("eigenvalues and matrix exponentials") {
    RM nil = {{0, 1}, {0, 0}};
    Params P({"t"});
    auto E = exp_matrix(nil, P("t"));
    REQUIRE(E.has_value());
    CHECK((*E)[0][1] == P("t"));
    CHECK((*E)[0][0] == Expr(1));

    RM tri = {{1, 2, 0}, {0, -1, 1}, {0, 0, Rational(1, 2)}};
    auto eig = rational_eigenvalues(tri);
    REQUIRE(eig.has_value());
    CHECK(eig->size() == 3);
    CHECK_FALSE(rational_eigenvalues(RM{{0, 2}, {1, 0}}).has_value());
    CHECK_FALSE(exp_matrix(RM{{0, -1}, {1, 0}}, P("t")).has_value());

    // Taylor-series oracle, with repeated eigenvalues in the mix
    std::vector<RM> cases = {tri, {{2, 1, 0}, {0, 2, 1}, {0, 0, 2}}, {{0, 1, 3}, {0, 0, 1}, {0, 0, 0}},
                             {{1, 1, 0}, {0, 1, 0}, {0, 0, -2}}};
    for (const auto& A : cases) {
        auto X = exp_matrix(A, P("t"));
        REQUIRE(X.has_value());
        double t = 0.37;
        std::size_t n = A.size();
        std::vector<std::vector<double>> term(n, std::vector<double>(n, 0.0)), sum = term;
        for (std::size_t i = 0; i < n; ++i) term[i][i] = sum[i][i] = 1.0;
        for (int k = 1; k < 40; ++k) {
            std::vector<std::vector<double>> next(n, std::vector<double>(n, 0.0));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    for (std::size_t l = 0; l < n; ++l) next[i][j] += term[i][l] * A[l][j].get_d();
                    next[i][j] *= t / k;
                }
            term = next;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) sum[i][j] += term[i][j];
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                CHECK(std::fabs(eval_numeric((*X)[i][j], {{JetCoord::parameter("t"), t}}) - sum[i][j]) < 1e-12);
    }
}

TEST_CASE("affine-quadratic triple") {
    ParseContext ctx;
    auto alg = algebra_of(JetSpace({"x"}, {"u"}), {"1", "u", "u^2"}, ctx);
    PhiTable t = solve_phi(alg, {0, 1, 2});
    Params P({"a1", "a2", "a3"});
    CHECK(t.phi[0] == std::vector<Expr>{Expr(-1), Expr(), Expr()});
    CHECK(t.phi[1] == std::vector<Expr>{P("a1"), Expr(-1), Expr()});
    CHECK(t.phi[2] == std::vector<Expr>{P("-a1^2"), P("2*a1"), P("-exp(-a2)")});
    CHECK(verify_phi(t, alg).kind == Verdict::Kind::EqualCanonical);

    SUBCASE("corrupted tables are rejected") {
        PhiTable bad = t;
        bad.phi[2][2] = -bad.phi[2][2];
        Verdict v = verify_phi(bad, alg);
        CHECK_FALSE(v.ok());
        CHECK(v.detail.find("boundary") != std::string::npos);

        PhiTable bad2 = t;
        bad2.phi[2][0] = P("-2*a1^2");
        Verdict w = verify_phi(bad2, alg);
        CHECK_FALSE(w.ok());
        CHECK(w.detail.find("bracket (1,3)") != std::string::npos);
    }
}

TEST_CASE("HJM table") {
    ParseContext ctx;
    auto alg = algebra_of(JetSpace({"x"}, {"v"}), {"v_x", "1", "v", "v^2"}, ctx);
    PhiTable t = solve_phi(alg, {0, 1, 2, 3}, {"a", "b", "c", "d"});
    Params P({"a", "b", "c", "d"});
    CHECK(t.phi[0] == std::vector<Expr>{Expr(-1), Expr(), Expr(), Expr()});
    CHECK(t.phi[1] == std::vector<Expr>{Expr(), Expr(-1), Expr(), Expr()});
    CHECK(t.phi[2] == std::vector<Expr>{Expr(), P("b"), Expr(-1), Expr()});
    CHECK(t.phi[3] == std::vector<Expr>{Expr(), P("-b^2"), P("2*b"), P("-exp(-c)")});
}

TEST_CASE("Hunter-Saxton table") {
    ParseContext ctx;
    ctx.space = JetSpace({"x"}, {"u", "v"});
    auto F = [&](const std::string& a, const std::string& b) {
        return EvolutionField({parse_expr(a, ctx), parse_expr(b, ctx)});
    };
    auto res = lie_closure(ctx.space, {F("x*u_x", "x*v_x + v"), F("u*u_x - v/2", "u*v_x"), F("u_x", "v_x"),
                                       F("1", "0"), F("0", "1")});
    REQUIRE(res.closed);
    PhiTable t = solve_phi(res.algebra, {0, 1, 2, 3, 4}, {"a", "b", "c", "d", "e"});
    Params P({"a", "b", "c", "d", "e"});
    CHECK(t.phi[0] == std::vector<Expr>{Expr(-1), Expr(), Expr(), Expr(), Expr()});
    CHECK(t.phi[1] == std::vector<Expr>{Expr(), P("-exp(-a)"), Expr(), Expr(), Expr()});
    CHECK(t.phi[2] == std::vector<Expr>{Expr(), Expr(), P("-exp(-a)"), Expr(), Expr()});
    CHECK(t.phi[4] == std::vector<Expr>{Expr(), Expr(), P("exp(a)*b^2/4"), P("exp(a)*b/2"), P("-exp(a)")});
    CHECK(verify_phi(t, res.algebra).ok());
}

TEST_CASE("drift variant") {
    SUBCASE("filtering generators") {
        ParseContext ctx;
        auto alg = algebra_of(JetSpace({"x"}, {"u"}), {"x*u_xx/2 + u_x/3", "x*u_x", "u"}, ctx);
        PhiTable t = solve_phi_with_drift(alg, 0, {1, 2}, {"a", "b", "c"});
        Params P({"a", "b", "c"});
        CHECK(t.drift == 0);
        CHECK(t.phi[0] == std::vector<Expr>{P("exp(-b)"), Expr(), Expr()});
        CHECK(t.phi[1] == std::vector<Expr>{Expr(), Expr(-1), Expr()});
        CHECK(t.phi[2] == std::vector<Expr>{Expr(), Expr(), Expr(-1)});
        CHECK(verify_phi(t, alg).ok());
    }
    SUBCASE("heat generators are abelian") {
        ParseContext ctx;
        auto alg = algebra_of(JetSpace({"x"}, {"u"}), {"u_xx/2", "u_x", "u"}, ctx);
        PhiTable t = solve_phi_with_drift(alg, 0, {1, 2});
        CHECK(t.phi[0] == std::vector<Expr>{Expr(1), Expr(), Expr()});
        CHECK(t.phi[1] == std::vector<Expr>{Expr(), Expr(-1), Expr()});
        CHECK(t.phi[2] == std::vector<Expr>{Expr(), Expr(), Expr(-1)});
    }
    SUBCASE("drift alone") {
        LieAlgebra alg = LieAlgebra::from_constants(zero_lambda(1));
        PhiTable t = solve_phi_with_drift(alg, 0, {});
        CHECK(t.phi[0][0] == Expr(1));
    }
}

TEST_CASE("abelian algebra") {
    LieAlgebra alg = LieAlgebra::from_constants(zero_lambda(4));
    PhiTable t = solve_phi(alg, {0, 1, 2, 3});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t l = 0; l < 4; ++l) CHECK(t.phi[i][l] == Expr(i == l ? -1 : 0));
    CHECK(verify_phi(t, alg).kind == Verdict::Kind::EqualCanonical);
}

TEST_CASE("algebras outside the function class") {
    Lambda L = zero_lambda(3);
    set_bracket(L, 0, 1, 2, 1);
    set_bracket(L, 0, 2, 1, -1);
    try {
        solve_phi(LieAlgebra::from_constants(L), {0, 1, 2});
        FAIL("expected PhiClassExceeded");
    } catch (const Error& e) {
        CHECK(std::string(e.kind()) == "PhiClassExceeded");
        CHECK(e.family() == ErrorFamily::Math);
    }
    CHECK_THROWS_AS(solve_phi(LieAlgebra::from_constants(L), {0, 1}), Error);
}

TEST_CASE("property: random solvable algebras are realized") {
    std::mt19937_64 rng(2024);
    int solved = 0;
    while (solved < 50) {
        auto L = random_solvable(rng);
        if (!L) continue;
        LieAlgebra alg = LieAlgebra::from_constants(*L);
        std::vector<int> order(L->size());
        std::iota(order.begin(), order.end(), 0);
        PhiTable t = solve_phi_search(alg, order);
        Verdict v = verify_phi(t, alg);
        CHECK(v.ok());
        ++solved;
    }
}
