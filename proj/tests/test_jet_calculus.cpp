#include <chrono>
#include <cmath>
#include <random>

#include "doctest.h"
#include "jetred/calculus.hpp"
#include "jetred/parse.hpp"

using namespace jetred;

namespace {

struct Scalar {
    ParseContext ctx;
    Scalar() {
        ctx.space = JetSpace({"x"}, {"u"});
        ctx.parameters = {"a", "b"};
    }
    Expr operator()(const std::string& s) const { return parse_expr(s, ctx); }
    EvolutionField F(const std::string& s) const { return EvolutionField::scalar((*this)(s)); }
    const JetSpace& space() const { return ctx.space; }
};

struct TwoComponent {
    ParseContext ctx;
    TwoComponent() { ctx.space = JetSpace({"x"}, {"u", "v"}); }
    EvolutionField F(const std::string& a, const std::string& b) const {
        return EvolutionField({parse_expr(a, ctx), parse_expr(b, ctx)});
    }
    const JetSpace& space() const { return ctx.space; }
};

}  // namespace

TEST_CASE("total derivatives") {
    Scalar S;
    CHECK(total_derivative(S.space(), S("u"), 0) == S("u_x"));
    CHECK(total_derivative(S.space(), S("x*u_x"), 0) == S("u_x + x*u_xx"));
    CHECK(total_derivative_multi(S.space(), S("u"), {2}) == S("u_xx"));
    CHECK(total_derivative_multi(S.space(), S("u*u_x"), {2}) == S("u*u_xxx + 3*u_x*u_xx"));
    CHECK(total_derivative_multi(S.space(), S("u*u_x"), {0}) == S("u*u_x"));

    // finite-difference oracle along u = sin(x)
    Expr d = total_derivative(S.space(), S("u*u_x"), 0);
    double x0 = 0.3, h = 1e-5;
    auto F = [](double x) { return std::sin(x) * std::cos(x); };
    double fd = (F(x0 + h) - F(x0 - h)) / (2 * h);
    double sym = eval_numeric(d, {{S.space().u(0), std::sin(x0)},
                                  {S.space().derivative(0, 1), std::cos(x0)},
                                  {S.space().derivative(0, 2), -std::sin(x0)}});
    CHECK(std::fabs(fd - sym) <= 1e-8);
}

TEST_CASE("total derivative respects the order cap") {
    ParseContext ctx;
    ctx.space = JetSpace({"x"}, {"u"}, 3);
    Expr e = parse_expr("u_xxx", ctx);
    try {
        total_derivative(ctx.space, e, 0);
        FAIL("expected OrderCapExceeded");
    } catch (const Error& err) {
        CHECK(err.kind() == "OrderCapExceeded");
    }
}

TEST_CASE("evolution fields act through prolonged components") {
    Scalar S;
    CHECK(evolution_apply(S.space(), S.F("x*u_x"), S("u_x")) == S("x*u_xx + u_x"));
    CHECK(evolution_apply(S.space(), S.F("u^3 + u_xx"), S("x")).is_zero());
    CHECK(evolution_apply(S.space(), S.F("u*u_x"), S("u_xx")) == S("u*u_xxx + 3*u_x*u_xx"));
}

TEST_CASE("evolution brackets") {
    Scalar S;
    CHECK(evolution_bracket(S.space(), S.F("1"), S.F("u")) == S.F("1"));
    CHECK(evolution_bracket(S.space(), S.F("u*u_xx"), S.F("u*u_xx")).is_zero());
    TwoComponent T;
    auto g2 = T.F("u*u_x - v/2", "u*v_x");
    auto g5 = T.F("0", "1");
    CHECK(evolution_bracket(T.space(), g2, g5) == T.F("1/2", "0"));
}

TEST_CASE("decomposition in a basis") {
    Scalar S;
    auto c = decompose_in_basis(S.F("2*u + 3"), {S.F("1"), S.F("u")});
    REQUIRE(c);
    CHECK((*c)[0] == 3);
    CHECK((*c)[1] == 2);
    CHECK_FALSE(decompose_in_basis(S.F("u_x"), {S.F("1"), S.F("u")}));
    // non-constant coefficients are rejected
    CHECK_FALSE(decompose_in_basis(S.F("u^2"), {S.F("1"), S.F("u")}));
    CHECK_FALSE(decompose_in_basis(S.F("x*u"), {S.F("u")}));
    // rational generators
    auto r = decompose_in_basis(S.F("(1 + 2*u)/(1 - u)"), {S.F("1/(1 - u)"), S.F("u/(1 - u)")});
    REQUIRE(r);
    CHECK((*r)[0] == 1);
    CHECK((*r)[1] == 2);

    ParseContext hjm;
    hjm.space = JetSpace({"x"}, {"v"});
    auto G = [&](const std::string& s) { return EvolutionField::scalar(parse_expr(s, hjm)); };
    auto br = evolution_bracket(hjm.space, G("1"), G("v^2"));
    auto d = decompose_in_basis(br, {G("v_x"), G("1"), G("v"), G("v^2")});
    REQUIRE(d);
    CHECK((*d)[2] == 2);
    CHECK((*d)[0] == 0);
}

TEST_CASE("closure of the affine-quadratic algebra") {
    Scalar S;
    auto t0 = std::chrono::steady_clock::now();
    auto res = lie_closure(S.space(), {S.F("1"), S.F("u"), S.F("u^2")});
    REQUIRE(res.closed);
    const auto& L = res.algebra.lambda;
    CHECK(res.algebra.dim() == 3);
    CHECK(L[0][1] == std::vector<Rational>{1, 0, 0});
    CHECK(L[0][2] == std::vector<Rational>{0, 2, 0});
    CHECK(L[1][2] == std::vector<Rational>{0, 0, 1});
    CHECK(L[1][0] == std::vector<Rational>{-1, 0, 0});
    CHECK(verify_algebra(S.space(), res.algebra).ok());
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 1.0);
}

TEST_CASE("closure of the HJM generators") {
    ParseContext hjm;
    hjm.space = JetSpace({"x"}, {"v"});
    auto G = [&](const std::string& s) { return EvolutionField::scalar(parse_expr(s, hjm)); };
    auto res = lie_closure(hjm.space, {G("v_x"), G("1"), G("v"), G("v^2")});
    REQUIRE(res.closed);
    CHECK(res.algebra.dim() == 4);
    const auto& L = res.algebra.lambda;
    std::vector<Rational> zero(4, Rational(0));
    for (int i = 1; i < 4; ++i) CHECK(L[0][static_cast<std::size_t>(i)] == zero);
    CHECK(L[1][2] == std::vector<Rational>{0, 1, 0, 0});
    CHECK(L[1][3] == std::vector<Rational>{0, 0, 2, 0});
    CHECK(L[2][3] == std::vector<Rational>{0, 0, 0, 1});
}

TEST_CASE("closure of the Hunter-Saxton generators") {
    TwoComponent T;
    std::vector<EvolutionField> g = {T.F("x*u_x", "x*v_x + v"), T.F("u*u_x - v/2", "u*v_x"), T.F("u_x", "v_x"),
                                     T.F("1", "0"), T.F("0", "1")};
    auto res = lie_closure(T.space(), g);
    REQUIRE(res.closed);
    CHECK(res.algebra.dim() == 5);
    // expected table, row i column j holds [G_i, G_j]
    Rational h(1, 2);
    std::vector<std::vector<std::vector<Rational>>> table(5, std::vector<std::vector<Rational>>(5, std::vector<Rational>(5, 0)));
    auto set = [&](int i, int j, int k, Rational c) { table[i - 1][j - 1][k - 1] = c; };
    set(1, 2, 2, 1);  set(1, 3, 3, 1);  set(1, 5, 5, -1);
    set(2, 1, 2, -1); set(2, 4, 3, -1); set(2, 5, 4, h);
    set(3, 1, 3, -1);
    set(4, 2, 3, 1);
    set(5, 1, 5, 1);  set(5, 2, 4, -h);
    CHECK(res.algebra.lambda == table);
    CHECK(verify_algebra(T.space(), res.algebra).ok());
}

TEST_CASE("non-closure exhibits the factorial chain") {
    Scalar S;
    auto F = S.F("x*u_xx");
    EvolutionField cur = S.F("u_x");
    long fact = 1;
    for (int n = 1; n <= 4; ++n) {
        fact *= n;
        cur = evolution_bracket(S.space(), F, cur);
        // iterated bracket of F with u_x, normalised by the previous factorials
        EvolutionField expected = S.F(std::to_string(fact) + "*u_{(" + std::to_string(n + 1) + ")}");
        CHECK(cur == expected);
    }
    auto res = lie_closure(S.space(), {S.F("x*u_xx"), S.F("u_x")});
    CHECK_FALSE(res.closed);
    CHECK(res.witness.find("[G1,") == 0);
    CHECK(res.witness_field.order() > 3);
}

namespace {

Expr random_field_expr(std::mt19937_64& rng, const Scalar& S) {
    static const char* pieces[] = {"u", "u_x", "u_xx", "x", "u^2", "x*u_x", "u*u_x", "1", "a*u"};
    std::uniform_int_distribution<int> pick(0, 8), coef(-3, 3);
    Expr e;
    for (int k = 0; k < 3; ++k) e += Expr(coef(rng)) * S(pieces[pick(rng)]);
    return e;
}

}  // namespace

TEST_CASE("property: total derivatives commute with evolution fields") {
    Scalar S;
    std::mt19937_64 rng(17);
    for (int t = 0; t < 15; ++t) {
        auto F = EvolutionField::scalar(random_field_expr(rng, S));
        Expr G = random_field_expr(rng, S);
        CHECK(total_derivative(S.space(), evolution_apply(S.space(), F, G), 0) ==
              evolution_apply(S.space(), F, total_derivative(S.space(), G, 0)));
    }
}

TEST_CASE("property: bracket is bilinear, antisymmetric and satisfies Jacobi") {
    Scalar S;
    std::mt19937_64 rng(23);
    const auto& sp = S.space();
    for (int t = 0; t < 10; ++t) {
        auto A = EvolutionField::scalar(random_field_expr(rng, S));
        auto B = EvolutionField::scalar(random_field_expr(rng, S));
        auto C = EvolutionField::scalar(random_field_expr(rng, S));
        CHECK(evolution_bracket(sp, A, B) == Expr(-1) * evolution_bracket(sp, B, A));
        CHECK(evolution_bracket(sp, A, B + Expr(2) * C) ==
              evolution_bracket(sp, A, B) + Expr(2) * evolution_bracket(sp, A, C));
        auto j = evolution_bracket(sp, A, evolution_bracket(sp, B, C)) +
                 evolution_bracket(sp, B, evolution_bracket(sp, C, A)) +
                 evolution_bracket(sp, C, evolution_bracket(sp, A, B));
        CHECK(j.is_zero());
    }
}
