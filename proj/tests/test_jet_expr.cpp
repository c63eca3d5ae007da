#include <cmath>
#include <random>

#include "doctest.h"
#include "jetred/parse.hpp"

using namespace jetred;

namespace {

ParseContext scalar_context() {
    ParseContext ctx;
    ctx.space = JetSpace({"x"}, {"u"});
    ctx.parameters = {"a", "b", "d"};
    ctx.functions = {{"f", 1}};
    return ctx;
}

Expr P(const std::string& s) {
    static ParseContext ctx = scalar_context();
    return parse_expr(s, ctx);
}

}  // namespace

TEST_CASE("parser maps the grammar onto canonical expressions") {
    auto ctx = scalar_context();
    Expr e = P("x*u_x");
    CHECK(e == Expr::coord(ctx.space.x(0)) * Expr::coord(ctx.space.derivative(0, 1)));
    CHECK(P("u/(1 - d*u)") == P("-u/(d*u - 1)"));
    Expr k = P("u_{(3)} + exp(-a)*u_x");
    auto info = analyze(k);
    CHECK(info.max_order == 3);
    CHECK(info.free_coords.count(JetCoord::parameter("a")) == 1);
    CHECK(P("u_xxx") == P("u_{(3)}"));
    CHECK(P("d(u, x, 2)") == P("u_xx"));
    CHECK(P("0.25") == P("1/4"));
    CHECK(P("2^-2") == P("1/4"));
    CHECK(P("-a^2") == -(P("a") * P("a")));
}

TEST_CASE("parser errors carry kind and position") {
    CHECK_THROWS_AS(P("x + * u"), SyntaxError);
    try {
        P("x + ");
        FAIL("expected failure");
    } catch (const SyntaxError& e) {
        CHECK(e.position() == 4);
    }
    try {
        P("x + zeta");
        FAIL("expected failure");
    } catch (const Error& e) {
        CHECK(e.kind() == "UnknownIdentifier");
    }
    CHECK_THROWS_AS(P("(x + u"), SyntaxError);
}

TEST_CASE("partial derivatives treat other coordinates as constants") {
    auto ctx = scalar_context();
    auto ux = ctx.space.derivative(0, 1);
    auto u = ctx.space.u(0);
    CHECK(diff(P("x*u_x"), ux) == P("x"));
    CHECK(diff(P("u*u_x"), u) == P("u_x"));
    Expr q = diff(P("u/(1 - d*u)"), u);
    CHECK(q == P("1/(1 - d*u)^2"));

    // central-difference oracle at random rational points
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-0.4, 0.4);
    for (int i = 0; i < 8; ++i) {
        double uu = U(rng), dd = U(rng), h = 1e-6;
        auto g = [&](double v) { return v / (1 - dd * v); };
        double fd = (g(uu + h) - g(uu - h)) / (2 * h);
        double sym = eval_numeric(q, {{u, uu}, {JetCoord::parameter("d"), dd}});
        CHECK(std::fabs(fd - sym) < 1e-7);
    }
}

TEST_CASE("kernel derivatives follow the chain rule") {
    auto ctx = scalar_context();
    auto u = ctx.space.u(0);
    CHECK(diff(P("exp(2*u)"), u) == P("2*exp(2*u)"));
    CHECK(diff(P("log(u)"), u) == P("1/u"));
    CHECK(diff(P("sin(u^2)"), u) == P("2*u*cos(u^2)"));
    CHECK(equal(diff(P("sqrt(u)"), u), P("1/(2*sqrt(u))")).ok());
    CHECK(diff(P("f(x - a)"), JetCoord::parameter("a")) == -func("f", {P("x - a")}, {1}));
}

TEST_CASE("substitution is simultaneous") {
    auto ctx = scalar_context();
    auto u = ctx.space.u(0);
    auto ux = ctx.space.derivative(0, 1);
    CHECK(substitute(P("u^2"), {{u, P("u + b")}}) == P("u^2 + 2*b*u + b^2"));
    CHECK(substitute(P("u_x"), {{ux, P("u_x/(1 - a*u_x)")}}) == P("u_x/(1 - a*u_x)"));
    CHECK(substitute(P("x - a"), {{JetCoord::parameter("a"), Expr()}}) == P("x"));
    CHECK(substitute(P("u*x"), {{u, P("x")}, {ctx.space.x(0), P("u")}}) == P("u*x"));
    CHECK(substitute(P("exp(a*u)/(1 + u)"), {{u, P("1/b")}}) == P("b*exp(a/b)/(b + 1)"));
}

TEST_CASE("equality verdicts are three-valued") {
    CHECK(equal(P("u^2 + 2*b*u + b^2"), P("(u + b)^2")).kind == Verdict::Kind::EqualCanonical);
    CHECK(equal(P("exp(a + b)"), P("exp(a)*exp(b)")).kind == Verdict::Kind::EqualNumeric);
    auto v = equal(P("u_x"), P("u"));
    CHECK(v.kind == Verdict::Kind::NotEqual);
    CHECK_FALSE(v.witness.empty());
    CHECK(equal(P("log(exp(u))"), P("u")).canonical());
}

TEST_CASE("numeric evaluation") {
    auto ctx = scalar_context();
    auto x = ctx.space.x(0);
    auto u = ctx.space.u(0);
    auto ux = ctx.space.derivative(0, 1);
    auto d = JetCoord::parameter("d");
    auto a = JetCoord::parameter("a");
    CHECK(eval_numeric(P("x*u_x"), {{x, 2}, {ux, 3}}) == doctest::Approx(6));
    CHECK(eval_numeric(P("u/(1 - d*u)"), {{u, 1}, {d, 0.5}}) == doctest::Approx(2));
    CHECK(eval_numeric(P("exp(-a)"), {{a, 0}}) == doctest::Approx(1));
    CHECK_THROWS(eval_numeric(P("x*u"), {{x, 1}}));
    CHECK_THROWS(eval_numeric(P("log(u)"), {{u, -1}}));

    CompiledExpr c(P("u/(1 - d*u) + exp(-a)"), {u, d, a});
    CHECK(c(std::vector<double>{1, 0.5, 0}) == doctest::Approx(3));
}

TEST_CASE("analysis reports support and order") {
    auto r = analyze(P("x*u_x"));
    CHECK(r.free_coords.size() == 2);
    CHECK(r.max_order == 1);
    CHECK(analyze(P("u*u_xxx")).max_order == 3);
    auto c = analyze(P("5"));
    CHECK(c.free_coords.empty());
    CHECK(c.max_order == 0);
}

TEST_CASE("canonical forms cancel common factors") {
    CHECK(P("(u^2 - b^2)/(u - b)") == P("u + b"));
    CHECK(P("(x*u + x)/(x*u_x + x)") == P("(u + 1)/(u_x + 1)"));
    CHECK(P("1/(1/u + 1/a)") == P("a*u/(a + u)"));
    CHECK(P("sqrt(u)^2") == P("u"));
    CHECK(P("sqrt(4)") == P("2"));
    CHECK(P("(a*u - a*b + u^2 - b*u)/(u^2 - b^2)") == P("(a + u)/(u + b)"));
}

namespace {

Expr random_expr(std::mt19937_64& rng, int depth) {
    static const char* leaves[] = {"x", "u", "u_x", "u_xx", "a", "b", "2", "1/3"};
    std::uniform_int_distribution<int> pick(0, 7), op(0, 4);
    if (depth == 0) return P(leaves[pick(rng)]);
    Expr l = random_expr(rng, depth - 1), r = random_expr(rng, depth - 1);
    switch (op(rng)) {
        case 0: return l + r;
        case 1: return l - r;
        case 2: return l * r;
        case 3: return l * r + Expr(1);
        default: return r.is_zero() ? l : l / (r * r + Expr(1));
    }
}

}  // namespace

TEST_CASE("property: partial derivatives commute") {
    auto ctx = scalar_context();
    std::mt19937_64 rng(3);
    std::vector<JetCoord> cs = {ctx.space.x(0), ctx.space.u(0), ctx.space.derivative(0, 1), JetCoord::parameter("a")};
    for (int i = 0; i < 20; ++i) {
        Expr e = random_expr(rng, 3);
        const auto& c1 = cs[static_cast<std::size_t>(i) % cs.size()];
        const auto& c2 = cs[static_cast<std::size_t>(i + 1) % cs.size()];
        CHECK(diff(diff(e, c1), c2) == diff(diff(e, c2), c1));
    }
}

TEST_CASE("property: substitution composes and canonical form is stable") {
    auto ctx = scalar_context();
    std::mt19937_64 rng(5);
    auto u = ctx.space.u(0);
    auto a = JetCoord::parameter("a");
    auto b = JetCoord::parameter("b");
    for (int i = 0; i < 20; ++i) {
        Expr e = random_expr(rng, 3);
        Expr s1 = substitute(substitute(e, {{u, P("u + a")}}), {{a, P("b^2")}});
        Expr s2 = substitute(e, {{u, P("u + b^2")}, {a, P("b^2")}});
        CHECK(s1 == s2);
        CHECK(substitute(e, {{b, Expr::coord(b)}}) == e);
        Assignment pt = {{ctx.space.x(0), 0.3}, {u, -0.7}, {ctx.space.derivative(0, 1), 1.1},
                         {ctx.space.derivative(0, 2), 0.4}, {a, 0.9}, {b, -1.3}};
        double v1 = eval_numeric(e, pt);
        double v2 = eval_numeric(Expr::fraction(e.num(), e.den()), pt);
        CHECK(std::fabs(v1 - v2) <= 1e-12 * std::max(1.0, std::fabs(v1)));
    }
}
