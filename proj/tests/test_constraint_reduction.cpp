#include <cmath>

#include "doctest.h"
#include "jetred/oracle.hpp"
#include "jetred/parse.hpp"
#include "jetred/reduction.hpp"

using namespace jetred;

namespace {

std::string replace_line(std::string text, const std::string& prefix, const std::string& line) {
    auto p = text.find(prefix);
    REQUIRE(p != std::string::npos);
    auto e = text.find('\n', p);
    return text.replace(p, e - p, line);
}

Expr ex(const SPDEModel& m, const std::string& s) { return parse_expr(s, m.context()); }

int state_index(const ReducedSystem& s, const std::string& name) {
    for (std::size_t i = 0; i < s.state.size(); ++i)
        if (s.state[i].name == name) return static_cast<int>(i);
    FAIL("no state " << name);
    return -1;
}

int driver_index(const ReducedSystem& s, const std::string& name) {
    for (std::size_t i = 0; i < s.drivers.size(); ++i)
        if (s.drivers[i] == name) return static_cast<int>(i);
    FAIL("no driver " << name);
    return -1;
}

const Expr& coef(const ReducedSystem& s, const std::string& driver, const std::string& state) {
    return s.coeffs[driver_index(s, driver)][state_index(s, state)];
}

std::string filtering_text(const std::string& sigma, const std::string& alpha, const std::string& beta,
                           const std::string& gamma, const std::string& delta) {
    std::string t = bundled_model("filtering");
    t = replace_line(t, "sigma =", "sigma = " + sigma);
    t = replace_line(t, "alpha =", "alpha = " + alpha);
    t = replace_line(t, "beta =", "beta = " + beta);
    t = replace_line(t, "gamma =", "gamma = " + gamma);
    return replace_line(t, "delta =", "delta = " + delta);
}

const char* kScalarIto = R"([model]
name = scalar
[variables]
independent = x
dependent = u
[reduction]
form = ito
params = a, b
[generators]
G1 = u
G2 = 1
[drivers]
dt = time: 0*G1
W = wiener: G1 + G2
[initial]
u = exp(x)
[domain]
x = 0, 1
)";

}  // namespace

TEST_CASE("filtering tangency coefficients") {
    SPDEModel m = parse_model(bundled_model("filtering"));
    auto gens = m.generators;
    auto t = ode_constraint_tangency(m.space, gens, m.gen_names, *m.constraint);
    // coefficients are ordered (mu, lambda)
    auto at = [&](const std::string& g) { return static_cast<std::size_t>(m.generator_index(g)); };
    CHECK(equal(t.mu_field[at("F")][1], ex(m, "-lambda^2 + 2*mu")).canonical());
    CHECK(equal(t.mu_field[at("F")][0], ex(m, "-lambda*mu")).canonical());
    CHECK(equal(t.mu_field[at("G4")][1], ex(m, "-2")).canonical());
    CHECK(equal(t.mu_field[at("G4")][0], ex(m, "-lambda")).canonical());
    CHECK(equal(t.mu_field[at("G1")][1], ex(m, "lambda")).canonical());
    CHECK(equal(t.mu_field[at("G1")][0], ex(m, "2*mu")).canonical());
    for (int k = 0; k < 2; ++k) {
        CHECK(t.mu_field[at("G2")][static_cast<std::size_t>(k)].is_zero());
        CHECK(t.mu_field[at("G3")][static_cast<std::size_t>(k)].is_zero());
    }
    // boundary rows at x = 0: G3 acts as [[0,1],[-mu,-lambda]], G1 as [[0,0],[0,1]]
    CHECK(equal(t.boundary[at("G3")][0], ex(m, "u_x")).canonical());
    CHECK(equal(t.boundary[at("G3")][1], ex(m, "-mu*u - lambda*u_x")).canonical());
    CHECK(t.boundary[at("G1")][0].is_zero());
    CHECK(equal(t.boundary[at("G1")][1], ex(m, "u_x")).canonical());
}

TEST_CASE("constraint reduction rewrites high derivatives") {
    SPDEModel m = parse_model(bundled_model("filtering"));
    Expr r = reduce_modulo_constraint(m.space, ex(m, "u_xxx"), *m.constraint);
    // u_xxx = -lambda u_xx - mu u_x = (lambda^2 - mu) u_x + lambda mu u
    CHECK(equal(r, ex(m, "(lambda^2 - mu)*u_x + lambda*mu*u")).canonical());
}

TEST_CASE("translation leaves the coefficients fixed") {
    SPDEModel m = parse_model(bundled_model("filtering"));
    auto t = ode_constraint_tangency(m.space, {EvolutionField::scalar(ex(m, "u_x/3"))}, {"T"}, *m.constraint);
    CHECK(t.mu_field[0][0].is_zero());
    CHECK(t.mu_field[0][1].is_zero());
}

TEST_CASE("tangency rejects generators that leave the manifold") {
    SPDEModel m = parse_model(bundled_model("filtering"));
    CHECK_THROWS_WITH_AS(ode_constraint_tangency(m.space, {EvolutionField::scalar(ex(m, "u^2"))}, {"Q"},
                                                 *m.constraint),
                         doctest::Contains("CoefficientInconsistency"), Error);
}

TEST_CASE("filtering SDE for the moving coefficients and boundary state") {
    struct Case {
        const char *sigma, *alpha, *beta, *gamma, *delta;
    };
    for (const Case& c : {Case{"1", "1/10", "1/5", "1/20", "0"}, Case{"3/2", "-1/3", "2", "-1/7", "5/4"}}) {
        SPDEModel m = parse_model(filtering_text(c.sigma, c.alpha, c.beta, c.gamma, c.delta));
        ReducedSystem s = build_reduced_sde(m);
        auto sub = [&](std::string e) {
            for (auto [k, v] : {std::pair{"SIG", c.sigma}, {"ALP", c.alpha}, {"BET", c.beta}, {"GAM", c.gamma},
                                {"DEL", c.delta}})
                for (auto p = e.find(k); p != std::string::npos; p = e.find(k))
                    e.replace(p, 3, std::string("(") + v + ")");
            return ex(m, e);
        };
        CHECK(equal(coef(s, "dt", "lambda"), sub("SIG^2/2*(-lambda^2 + 2*mu) + ALP*lambda - 2*GAM")).canonical());
        CHECK(equal(coef(s, "dt", "mu"), sub("-SIG^2/2*lambda*mu + 2*ALP*mu - GAM*lambda")).canonical());
        CHECK(equal(coef(s, "S2", "lambda"), ex(m, "lambda")).canonical());
        CHECK(equal(coef(s, "S2", "mu"), ex(m, "2*mu")).canonical());
        CHECK(coef(s, "S1", "lambda").is_zero());
        CHECK(coef(s, "S1", "mu").is_zero());
        CHECK(equal(coef(s, "dt", "u"), sub("DEL*u + BET*u_x")).canonical());
        CHECK(equal(coef(s, "dt", "u_x"),
                    sub("(-mu*(SIG^2/2 + BET) + GAM)*u + (-lambda*(SIG^2/2 + BET) + ALP + DEL)*u_x"))
                  .canonical());
        CHECK(equal(coef(s, "S1", "u"), ex(m, "u_x")).canonical());
        CHECK(equal(coef(s, "S1", "u_x"), ex(m, "-mu*u - lambda*u_x")).canonical());
        CHECK(coef(s, "S2", "u").is_zero());
        CHECK(equal(coef(s, "S2", "u_x"), ex(m, "u_x")).canonical());
    }
}

TEST_CASE("zero coefficients keep the constrained state constant") {
    SPDEModel m = parse_model(filtering_text("0", "0", "0", "0", "0"));
    for (auto& d : m.drivers)
        for (auto& c : d.coeffs) c = Expr();
    ReducedSystem s = build_reduced_sde(m);
    for (const auto& row : s.coeffs)
        for (const auto& e : row) CHECK(e.is_zero());
}

TEST_CASE("Ito corrections") {
    SPDEModel m = parse_model(kScalarIto);
    auto corr = ito_correction(m);
    REQUIRE(corr.size() == 1);
    // V_{u+1}(u + 1) = u + 1
    CHECK(equal(corr[0].field[0], ex(m, "(u + 1)/2")).canonical());
    SPDEModel st = to_stratonovich(m);
    CHECK(st.form == "stratonovich");
    CHECK(equal(st.drivers[0].coeffs[0], Expr(Rational(-1, 2))).canonical());
    CHECK(equal(st.drivers[0].coeffs[1], Expr(Rational(-1, 2))).canonical());

    std::string constant = replace_line(kScalarIto, "W = wiener", "W = wiener: G2");
    auto none = ito_correction(parse_model(constant));
    for (const auto& c : none) CHECK(c.field.is_zero());

    SPDEModel hjm = parse_model(bundled_model("hjm"));
    auto hc = ito_correction(hjm);
    REQUIRE(hc.size() == 1);
    CHECK(equal(hjm.bind(hc[0].field[0]), hjm.bind(ex(hjm, "psi^2/2*v"))).canonical());
    SPDEModel hs = to_stratonovich(hjm);
    int g3 = hjm.generator_index("G3");
    CHECK(equal(hjm.bind(hs.drivers[0].coeffs[static_cast<std::size_t>(g3)]), Expr(Rational(-1, 50))).canonical());
}

TEST_CASE("HJM reduced system") {
    SPDEModel m = parse_model(bundled_model("hjm"));
    ReducedSystem s = build_reduced_sde(m);
    CHECK(equal(coef(s, "dt", "a"), Expr(-1)).canonical());
    CHECK(coef(s, "W", "a").is_zero());
    CHECK(equal(coef(s, "W", "b"), ex(m, "b/5")).canonical());
    CHECK(equal(coef(s, "W", "c"), Expr(Rational(-1, 5))).canonical());
    CHECK(coef(s, "W", "d").is_zero());
    // drift of C and D carry psi^2 (psi^2 b + psi^2/2 and -psi^2/2 e^{-c})
    CHECK(equal(coef(s, "dt", "c"), ex(m, "b/25 + 1/50")).canonical());
    CHECK(equal(coef(s, "dt", "d"), ex(m, "-exp(-c)/50")).canonical());
    // db drift: U(0) - psi^2/2 b^2 - psi^2/2 b with U(0) from the closed form
    auto f = [](double x) { return (1 - std::exp(-x)) / 2 + (1 - (1 + x) * std::exp(-x)) / 5; };
    auto fp = [](double x) { return std::exp(-x) / 2 + x * std::exp(-x) / 5; };
    for (auto st : {std::array<double, 4>{0.1, -0.2, 0.05, 0.3}, std::array<double, 4>{-0.3, 0.4, -0.1, -0.2}}) {
        auto [a, b, c, d] = st;
        double u0 = std::exp(-c) * fp(-a) / std::pow(1 + d * f(-a), 2);
        double want = u0 - 0.02 * b * b - 0.02 * b;
        Assignment as{{s.state[0], a}, {s.state[1], b}, {s.state[2], c}, {s.state[3], d}};
        CHECK(eval_numeric(coef(s, "dt", "b"), as) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("HJM reconstruction equals the closed form") {
    SPDEModel m = parse_model(bundled_model("hjm"));
    ReducedSystem s = build_reduced_sde(m);
    REQUIRE(s.closed_form.size() == 1);
    auto f = [](double x) { return (1 - std::exp(-x)) / 2 + (1 - (1 + x) * std::exp(-x)) / 5; };
    auto fp = [](double x) { return std::exp(-x) / 2 + x * std::exp(-x) / 5; };
    auto x = uniform_grid(0, 2, 0.01);
    for (auto st : {std::array<double, 4>{0, 0, 0, 0}, std::array<double, 4>{0.13, -0.4, 0.2, 0.35},
                    std::array<double, 4>{-0.2, 0.1, -0.3, -0.25}}) {
        auto r = reconstruct_transported(s, {st[0], st[1], st[2], st[3]}, x);
        auto want = hjm_closed_form(f, fp, st, x);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(r.outputs[0][i] - want[i]) <= 1e-10);
    }
}

TEST_CASE("reconstruction at the origin returns the initial condition") {
    for (const std::string name : {"hjm", "hunter-saxton", "heat"}) {
        SPDEModel m = parse_model(bundled_model(name));
        ReducedSystem s = build_reduced_sde(m);
        auto x = uniform_grid(m.x_min.get_d(), m.x_max.get_d(), 0.05);
        auto r = reconstruct_transported(s, s.initial_state, x);
        FunctionTable ft = m.function_table();
        for (int j = 0; j < m.space.n(); ++j) {
            Expr f = m.bind(m.initial[static_cast<std::size_t>(j)].second);
            f = substitute(f, {{JetCoord::parameter("s"), Expr()}});
            for (std::size_t i = 0; i < x.size(); ++i) {
                double want = eval_numeric(f, {{m.space.x(0), x[i]}}, ft);
                CHECK(std::fabs(r.dependents[static_cast<std::size_t>(j)][i] - want) <= 1e-12);
            }
        }
    }
}

TEST_CASE("Hunter-Saxton implicit reconstruction") {
    SPDEModel m = parse_model(bundled_model("hunter-saxton"));
    ReducedSystem s = build_reduced_sde(m);
    CHECK(s.closed_form.empty());
    CHECK(equal(coef(s, "dt", "b"), ex(m, "exp(-a)")).canonical());
    CHECK(equal(coef(s, "W", "a"), Expr(Rational(1, 5))).canonical());
    CHECK(equal(coef(s, "W", "c"), ex(m, "3/10*exp(-a)")).canonical());
    auto x = uniform_grid(-3, 3, 0.01);
    std::array<double, 3> abc{0.08, -0.05, 0.1};
    auto r = reconstruct_transported(s, {abc[0], abc[1], abc[2], 0, 0}, x);
    CHECK(r.max_residual <= 1e-10);
    auto f = [](int k, double y) { return builtin_value("smooth_step", {k}, y) / 2; };
    auto g = [](int k, double y) { return builtin_value("smooth_step_energy", {k}, y) / 4; };
    auto want = hunter_saxton_closed_form(f, g, abc, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(std::fabs(r.dependents[0][i] - want[0][i]) <= 1e-10);
        CHECK(std::fabs(r.dependents[1][i] - want[1][i]) <= 1e-10);
    }
}

TEST_CASE("manifold invariance along a simulated HJM path") {
    SPDEModel m = parse_model(bundled_model("hjm"));
    ReducedSystem s = build_reduced_sde(m);
    DriverPath p = make_driver_path(driver_spec(s), 0.1, 1e-3, 5, 0);
    SamplePath sp = integrate_stratonovich(compile_system(s), s.initial_state, p);
    REQUIRE(sp.status == SamplePath::Status::Completed);
    JetCoord x = m.space.x(0);
    Expr f = m.bind(m.initial[0].second);
    std::vector<Expr> residual;
    Expr df = f;
    for (int k = 0; k <= 2; ++k) {
        residual.push_back(compose_pullback(m.space, s.flows, Expr::coord(m.space.derivative(0, k)) - df));
        df = diff(df, x);
    }
    Reconstructor rec(s);
    const double h = 0.02;
    std::vector<double> xs = {0.5, 1.0, 1.5};
    double worst = 0;
    for (std::size_t step = 0; step < sp.state.size(); step += 25) {
        const auto& a = sp.state[step];
        for (double x0 : xs) {
            std::vector<double> pts;
            for (int k = -3; k <= 3; ++k) pts.push_back(x0 + k * h);
            auto v = rec(a, pts).dependents[0];
            // sixth-order central stencils
            double v1 = (-v[0] + 9 * v[1] - 45 * v[2] + 45 * v[4] - 9 * v[5] + v[6]) / (60 * h);
            double v2 = (2 * v[0] - 27 * v[1] + 270 * v[2] - 490 * v[3] + 270 * v[4] - 27 * v[5] + 2 * v[6]) /
                        (180 * h * h);
            Assignment as{{x, x0}, {m.space.u(0), v[3]}, {m.space.derivative(0, 1), v1}, {m.space.derivative(0, 2), v2}};
            for (std::size_t i = 0; i < s.state.size(); ++i) as[s.state[i]] = a[i];
            for (const auto& r : residual) worst = std::max(worst, std::fabs(eval_numeric(r, as)));
        }
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("transversality") {
    SUBCASE("bundled HJM curve") {
        SPDEModel m = parse_model(bundled_model("hjm"));
        auto r = check_transversality(m, build_reduced_sde(m).algebra.basis, {1.0});
        CHECK(r.transversal);
        CHECK(r.samples[0].rank == 4);
    }
    SUBCASE("translation is affine in f = (1 - exp(-x))/2") {
        // the v_x row is an affine function of the other three, so the rank stays at 3
        SPDEModel m = parse_model(replace_line(bundled_model("hjm"), "v = (", "v = (1 - exp(-x))/2"));
        auto r = check_transversality(m, build_reduced_sde(m).algebra.basis, {0.5, 1.0, 1.7});
        CHECK_FALSE(r.transversal);
        CHECK(r.samples[1].rank == 3);
    }
    SUBCASE("zero curve") {
        std::string t = replace_line(kScalarIto, "u = exp(x)", "u = 0");
        t = replace_line(t, "G1 = u", "G1 = u^2");
        t = replace_line(t, "G2 = 1", "G2 = u");
        SPDEModel m = parse_model(t);
        auto r = check_transversality(m, m.generators, {0.3, 0.7});
        CHECK_FALSE(r.transversal);
        CHECK(r.detail.find("Degenerate") != std::string::npos);
    }
    SUBCASE("affine-quadratic triple on exp(x)") {
        std::string t = replace_line(kScalarIto, "G2 = 1", "G2 = 1\nG3 = u^2");
        SPDEModel m = parse_model(replace_line(t, "params = a, b", "params = a, b, c"));
        auto r = check_transversality(m, m.generators, {0.5});
        CHECK(r.transversal);
        CHECK(r.samples[0].rank == 3);
        // brute force: rows (u, u_x, u_xx) of (u, 1, u^2) at x = 0.5
        double e = std::exp(0.5);
        double M[3][3] = {{e, 1, e * e}, {e, 0, 2 * e * e}, {e, 0, 4 * e * e}};
        double det = M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
                     M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]);
        CHECK(std::fabs(det) > 1e-6);
    }
}

TEST_CASE("linear ODE reconstruction") {
    auto x = uniform_grid(0, 5, 0.01);
    SUBCASE("branches agree with the matrix exponential") {
        for (auto [L, M] : {std::pair{3.0, 2.0}, {1.0, 2.0}, {-0.5, -1.25}, {0.4, 3.1}}) {
            auto ref = reconstruct_linear_ode({M, L}, {1.0, -1.0}, x);
            for (std::size_t i = 0; i < x.size(); ++i) {
                auto v = order2_branch(L, M, 1.0, -1.0, x[i]);
                REQUIRE(v);
                CHECK(std::fabs(*v - ref[i]) <= 1e-9 * std::max(1.0, std::fabs(ref[i])));
            }
        }
        CHECK_FALSE(order2_branch(2.0, 1.0, 1.0, 0.0, 1.0));
    }
    SUBCASE("vanishing coefficients give a line") {
        auto u = reconstruct_linear_ode({0.0, 0.0}, {0.7, -0.3}, x);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(u[i] == doctest::Approx(0.7 - 0.3 * x[i]).epsilon(1e-12));
    }
    SUBCASE("u_xx = lambda u") {
        double lam = 0.8, u0 = 1.3, u1 = -0.4, r = std::sqrt(lam);
        auto u = reconstruct_linear_ode({-lam, 0.0}, {u0, u1}, x);
        for (std::size_t i = 0; i < x.size(); ++i) {
            double want = (r * u0 + u1) / (2 * r) * std::exp(r * x[i]) + (r * u0 - u1) / (2 * r) * std::exp(-r * x[i]);
            CHECK(std::fabs(u[i] - want) <= 1e-10 * std::max(1.0, std::fabs(want)));
        }
    }
    SUBCASE("repeated root goes through the exponential") {
        auto u = filtering_closed_form(2.0, 1.0, 1.0, 0.0, x);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(std::fabs(u[i] - (1 + x[i]) * std::exp(-x[i])) <= 1e-10);
    }
}

TEST_CASE("heat equation through the drift semigroup") {
    SPDEModel m = parse_model(bundled_model("heat"));
    ReducedSystem s = build_reduced_sde(m);
    REQUIRE(s.closed_form.size() == 1);
    CHECK(equal(coef(s, "dt", "s"), Expr(1)).canonical());
    Expr want = ex(m, "exp(-(x - a)^2/(2*(s + 1)))/(exp(b)*sqrt(s + 1))");
    CHECK(equal(s.closed_form[0], want).ok());
    std::string bad = replace_line(bundled_model("heat"), "u = exp", "u = exp(-x^2/(2*(1 + 2*s)))/sqrt(1 + s)");
    CHECK_THROWS_WITH_AS(build_reduced_sde(parse_model(bad)), doctest::Contains("SemigroupMismatch"), Error);
}

TEST_CASE("functionals need a closed form") {
    std::string t = bundled_model("hunter-saxton");
    t = replace_line(t, "[generators]", "[functionals]\nu0 = at(u, 0)\n\n[generators]");
    t = replace_line(t, "dt = time", "dt = time: -G2 + u0*G4");
    CHECK_THROWS_WITH_AS(build_reduced_sde(parse_model(t)), doctest::Contains("UnsupportedFunctional"), Error);
}

TEST_CASE("model files") {
    SUBCASE("round trip") {
        for (const auto& name : bundled_models()) {
            std::string p = print_model(parse_model(bundled_model(name)));
            CHECK(print_model(parse_model(p)) == p);
        }
    }
    SUBCASE("errors carry the line") {
        std::string t = bundled_model("hjm");
        CHECK_THROWS_WITH_AS(parse_model(replace_line(t, "G4 = v^2", "G4 = v^^2")), doctest::Contains("line 26"),
                             Error);
        CHECK_THROWS_WITH_AS(parse_model(replace_line(t, "W = wiener", "W = time: psi*G3")),
                             doctest::Contains("time driver"), Error);
        CHECK_THROWS_WITH_AS(parse_model(replace_line(t, "W = wiener", "W = wiener: G3*G4")),
                             doctest::Contains("line 30"), Error);
        CHECK_THROWS_AS(parse_model(t + "\n[bogus]\n"), Error);
    }
}
