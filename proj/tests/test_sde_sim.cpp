#include <cmath>

#include "doctest.h"
#include "jetred/sde.hpp"

using namespace jetred;

namespace {

DriverSpec time_and(int wieners, double rho = 0.0) {
    DriverSpec s;
    s.wiener.push_back(false);
    for (int i = 0; i < wieners; ++i) s.wiener.push_back(true);
    s.rho.assign(static_cast<std::size_t>(wieners), std::vector<double>(static_cast<std::size_t>(wieners), rho));
    for (int i = 0; i < wieners; ++i) s.rho[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1.0;
    return s;
}

double wiener_total(const DriverPath& p, std::size_t driver) {
    double w = 0;
    for (const auto& row : p.dS) w += row[driver];
    return w;
}

}  // namespace

TEST_CASE("time-only paths") {
    DriverSpec s;
    s.wiener = {false};
    auto p = make_driver_path(s, 1.0, 0.01, 3, 0);
    CHECK(p.steps == 100);
    for (const auto& row : p.dS) CHECK(row[0] == 0.01);
}

TEST_CASE("paths are reproducible from the seed") {
    auto s = time_and(2);
    auto a = make_driver_path(s, 0.5, 1e-3, 42, 7), b = make_driver_path(s, 0.5, 1e-3, 42, 7);
    CHECK(a.dS == b.dS);
    auto c = make_driver_path(s, 0.5, 1e-3, 42, 8);
    CHECK(a.dS != c.dS);
    auto d = make_driver_path(s, 0.5, 1e-3, 43, 7);
    CHECK(a.dS != d.dS);
}

TEST_CASE("increment covariance") {
    const int n = 100000;
    const double dt = 1e-3;
    for (double rho : {0.0, 0.6}) {
        auto p = make_driver_path(time_and(2, rho), n * dt, dt, 11, 0);
        REQUIRE(p.steps == n);
        double s11 = 0, s22 = 0, s12 = 0, m1 = 0, m2 = 0;
        for (const auto& r : p.dS) {
            m1 += r[1];
            m2 += r[2];
            s11 += r[1] * r[1];
            s22 += r[2] * r[2];
            s12 += r[1] * r[2];
        }
        double var_sd = dt * std::sqrt(2.0 / n), cov_sd = dt * std::sqrt((1 + rho * rho) / n);
        CHECK(std::fabs(s11 / n - dt) <= 3 * var_sd);
        CHECK(std::fabs(s22 / n - dt) <= 3 * var_sd);
        CHECK(std::fabs(s12 / n - rho * dt) <= 3 * cov_sd);
        CHECK(std::fabs(m1 / n) <= 3 * std::sqrt(dt / n));
        CHECK(std::fabs(m2 / n) <= 3 * std::sqrt(dt / n));
    }
}

TEST_CASE("coarsening sums increments") {
    auto fine = make_driver_path(time_and(1), 0.1, 1e-3, 5, 2);
    auto coarse = coarsen(fine, 4);
    CHECK(coarse.steps == 25);
    CHECK(coarse.dt == doctest::Approx(4e-3));
    CHECK(wiener_total(coarse, 1) == doctest::Approx(wiener_total(fine, 1)).epsilon(1e-12));
    CHECK(coarse.dS[3][1] == doctest::Approx(fine.dS[12][1] + fine.dS[13][1] + fine.dS[14][1] + fine.dS[15][1]));
    CHECK_THROWS(coarsen(fine, 3));
}

TEST_CASE("deterministic linear system is second order") {
    // dA = A dt; error at T = 1 shrinks by about 4 under halving
    auto sys = linear_system({{{1.0}}});
    DriverSpec s;
    s.wiener = {false};
    double prev = 0;
    for (double dt : {1e-2, 5e-3, 2.5e-3}) {
        auto sp = integrate_stratonovich(sys, {1.0}, make_driver_path(s, 1.0, dt, 0, 0));
        double err = std::fabs(sp.state.back()[0] - std::exp(1.0));
        CHECK(err <= dt * dt);
        if (prev > 0) CHECK(prev / err == doctest::Approx(4.0).epsilon(0.05));
        prev = err;
    }
}

TEST_CASE("rotation generator reproduces the matrix exponential") {
    auto sys = linear_system({{{0.0, 1.0}, {-1.0, 0.0}}});
    DriverSpec s;
    s.wiener = {false};
    auto sp = integrate_stratonovich(sys, {1.0, 0.0}, make_driver_path(s, 2.0, 1e-3, 0, 0));
    CHECK(std::fabs(sp.state.back()[0] - std::cos(2.0)) <= 1e-5);
    CHECK(std::fabs(sp.state.back()[1] + std::sin(2.0)) <= 1e-5);
}

TEST_CASE("strong convergence for geometric noise") {
    auto sys = linear_system({{{0.0}}, {{1.0}}});
    auto spec = time_and(1);
    std::vector<double> dts = {1e-2, 5e-3, 2.5e-3}, err(3, 0.0);
    for (int path = 0; path < 200; ++path) {
        auto fine = make_driver_path(spec, 1.0, dts[2], 9, static_cast<std::uint64_t>(path));
        double exact = std::exp(wiener_total(fine, 1));
        for (int k = 0; k < 3; ++k) {
            auto p = k == 2 ? fine : coarsen(fine, k == 0 ? 4 : 2);
            err[static_cast<std::size_t>(k)] += std::fabs(integrate_stratonovich(sys, {1.0}, p).state.back()[0] - exact) / 200;
        }
    }
    for (int k = 0; k < 2; ++k) CHECK(std::log2(err[static_cast<std::size_t>(k)] / err[static_cast<std::size_t>(k + 1)]) >= 0.5);
}

TEST_CASE("explosion guard") {
    NumericSystem sys;
    sys.dim = 1;
    sys.drivers = 1;
    sys.eval = [](const std::vector<double>& a, std::vector<std::vector<double>>& out) { out[0][0] = a[0] * a[0]; };
    DriverSpec s;
    s.wiener = {false};
    auto sp = integrate_stratonovich(sys, {1.0}, make_driver_path(s, 2.0, 1e-3, 0, 0));
    CHECK(sp.status == SamplePath::Status::Exploded);
    CHECK(sp.t_explode == doctest::Approx(1.0).epsilon(0.01));
    CHECK(std::isfinite(sp.state.back()[0]));

    sys.eval = [](const std::vector<double>& a, std::vector<std::vector<double>>& out) { out[0][0] = std::log(a[0]); };
    auto bad = integrate_stratonovich(sys, {-1.0}, make_driver_path(s, 1.0, 1e-2, 0, 0));
    CHECK(bad.status == SamplePath::Status::Exploded);
    CHECK(bad.t_explode == doctest::Approx(0.01));
}

TEST_CASE("Hunter-Saxton B is a Riemann integral of exp(-A)") {
    ReducedSystem sys = build_reduced_sde(parse_model(bundled_model("hunter-saxton")));
    auto p = make_driver_path(driver_spec(sys), 0.1, 1e-4, 21, 0);
    auto sp = integrate_stratonovich(compile_system(sys), sys.initial_state, p);
    REQUIRE(sp.status == SamplePath::Status::Completed);
    double q = 0;
    for (std::size_t k = 0; k + 1 < sp.state.size(); ++k)
        q += 0.5 * (std::exp(-sp.state[k][0]) + std::exp(-sp.state[k + 1][0])) * p.dt;
    CHECK(std::fabs(sp.state.back()[1] - q) <= 1e-6);
    // A is exactly H W
    CHECK(sp.state.back()[0] == doctest::Approx(0.2 * wiener_total(p, 1)).epsilon(1e-12));
}

TEST_CASE("time driver coefficients follow the reduced system") {
    ReducedSystem sys = build_reduced_sde(parse_model(bundled_model("heat")));
    auto spec = driver_spec(sys);
    CHECK(spec.wiener == std::vector<bool>{false, true});
    auto p = make_driver_path(spec, 0.5, 1e-3, 1, 0);
    auto sp = integrate_stratonovich(compile_system(sys), sys.initial_state, p);
    CHECK(sp.t.back() == doctest::Approx(0.5));
    CHECK(sp.state.back()[0] == doctest::Approx(0.5));
}
