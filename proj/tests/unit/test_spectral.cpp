#include "branchlab/spectral.hpp"

#include <cmath>

#include "branchlab/errors.hpp"
#include "doctest.h"

using namespace branchlab;

namespace {
const double kPi = 3.14159265358979323846;

spectral_solution& zero_L5() {
    static spectral_solution sol = solve_slp(potential::zero(), 5.0, 1e-12);
    return sol;
}

spectral_solution& bstar_L10() {
    static spectral_solution sol = solve_slp(potential::step(3.09, 1.0), 10.0, 1e-12);
    return sol;
}
}  // namespace

TEST_CASE("zero potential on [0,10] reproduces the sine eigenpair") {
    auto sol = solve_slp(potential::zero(), 10.0, 1e-12);
    CHECK(std::abs(sol.lambda1 - (-kPi * kPi / 200.0)) < 1e-10);
    CHECK(std::abs(sol.lambda1_inf - (-kPi * kPi / 800.0)) < 1e-10);
    CHECK(sol.regime == "pulled");
    CHECK(sol.beta == 0.0);
    CHECK(sol.alpha == doctest::Approx(1.0));
    CHECK(sol.mu == doctest::Approx(std::sqrt(1 - kPi * kPi / 400.0)).epsilon(1e-10));
    CHECK(sol.w == doctest::Approx(kPi * kPi / 200.0 - kPi * kPi / 800.0).epsilon(1e-6));

    double den = std::sin(kPi / 10.0);
    double sup = 0;
    for (double x = 0.0; x <= 10.0; x += 0.01)
        sup = std::max(sup, std::abs(sol.v1(x) - std::sin(kPi * x / 10.0) / den));
    CHECK(sup < 1e-7);
    CHECK(std::abs(sol.v1(0.0)) < 1e-12);
    CHECK(std::abs(sol.v1(10.0)) < 1e-7);
    CHECK(sol.v1(1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero potential on [0,5]: frozen eigenvalue and harmonic pair") {
    const auto& sol = zero_L5();
    CHECK(sol.lambda1 == doctest::Approx(-0.19739208802178715).epsilon(1e-10));
    CHECK(sol.lambda1_inf == doctest::Approx(-0.04934802200544679).epsilon(1e-10));

    auto hp = harmonic_pair(sol, 1.0);
    CHECK(hp.cL == doctest::Approx(1.296072780186874).epsilon(1e-8));
    CHECK(hp.norm2sq == doctest::Approx(7.23606797749979).epsilon(1e-8));
    CHECK(hp.h(2.0) == doctest::Approx(1.2748074012005761).epsilon(1e-7));

    // unit masses by construction
    double mass = 0, pmass = 0;
    size_t n = hp.h_tilde.nodes();
    std::vector<double> yt(n), yp(n);
    for (size_t i = 0; i < n; ++i) {
        yt[i] = hp.h_tilde.node_value(i);
        yp[i] = hp.pi.node_value(i);
    }
    mass = simpson(yt, hp.h_tilde.step());
    pmass = simpson(yp, hp.pi.step());
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(pmass == doctest::Approx(1.0).epsilon(1e-10));

    // h h_tilde = Pi pointwise
    for (double x : {0.7, 1.9, 3.3, 4.6})
        CHECK(hp.h(x) * hp.h_tilde(x) == doctest::Approx(hp.pi(x)).epsilon(1e-9));
}

TEST_CASE("resolvent kernel on [0,5]: frozen values, symmetry, flux jump") {
    const auto& sol = zero_L5();
    green_kernel G(sol, 0.01);

    CHECK(G.omega() == doctest::Approx(0.07322175246182844).epsilon(1e-7));
    CHECK(G(2.0, 3.5) == doctest::Approx(25.792800598394404).epsilon(1e-7));
    CHECK(G(3.5, 2.0) == doctest::Approx(35.64477376193243).epsilon(1e-7));

    // G(x,y)/G(y,x) = (v1(y)/v1(x))^2
    for (auto [x, y] : {std::pair{1.3, 2.7}, {0.6, 4.2}, {3.1, 3.9}}) {
        double r = G(x, y) / G(y, x);
        double v = sol.v1(y) / sol.v1(x);
        CHECK(r == doctest::Approx(v * v).epsilon(1e-9));
    }

    // flux jump of -2 across the diagonal (finite differences, so ~1e-2)
    double x = 2.4, eps = 1e-4;
    auto dGy = [&](double y) { return (G(x, y + eps) - G(x, y - eps)) / (2 * eps); };
    CHECK(dGy(x + 2 * eps) - dGy(x - 2 * eps) == doctest::Approx(-2.0).epsilon(2e-2));

    // omega(lambda1 + eps) ~ eps * int v1^2 as eps -> 0
    auto hp = harmonic_pair(sol, 1.0);
    double eps2 = 1e-5;
    auto fp = fundamental_solutions(sol, eps2);
    CHECK(fp.omega / (eps2 * hp.norm2sq) == doctest::Approx(1.0).epsilon(2e-3));
    CHECK(fp.lambda == doctest::Approx(sol.lambda1 + eps2));

    // both fundamental solutions collapse onto v1 at vanishing rate
    auto fp0 = fundamental_solutions(sol, 1e-9);
    for (double xx : {0.5, 1.0, 2.5, 4.0}) {
        CHECK(fp0.g(xx) == doctest::Approx(sol.v1(xx)).epsilon(1e-5));
        CHECK(fp0.d(xx) == doctest::Approx(sol.v1(xx)).epsilon(1e-5));
    }
    CHECK(std::abs(fp0.d(5.0)) < 1e-9);

    // Wronskian is constant across the domain
    auto fp1 = fundamental_solutions(sol, 0.01);
    for (double xx : {0.5, 2.0, 4.5}) {
        double w = 0.5 * (fp1.d(xx) * fp1.g.deriv(xx) - fp1.d.deriv(xx) * fp1.g(xx));
        CHECK(w == doctest::Approx(fp1.omega).epsilon(1e-6));
    }
}

TEST_CASE("resolvent kernel guards") {
    const auto& sol = zero_L5();
    CHECK_THROWS_AS((void)green_function(sol, 0.2, 2.0, 3.0), error);  // > 1/(10 L)
    CHECK_THROWS_AS((void)green_function(sol, -0.01, 2.0, 3.0), error);
    CHECK_THROWS_AS((void)green_function(sol, 0.01, 0.0, 3.0), error);
    CHECK_THROWS_AS((void)green_function(sol, 0.01, 5.0, 3.0), error);
    CHECK_THROWS_AS((void)green_function(sol, 0.01, 2.0, 5.5), error);
    try {
        (void)green_function(sol, 0.2, 2.0, 3.0);
    } catch (const error& e) {
        CHECK(e.code() == errc::green_argument_too_large);
    }
    try {
        (void)green_function(sol, 0.01, 0.0, 3.0);
    } catch (const error& e) {
        CHECK(e.code() == errc::singular_argument);
    }
    // boundary field point gives zero, not an error
    CHECK(green_function(sol, 0.01, 2.0, 5.0) == 0.0);
}

TEST_CASE("step potential B=4 on [0,20]: frozen eigenvalue and sinh tail") {
    auto sol = solve_slp(potential::step(4.0, 1.0), 20.0, 1e-12);
    CHECK(sol.lambda1 == doctest::Approx(0.20355074180747).epsilon(1e-9));
    CHECK(sol.regime == "fully-pushed");
    CHECK(verify_v1_tail(sol) < 1e-6);

    // interior ODE residual at the stored nodes, away from the step edge
    size_t n = sol.v1.nodes();
    double h = sol.v1.step();
    const auto& v = sol.v1.values();
    const auto& dv = sol.v1.derivs();
    for (size_t i = n / 10; i < n - 1; i += n / 23) {
        double x = sol.v1.node_x(i);
        if (std::abs(x - 1.0) < 3 * h) continue;
        double w = x <= 1.0 ? 4.0 : 0.0;
        double lhs = (dv[i + 1] - dv[i - 1]) / (2 * h);
        double rhs = (2 * sol.lambda1 - w) * v[i];
        CHECK(std::abs(lhs - rhs) < 1e-5 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("near-critical step: frozen eigenvalue, geometry, gap scaling") {
    const auto& sol = bstar_L10();
    CHECK(sol.lambda1 == doctest::Approx(0.040226139016037).epsilon(1e-9));
    CHECK(sol.regime == "semi-pushed");
    CHECK(sol.beta == doctest::Approx(0.28626288655839).epsilon(1e-4));
    CHECK(sol.mu == doctest::Approx(1.04016654446331).epsilon(1e-5));
    CHECK(sol.alpha == doctest::Approx(1.75941503548054).epsilon(1e-3));

    auto geo = make_cutoff_geometry(sol, 100.0, 2.0);
    CHECK(geo.gamma == doctest::Approx(1.31680300399534).epsilon(1e-3));
    CHECK(geo.L_NA == doctest::Approx(8.963).epsilon(2e-3));
    CHECK(geo.delta2 == doctest::Approx(0.053442).epsilon(2e-2));
    CHECK(geo.delta2 > 0);
    auto geo3 = make_cutoff_geometry(sol, 1000.0, 2.0);
    CHECK(geo3.L_NA == doctest::Approx(12.985).epsilon(2e-3));
    auto geo4 = make_cutoff_geometry(sol, 10000.0, 2.0);
    CHECK(geo4.L_NA == doctest::Approx(17.007).epsilon(2e-3));
}

TEST_CASE("gap scaling matches the exponential law in the pushed regime") {
    auto res = gap_scaling(potential::step(3.09, 1.0), {10.0, 14.0, 18.0, 22.0});
    CHECK(res.lambda1_inf == doctest::Approx(0.04097322).epsilon(1e-6));
    CHECK(res.w[0] == doctest::Approx(7.470810694207852e-4).epsilon(2e-3));
    CHECK(res.w[1] == doctest::Approx(7.307661838019231e-5).epsilon(2e-3));
    CHECK(res.w[2] == doctest::Approx(7.361224219727613e-6).epsilon(2e-3));
    CHECK(res.w[3] == doctest::Approx(7.448398569466629e-7).epsilon(5e-3));
    CHECK(res.slope == doctest::Approx(-0.575689).epsilon(2e-3));
    CHECK(std::abs(res.slope + 2 * res.beta) < 0.1 * 2 * res.beta);
}

TEST_CASE("regime classifier: the three characterizations agree") {
    auto check_consistency = [](const spectral_solution& s) {
        bool by_alpha = s.alpha > 1 && s.alpha < 2;
        bool by_speed = s.beta > 0 && s.mu > 3 * s.beta;
        bool by_lambda = s.lambda1_inf > 0 && s.lambda1_inf < 1.0 / 16.0;
        CHECK(by_alpha == by_speed);
        CHECK(by_speed == by_lambda);
        CHECK((s.regime == "semi-pushed") == by_lambda);
        bool pulled = s.lambda1_inf <= 0;
        CHECK((s.regime == "pulled") == pulled);
        CHECK((s.beta == 0.0) == pulled);
    };
    check_consistency(zero_L5());
    check_consistency(bstar_L10());
    auto fully = solve_slp(potential::step(4.0, 1.0), 10.0, 1e-10);
    check_consistency(fully);
    CHECK(fully.regime == "fully-pushed");
}

TEST_CASE("spectral validation and regime errors") {
    CHECK_THROWS_AS((void)solve_slp(potential::zero(), 0.8, 1e-10), error);
    CHECK_THROWS_AS((void)solve_slp(potential::zero(), 5.0, -1e-10), error);
    CHECK_THROWS_AS((void)verify_v1_tail(zero_L5()), error);
    CHECK_THROWS_AS((void)gap_scaling(potential::step(3.09, 1.0), {10.0, 14.0, 18.0}), error);
    CHECK_THROWS_AS((void)gap_scaling(potential::step(3.09, 1.0), {10.0, 14.0, 14.0, 18.0}),
                    error);
    CHECK_THROWS_AS((void)gap_scaling(potential::zero(), {10.0, 14.0, 18.0, 22.0}), error);
    CHECK_THROWS_AS((void)make_cutoff_geometry(zero_L5(), 100.0, 2.0), error);
    CHECK_THROWS_AS((void)make_cutoff_geometry(bstar_L10(), 100.0, 2.0, 1.5), error);
    try {
        (void)make_cutoff_geometry(zero_L5(), 100.0, 2.0);
    } catch (const error& e) {
        CHECK(e.code() == errc::regime);
    }
}

TEST_CASE("tabulated potential solves and stays in range") {
    // triangular bump: W(0)=0, W(0.5)=3, W(1)=0
    auto W = potential::tabulated({0.0, 0.5, 1.0}, {0.0, 3.0, 0.0});
    auto sol = solve_slp(W, 8.0, 1e-11);
    CHECK(sol.lambda1 > -1.0);
    CHECK(sol.lambda1 < 1.5);  // Rayleigh bound: lambda1 <= max W / 2
    CHECK(sol.v1(1.0) == doctest::Approx(1.0).epsilon(1e-10));
    // ODE residual with the interpolated potential
    size_t n = sol.v1.nodes();
    double h = sol.v1.step();
    const auto& v = sol.v1.values();
    const auto& dv = sol.v1.derivs();
    for (size_t i = n / 8; i < n - 1; i += n / 17) {
        double x = sol.v1.node_x(i);
        // central differences pick up the third-derivative jump at the
        // potential's kinks, so stay away from them
        if (std::abs(x - 0.5) < 3 * h || std::abs(x - 1.0) < 3 * h) continue;
        double lhs = (dv[i + 1] - dv[i - 1]) / (2 * h);
        double rhs = (2 * sol.lambda1 - W(x)) * v[i];
        CHECK(std::abs(lhs - rhs) < 1e-4 * std::max(1.0, std::abs(rhs)));
    }
}
