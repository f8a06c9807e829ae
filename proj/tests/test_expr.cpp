#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deligne/expr.hpp>

using namespace deligne;
using doctest::Approx;

namespace {
double adiff(cplx a, cplx b) { return std::abs(a - b); }

// numeric Wirtinger derivative of any expression, for cross-checking the
// symbolic rules
cplx num_dz(const Expr& e, cplx z, bool bar, double h = 1e-6) {
    cplx fx = (e(z + h) - e(z - h)) / (2.0 * h);
    cplx fy = (e(z + iu * h) - e(z - iu * h)) / (2.0 * h);
    return bar ? 0.5 * (fx + iu * fy) : 0.5 * (fx - iu * fy);
}
}  // namespace

TEST_CASE("parse and evaluate") {
    Expr e = Expr::parse("(z^2 + conj(z))/(1 + abs2(z))");
    cplx z(0.7, -0.3);
    cplx want = (z * z + std::conj(z)) / (1.0 + std::norm(z));
    CHECK(adiff(e(z), want) < 1e-14);

    Expr c = Expr::parse("2*pi*i");
    CHECK(adiff(c(cplx(0)), two_pi_i) < 1e-14);

    CHECK_THROWS_AS(Expr::parse("z +"), config_error);
    CHECK_THROWS_AS(Expr::parse("foo(z)"), config_error);
    CHECK_THROWS_AS(Expr::parse("z 2"), config_error);
}

TEST_CASE("symbolic Wirtinger derivatives agree with differences") {
    Rng rng(42);
    std::vector<Expr> exprs = {
        Expr::parse("z^3 + 2*conj(z)*z - 5"),
        Expr::parse("exp(z)*conj(z)^2"),
        Expr::parse("log(1 + abs2(z))"),
        Expr::parse("sqrt(1 + abs2(z))"),
        Expr::parse("1/(z - 3)"),
    };
    for (const auto& e : exprs) {
        for (int k = 0; k < 20; ++k) {
            cplx z = rng.disk(1.5);
            CHECK(adiff(e.dz()(z), num_dz(e, z, false)) < 2e-6);
            CHECK(adiff(e.dzbar()(z), num_dz(e, z, true)) < 2e-6);
        }
    }
}

TEST_CASE("log branch selection") {
    Expr l = log(Expr::var());  // principal, cut along negative reals
    CHECK(adiff(l(cplx(0.0, 1.0)), cplx(0.0, pi / 2)) < 1e-14);
    // cut rotated to the positive real axis: arg in (0 - 2pi, 0]... i sits at -3pi/2
    Expr l2 = log(Expr::var(), 0.0);
    CHECK(adiff(l2(cplx(0.0, 1.0)), cplx(0.0, -3.0 * pi / 2)) < 1e-13);
    CHECK_THROWS_AS(l(cplx(0.0, 0.0)), domain_error);
}

TEST_CASE("smooth step and derivatives") {
    CHECK(detail::step_val(-0.5) == 0.0);
    CHECK(detail::step_val(1.5) == 1.0);
    CHECK(detail::step_val(0.5) == Approx(0.5));
    // symbolic derivative chain matches differences inside the ramp
    Expr s = smooth_step(Expr::parse("re(z)"));
    for (double t : {0.2, 0.45, 0.8}) {
        cplx z(t, 0.0);
        CHECK(adiff(s.dz()(z), num_dz(s, z, false)) < 1e-6);
        CHECK(adiff(s.dz().dz()(z), num_dz(s.dz(), z, false, 1e-5)) < 1e-4);
    }
    // outside the ramp everything is exactly zero, including lazily gated factors
    CHECK(s.dz()(cplx(-1.0, 0.0)) == cplx(0.0));
    CHECK(s.dz().dz()(cplx(3.0, 0.0)) == cplx(0.0));
}

TEST_CASE("radial bump gates singular payloads") {
    Expr bump = radial_bump(cplx(0.0), 0.1, 0.2);
    Expr payload = Expr::parse("1/(log(abs2(z)/100))");
    Expr gated = lazy_mul(bump, payload);
    CHECK(gated(cplx(10.0, 0.0)) == cplx(0.0));  // payload not evaluated
    CHECK(adiff(gated(cplx(0.05, 0.0)), payload(cplx(0.05, 0.0))) < 1e-14);
    Expr dg = gated.dz();
    cplx far = dg(cplx(25.0, 0.0));
    CHECK(far == cplx(0.0));
}

TEST_CASE("external leaves with numeric fallback") {
    auto ext = std::make_shared<ExternalFn>();
    ext->eval = [](cplx z) { return std::sin(z.real()) * std::cos(z.imag()); };
    Expr e = Expr::external(ext);
    cplx z(0.3, 0.4);
    CHECK(adiff(e.dz()(z), num_dz(e, z, false)) < 1e-7);
}

TEST_CASE("compose substitutes the variable") {
    Expr f = Expr::parse("z^2 + 1");
    Expr g = Expr::parse("1/z");
    Expr h = f.compose(g);
    cplx z(0.5, 0.25);
    CHECK(adiff(h(z), 1.0 / (z * z) + 1.0) < 1e-14);
    CHECK(adiff(h.dz()(z), -2.0 / (z * z * z)) < 1e-12);
}

TEST_CASE("deterministic rng") {
    Rng a(7), b(7);
    for (int i = 0; i < 10; ++i) CHECK(a.uniform() == b.uniform());
}
