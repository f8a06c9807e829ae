#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deligne/forms.hpp>

using namespace deligne;

namespace {
double cdiff(cplx a, cplx b) { return std::abs(a - b); }

double rel(cplx a, cplx b) {
    return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

FormField random_poly_field(const AtlasPtr& atlas, Rng& rng, int deg = 3) {
    // random polynomial in z and conj z with small complex coefficients
    Expr e = Expr::constant(cplx(rng.uniform(-1, 1), rng.uniform(-1, 1)));
    Expr z = Expr::var();
    for (int a = 0; a <= deg; ++a)
        for (int b = 0; b <= deg - a; ++b) {
            if (a == 0 && b == 0) continue;
            cplx c(rng.uniform(-1, 1), rng.uniform(-1, 1));
            e = e + Expr::constant(c) * powi(z, a) * powi(conj(z), b);
        }
    return scalar_field(atlas, e);
}
}  // namespace

TEST_CASE("tate projection on constants") {
    auto atlas = riemann_sphere_atlas();
    FormField c = FormField::constant(atlas, two_pi_i);
    CHECK(cdiff(tate_project(c, 0).eval(0, cplx(0.3, 0.2))(0, 0), cplx(0.0)) < 1e-15);
    CHECK(cdiff(tate_project(c, 1).eval(0, cplx(0.3, 0.2))(0, 0), two_pi_i) < 1e-15);
}

TEST_CASE("tate projection decomposition, idempotence, degree-2 convention") {
    auto atlas = riemann_sphere_atlas();
    Rng rng(5);
    FormField f = random_poly_field(atlas, rng);
    FormField w = two_form(atlas, Expr::parse("(2+i)*z + conj(z)^2"));
    for (int p = 0; p <= 2; ++p) {
        for (int k = 0; k < 25; ++k) {
            cplx z = rng.disk(1.3);
            // pi_p + pi_{p+1} = id
            cplx a = tate_project(f, p).eval(0, z)(0, 0) + tate_project(f, p + 1).eval(0, z)(0, 0);
            CHECK(cdiff(a, f.eval(0, z)(0, 0)) <= 1e-12);
            // idempotent
            cplx b = tate_project(tate_project(f, p), p).eval(0, z)(0, 0);
            CHECK(cdiff(b, tate_project(f, p).eval(0, z)(0, 0)) <= 1e-12);
            cplx c = tate_project(w, p).eval(0, z)(1, 1) + tate_project(w, p + 1).eval(0, z)(1, 1);
            CHECK(cdiff(c, w.eval(0, z)(1, 1)) <= 1e-12);
        }
    }
    // an R(1)-valued (1,1) form has real dz^dzbar coefficient: the first
    // Chern form of the Fubini-Study weight is fixed by pi_1
    SurfaceScalar lr;
    lr.per_chart[0] = -log(Expr::parse("1+abs2(z)"));
    lr.per_chart[1] = -log(Expr::parse("1+abs2(z)"));
    FormField c1 = chern_form(atlas, lr);
    cplx z0(0.4, -0.7);
    CHECK(cdiff(tate_project(c1, 1).eval(0, z0)(1, 1), c1.eval(0, z0)(1, 1)) < 1e-14);
}

TEST_CASE("dc of log|z|^2 and operator identities") {
    auto atlas = riemann_sphere_atlas();
    FormField f = scalar_field(atlas, log(abs2(Expr::var())));
    f.add_singular({0, cplx(0.0)});
    FormField g = dc(f);
    Rng rng(11);
    for (int k = 0; k < 30; ++k) {
        cplx z = rng.disk(1.5);
        if (std::abs(z) < 0.1) continue;
        // dc log|z|^2 = dz/z - dzbar/zbar
        CHECK(rel(g.eval(0, z)(1, 0), 1.0 / z) < 1e-12);
        CHECK(rel(g.eval(0, z)(0, 1), -1.0 / std::conj(z)) < 1e-12);
    }
    CHECK_THROWS_AS(g.eval(0, cplx(0.0)), domain_error);
}

TEST_CASE("2 del delbar = dc d and Tate commutation on random fields") {
    auto atlas = riemann_sphere_atlas();
    Rng rng(17);
    for (int trial = 0; trial < 4; ++trial) {
        FormField f = random_poly_field(atlas, rng);
        FormField lhs = 2.0 * del(delbar(f));
        FormField rhs2 = (f.d()).dc();
        for (int k = 0; k < 25; ++k) {
            cplx z = rng.disk(1.2);
            CHECK(rel(lhs.eval(0, z)(1, 1), rhs2.eval(0, z)(1, 1)) <= 1e-6);
        }
        for (int p = 0; p <= 1; ++p) {
            FormField a = d(tate_project(f, p));
            FormField b = tate_project(d(f), p);
            FormField c = dc(tate_project(f, p));
            FormField e = tate_project(dc(f), p + 1);
            for (int k = 0; k < 25; ++k) {
                cplx z = rng.disk(1.2);
                for (auto [r, s] : a.slots()) {
                    CHECK(cdiff(a.eval(0, z)(r, s), b.eval(0, z)(r, s)) <= 1e-8);
                    CHECK(cdiff(c.eval(0, z)(r, s), e.eval(0, z)(r, s)) <= 1e-8);
                }
            }
        }
        (void)lhs;
    }
}

TEST_CASE("d d = 0, del del = 0, delbar delbar = 0") {
    auto atlas = riemann_sphere_atlas();
    Rng rng(23);
    FormField f = random_poly_field(atlas, rng);
    FormField ddf = f.d().d();
    FormField pp = f.del().del();
    FormField bb = f.delbar().delbar();
    for (int k = 0; k < 100; ++k) {
        cplx z = rng.disk(1.4);
        CHECK(cdiff(ddf.eval(0, z)(1, 1), cplx(0.0)) <= 1e-9);
        CHECK(cdiff(pp.eval(0, z)(1, 1), cplx(0.0)) <= 1e-9);
        CHECK(cdiff(bb.eval(0, z)(1, 1), cplx(0.0)) <= 1e-9);
    }
}

TEST_CASE("numeric-fallback derivatives meet the coarse tolerance") {
    auto atlas = riemann_sphere_atlas();
    auto ext = std::make_shared<ExternalFn>();
    ext->eval = [](cplx z) {
        return std::exp(z.real()) * std::cos(z.imag()) +
               cplx(0, 1) * std::sin(z.real() * z.imag());
    };
    FormField f(atlas, 0);
    f.set_component(0, 0, 0, Expr::external(ext));
    FormField lhs = 2.0 * del(delbar(f));
    FormField rhs = (f.d()).dc();
    Rng rng(31);
    for (int k = 0; k < 40; ++k) {
        cplx z = rng.disk(1.0);
        CHECK(rel(lhs.eval(0, z)(1, 1), rhs.eval(0, z)(1, 1)) <= 1e-3);
    }
}

TEST_CASE("chart compatibility of library-built fields") {
    auto atlas = riemann_sphere_atlas();
    Rng rng(37);
    // Fubini-Study Kaehler form given natively in both charts
    Expr wfs0 = Expr::parse("i/2 * (1/(pi*(1+abs2(z))^2)) * 2");
    SurfaceScalar rho;
    rho.per_chart[0] = Expr::parse("2/(pi*(1+abs2(z))^2)");
    rho.per_chart[1] = Expr::parse("2/(pi*(1+abs2(z))^2)");
    FormField wfs = kaehler_form(atlas, rho);
    CHECK(chart_compat_error(wfs, rng) <= 1e-6);

    // first Chern form of the FS weight
    SurfaceScalar lr;
    lr.per_chart[0] = -log(Expr::parse("1+abs2(z)"));
    lr.per_chart[1] = -log(Expr::parse("1+abs2(z)"));
    FormField c1 = chern_form(atlas, lr);
    CHECK(chart_compat_error(c1, rng) <= 1e-6);
    (void)wfs0;
}

TEST_CASE("pullback evaluation from the other chart") {
    auto atlas = riemann_sphere_atlas();
    // the 1-form dz/z is -dw/w in the other chart; give data only on chart 0
    FormField f = one_form(atlas, Expr::parse("1/z"), Expr::constant(0.0));
    cplx w(0.4, 0.1);
    FormValue v = f.eval(1, w);
    CHECK(rel(v(1, 0), -1.0 / w) < 1e-12);
}
