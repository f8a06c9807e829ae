#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deligne/surface.hpp>

using namespace deligne;

TEST_CASE("sphere atlas transitions") {
    auto atlas = riemann_sphere_atlas();
    // z = 2 in chart 0 is w = 0.5 in chart 1
    CHECK(std::abs(atlas->to_chart(0, 1, cplx(2.0, 0.0)) - cplx(0.5, 0.0)) < 1e-15);
    // round trip at z = 1 + i
    cplx z(1.0, 1.0);
    cplx back = atlas->to_chart(1, 0, atlas->to_chart(0, 1, z));
    CHECK(std::abs(back - z) <= 1e-12);
    // analytic derivative of the transition at z = 2
    CHECK(std::abs(atlas->transition_deriv(0, 1, cplx(2.0, 0.0)) - cplx(-0.25, 0.0)) < 1e-15);
}

TEST_CASE("atlas cocycle and round-trip at random overlap samples") {
    auto atlas = sphere_atlas_with_adapted({cplx(0.5, 0.0)});
    Rng rng(99);
    int checked = 0;
    while (checked < 100) {
        cplx z = rng.disk(2.0);
        if (std::abs(z) < 0.05) continue;
        // round trips between every overlapping pair
        for (int i = 0; i < atlas->n_charts(); ++i)
            for (int j = 0; j < atlas->n_charts(); ++j) {
                if (i == j) continue;
                if (!atlas->in_overlap(0, i, z)) continue;
                cplx zi = atlas->to_chart(0, i, z);
                if (!atlas->in_overlap(i, j, zi)) continue;
                cplx zj = atlas->to_chart(i, j, zi);
                if (!atlas->in_overlap(j, i, zj)) continue;
                CHECK(std::abs(atlas->to_chart(j, i, zj) - zi) <= 1e-10 * (1.0 + std::abs(zi)));
                // cocycle through chart 0
                if (atlas->in_overlap(i, 0, zi)) {
                    cplx via0 = atlas->to_chart(0, j, atlas->to_chart(i, 0, zi));
                    CHECK(std::abs(via0 - zj) <= 1e-10 * (1.0 + std::abs(zj)));
                }
            }
        ++checked;
    }
}

TEST_CASE("cross-chart point identity") {
    auto atlas = riemann_sphere_atlas();
    PointOnSurface a{0, cplx(2.0, 0.0)};
    PointOnSurface b{1, cplx(0.5, 0.0)};
    CHECK(same_point(*atlas, a, b));
    CHECK(!same_point(*atlas, a, PointOnSurface{1, cplx(0.51, 0.0)}));
}

TEST_CASE("divisors") {
    auto atlas = riemann_sphere_atlas();
    Divisor e(atlas, {{{0, cplx(0.0)}, 1}});
    Divisor f(atlas, {{{0, cplx(1.0)}, 1}});
    CHECK(divisor_disjoint(e, f));
    Divisor g(atlas, {{{0, cplx(0.0)}, 1}});
    CHECK(!divisor_disjoint(e, g));
    // same point seen from the two charts
    Divisor h(atlas, {{{1, cplx(0.5)}, 1}});
    Divisor k(atlas, {{{0, cplx(2.0)}, 1}});
    CHECK(!divisor_disjoint(h, k));
    // multiplicities merge under cross-chart identification
    Divisor m(atlas, {{{0, cplx(2.0)}, 1}, {{1, cplx(0.5)}, 2}});
    CHECK(m.points().size() == 1);
    CHECK(m.degree() == 3);
}

TEST_CASE("puncture sets validate adapted charts and disk disjointness") {
    auto atlas = sphere_atlas_with_adapted({cplx(0.5, 0.0)});
    std::vector<Puncture> ps = {
        {{0, cplx(0.0)}, 0, 0.2},
        {{0, cplx(0.5, 0.0)}, 2, 0.2},
        {{1, cplx(0.0)}, 1, 0.2},
    };
    CHECK_NOTHROW(PunctureSet(atlas, ps));
    // adapted coordinate not at the origin
    std::vector<Puncture> bad = {{{0, cplx(0.3, 0.0)}, 0, 0.2}};
    CHECK_THROWS_AS(PunctureSet(atlas, bad), config_error);
    // overlapping adapted disks
    std::vector<Puncture> close = {
        {{0, cplx(0.0)}, 0, 0.4},
        {{0, cplx(0.5, 0.0)}, 2, 0.4},
    };
    CHECK_THROWS_AS(PunctureSet(atlas, close), config_error);
}

TEST_CASE("equatorial decomposition") {
    auto atlas = riemann_sphere_atlas();
    auto T = equatorial_decomposition(atlas);
    CHECK(T.cells2.size() == 2);
    CHECK(T.cells1.size() == 1);
    CHECK(T.cells0.size() == 1);
    CHECK(T.boundary_cancels());
    CHECK(T.cells_in_charts());

    auto atlas2 = sphere_atlas_with_adapted({cplx(0.5, 0.0)});
    auto T2 = equatorial_decomposition(atlas2);
    PunctureSet ok(atlas2, {{{0, cplx(0.5, 0.0)}, 2, 0.2}});
    CHECK(T2.skeleton_avoids(ok));
    // puncture exactly on |z| = 1
    auto atlas3 = sphere_atlas_with_adapted({cplx(1.0, 0.0)});
    auto T3 = equatorial_decomposition(atlas3);
    PunctureSet bad(atlas3, {{{0, cplx(1.0, 0.0)}, 2, 0.1}});
    CHECK(!T3.skeleton_avoids(bad));

    // refuses a non-sphere atlas
    auto one_chart = std::make_shared<ChartAtlas>();
    one_chart->add_chart("only");
    CHECK_THROWS_AS(equatorial_decomposition(AtlasPtr(one_chart)), config_error);
}
