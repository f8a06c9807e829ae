#pragma once
// Deligne pairing norms for hermitian line bundles on the sphere: the
// distributional route (smooth splitting of Eq-32 type), the Gabber
// partition-of-unity route, and the cup-product route through the curve
// reduction; plus Weil reciprocity.
//
// Line bundles are O(d)-normalized: chart trivializations transform with
// g01 = z^d, sections are factored rational functions in the chart-0
// trivialization, with the chart-1 expression scale * prod(1-a w)^m * w^{d-sum m}.

#include "cech.hpp"
#include "growth.hpp"

namespace deligne {

// --------------------------------------------------------------------------
// Factored rational functions
// --------------------------------------------------------------------------

struct FactoredRational {
    cplx scale{1.0, 0.0};
    std::vector<std::pair<cplx, int>> factors;  // (root, multiplicity), roots distinct

    int finite_degree() const {
        int s = 0;
        for (auto& [a, m] : factors) s += m;
        return s;
    }

    FactoredRational times(const FactoredRational& o) const {
        FactoredRational out;
        out.scale = scale * o.scale;
        out.factors = factors;
        for (auto& [a, m] : o.factors) {
            bool merged = false;
            for (auto& [b, n] : out.factors)
                if (std::abs(a - b) < 1e-12) {
                    n += m;
                    merged = true;
                    break;
                }
            if (!merged) out.factors.push_back({a, m});
        }
        std::erase_if(out.factors, [](const auto& f) { return f.second == 0; });
        return out;
    }
    FactoredRational inverse() const {
        FactoredRational out;
        out.scale = cplx(1.0) / scale;
        for (auto& [a, m] : factors) out.factors.push_back({a, -m});
        return out;
    }

    Expr expr_chart0() const {
        Expr e = Expr::constant(scale);
        for (auto& [a, m] : factors) e = e * powi(Expr::var() - Expr::constant(a), m);
        return e;
    }
    // chart-1 expression of the same section of O(d)
    Expr expr_chart1(int d) const {
        Expr w = Expr::var();
        Expr e = Expr::constant(scale);
        for (auto& [a, m] : factors)
            e = e * powi(Expr::constant(1.0) - Expr::constant(a) * w, m);
        return e * powi(w, d - finite_degree());
    }
    SurfaceScalar log_abs_sq(int d) const {
        SurfaceScalar out;
        out.per_chart[0] = log(abs2(expr_chart0()));
        out.per_chart[1] = log(abs2(expr_chart1(d)));
        return out;
    }
    SurfaceScalar log_branch_scalar(int d) const {  // a chosen log branch
        SurfaceScalar out;
        out.per_chart[0] = log(expr_chart0());
        out.per_chart[1] = log(expr_chart1(d));
        return out;
    }

    // divisor of the section of O(d) with this chart-0 trivialization
    Divisor divisor(const AtlasPtr& atlas, int d) const {
        std::vector<std::pair<PointOnSurface, int>> pts;
        for (auto& [a, m] : factors) pts.push_back({{0, a}, m});
        int inf = d - finite_degree();
        if (inf != 0) pts.push_back({{1, cplx(0.0)}, inf});
        return Divisor(atlas, pts);
    }

    // value as a rational function (d = 0) at a surface point, infinity allowed
    cplx value_at(const ChartAtlas& atlas, const PointOnSurface& p) const {
        auto r0 = repr_in(atlas, p, 0);
        if (r0 && std::abs(*r0) < 1e9) {
            cplx v = scale;
            for (auto& [a, m] : factors) v *= detail::powi(*r0 - a, m);
            return v;
        }
        int n = finite_degree();
        if (n > 0) throw domain_error("rational function has a pole at infinity");
        if (n < 0) return cplx(0.0);
        return scale;
    }
};

// --------------------------------------------------------------------------
// Hermitian line bundles with distinguished rational sections
// --------------------------------------------------------------------------

struct HermitianLineBundle {
    AtlasPtr atlas;
    int deg = 1;                   // transition g01 = z^deg between chart trivializations
    SurfaceScalar log_rho_triv;    // chart-local weight of the chart trivialization
    FactoredRational section;      // s in the chart-0 trivialization
    Divisor E;                     // claimed divisor of s
    PunctureSet D;                 // singular locus of the metric (may be empty)
    std::optional<GrowthReport> goodness;

    SurfaceScalar log_norm_sq() const {  // log ||s||^2 per chart
        SurfaceScalar out = section.log_abs_sq(deg);
        out.per_chart[0] = out.per_chart[0] + log_rho_triv.per_chart.at(0);
        out.per_chart[1] = out.per_chart[1] + log_rho_triv.per_chart.at(1);
        return out;
    }
    FormField log_norm_field() const {
        FormField f = FormField::scalar(atlas, log_norm_sq());
        f = 0.5 * f;  // log ||s||
        for (auto& [p, m] : E.points()) f.add_singular(p);
        for (auto& p : D.punctures()) f.add_singular(p.where);
        return f;
    }
    FormField chern() const {
        FormField f = chern_form(atlas, log_rho_triv);
        for (auto& p : D.punctures()) f.add_singular(p.where);
        return f;
    }

    HermitianLineBundle tensor(const HermitianLineBundle& o) const {
        HermitianLineBundle out = *this;
        out.deg = deg + o.deg;
        out.log_rho_triv.per_chart[0] =
            log_rho_triv.per_chart.at(0) + o.log_rho_triv.per_chart.at(0);
        out.log_rho_triv.per_chart[1] =
            log_rho_triv.per_chart.at(1) + o.log_rho_triv.per_chart.at(1);
        out.section = section.times(o.section);
        std::vector<std::pair<PointOnSurface, int>> pts;
        for (auto& pm : E.points()) pts.push_back(pm);
        for (auto& pm : o.E.points()) pts.push_back(pm);
        out.E = Divisor(atlas, pts);
        return out;
    }

    // winding-number order of s around a point (adaptive small circle)
    int winding_order(const PointOnSurface& p) const {
        int chart;
        cplx center;
        auto r0 = repr_in(*atlas, p, 0);
        if (r0 && std::abs(*r0) <= 1.0 + 1e-9) {
            chart = 0;
            center = *r0;
        } else {
            auto r1 = repr_in(*atlas, p, 1);
            chart = 1;
            center = *r1;
        }
        Expr f = chart == 0 ? section.expr_chart0() : section.expr_chart1(deg);
        FormField dlog(atlas, 1);
        dlog.set_component(chart, 1, 0, f.dz() / f);
        double rad = 0.04;
        for (auto& [q, m] : E.points()) {
            auto rq = repr_in(*atlas, q, chart);
            if (rq && std::abs(*rq - center) > 1e-9)
                rad = std::min(rad, 0.3 * std::abs(*rq - center));
        }
        cplx v = circle_integral(dlog, {chart, center}, rad) / two_pi_i;
        return int(std::lround(v.real()));
    }

    void validate() const {
        // divisor of s matches E, point by point, via winding numbers
        int found = 0;
        for (auto& [p, m] : E.points()) {
            if (winding_order(p) != m)
                throw config_error("section order at a divisor point does not match E");
            found += m;
        }
        if (found != deg)
            throw config_error("divisor degree does not match the bundle transition winding");
        // ||s||^2 consistent across charts
        Rng rng(404);
        FormField f = FormField::scalar(atlas, log_norm_sq());
        if (chart_compat_error(f, rng, 30) > 1e-8)
            throw config_error("||s||^2 is not consistent across charts");
    }
};

// the round Fubini-Study O(d) bundle with a factored section
inline HermitianLineBundle fubini_study_bundle(const AtlasPtr& atlas, int d,
                                               FactoredRational s) {
    HermitianLineBundle L;
    L.atlas = atlas;
    L.deg = d;
    L.log_rho_triv.per_chart[0] = double(-d) * log(Expr::parse("1+abs2(z)"));
    L.log_rho_triv.per_chart[1] = double(-d) * log(Expr::parse("1+abs2(z)"));
    L.section = s;
    L.E = s.divisor(atlas, d);
    return L;
}

// --------------------------------------------------------------------------
// Partitions of unity concentrated near the two divisors
// --------------------------------------------------------------------------

struct PartitionPair {
    AtlasPtr atlas;
    double r_inner = 0.15, r_outer = 0.35;
    std::vector<PointOnSurface> near;  // f2 = 1 near these (supp E')
    std::vector<PointOnSurface> far;   // f2 = 0 near these (supp E)

    // f2 as a surface scalar: sum of radial bumps in each point's frame
    SurfaceScalar f2() const {
        Expr e0 = Expr::constant(0.0), e1 = Expr::constant(0.0);
        for (const auto& p : near) {
            auto r0 = repr_in(*atlas, p, 0);
            auto r1 = repr_in(*atlas, p, 1);
            if (r0 && std::abs(*r0) <= 1.2) {
                e0 = e0 + radial_bump(*r0, r_inner, r_outer);
                // same bump written in the other chart
                Expr rr = sqrt(abs2(Expr::constant(1.0) / Expr::var() - Expr::constant(*r0)));
                e1 = e1 + (Expr::constant(1.0) -
                           smooth_step((rr - Expr::constant(r_inner)) *
                                       Expr::constant(1.0 / (r_outer - r_inner))));
            } else if (r1) {
                e1 = e1 + radial_bump(*r1, r_inner, r_outer);
                Expr rr = sqrt(abs2(Expr::constant(1.0) / Expr::var() - Expr::constant(*r1)));
                e0 = e0 + (Expr::constant(1.0) -
                           smooth_step((rr - Expr::constant(r_inner)) *
                                       Expr::constant(1.0 / (r_outer - r_inner))));
            } else {
                throw config_error("partition point not representable in either chart");
            }
        }
        SurfaceScalar out;
        out.per_chart[0] = e0;
        out.per_chart[1] = e1;
        return out;
    }
    SurfaceScalar f1() const {
        SurfaceScalar s2 = f2();
        SurfaceScalar out;
        out.per_chart[0] = Expr::constant(1.0) - s2.per_chart.at(0);
        out.per_chart[1] = Expr::constant(1.0) - s2.per_chart.at(1);
        return out;
    }

    void validate() const {
        // pairwise disjoint supports and clearance of the far points
        for (size_t i = 0; i < near.size(); ++i)
            for (size_t j = i + 1; j < near.size(); ++j)
                if (chordal_dist(*atlas, near[i], near[j]) < 2.5 * r_outer)
                    throw config_error("partition bumps overlap");
        for (const auto& p : far)
            for (const auto& q : near)
                if (chordal_dist(*atlas, p, q) < 1.3 * r_outer)
                    throw config_error("partition bump reaches the other divisor");
        // identity and support conditions at samples
        FormField F1 = FormField::scalar(atlas, f1());
        FormField F2 = FormField::scalar(atlas, f2());
        Rng rng(99);
        for (int k = 0; k < 50; ++k) {
            PointOnSurface p{int(rng.next_u64() % 2), rng.disk(1.1)};
            cplx s = F1.eval(p.chart, p.z)(0, 0) + F2.eval(p.chart, p.z)(0, 0);
            if (std::abs(s - 1.0) > 1e-12)
                throw config_error("partition does not sum to one");
        }
        for (const auto& q : near) {
            auto rq = repr_in(*atlas, q, 0);
            int chart = rq && std::abs(*rq) <= 1.2 ? 0 : 1;
            cplx c = *repr_in(*atlas, q, chart);
            for (int k = 0; k < 8; ++k) {
                cplx z = c + std::polar(0.6 * r_inner, 2.0 * pi * k / 8);
                if (std::abs(F2.eval(chart, z)(0, 0) - 1.0) > 1e-12)
                    throw config_error("f2 is not 1 near supp E'");
            }
        }
    }
};

// --------------------------------------------------------------------------
// Pairing routes
// --------------------------------------------------------------------------

struct PairingResult {
    double value = 0.0;  // log ||<s, s'>||^2
    std::string route;
    double imag_abs = 0.0;
    IntegralResult convergence;
};

namespace detail {

inline void require_pairable(const HermitianLineBundle& L, const HermitianLineBundle& Lp) {
    if (!divisor_disjoint(L.E, Lp.E))
        throw config_error("pairing requires sections with disjoint divisors");
    auto disjoint_from_D = [](const Divisor& E, const PunctureSet& D) {
        for (auto& [p, m] : E.points())
            for (auto& q : D.punctures())
                if (chordal_dist(*E.atlas(), p, q.where) < 1e-9)
                    throw config_error("section divisor meets the metric singularity set");
    };
    disjoint_from_D(L.E, L.D);
    disjoint_from_D(L.E, Lp.D);
    disjoint_from_D(Lp.E, L.D);
    disjoint_from_D(Lp.E, Lp.D);
}

inline std::vector<SingularPoint> puncture_singularities(const HermitianLineBundle& L,
                                                         const HermitianLineBundle& Lp) {
    std::vector<SingularPoint> out;
    for (auto& p : L.D.punctures()) out.push_back({p.where, SingClass::LogLog, true});
    for (auto& p : Lp.D.punctures()) {
        bool dup = false;
        for (auto& q : L.D.punctures())
            dup = dup || chordal_dist(*L.atlas, p.where, q.where) < 1e-9;
        if (!dup) out.push_back({p.where, SingClass::LogLog, true});
    }
    return out;
}

inline PairingResult finish(cplx integral, double point_terms, const char* route,
                            IntegralResult conv) {
    cplx total = cplx(0.0, 1.0) / pi * integral + point_terms;
    PairingResult r;
    r.value = total.real();
    r.imag_abs = std::abs(total.imag());
    r.route = route;
    r.convergence = std::move(conv);
    return r;
}

}  // namespace detail

// Gabber route: the four partition-of-unity integrals, excised near D
inline PairingResult pairing_gabber(const HermitianLineBundle& L,
                                    const HermitianLineBundle& Lp,
                                    const PartitionPair& parts,
                                    const ExcisionSchedule& sched,
                                    const GridParams& gp = {}, double tol = 1e-4) {
    detail::require_pairable(L, Lp);
    parts.validate();
    FormField f1 = FormField::scalar(L.atlas, parts.f1());
    FormField f2 = FormField::scalar(L.atlas, parts.f2());
    FormField ls = L.log_norm_field();
    FormField lsp = Lp.log_norm_field();
    FormField c1 = L.chern();
    FormField c1p = Lp.chern();

    FormField term1 = f1.wedge(lsp).wedge(c1);
    FormField term2 = f2.wedge(ls).wedge(c1p);
    FormField term3 = ls.wedge(f2.d().wedge(lsp.dc()));
    FormField term4 = lsp.wedge(f1.d().wedge(ls.dc()));
    FormField sum = term1 + term2 + term3 + term4;

    // all partition structure and the only kept log poles sit around supp E',
    // so the feature grids are aligned with the partition annuli there
    std::vector<SingularPoint> sing = detail::puncture_singularities(L, Lp);
    for (auto& [p, m] : Lp.E.points())
        sing.push_back({p, SingClass::LogPole, false,
                        std::make_pair(0.9 * parts.r_inner, 1.15 * parts.r_outer)});

    IntegralResult res = integrate_excised(sum, sing, sched, gp, nullptr, tol);
    return detail::finish(res.value, 0.0, "gabber", res);
}

// Distributional route (smooth metrics only): the smooth part of the
// current splitting plus the exact point masses
inline PairingResult pairing_distributional(const HermitianLineBundle& L,
                                            const HermitianLineBundle& Lp,
                                            const ExcisionSchedule& sched,
                                            const GridParams& gp = {},
                                            double tol = 1e-4) {
    detail::require_pairable(L, Lp);
    if (!L.D.empty() || !Lp.D.empty())
        throw config_error("distributional route requires smooth metrics");
    FormField lsp = Lp.log_norm_field();
    FormField c1 = L.chern();
    FormField integrand = lsp.wedge(c1);

    std::vector<SingularPoint> sing;
    for (auto& [p, m] : Lp.E.points()) sing.push_back({p, SingClass::LogPole, false});
    IntegralResult res = integrate_excised(integrand, sing, sched, gp, nullptr, tol);

    // + log ||s||^2 [E']
    double pts = 0.0;
    FormField ls2 = FormField::scalar(L.atlas, L.log_norm_sq());
    for (auto& [p, m] : Lp.E.points()) {
        auto r0 = repr_in(*L.atlas, p, 0);
        int chart = r0 && std::abs(*r0) <= 1.0 + 1e-12 ? 0 : 1;
        cplx zz = *repr_in(*L.atlas, p, chart);
        pts += double(m) * ls2.eval(chart, zz)(0, 0).real();
    }
    return detail::finish(res.value, pts, "distributional", res);
}

// Cup-product route: two-open cover from the section supports, the bundle
// cocycles, their cup, the curve reduction, and the decomposition pairing.
inline PairingResult pairing_via_cup(const HermitianLineBundle& L,
                                     const HermitianLineBundle& Lp,
                                     const PolygonalDecomposition& T,
                                     const ExcisionSchedule& sched,
                                     const GridParams& gp = {}, double tol = 1e-4) {
    detail::require_pairable(L, Lp);
    const AtlasPtr& atlas = L.atlas;

    // h: rational function with divisor E' - E (finite parts; the infinity
    // orders must balance)
    FactoredRational h;
    auto add_pts = [&](const Divisor& dv, int s) {
        for (auto& [p, m] : dv.points()) {
            auto r0 = repr_in(*atlas, p, 0);
            if (r0 && std::abs(*r0) < 1e9) {
                FactoredRational f;
                f.factors = {{*r0, s * m}};
                h = h.times(f);
            }
        }
    };
    add_pts(Lp.E, +1);
    add_pts(L.E, -1);
    {
        int want_inf = 0;
        auto inf_mult = [&](const Divisor& dv) {
            for (auto& [p, m] : dv.points())
                if (!repr_in(*atlas, p, 0) || std::abs(*repr_in(*atlas, p, 0)) >= 1e9)
                    return m;
            return 0;
        };
        want_inf = inf_mult(Lp.E) - inf_mult(L.E);
        if (-h.finite_degree() != want_inf)
            throw config_error("cup route: divisors not realizable by a single rational h");
    }

    auto cover = std::make_shared<Cover>();
    cover->atlas = atlas;
    OpenSet U1, U2;
    U1.name = "X-suppE'";
    for (auto& [p, m] : Lp.E.points()) U1.excluded.push_back(p);
    U2.name = "X-suppE";
    for (auto& [p, m] : L.E.points()) U2.excluded.push_back(p);
    cover->opens = {U1, U2};
    for (auto& p : L.D.punctures()) cover->avoid.push_back(p.where);
    for (auto& p : Lp.D.punctures()) cover->avoid.push_back(p.where);

    auto bundle_data = [&](const HermitianLineBundle& B, bool primed) {
        MetrizedLineBundleData d;
        d.cover = cover;
        FactoredRational t_u1 = primed ? B.section : B.section.times(h);
        FactoredRational t_u2 = primed ? B.section.times(h.inverse()) : B.section;
        for (auto* t : {&t_u1, &t_u2}) {
            SurfaceScalar lr = t->log_abs_sq(B.deg);
            lr.per_chart[0] = lr.per_chart.at(0) + B.log_rho_triv.per_chart.at(0);
            lr.per_chart[1] = lr.per_chart.at(1) + B.log_rho_triv.per_chart.at(1);
            d.log_rho.push_back(lr);
        }
        // g_{U1 U2} = t_u2 / t_u1 = 1/h in both cases
        SurfaceScalar lg = h.log_branch_scalar(0);
        lg.per_chart[0] = -lg.per_chart.at(0);
        lg.per_chart[1] = -lg.per_chart.at(1);
        d.log_g[{0, 1}] = lg;
        for (auto& p : B.D.punctures()) d.metric_singularities.push_back(p.where);
        return d;
    };
    DeligneCochain ca = bundle_cocycle(bundle_data(L, false));
    DeligneCochain cb = bundle_cocycle(bundle_data(Lp, true));
    CurveCocycle omega = reduce_product_on_curve(cup_hermitian(ca, cb));

    std::vector<SingularPoint> sing = detail::puncture_singularities(L, Lp);
    IntegralResult res = pair_with_decomposition(omega.view(), T, sing, sched, gp, tol);
    return detail::finish(res.value, 0.0, "cup", res);
}

// --------------------------------------------------------------------------
// Weil reciprocity
// --------------------------------------------------------------------------

struct WeilReport {
    cplx lhs, rhs;
    double gap;
};

inline WeilReport weil_reciprocity_check(const AtlasPtr& atlas, const FactoredRational& f,
                                         const FactoredRational& g) {
    Divisor df = f.divisor(atlas, 0), dg = g.divisor(atlas, 0);
    if (!divisor_disjoint(df, dg))
        throw config_error("Weil reciprocity requires disjoint divisors");
    auto eval_on = [&](const FactoredRational& a, const Divisor& dv) {
        cplx prod(1.0, 0.0);
        for (auto& [p, m] : dv.points()) {
            cplx v = a.value_at(*atlas, p);
            if (v == cplx(0.0) || !std::isfinite(std::abs(v)))
                throw domain_error("function not finite-nonzero on the other divisor");
            prod *= detail::powi(v, m);
        }
        return prod;
    };
    WeilReport r;
    r.lhs = eval_on(f, dg);
    r.rhs = eval_on(g, df);
    r.gap = std::abs(r.lhs - r.rhs);
    return r;
}

}  // namespace deligne
