#pragma once
// Explicit Riemann-surface model: coordinate charts with holomorphic
// transition maps, points, divisors, punctures, and the polygonal
// decompositions the integration maps consume.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "expr.hpp"

namespace deligne {

struct Chart {
    int id = 0;
    std::string name;
};

struct Transition {
    Expr map;    // z_to = map(z_from)
    Expr deriv;  // d z_to / d z_from
};

// Charts are planar coordinate patches; transitions are holomorphic where
// defined (evaluation returning a non-finite value means "outside overlap").
class ChartAtlas {
public:
    int add_chart(const std::string& name) {
        charts_.push_back({int(charts_.size()), name});
        return charts_.back().id;
    }
    void set_transition(int from, int to, Expr map) {
        Expr d = map.dz();
        trans_[{from, to}] = Transition{std::move(map), std::move(d)};
    }

    int n_charts() const { return int(charts_.size()); }
    const Chart& chart(int i) const { return charts_.at(size_t(i)); }

    bool has_transition(int from, int to) const {
        return from == to || trans_.count({from, to}) > 0;
    }
    cplx to_chart(int from, int to, cplx z) const {
        if (from == to) return z;
        return trans_.at({from, to}).map(z);
    }
    cplx transition_deriv(int from, int to, cplx z) const {
        if (from == to) return cplx(1.0, 0.0);
        return trans_.at({from, to}).deriv(z);
    }
    // z given in chart `from` coordinates; true if the point also lies in
    // chart `to` (image finite and transition defined)
    bool in_overlap(int from, int to, cplx z) const {
        if (from == to) return true;
        if (!has_transition(from, to)) return false;
        cplx w;
        try {
            w = to_chart(from, to, z);
        } catch (const domain_error&) {
            return false;
        }
        return std::isfinite(w.real()) && std::isfinite(w.imag()) &&
               std::abs(w) < 1e12;
    }

private:
    std::vector<Chart> charts_;
    std::map<std::pair<int, int>, Transition> trans_;
};

using AtlasPtr = std::shared_ptr<const ChartAtlas>;

struct PointOnSurface {
    int chart = 0;
    cplx z{0.0, 0.0};
};

// Two charts covering the sphere: z on C and w on C with w = 1/z.
inline AtlasPtr riemann_sphere_atlas() {
    auto a = std::make_shared<ChartAtlas>();
    a->add_chart("z");
    a->add_chart("w");
    Expr inv = Expr::constant(1.0) / Expr::var();
    a->set_transition(0, 1, inv);
    a->set_transition(1, 0, inv);
    return a;
}

// Sphere atlas with one translated chart zeta = z - p per finite point p
// (adapted charts for punctures away from 0 and infinity).
inline AtlasPtr sphere_atlas_with_adapted(const std::vector<cplx>& centers) {
    auto a = std::make_shared<ChartAtlas>();
    a->add_chart("z");
    a->add_chart("w");
    Expr z = Expr::var();
    Expr inv = Expr::constant(1.0) / z;
    a->set_transition(0, 1, inv);
    a->set_transition(1, 0, inv);
    for (cplx p : centers) {
        int id = a->add_chart("zeta@" + std::to_string(p.real()));
        a->set_transition(0, id, z - Expr::constant(p));
        a->set_transition(id, 0, z + Expr::constant(p));
        a->set_transition(id, 1, Expr::constant(1.0) / (z + Expr::constant(p)));
        a->set_transition(1, id, inv - Expr::constant(p));
    }
    return a;
}

// Chordal distance on the sphere computed from any chart representation;
// the canonical comparison frame is whichever of the first two charts sees
// the point with modulus <= 1.
inline std::optional<cplx> repr_in(const ChartAtlas& atlas, const PointOnSurface& p,
                                   int chart) {
    if (!atlas.has_transition(p.chart, chart)) return std::nullopt;
    if (p.chart != chart && !atlas.in_overlap(p.chart, chart, p.z)) return std::nullopt;
    return atlas.to_chart(p.chart, chart, p.z);
}

inline bool same_point(const ChartAtlas& atlas, const PointOnSurface& a,
                       const PointOnSurface& b, double tol = 1e-9) {
    for (int c = 0; c < atlas.n_charts(); ++c) {
        auto ra = repr_in(atlas, a, c);
        auto rb = repr_in(atlas, b, c);
        if (ra && rb && std::abs(*ra) <= 1.0 + 1e-12) {
            return std::abs(*ra - *rb) <= tol;
        }
    }
    // no shared moderate chart: the points live near different chart
    // infinities, hence are distinct
    return false;
}

inline double chordal_dist(const ChartAtlas& atlas, const PointOnSurface& a,
                           const PointOnSurface& b) {
    auto lift = [&](const PointOnSurface& p) -> std::pair<cplx, bool> {
        auto r0 = repr_in(atlas, p, 0);
        if (r0 && std::abs(*r0) < 1e8) return {*r0, false};
        return {cplx(0.0), true};  // at infinity
    };
    auto [za, ia] = lift(a);
    auto [zb, ib] = lift(b);
    if (ia && ib) return 0.0;
    auto den = [](cplx z) { return std::sqrt(1.0 + std::norm(z)); };
    if (ia) return 2.0 / den(zb);
    if (ib) return 2.0 / den(za);
    return 2.0 * std::abs(za - zb) / (den(za) * den(zb));
}

class Divisor {
public:
    Divisor() = default;
    Divisor(AtlasPtr atlas, std::vector<std::pair<PointOnSurface, int>> pts)
        : atlas_(std::move(atlas)) {
        for (auto& [p, m] : pts) add(p, m);
    }
    void add(const PointOnSurface& p, int mult) {
        if (mult == 0) return;
        for (auto& [q, m] : pts_) {
            if (same_point(*atlas_, p, q)) {
                m += mult;
                return;
            }
        }
        pts_.push_back({p, mult});
    }
    int degree() const {
        int d = 0;
        for (auto& [p, m] : pts_) d += m;
        return d;
    }
    const std::vector<std::pair<PointOnSurface, int>>& points() const { return pts_; }
    const AtlasPtr& atlas() const { return atlas_; }
    bool empty() const { return pts_.empty(); }

private:
    AtlasPtr atlas_;
    std::vector<std::pair<PointOnSurface, int>> pts_;
};

inline bool divisor_disjoint(const Divisor& e, const Divisor& f) {
    for (auto& [p, mp] : e.points())
        for (auto& [q, mq] : f.points())
            if (same_point(*e.atlas(), p, q)) return false;
    return true;
}

// Normal-crossing divisor D = p_1 + ... + p_N with, for each puncture, the
// chart in which it sits at the origin and the radius of its adapted disk.
struct Puncture {
    PointOnSurface where;   // in some convenient chart
    int adapted_chart = 0;  // chart with coordinate 0 at the puncture
    double radius = 0.2;
};

class PunctureSet {
public:
    PunctureSet() = default;
    PunctureSet(AtlasPtr atlas, std::vector<Puncture> ps)
        : atlas_(std::move(atlas)), ps_(std::move(ps)) {
        validate();
    }
    const std::vector<Puncture>& punctures() const { return ps_; }
    const AtlasPtr& atlas() const { return atlas_; }
    bool empty() const { return ps_.empty(); }
    size_t size() const { return ps_.size(); }

    Divisor divisor() const {
        std::vector<std::pair<PointOnSurface, int>> pts;
        for (auto& p : ps_) pts.push_back({p.where, 1});
        return Divisor(atlas_, pts);
    }

    void validate() const {
        for (auto& p : ps_) {
            auto r = repr_in(*atlas_, p.where, p.adapted_chart);
            if (!r || std::abs(*r) > 1e-9)
                throw config_error("puncture does not sit at the origin of its adapted chart");
        }
        for (size_t i = 0; i < ps_.size(); ++i)
            for (size_t j = i + 1; j < ps_.size(); ++j) {
                // adapted disks must not meet; compare against the sum of
                // chordal radii measured at the disk rims
                PointOnSurface rim_i{ps_[i].adapted_chart, cplx(ps_[i].radius, 0)};
                PointOnSurface rim_j{ps_[j].adapted_chart, cplx(ps_[j].radius, 0)};
                double ri = chordal_dist(*atlas_, ps_[i].where, rim_i);
                double rj = chordal_dist(*atlas_, ps_[j].where, rim_j);
                double d = chordal_dist(*atlas_, ps_[i].where, ps_[j].where);
                if (d <= ri + rj)
                    throw config_error("adapted disks of two punctures overlap");
            }
    }

private:
    AtlasPtr atlas_;
    std::vector<Puncture> ps_;
};

// --------------------------------------------------------------------------
// Polygonal decompositions
// --------------------------------------------------------------------------

struct Cell2 {
    int id = 0;
    int chart = 0;   // containing chart (also the cell's evaluation chart)
    cplx center{0.0, 0.0};
    double radius = 1.0;  // disk in chart coordinates
};

struct Cell1 {
    int id = 0;
    int chart = 0;
    std::function<cplx(double)> gamma;   // t in [0,1]
    std::function<cplx(double)> dgamma;  // d gamma / dt
    // incidence: +1 if gamma runs along the positive boundary of the cell
    std::vector<std::pair<int, int>> coface;  // (2-cell id, sign)
};

struct Cell0 {
    int id = 0;
    PointOnSurface where;
};

class PolygonalDecomposition {
public:
    AtlasPtr atlas;
    std::vector<Cell2> cells2;
    std::vector<Cell1> cells1;
    std::vector<Cell0> cells0;

    // each 1-cell must appear in exactly two 2-cell boundaries with opposite
    // orientation
    bool boundary_cancels() const {
        for (const auto& e : cells1) {
            int s = 0;
            for (auto& [c, sgn] : e.coface) s += sgn;
            if (s != 0 || e.coface.size() != 2) return false;
        }
        return true;
    }

    bool skeleton_avoids(const PunctureSet& D, double min_dist = 1e-7) const {
        for (const auto& e : cells1) {
            for (int k = 0; k <= 256; ++k) {
                PointOnSurface p{e.chart, e.gamma(double(k) / 256.0)};
                for (const auto& q : D.punctures())
                    if (chordal_dist(*atlas, p, q.where) < min_dist) return false;
            }
        }
        return true;
    }

    // sampled containment of each 2-cell closure in its chart
    bool cells_in_charts() const {
        for (const auto& c : cells2) {
            if (c.chart < 0 || c.chart >= atlas->n_charts()) return false;
            if (!std::isfinite(c.radius) || c.radius <= 0) return false;
        }
        return true;
    }

    bool contains(const Cell2& c, const PointOnSurface& p) const {
        auto r = repr_in(*atlas, p, c.chart);
        return r && std::abs(*r - c.center) <= c.radius;
    }
    bool strictly_contains(const Cell2& c, const PointOnSurface& p, double margin) const {
        auto r = repr_in(*atlas, p, c.chart);
        return r && std::abs(*r - c.center) <= c.radius - margin;
    }
};

// The canonical decomposition of the two-chart sphere: northern disk
// |z| <= 1, southern disk |w| <= 1, the equator cut at z = 1.
inline PolygonalDecomposition equatorial_decomposition(const AtlasPtr& atlas) {
    if (atlas->n_charts() < 2 || atlas->chart(0).name != "z" || atlas->chart(1).name != "w")
        throw config_error("equatorial decomposition requires the two-chart sphere atlas");
    cplx probe = atlas->to_chart(0, 1, cplx(2.0, 0.0));
    if (std::abs(probe - cplx(0.5, 0.0)) > 1e-12)
        throw config_error("equatorial decomposition requires the w = 1/z sphere atlas");

    PolygonalDecomposition T;
    T.atlas = atlas;
    T.cells2.push_back({0, 0, cplx(0.0), 1.0});
    T.cells2.push_back({1, 1, cplx(0.0), 1.0});
    Cell1 eq;
    eq.id = 0;
    eq.chart = 0;
    eq.gamma = [](double t) { return std::polar(1.0, 2.0 * pi * t); };
    eq.dgamma = [](double t) { return cplx(0.0, 2.0 * pi) * std::polar(1.0, 2.0 * pi * t); };
    // counterclockwise in the z chart: positive boundary of the northern
    // cell, negative boundary of the southern one
    eq.coface = {{0, +1}, {1, -1}};
    T.cells1.push_back(std::move(eq));
    T.cells0.push_back({0, PointOnSurface{0, cplx(1.0, 0.0)}});
    return T;
}

}  // namespace deligne
