#pragma once
// Chart-wise evaluable complex differential forms on a curve, with bidegree
// decomposition and the operators del, delbar, d, dc and the Tate projection.
//
// Conventions: a degree-1 form is a dz + b dzbar, a degree-2 form is
// c dz^dzbar; dc = del - delbar (no 1/(4 pi i) factor); dc d = 2 del delbar.
// Form conjugation swaps (r,s) components and picks up (-1)^{rs}, so the
// R(1)-valued (1,1)-forms are the ones with real dz^dzbar coefficient.

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "surface.hpp"

namespace deligne {

// slot order: (0,0), (1,0), (0,1), (1,1)
inline constexpr int slot_of(int r, int s) { return r + 2 * s; }

struct FormValue {
    std::array<cplx, 4> v{};  // indexed by slot_of
    cplx& operator()(int r, int s) { return v[size_t(slot_of(r, s))]; }
    cplx operator()(int r, int s) const { return v[size_t(slot_of(r, s))]; }
};

// a scalar function on the surface described by native expressions on a
// subset of charts
struct SurfaceScalar {
    std::map<int, Expr> per_chart;
    SurfaceScalar() = default;
    explicit SurfaceScalar(std::map<int, Expr> m) : per_chart(std::move(m)) {}
};

class FormField {
public:
    struct ChartComponents {
        bool present = false;
        std::array<Expr, 4> comp{};  // by slot
    };

    FormField() = default;
    FormField(AtlasPtr atlas, int degree)
        : atlas_(std::move(atlas)), degree_(degree) {
        charts_.resize(size_t(atlas_->n_charts()));
    }

    static FormField zero(const AtlasPtr& atlas, int degree) {
        FormField f(atlas, degree);
        for (int c = 0; c < atlas->n_charts(); ++c) f.set_all_zero(c);
        return f;
    }
    static FormField scalar(const AtlasPtr& atlas, const SurfaceScalar& s) {
        FormField f(atlas, 0);
        for (auto& [c, e] : s.per_chart) f.set_component(c, 0, 0, e);
        return f;
    }
    static FormField constant(const AtlasPtr& atlas, cplx value) {
        FormField f(atlas, 0);
        for (int c = 0; c < atlas->n_charts(); ++c)
            f.set_component(c, 0, 0, Expr::constant(value));
        return f;
    }

    int degree() const { return degree_; }
    const AtlasPtr& atlas() const { return atlas_; }

    void set_component(int chart, int r, int s, Expr e) {
        auto& cd = charts_.at(size_t(chart));
        cd.present = true;
        cd.comp[size_t(slot_of(r, s))] = std::move(e);
    }
    void set_all_zero(int chart) { charts_.at(size_t(chart)).present = true; }
    bool has_native(int chart) const { return charts_.at(size_t(chart)).present; }
    const Expr& component(int chart, int r, int s) const {
        return charts_.at(size_t(chart)).comp[size_t(slot_of(r, s))];
    }

    void add_singular(const PointOnSurface& p) { singular_.push_back(p); }
    void add_singular(const std::vector<PointOnSurface>& ps) {
        singular_.insert(singular_.end(), ps.begin(), ps.end());
    }
    const std::vector<PointOnSurface>& singular_points() const { return singular_; }

    // list of bidegree slots carried by this degree on a curve
    std::vector<std::pair<int, int>> slots() const {
        switch (degree_) {
            case 0: return {{0, 0}};
            case 1: return {{1, 0}, {0, 1}};
            case 2: return {{1, 1}};
            default: return {};
        }
    }

    FormValue eval(int chart, cplx z) const {
        guard_singular(chart, z);
        if (degree_ > 2) return FormValue{};
        const auto& cd = charts_.at(size_t(chart));
        if (cd.present) return eval_native(cd, z);
        // pull back from a chart that has data
        for (int j = 0; j < atlas_->n_charts(); ++j) {
            if (j == chart || !charts_[size_t(j)].present) continue;
            if (!atlas_->in_overlap(chart, j, z)) continue;
            cplx zj = atlas_->to_chart(chart, j, z);
            cplx fz = atlas_->transition_deriv(chart, j, z);
            FormValue vj = eval_native(charts_[size_t(j)], zj);
            FormValue out;
            for (auto [r, s] : slots()) {
                cplx fac = (r ? fz : cplx(1.0)) * (s ? std::conj(fz) : cplx(1.0));
                out(r, s) = vj(r, s) * fac;
            }
            return out;
        }
        throw domain_error("form has no data covering the requested point");
    }

    cplx coeff(int chart, cplx z, int r, int s) const { return eval(chart, z)(r, s); }

    // --- operators -------------------------------------------------------

    FormField del() const {
        FormField out(atlas_, degree_ + 1);
        out.singular_ = singular_;
        for (int c = 0; c < n_charts(); ++c) {
            if (!charts_[size_t(c)].present) continue;
            if (degree_ == 0)
                out.set_component(c, 1, 0, component(c, 0, 0).dz());
            else if (degree_ == 1)
                out.set_component(c, 1, 1, component(c, 0, 1).dz());
            else
                out.set_all_zero(c);
        }
        return out;
    }
    FormField delbar() const {
        FormField out(atlas_, degree_ + 1);
        out.singular_ = singular_;
        for (int c = 0; c < n_charts(); ++c) {
            if (!charts_[size_t(c)].present) continue;
            if (degree_ == 0)
                out.set_component(c, 0, 1, component(c, 0, 0).dzbar());
            else if (degree_ == 1)
                out.set_component(c, 1, 1, -component(c, 1, 0).dzbar());
            else
                out.set_all_zero(c);
        }
        return out;
    }
    FormField d() const { return del() + delbar(); }
    FormField dc() const { return del() - delbar(); }

    FormField conjugate() const {
        FormField out(atlas_, degree_);
        out.singular_ = singular_;
        for (int c = 0; c < n_charts(); ++c) {
            if (!charts_[size_t(c)].present) continue;
            if (degree_ == 0) out.set_component(c, 0, 0, conj(component(c, 0, 0)));
            if (degree_ == 1) {
                out.set_component(c, 1, 0, conj(component(c, 0, 1)));
                out.set_component(c, 0, 1, conj(component(c, 1, 0)));
            }
            if (degree_ == 2) out.set_component(c, 1, 1, -conj(component(c, 1, 1)));
        }
        return out;
    }

    FormField tate(int p) const {  // projection onto R(p)-valued forms
        double sign = (p % 2 == 0) ? 1.0 : -1.0;
        return 0.5 * (*this + sign * conjugate());
    }

    FormField wedge(const FormField& o) const {
        int dg = degree_ + o.degree_;
        FormField out(atlas_, dg);
        out.singular_ = singular_;
        out.add_singular(o.singular_);
        if (dg > 2) {
            for (int c = 0; c < n_charts(); ++c) out.set_all_zero(c);
            return out;
        }
        for (int c = 0; c < n_charts(); ++c) {
            if (!charts_[size_t(c)].present || !o.charts_[size_t(c)].present) continue;
            auto A = [&](int r, int s) { return component(c, r, s); };
            auto B = [&](int r, int s) { return o.component(c, r, s); };
            if (degree_ == 0) {
                for (auto [r, s] : o.slots()) out.set_component(c, r, s, A(0, 0) * B(r, s));
            } else if (o.degree_ == 0) {
                for (auto [r, s] : slots()) out.set_component(c, r, s, A(r, s) * B(0, 0));
            } else {  // 1 wedge 1
                out.set_component(c, 1, 1, A(1, 0) * B(0, 1) - A(0, 1) * B(1, 0));
            }
        }
        return out;
    }

    // restrict to a single bidegree component
    FormField pick(int r, int s) const {
        FormField out(atlas_, degree_);
        out.singular_ = singular_;
        for (int c = 0; c < n_charts(); ++c) {
            if (!charts_[size_t(c)].present) continue;
            out.set_all_zero(c);
            out.set_component(c, r, s, component(c, r, s));
        }
        return out;
    }

    friend FormField operator+(const FormField& a, const FormField& b) {
        FormField out(a.atlas_, a.degree_);
        out.singular_ = a.singular_;
        out.add_singular(b.singular_);
        for (int c = 0; c < a.n_charts(); ++c) {
            if (!a.charts_[size_t(c)].present || !b.charts_[size_t(c)].present) continue;
            for (auto [r, s] : a.slots())
                out.set_component(c, r, s, a.component(c, r, s) + b.component(c, r, s));
        }
        return out;
    }
    friend FormField operator-(const FormField& a, const FormField& b) {
        return a + (-1.0) * b;
    }
    friend FormField operator*(cplx k, const FormField& a) {
        FormField out(a.atlas_, a.degree_);
        out.singular_ = a.singular_;
        for (int c = 0; c < a.n_charts(); ++c) {
            if (!a.charts_[size_t(c)].present) continue;
            for (auto [r, s] : a.slots())
                out.set_component(c, r, s, Expr::constant(k) * a.component(c, r, s));
        }
        return out;
    }
    friend FormField operator*(double k, const FormField& a) { return cplx(k, 0.0) * a; }

    int n_charts() const { return atlas_ ? atlas_->n_charts() : 0; }

private:
    AtlasPtr atlas_;
    int degree_ = 0;
    std::vector<ChartComponents> charts_;
    std::vector<PointOnSurface> singular_;

    FormValue eval_native(const ChartComponents& cd, cplx z) const {
        FormValue out;
        for (auto [r, s] : slots()) {
            const Expr& e = cd.comp[size_t(slot_of(r, s))];
            out(r, s) = e.node() ? e(z) : cplx(0.0);
        }
        return out;
    }

    void guard_singular(int chart, cplx z) const {
        for (const auto& p : singular_) {
            if (p.chart == chart) {
                if (std::abs(p.z - z) < 1e-14 * (1.0 + std::abs(z)))
                    throw domain_error("form evaluated at a singular point");
            } else if (atlas_->in_overlap(chart, p.chart, z)) {
                cplx zz = atlas_->to_chart(chart, p.chart, z);
                if (std::abs(p.z - zz) < 1e-14 * (1.0 + std::abs(zz)))
                    throw domain_error("form evaluated at a singular point");
            }
        }
    }
};

inline FormField tate_project(const FormField& f, int p) { return f.tate(p); }
inline FormField d(const FormField& f) { return f.d(); }
inline FormField del(const FormField& f) { return f.del(); }
inline FormField delbar(const FormField& f) { return f.delbar(); }
inline FormField dc(const FormField& f) { return f.dc(); }

// chart compatibility of native data: largest relative mismatch between a
// chart's own components and the pullback from another chart, sampled on
// the overlap
inline double chart_compat_error(const FormField& f, Rng& rng, int n_samples = 50) {
    const auto& atlas = *f.atlas();
    double worst = 0.0;
    int found = 0, guard = 0;
    while (found < n_samples && guard < 50 * n_samples + 200) {
        ++guard;
        int ci = rng.integer(0, atlas.n_charts() - 1);
        int cj = rng.integer(0, atlas.n_charts() - 1);
        if (ci == cj || !f.has_native(ci) || !f.has_native(cj)) continue;
        cplx z = rng.disk(1.8);
        if (std::abs(z) < 0.25) continue;
        if (!atlas.in_overlap(ci, cj, z)) continue;
        FormValue native, pulled;
        try {
            native = f.eval(ci, z);
            cplx zj = atlas.to_chart(ci, cj, z);
            cplx fz = atlas.transition_deriv(ci, cj, z);
            FormValue vj = f.eval(cj, zj);
            for (auto [r, s] : f.slots()) {
                cplx fac = (r ? fz : cplx(1.0)) * (s ? std::conj(fz) : cplx(1.0));
                pulled(r, s) = vj(r, s) * fac;
            }
        } catch (const domain_error&) {
            continue;
        }
        ++found;
        for (auto [r, s] : f.slots()) {
            double scale = std::max({1.0, std::abs(native(r, s)), std::abs(pulled(r, s))});
            worst = std::max(worst, std::abs(native(r, s) - pulled(r, s)) / scale);
        }
    }
    return worst;
}

// Builders ------------------------------------------------------------------

// scalar field from a single chart-0 expression; other charts pull back
inline FormField scalar_field(const AtlasPtr& atlas, const Expr& chart0_expr) {
    FormField f(atlas, 0);
    f.set_component(0, 0, 0, chart0_expr);
    return f;
}

// one-form a dz + b dzbar from chart-0 expressions
inline FormField one_form(const AtlasPtr& atlas, const Expr& a, const Expr& b) {
    FormField f(atlas, 1);
    f.set_component(0, 1, 0, a);
    f.set_component(0, 0, 1, b);
    return f;
}

// two-form c dz^dzbar from a chart-0 expression
inline FormField two_form(const AtlasPtr& atlas, const Expr& c) {
    FormField f(atlas, 2);
    f.set_component(0, 1, 1, c);
    return f;
}

// the (1,1) first Chern form delbar del log rho from chart-local weights;
// chart independent because log|g|^2 is harmonic
inline FormField chern_form(const AtlasPtr& atlas, const SurfaceScalar& log_rho) {
    FormField f(atlas, 2);
    for (auto& [c, e] : log_rho.per_chart)
        f.set_component(c, 1, 1, -e.dz().dzbar());  // delbar del f = -f_{z zbar} dz^dzbar
    return f;
}

// Kaehler form (i/2) rho dz^dzbar of a conformal weight
inline FormField kaehler_form(const AtlasPtr& atlas, const SurfaceScalar& rho) {
    FormField f(atlas, 2);
    for (auto& [c, e] : rho.per_chart)
        f.set_component(c, 1, 1, Expr::constant(cplx(0.0, 0.5)) * e);
    return f;
}

}  // namespace deligne
