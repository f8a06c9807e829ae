#pragma once
// Singularity-aware quadrature on the sphere: excised cell integrals with
// log-refined annular grids, the epsilon -> 0 extrapolation with the
// log-tail model a + b/log(eps) + c log|log eps|/log(eps), adaptive circle
// and curve integrals, and the pairing of a total cocycle with a polygonal
// decomposition.

#include <atomic>
#include <cmath>
#include <future>
#include <thread>

#include "forms.hpp"

namespace deligne {

inline int& thread_cap() {
    static int cap = std::max(1u, std::thread::hardware_concurrency());
    return cap;
}

// run jobs in fixed order with bounded concurrency; summation order is the
// job order, so results do not depend on the thread count
template <class F>
inline cplx parallel_sum(const std::vector<F>& jobs) {
    if (jobs.empty()) return cplx(0.0);
    int cap = std::max(1, thread_cap());
    std::vector<cplx> partial(jobs.size());
    if (cap == 1 || jobs.size() == 1) {
        for (size_t i = 0; i < jobs.size(); ++i) partial[i] = jobs[i]();
    } else {
        std::atomic<size_t> next{0};
        auto worker = [&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= jobs.size()) return;
                partial[i] = jobs[i]();
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < cap - 1; ++t) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();
    }
    cplx s(0.0);
    for (const cplx& p : partial) s += p;
    return s;
}

// ---------------------------------------------------------------------------
// Gauss-Legendre nodes on [-1, 1]
// ---------------------------------------------------------------------------

inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(size_t(n), 0.0);
    w.assign(size_t(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double t = std::cos(pi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
            }
            double dp = n * (t * p0 - p1) / (t * t - 1.0);
            double dt = p0 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        double p0 = 1.0, p1 = 0.0;
        for (int j = 0; j < n; ++j) {
            double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
        }
        double dp = n * (t * p0 - p1) / (t * t - 1.0);
        x[size_t(i)] = t;
        w[size_t(i)] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
}

// composite Gauss-Legendre over [a, b]
inline void composite_gl(double a, double b, int panels, int order,
                         std::vector<double>& nodes, std::vector<double>& weights) {
    std::vector<double> x, w;
    gauss_legendre(order, x, w);
    nodes.clear();
    weights.clear();
    for (int p = 0; p < panels; ++p) {
        double lo = a + (b - a) * p / panels;
        double hi = a + (b - a) * (p + 1) / panels;
        for (int i = 0; i < order; ++i) {
            nodes.push_back(0.5 * (lo + hi) + 0.5 * (hi - lo) * x[size_t(i)]);
            weights.push_back(0.5 * (hi - lo) * w[size_t(i)]);
        }
    }
}

// ---------------------------------------------------------------------------
// Schedules and results
// ---------------------------------------------------------------------------

struct ExcisionSchedule {
    double eps0 = 1e-2;
    double ratio = 0.5;
    int count = 10;
    int fit_points = 6;

    std::vector<double> epsilons() const {
        if (!(eps0 > 0.0) || !(ratio > 0.0 && ratio < 1.0) || count < 1)
            throw config_error("excision schedule: need eps0 > 0, 0 < ratio < 1, count >= 1");
        std::vector<double> e;
        double v = eps0;
        for (int i = 0; i < count; ++i, v *= ratio) e.push_back(v);
        return e;
    }
};

struct IntegralResult {
    cplx value{0.0};
    std::vector<double> eps;
    std::vector<cplx> per_eps;
    cplx extrapolated{0.0};
    double err_est = 0.0;
    bool converged = true;
};

// least-squares fit of y ~ a + b/L + c log(L)/L + d log^2(L)/L with
// L = log(1/eps); these span the boundary tails of the excised integrals of
// the log-log singularity families
inline cplx extrapolate_log_tail(const std::vector<double>& eps,
                                 const std::vector<cplx>& y, size_t lo, size_t hi,
                                 double* resid = nullptr) {
    size_t n = hi - lo;
    int nr = n >= 6 ? 4 : (n >= 4 ? 3 : int(n));
    if (n < 3) {
        if (resid) *resid = 0.0;
        return y[hi - 1];
    }
    auto regs = [&](double L, double* r) {
        r[0] = 1.0;
        r[1] = 1.0 / L;
        r[2] = std::log(L) / L;
        r[3] = std::log(L) * std::log(L) / L;
        r[4] = 1.0 / (L * L);
        r[5] = std::log(L) / (L * L);
    };
    double A[6][6] = {};
    cplx B[6] = {};
    for (size_t i = lo; i < hi; ++i) {
        double L = std::log(1.0 / eps[i]);
        double r[6];
        regs(L, r);
        for (int a = 0; a < nr; ++a) {
            for (int b = 0; b < nr; ++b) A[a][b] += r[a] * r[b];
            B[a] += r[a] * y[i];
        }
    }
    cplx X[6] = {};
    {
        double G[6][6];
        cplx R[6];
        for (int a = 0; a < nr; ++a) {
            R[a] = B[a];
            for (int b = 0; b < nr; ++b) G[a][b] = A[a][b];
        }
        for (int col = 0; col < nr; ++col) {
            int piv = col;
            for (int r2 = col + 1; r2 < nr; ++r2)
                if (std::abs(G[r2][col]) > std::abs(G[piv][col])) piv = r2;
            std::swap(G[col], G[piv]);
            std::swap(R[col], R[piv]);
            if (std::abs(G[col][col]) < 1e-14) {
                if (resid) *resid = 0.0;
                return y[hi - 1];
            }
            for (int r2 = col + 1; r2 < nr; ++r2) {
                double f = G[r2][col] / G[col][col];
                for (int c = col; c < nr; ++c) G[r2][c] -= f * G[col][c];
                R[r2] -= f * R[col];
            }
        }
        for (int r2 = nr - 1; r2 >= 0; --r2) {
            cplx s = R[r2];
            for (int c = r2 + 1; c < nr; ++c) s -= G[r2][c] * X[c];
            X[r2] = s / G[r2][r2];
        }
    }
    if (resid) {
        double worst = 0.0;
        for (size_t i = lo; i < hi; ++i) {
            double L = std::log(1.0 / eps[i]);
            double r[6];
            regs(L, r);
            cplx fit(0.0);
            for (int a = 0; a < nr; ++a) fit += X[a] * r[a];
            worst = std::max(worst, std::abs(fit - y[i]));
        }
        *resid = worst;
    }
    return X[0];
}

// ---------------------------------------------------------------------------
// Cell integration
// ---------------------------------------------------------------------------

enum class SingClass { Smooth, LogPole, LogLog };

struct SingularPoint {
    PointOnSurface where;
    SingClass cls = SingClass::Smooth;
    bool excise = false;
    // preferred bump radii; used to align feature grids with structure the
    // integrand is known to carry there (e.g. partition annuli)
    std::optional<std::pair<double, double>> radii;
    // radius below which the integrand is pure cusp asymptotics; the band
    // [structure_r, r1] gets its own plain-radius fine grid (model blends)
    double structure_r = 0.0;
};

struct GridParams {
    int theta = 160;          // angular nodes per ring
    int theta_dense = 512;    // rings crossing off-center feature zones
    int rad_panels = 18;      // main radial panels
    int rad_order = 8;
    int ann_panels = 10;      // annular panels in the substituted variable
    int ann_order = 6;
    double r_min = 1e-7;      // inner cutoff for integrable singularities
    double feature_frac = 0.35;

    // denser angular sampling for integrands carrying off-center partition
    // bumps (the masked main grid is angular-resolution limited)
    static GridParams dense() {
        GridParams g;
        g.theta = 512;
        g.rad_panels = 20;
        return g;
    }
};

namespace detail {

struct LocalFeature {
    cplx p;
    SingClass cls;
    bool excise;
    double r1, r2;
    double rs = 0.0;  // optional structure zone [rs, r1]
};

// bump profile: 1 inside r1, 0 outside r2
inline double bump_radial(double r, double r1, double r2) {
    return 1.0 - step_val((r - r1) / (r2 - r1));
}

inline std::vector<LocalFeature> layout_features(const Cell2& cell,
                                                 const std::vector<std::pair<cplx, SingularPoint>>& feats,
                                                 const GridParams& gp) {
    std::vector<LocalFeature> out;
    for (auto& [p, sp] : feats) {
        double cap = gp.feature_frac * cell.radius;
        double edge = cell.radius - std::abs(p - cell.center);
        if (edge <= 1e-12)
            throw domain_error("singular point sits on a cell boundary");
        cap = std::min(cap, 0.9 * edge);
        for (auto& [q, sq] : feats)
            if (std::abs(q - p) > 1e-14) cap = std::min(cap, 0.495 * std::abs(q - p));
        double r2 = cap, r1 = 0.5 * cap;
        if (sp.radii) {
            r2 = std::min(sp.radii->second, cap);
            r1 = std::min(sp.radii->first, 0.8 * r2);
        }
        double rs = sp.structure_r > 0.0 ? std::min(sp.structure_r, 0.6 * r1) : 0.0;
        out.push_back({p, sp.cls, sp.excise, r1, r2, rs});
    }
    return out;
}

}  // namespace detail

// quadrature node in chart coordinates; weights already carry all masks and
// jacobians for integrating the dz^dzbar coefficient against (-2i) dx dy
struct QNode {
    cplx z;
    double w;
};

namespace detail {

// nodes of the core annulus [a, r1] around a feature, radial variable
// substituted by singularity class (chi == 1 throughout)
inline std::vector<QNode> core_nodes(const LocalFeature& f, double a,
                                     const GridParams& gp) {
    if (a >= f.r1) throw domain_error("excision radius larger than the feature core");
    bool loglog = f.cls == SingClass::LogLog;
    double ua = std::log(1.0 / f.r1), ub = std::log(1.0 / a);  // u = log(1/r)
    std::vector<double> un, uw;
    if (loglog) {
        double va = std::log(ua), vb = std::log(ub);
        composite_gl(va, vb, gp.ann_panels, gp.ann_order, un, uw);
        for (size_t i = 0; i < un.size(); ++i) {
            double u = std::exp(un[i]);
            uw[i] *= u;  // du = u dv
            un[i] = u;
        }
    } else {
        composite_gl(ua, ub, gp.ann_panels, gp.ann_order, un, uw);
    }
    std::vector<QNode> out;
    out.reserve(un.size() * size_t(gp.theta));
    for (size_t i = 0; i < un.size(); ++i) {
        double r = std::exp(-un[i]);
        double jac = r * r * uw[i];  // r dr = r^2 du
        for (int k = 0; k < gp.theta; ++k) {
            double th = 2.0 * pi * (k + 0.5) / gp.theta;
            out.push_back({f.p + std::polar(r, th), jac * (2.0 * pi / gp.theta)});
        }
    }
    return out;
}

}  // namespace detail

// The epsilon-independent nodes of a cell: bump-masked main grid, feature
// transition zones, and the cores of non-excised features down to r_min.
inline std::vector<QNode> cell_fixed_nodes(const Cell2& cell,
                                           const std::vector<detail::LocalFeature>& feats,
                                           const GridParams& gp) {
    auto bump_sum = [&](cplx z) {
        double s = 0.0;
        for (const auto& f : feats) s += detail::bump_radial(std::abs(z - f.p), f.r1, f.r2);
        return s;
    };
    std::vector<QNode> out;
    // radial panel edges: uniform panels plus refined bands where rings meet
    // an off-center feature zone
    std::vector<double> edges;
    for (int p = 0; p <= gp.rad_panels; ++p)
        edges.push_back(cell.radius * p / gp.rad_panels);
    for (const auto& f : feats) {
        double dist = std::abs(f.p - cell.center);
        if (dist < 1e-12) continue;
        double lo = std::max(0.0, dist - 1.3 * f.r2);
        double hi = std::min(cell.radius, dist + 1.3 * f.r2);
        int extra = 14;
        for (int p = 0; p <= extra; ++p) edges.push_back(lo + (hi - lo) * p / extra);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [&](double a, double b) { return b - a < 1e-4 * cell.radius; }),
                edges.end());
    std::vector<double> glx, glw;
    gauss_legendre(gp.rad_order, glx, glw);
    for (size_t p = 0; p + 1 < edges.size(); ++p) {
        for (int i = 0; i < gp.rad_order; ++i) {
            double r = 0.5 * (edges[p] + edges[p + 1]) +
                       0.5 * (edges[p + 1] - edges[p]) * glx[size_t(i)];
            double wr = 0.5 * (edges[p + 1] - edges[p]) * glw[size_t(i)];
            // rings crossing an off-center mask ramp need dense angles
            int nth = gp.theta;
            for (const auto& f : feats) {
                double dist = std::abs(f.p - cell.center);
                if (dist > 1e-12 && std::abs(r - dist) <= 1.3 * f.r2)
                    nth = std::max(nth, gp.theta_dense);
            }
            for (int k = 0; k < nth; ++k) {
                double th = 2.0 * pi * (k + 0.5) / nth;
                cplx z = cell.center + std::polar(r, th);
                double mask = 1.0 - bump_sum(z);
                if (mask == 0.0) continue;
                out.push_back({z, mask * wr * r * (2.0 * pi / nth)});
            }
        }
    }
    for (const auto& f : feats) {
        std::vector<double> tn, tw;
        composite_gl(f.r1, f.r2, 10, 8, tn, tw);
        for (size_t i = 0; i < tn.size(); ++i) {
            double r = tn[i];
            double chi = detail::bump_radial(r, f.r1, f.r2);
            if (chi == 0.0) continue;
            for (int k = 0; k < gp.theta; ++k) {
                double th = 2.0 * pi * (k + 0.5) / gp.theta;
                out.push_back({f.p + std::polar(r, th), chi * tw[i] * r * (2.0 * pi / gp.theta)});
            }
        }
        if (f.rs > 0.0) {
            // fine plain-radius zone covering sharp model structure
            std::vector<double> sn, sw;
            composite_gl(f.rs, f.r1, 16, 8, sn, sw);
            for (size_t i = 0; i < sn.size(); ++i) {
                double r = sn[i];
                for (int k = 0; k < gp.theta; ++k) {
                    double th = 2.0 * pi * (k + 0.5) / gp.theta;
                    out.push_back({f.p + std::polar(r, th), sw[i] * r * (2.0 * pi / gp.theta)});
                }
            }
        }
        if (!f.excise) {
            detail::LocalFeature g = f;
            if (g.rs > 0.0) g.r1 = g.rs;
            auto core = detail::core_nodes(g, gp.r_min, gp);
            out.insert(out.end(), core.begin(), core.end());
        }
    }
    return out;
}

// weighted sum of the (1,1) coefficient over nodes, times -2i
inline cplx integrate_nodes(const FormField& w, int chart, const std::vector<QNode>& nodes) {
    std::vector<std::function<cplx()>> jobs;
    size_t chunk = std::max<size_t>(512, nodes.size() / 16);
    for (size_t lo = 0; lo < nodes.size(); lo += chunk) {
        size_t hi = std::min(nodes.size(), lo + chunk);
        jobs.push_back([&w, chart, &nodes, lo, hi]() {
            cplx acc(0.0);
            for (size_t i = lo; i < hi; ++i) {
                cplx c = w.eval(chart, nodes[i].z)(1, 1);
                if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
                    throw domain_error("non-finite integrand at quadrature node");
                acc += c * nodes[i].w;
            }
            return acc;
        });
    }
    return parallel_sum(jobs) * cplx(0.0, -2.0);
}

inline cplx integrate_cell_fixed(const FormField& w, const Cell2& cell,
                                 const std::vector<detail::LocalFeature>& feats,
                                 const GridParams& gp) {
    return integrate_nodes(w, cell.chart, cell_fixed_nodes(cell, feats, gp));
}

// cores of the excised features only, from eps up to their bump interiors
inline cplx integrate_cell_cores(const FormField& w, const Cell2& cell,
                                 const std::vector<detail::LocalFeature>& feats,
                                 double eps, const GridParams& gp) {
    cplx total(0.0);
    for (const auto& f : feats)
        if (f.excise) {
            detail::LocalFeature g = f;
            if (g.rs > 0.0) g.r1 = g.rs;
            total += integrate_nodes(w, cell.chart, detail::core_nodes(g, eps, gp));
        }
    return total;
}

inline cplx integrate_cell_pass(const FormField& w, const Cell2& cell,
                                const std::vector<detail::LocalFeature>& feats,
                                double eps, const GridParams& gp) {
    return integrate_cell_fixed(w, cell, feats, gp) +
           integrate_cell_cores(w, cell, feats, eps, gp);
}

// assign singular points to the cells that contain them
inline std::vector<std::vector<std::pair<cplx, SingularPoint>>> assign_singular(
    const PolygonalDecomposition& T, const std::vector<SingularPoint>& sing) {
    std::vector<std::vector<std::pair<cplx, SingularPoint>>> per_cell(T.cells2.size());
    for (const auto& sp : sing) {
        bool placed = false;
        for (size_t c = 0; c < T.cells2.size(); ++c) {
            auto r = repr_in(*T.atlas, sp.where, T.cells2[c].chart);
            if (r && std::abs(*r - T.cells2[c].center) < T.cells2[c].radius - 1e-9) {
                per_cell[c].push_back({*r, sp});
                placed = true;
                break;
            }
        }
        if (!placed) throw domain_error("singular point not interior to any 2-cell");
    }
    return per_cell;
}

// two chart disks |z| <= R, |w| <= 1/R with the split radius chosen away
// from every singular point
inline PolygonalDecomposition canonical_cells(const AtlasPtr& atlas,
                                              const std::vector<SingularPoint>& sing) {
    double best_R = 1.0, best_margin = -1.0;
    for (double R = 0.75; R <= 1.35; R += 0.025) {
        double margin = 1e9;
        for (const auto& sp : sing) {
            auto r0 = repr_in(*atlas, sp.where, 0);
            double mod = (r0 && std::abs(*r0) < 1e9) ? std::abs(*r0) : 1e9;
            margin = std::min(margin, std::abs(mod - R));
        }
        if (margin > best_margin) {
            best_margin = margin;
            best_R = R;
        }
    }
    PolygonalDecomposition T = equatorial_decomposition(atlas);
    T.cells2[0].radius = best_R;
    T.cells2[1].radius = 1.0 / best_R;
    return T;
}

// Integral of a degree-2 form over the whole surface (canonical chart
// cells) or a given decomposition, as the excised-limit integral.
inline IntegralResult integrate_excised(const FormField& w,
                                        const std::vector<SingularPoint>& sing,
                                        const ExcisionSchedule& sched,
                                        const GridParams& gp = {},
                                        const PolygonalDecomposition* cells = nullptr,
                                        double tol = 1e-6) {
    PolygonalDecomposition T = cells ? *cells : canonical_cells(w.atlas(), sing);
    auto per_cell = assign_singular(T, sing);
    std::vector<std::vector<detail::LocalFeature>> feats;
    bool any_excised = false;
    for (size_t c = 0; c < T.cells2.size(); ++c) {
        feats.push_back(detail::layout_features(T.cells2[c], per_cell[c], gp));
        for (auto& f : feats.back()) any_excised |= f.excise;
    }

    IntegralResult res;
    cplx fixed(0.0);
    for (size_t c = 0; c < T.cells2.size(); ++c)
        fixed += integrate_cell_fixed(w, T.cells2[c], feats[c], gp);
    if (!any_excised) {
        res.value = res.extrapolated = fixed;
        res.per_eps = {fixed};
        res.eps = {0.0};
        return res;
    }

    res.eps = sched.epsilons();
    for (double e : res.eps) {
        cplx v = fixed;
        for (size_t c = 0; c < T.cells2.size(); ++c)
            v += integrate_cell_cores(w, T.cells2[c], feats[c], e, gp);
        res.per_eps.push_back(v);
    }
    size_t n = res.eps.size();
    size_t fit = std::min<size_t>(size_t(std::max(3, sched.fit_points)), n);
    double resid = 0.0;
    res.extrapolated = extrapolate_log_tail(res.eps, res.per_eps, n - fit, n, &resid);
    cplx prev = n - fit > 0
                    ? extrapolate_log_tail(res.eps, res.per_eps, n - fit - 1, n - 1, nullptr)
                    : extrapolate_log_tail(res.eps, res.per_eps, n - fit, n - 1, nullptr);
    res.err_est = resid + std::abs(res.extrapolated - prev);
    res.converged = res.err_est <= tol * std::max(1.0, std::abs(res.extrapolated));
    res.value = res.extrapolated;
    return res;
}

// ---------------------------------------------------------------------------
// Circle and curve integrals of 1-forms
// ---------------------------------------------------------------------------

inline cplx line_integral(const FormField& eta, int chart,
                          const std::function<cplx(double)>& gamma,
                          const std::function<cplx(double)>& dgamma,
                          double tol = 1e-8) {
    auto sample = [&](int n) {
        cplx acc(0.0);
        for (int k = 0; k < n; ++k) {
            double t = (k + 0.5) / n;
            cplx z = gamma(t), dz = dgamma(t);
            FormValue v = eta.eval(chart, z);
            acc += v(1, 0) * dz + v(0, 1) * std::conj(dz);
        }
        return acc / double(n);
    };
    cplx prev = sample(16);
    for (int n = 32; n <= 65536; n *= 2) {
        cplx cur = sample(n);
        if (std::abs(cur - prev) <= tol * std::max(1.0, std::abs(cur))) return cur;
        prev = cur;
    }
    throw convergence_error("line integral failed to stabilize");
}

inline cplx circle_integral(const FormField& eta, const PointOnSurface& center,
                            double radius, double tol = 1e-8) {
    cplx c = center.z;
    int chart = center.chart;
    return line_integral(
        eta, chart, [c, radius](double t) { return c + std::polar(radius, 2.0 * pi * t); },
        [radius](double t) {
            return cplx(0.0, 2.0 * pi) * std::polar(radius, 2.0 * pi * t);
        },
        tol);
}

// ---------------------------------------------------------------------------
// Pairing of a total 2-cocycle with a polygonal decomposition
// ---------------------------------------------------------------------------

// view onto a degree-2 total cocycle with values omega0 (2-forms per cover
// open), omega1 (1-forms per ordered pair), omega2 (functions per triple);
// each open is the complement of finitely many points
struct CocycleView {
    std::vector<FormField> omega0;
    std::function<FormField(int, int)> omega1;
    std::function<cplx(int, int, int, const PointOnSurface&)> omega2;  // may be null
    std::vector<std::vector<PointOnSurface>> excluded;                 // per open
};

inline std::vector<int> assign_cells_to_opens(const PolygonalDecomposition& T,
                                              const CocycleView& cv) {
    std::vector<int> assign(T.cells2.size(), -1);
    for (size_t c = 0; c < T.cells2.size(); ++c) {
        for (int o = 0; o < int(cv.omega0.size()); ++o) {
            bool ok = true;
            for (const auto& p : cv.excluded.at(size_t(o))) {
                auto r = repr_in(*T.atlas, p, T.cells2[c].chart);
                if (r && std::abs(*r - T.cells2[c].center) <= T.cells2[c].radius + 1e-9)
                    ok = false;
            }
            if (ok) {
                assign[c] = o;
                break;
            }
        }
        if (assign[c] < 0)
            throw domain_error("2-cell not contained in any cover open");
    }
    return assign;
}

inline IntegralResult pair_with_decomposition(const CocycleView& cv,
                                              const PolygonalDecomposition& T,
                                              const std::vector<SingularPoint>& sing,
                                              const ExcisionSchedule& sched,
                                              const GridParams& gp = {},
                                              double tol = 1e-6) {
    std::vector<int> assign = assign_cells_to_opens(T, cv);
    auto per_cell = assign_singular(T, sing);
    std::vector<std::vector<detail::LocalFeature>> feats;
    bool any_excised = false;
    for (size_t c = 0; c < T.cells2.size(); ++c) {
        feats.push_back(detail::layout_features(T.cells2[c], per_cell[c], gp));
        for (auto& f : feats.back()) any_excised |= f.excise;
    }

    // edge terms: omega1_{i(alpha) i(beta)} over the edge oriented as the
    // boundary of the lower-indexed side (see signs.md)
    cplx edges(0.0);
    for (const auto& e : T.cells1) {
        if (e.coface.size() != 2) throw domain_error("edge without two cofaces");
        auto [ca, sa] = e.coface[0];
        auto [cb, sb] = e.coface[1];
        int ia = assign[size_t(ca)], ib = assign[size_t(cb)];
        if (ia == ib) continue;  // omega1_{ii} = 0
        int lo_cell = ia < ib ? ca : cb;
        int lo = std::min(ia, ib), hi = std::max(ia, ib);
        double orient = 0.0;
        for (auto& [c2, s2] : e.coface)
            if (c2 == lo_cell) orient = double(s2);
        FormField w1 = cv.omega1(hi, lo);
        edges += orient * line_integral(w1, e.chart, e.gamma, e.dgamma);
    }

    // vertex terms
    cplx verts(0.0);
    if (cv.omega2) {
        for (const auto& v : T.cells0) {
            // triples of pairwise-distinct incident opens; with two charts
            // this is empty
            std::vector<int> opens;
            for (int o : assign)
                if (std::find(opens.begin(), opens.end(), o) == opens.end())
                    opens.push_back(o);
            if (opens.size() >= 3)
                verts += cv.omega2(opens[0], opens[1], opens[2], v.where);
        }
    }

    IntegralResult res;
    cplx fixed = edges + verts;
    for (size_t c = 0; c < T.cells2.size(); ++c)
        fixed += integrate_cell_fixed(cv.omega0[size_t(assign[c])], T.cells2[c], feats[c], gp);
    if (!any_excised) {
        res.value = res.extrapolated = fixed;
        res.per_eps = {res.value};
        res.eps = {0.0};
        return res;
    }
    res.eps = sched.epsilons();
    for (double e : res.eps) {
        cplx v = fixed;
        for (size_t c = 0; c < T.cells2.size(); ++c)
            v += integrate_cell_cores(cv.omega0[size_t(assign[c])], T.cells2[c], feats[c], e, gp);
        res.per_eps.push_back(v);
    }
    size_t n = res.eps.size();
    size_t fit = std::min<size_t>(size_t(std::max(3, sched.fit_points)), n);
    double resid = 0.0;
    res.extrapolated = extrapolate_log_tail(res.eps, res.per_eps, n - fit, n, &resid);
    cplx prev = extrapolate_log_tail(res.eps, res.per_eps, n - fit, n - 1, nullptr);
    res.err_est = resid + std::abs(res.extrapolated - prev);
    res.converged = res.err_est <= tol * std::max(1.0, std::abs(res.extrapolated));
    res.value = res.extrapolated;
    return res;
}

}  // namespace deligne
