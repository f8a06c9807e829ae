#pragma once
// Gradient-descent uniformization: steepest descent of the Liouville
// functional in a fixed deformation basis, with backtracking line search.
// The descent direction is the pointwise density -(i/2 pi)(c1 - i omega)/rho
// projected onto the basis in L^2(omega_rho).
//
// All quadrature nodes and every metric-independent factor are cached once;
// an S evaluation is then a few passes of dense arithmetic over the caches.

#include "liouville.hpp"

namespace deligne {

struct SolverOptions {
    int max_iters = 60;
    double tol = 1e-3;          // stop when the residual sup-norm drops below
    int patience = 10;          // divergence guard on the residual
    double armijo = 0.2;
    int max_backtracks = 14;
    double eps_min_samples = 0.05;
};

struct TraceRow {
    int iter = 0;
    double S = 0.0;
    double residual = 0.0;
    double area = 0.0;
    double step = 0.0;
};

struct SolverResult {
    ConformalMetric metric;
    std::vector<TraceRow> trace;
    bool reached_tol = false;
};

class LiouvilleWorkspace {
public:
    LiouvilleWorkspace(const ConformalMetric& base, const ExcisionSchedule& sched,
                       const GridParams& gp)
        : base_(base.with_coeff(std::vector<double>(base.basis.size(), 0.0))),
          K_(base.basis.size()) {
        eps_ = sched.epsilons();
        fit_ = std::min<size_t>(size_t(std::max(3, sched.fit_points)), eps_.size());
        auto tt = detail::twisted_trivialization(base_);
        PolygonalDecomposition T = equatorial_decomposition_cells(base_.atlas);

        // per-cell node groups
        for (int ci = 0; ci < 2; ++ci) {
            const Cell2& cell = T.cells2[size_t(ci)];
            std::vector<std::pair<cplx, SingularPoint>> feats;
            for (const auto& sp : metric_singularities(base_)) {
                auto r = repr_in(*base_.atlas, sp.where, cell.chart);
                if (r && std::abs(*r - cell.center) < cell.radius - 1e-9)
                    feats.push_back({*r, sp});
            }
            auto lf = detail::layout_features(cell, feats, gp);
            CellCache cc;
            cc.chart = cell.chart;
            cc.trivial_weight = ci == 0 ? tt.log_rho_u1 : tt.log_rho_u2;
            fill_nodes(cc, cell_fixed_nodes(cell, lf, gp), cc.fixed, true);
            for (double e : eps_) {
                NodeBlock nb;
                std::vector<QNode> nodes;
                for (auto& f : lf) {
                    detail::LocalFeature g = f;
                    if (g.rs > 0.0) g.r1 = g.rs;  // structure zone is in fixed
                    auto cn = detail::core_nodes(g, e, gp);
                    nodes.insert(nodes.end(), cn.begin(), cn.end());
                }
                fill_nodes(cc, nodes, nb);
                cc.cores.push_back(std::move(nb));
            }
            cells_.push_back(std::move(cc));
        }

        // equator nodes for the omega^1 edge term (chart 0)
        {
            int N = 1024;
            edge_.resize(size_t(N));
            Expr lg = tt.log_g01.per_chart.at(0);  // log g_{U1 U2}; edge uses g_{21} = -...
            // omega^1_{21} needs log|g_{21}| = -log|g_{01}|
            Expr lgabs = -re(lg);
            Expr dlg = lgabs.dz();
            Expr b1 = tt.log_rho_u1.per_chart.at(0);
            Expr db1 = b1.dz();
            std::vector<Expr> Bz, dBz;
            for (auto& b : base_.basis) {
                Bz.push_back(b.per_chart.at(0));
                dBz.push_back(b.per_chart.at(0).dz());
            }
            for (int t = 0; t < N; ++t) {
                cplx g = std::polar(1.0, 2.0 * pi * (t + 0.5) / N);
                cplx dg = cplx(0.0, 2.0 * pi) * g;
                EdgeNode en;
                en.weight = 1.0 / N;
                en.dgamma = dg;
                en.Lg = lgabs(g).real();
                en.dLg = dlg(g);
                en.b = b1(g).real();
                en.db = db1(g);
                en.B.resize(K_);
                en.dB.resize(K_);
                for (size_t k = 0; k < K_; ++k) {
                    en.B[k] = Bz[k](g).real();
                    en.dB[k] = dBz[k](g);
                }
                edge_[size_t(t)] = std::move(en);
            }
        }

        // residual sample set
        for (const auto& p : residual_samples(base_, 0.05)) {
            const auto& lr0 = base_.log_rho0.per_chart;
            if (lr0.find(p.chart) == lr0.end()) continue;
            samples_.push_back(sample_cache(p));
        }
    }

    size_t n_basis() const { return K_; }

    struct Eval {
        double S = 0.0;
        double pairing_log_norm = 0.0;
        double area = 0.0;
    };

    Eval evaluate(const std::vector<double>& c) const {
        Eval out;
        std::vector<cplx> pairing_eps(eps_.size(), cplx(0.0));
        std::vector<cplx> area_eps(eps_.size(), cplx(0.0));
        double edge_im = edge_term(c);
        for (const auto& cc : cells_) {
            double fx_p, fx_a;
            block_sums(cc, cc.fixed, c, fx_p, fx_a);
            for (size_t e = 0; e < eps_.size(); ++e) {
                double cp, ca;
                block_sums(cc, cc.cores[e], c, cp, ca);
                pairing_eps[e] += cplx(0.0, -2.0) * (fx_p + cp);
                area_eps[e] += cplx(fx_a + ca, 0.0);
            }
        }
        for (size_t e = 0; e < eps_.size(); ++e) pairing_eps[e] += cplx(0.0, edge_im);
        size_t n = eps_.size();
        cplx P = extrapolate_log_tail(eps_, pairing_eps, n - fit_, n, nullptr);
        cplx A = extrapolate_log_tail(eps_, area_eps, n - fit_, n, nullptr);
        out.pairing_log_norm = (cplx(0.0, 1.0) / (2.0 * pi) * P).real();
        out.area = A.real();
        out.S = out.pairing_log_norm + out.area / (2.0 * pi);
        return out;
    }

    double residual_sup(const std::vector<double>& c) const {
        double sup = 0.0;
        for (const auto& s : samples_) {
            double u = 0.0, uzz = 0.0;
            for (size_t k = 0; k < K_; ++k) {
                u += c[k] * s.B[k];
                uzz += c[k] * s.Bzz[k];
            }
            double R = (s.lczz + uzz) - 0.5 * std::exp(s.lc + u);
            sup = std::max(sup, std::abs(R));
        }
        return sup;
    }

    // the spec's descent density -(i/2pi)(c1 - i omega)/rho = R/(pi rho),
    // projected onto the basis in L^2(omega_rho) over the fixed nodes
    std::vector<double> direction(const std::vector<double>& c) const {
        std::vector<double> G(K_ * K_, 0.0), rhs(K_, 0.0);
        for (const auto& cc : cells_) {
            const NodeBlock& nb = cc.fixed;
            for (size_t i = 0; i < nb.w.size(); ++i) {
                if (nb.trim[i]) continue;
                double u = 0.0, uzz = 0.0;
                const double* B = &nb.B[i * K_];
                const double* Bzz = &nb.Bzz[i * K_];
                for (size_t k = 0; k < K_; ++k) {
                    u += c[k] * B[k];
                    uzz += c[k] * Bzz[k];
                }
                double rho = std::exp(nb.lc[i] + u);
                double R = (nb.lczz[i] + uzz) - 0.5 * rho;
                double sigma = R / (pi * rho);
                double wr = nb.w[i] * rho;
                for (size_t k = 0; k < K_; ++k) {
                    rhs[k] += wr * sigma * B[k];
                    for (size_t l = k; l < K_; ++l) G[k * K_ + l] += wr * B[k] * B[l];
                }
            }
        }
        for (size_t k = 0; k < K_; ++k)
            for (size_t l = 0; l < k; ++l) G[k * K_ + l] = G[l * K_ + k];
        // Tikhonov-regularized solve
        double trace = 0.0;
        for (size_t k = 0; k < K_; ++k) trace += G[k * K_ + k];
        double lam = 1e-10 * trace / double(K_);
        for (size_t k = 0; k < K_; ++k) G[k * K_ + k] += lam;
        return solve_spd(G, rhs);
    }

    // exact discrete gradient of S, one sweep per node block
    std::vector<double> gradient(const std::vector<double>& c) const {
        std::vector<std::vector<cplx>> dpair(K_, std::vector<cplx>(eps_.size(), cplx(0.0)));
        std::vector<std::vector<cplx>> darea(K_, std::vector<cplx>(eps_.size(), cplx(0.0)));
        std::vector<double> dedge(K_, 0.0);
        for (const auto& en : edge_) {
            for (size_t k = 0; k < K_; ++k) {
                double val = -en.Lg * (en.dB[k] * en.dgamma).imag() +
                             en.B[k] * (en.dLg * en.dgamma).imag();
                dedge[k] += en.weight * val;
            }
        }
        auto sweep = [&](const NodeBlock& nb, std::vector<double>& gp_out,
                         std::vector<double>& ga_out) {
            for (size_t i = 0; i < nb.w.size(); ++i) {
                double u = 0.0, uzz = 0.0;
                const double* B = &nb.B[i * K_];
                const double* Bzz = &nb.Bzz[i * K_];
                for (size_t k = 0; k < K_; ++k) {
                    u += c[k] * B[k];
                    uzz += c[k] * Bzz[k];
                }
                double f1 = -(nb.bzz[i] + uzz);
                double f2 = nb.b[i] + u;
                double rho = std::exp(nb.lc[i] + u);
                for (size_t k = 0; k < K_; ++k) {
                    gp_out[k] += nb.w[i] * 0.5 * (B[k] * f1 - f2 * Bzz[k]);
                    ga_out[k] += nb.w[i] * rho * B[k];
                }
            }
        };
        std::vector<double> g(K_, 0.0);
        std::vector<double> gp_fix(K_), ga_fix(K_);
        for (const auto& cc : cells_) {
            std::fill(gp_fix.begin(), gp_fix.end(), 0.0);
            std::fill(ga_fix.begin(), ga_fix.end(), 0.0);
            sweep(cc.fixed, gp_fix, ga_fix);
            for (size_t e = 0; e < eps_.size(); ++e) {
                std::vector<double> gp_c(K_, 0.0), ga_c(K_, 0.0);
                sweep(cc.cores[e], gp_c, ga_c);
                for (size_t k = 0; k < K_; ++k) {
                    dpair[k][e] += cplx(0.0, -2.0) * (gp_fix[k] + gp_c[k]);
                    darea[k][e] += cplx(ga_fix[k] + ga_c[k], 0.0);
                }
            }
        }
        size_t n = eps_.size();
        for (size_t k = 0; k < K_; ++k) {
            for (size_t e = 0; e < n; ++e) dpair[k][e] += cplx(0.0, dedge[k]);
            cplx P = extrapolate_log_tail(eps_, dpair[k], n - fit_, n, nullptr);
            cplx A = extrapolate_log_tail(eps_, darea[k], n - fit_, n, nullptr);
            g[k] = (cplx(0.0, 1.0) / (2.0 * pi) * P).real() + A.real() / (2.0 * pi);
        }
        return g;
    }

    // second-variation form at the current metric:
    //   H(sigma, tau) = (1/pi) int ( Re(sigma_z conj(tau_z)) + rho sigma tau / 2 )
    // positive definite; used as the descent preconditioner
    std::vector<double> hessian_form(const std::vector<double>& c) const {
        std::vector<double> H(K_ * K_, 0.0);
        for (const auto& cc : cells_) {
            const NodeBlock& nb = cc.fixed;
            for (size_t i = 0; i < nb.w.size(); ++i) {
                double u = 0.0;
                const double* B = &nb.B[i * K_];
                const cplx* Bz = &nb.Bz[i * K_];
                for (size_t k = 0; k < K_; ++k) u += c[k] * B[k];
                double rho = std::exp(nb.lc[i] + u);
                double wpi = nb.w[i] / pi;
                for (size_t k = 0; k < K_; ++k)
                    for (size_t l = k; l < K_; ++l)
                        H[k * K_ + l] += wpi * ((Bz[k] * std::conj(Bz[l])).real() +
                                                0.5 * rho * B[k] * B[l]);
            }
        }
        for (size_t k = 0; k < K_; ++k)
            for (size_t l = 0; l < k; ++l) H[k * K_ + l] = H[l * K_ + k];
        return H;
    }

    std::vector<double> newton_direction(const std::vector<double>& c) const {
        std::vector<double> g = gradient(c);
        std::vector<double> H = hessian_form(c);
        double trace = 0.0;
        for (size_t k = 0; k < K_; ++k) trace += H[k * K_ + k];
        double lam = 1e-8 * trace / double(K_);
        for (size_t k = 0; k < K_; ++k) H[k * K_ + k] += lam;
        std::vector<double> rhs(K_);
        for (size_t k = 0; k < K_; ++k) rhs[k] = -g[k];
        return solve_spd(std::move(H), std::move(rhs));
    }

    // exact derivative of the discrete S along a coefficient direction
    double dS_along(const std::vector<double>& c, const std::vector<double>& d) const {
        std::vector<cplx> dpair(eps_.size(), cplx(0.0));
        std::vector<cplx> darea(eps_.size(), cplx(0.0));
        double dedge = edge_term_dir(c, d);
        for (const auto& cc : cells_) {
            double fx_p, fx_a;
            block_dir_sums(cc, cc.fixed, c, d, fx_p, fx_a);
            for (size_t e = 0; e < eps_.size(); ++e) {
                double cp, ca;
                block_dir_sums(cc, cc.cores[e], c, d, cp, ca);
                dpair[e] += cplx(0.0, -2.0) * (fx_p + cp);
                darea[e] += cplx(fx_a + ca, 0.0);
            }
        }
        for (size_t e = 0; e < eps_.size(); ++e) dpair[e] += cplx(0.0, dedge);
        size_t n = eps_.size();
        cplx P = extrapolate_log_tail(eps_, dpair, n - fit_, n, nullptr);
        cplx A = extrapolate_log_tail(eps_, darea, n - fit_, n, nullptr);
        return (cplx(0.0, 1.0) / (2.0 * pi) * P).real() + A.real() / (2.0 * pi);
    }

private:
    struct NodeBlock {
        std::vector<double> w;
        std::vector<double> b, bzz;    // trivialization weight and its _zzbar
        std::vector<double> lc, lczz;  // conformal weight log rho0 and its _zzbar
        std::vector<double> B, Bzz;    // K-major basis caches
        std::vector<cplx> Bz;          // d/dz of the basis (fixed blocks only)
        std::vector<char> trim;        // 1 = excluded from projection
    };
    struct CellCache {
        int chart = 0;
        SurfaceScalar trivial_weight;
        NodeBlock fixed;
        std::vector<NodeBlock> cores;
    };
    struct EdgeNode {
        double weight = 0.0;
        cplx dgamma;
        double Lg = 0.0;
        cplx dLg;
        double b = 0.0;
        cplx db;
        std::vector<double> B;
        std::vector<cplx> dB;
    };
    struct SampleCache {
        double lc = 0.0, lczz = 0.0;
        std::vector<double> B, Bzz;
    };

    static PolygonalDecomposition equatorial_decomposition_cells(const AtlasPtr& a) {
        return equatorial_decomposition(a);
    }

    void fill_nodes(CellCache& cc, const std::vector<QNode>& nodes, NodeBlock& nb,
                    bool with_bz = false) {
        Expr bexpr = cc.trivial_weight.per_chart.at(cc.chart);
        Expr bzz = bexpr.dz().dzbar();
        Expr lcex = base_.log_rho0.per_chart.at(cc.chart);
        Expr lczz = lcex.dz().dzbar();
        std::vector<Expr> B, Bzz, Bz;
        for (auto& bas : base_.basis) {
            B.push_back(bas.per_chart.at(cc.chart));
            Bzz.push_back(bas.per_chart.at(cc.chart).dz().dzbar());
            if (with_bz) Bz.push_back(bas.per_chart.at(cc.chart).dz());
        }
        size_t n = nodes.size();
        nb.w.resize(n);
        nb.b.resize(n);
        nb.bzz.resize(n);
        nb.lc.resize(n);
        nb.lczz.resize(n);
        nb.B.resize(n * K_);
        nb.Bzz.resize(n * K_);
        if (with_bz) nb.Bz.resize(n * K_);
        nb.trim.resize(n);
        std::vector<cplx> centers;
        for (auto& p : base_.D.punctures()) {
            auto r = repr_in(*base_.atlas, p.where, cc.chart);
            if (r && std::abs(*r) < 1e9) centers.push_back(*r);
        }
        for (size_t i = 0; i < n; ++i) {
            cplx z = nodes[i].z;
            nb.w[i] = nodes[i].w;
            nb.b[i] = bexpr(z).real();
            nb.bzz[i] = bzz(z).real();
            nb.lc[i] = lcex(z).real();
            nb.lczz[i] = lczz(z).real();
            for (size_t k = 0; k < K_; ++k) {
                nb.B[i * K_ + k] = B[k](z).real();
                nb.Bzz[i * K_ + k] = Bzz[k](z).real();
                if (with_bz) nb.Bz[i * K_ + k] = Bz[k](z);
            }
            bool tr = false;
            for (cplx cpt : centers) tr = tr || std::abs(z - cpt) < 0.05;
            nb.trim[i] = tr ? 1 : 0;
        }
    }

    SampleCache sample_cache(const PointOnSurface& p) const {
        SampleCache s;
        Expr lcex = base_.log_rho0.per_chart.at(p.chart);
        s.lc = lcex(p.z).real();
        s.lczz = lcex.dz().dzbar()(p.z).real();
        s.B.resize(K_);
        s.Bzz.resize(K_);
        for (size_t k = 0; k < K_; ++k) {
            const Expr& b = base_.basis[k].per_chart.at(p.chart);
            s.B[k] = b(p.z).real();
            s.Bzz[k] = b.dz().dzbar()(p.z).real();
        }
        return s;
    }

    // pairing and area sums of a block: pairing carries the 1/2 (b+u)(-(bzz+uzz))
    // coefficient, area carries exp(lc+u)
    void block_sums(const CellCache&, const NodeBlock& nb, const std::vector<double>& c,
                    double& pairing, double& ar) const {
        double sp = 0.0, sa = 0.0;
        size_t n = nb.w.size();
        for (size_t i = 0; i < n; ++i) {
            double u = 0.0, uzz = 0.0;
            const double* B = &nb.B[i * K_];
            const double* Bzz = &nb.Bzz[i * K_];
            for (size_t k = 0; k < K_; ++k) {
                u += c[k] * B[k];
                uzz += c[k] * Bzz[k];
            }
            sp += nb.w[i] * 0.5 * (nb.b[i] + u) * (-(nb.bzz[i] + uzz));
            sa += nb.w[i] * std::exp(nb.lc[i] + u);
        }
        pairing = sp;
        ar = sa;
    }
    void block_dir_sums(const CellCache&, const NodeBlock& nb, const std::vector<double>& c,
                        const std::vector<double>& d, double& pairing, double& ar) const {
        double sp = 0.0, sa = 0.0;
        size_t n = nb.w.size();
        for (size_t i = 0; i < n; ++i) {
            double u = 0.0, uzz = 0.0, v = 0.0, vzz = 0.0;
            const double* B = &nb.B[i * K_];
            const double* Bzz = &nb.Bzz[i * K_];
            for (size_t k = 0; k < K_; ++k) {
                u += c[k] * B[k];
                uzz += c[k] * Bzz[k];
                v += d[k] * B[k];
                vzz += d[k] * Bzz[k];
            }
            sp += nb.w[i] * 0.5 * (v * (-(nb.bzz[i] + uzz)) + (nb.b[i] + u) * (-vzz));
            sa += nb.w[i] * std::exp(nb.lc[i] + u) * v;
        }
        pairing = sp;
        ar = sa;
    }

    // imaginary part of the equator line integral of omega^1_{21}
    double edge_term(const std::vector<double>& c) const {
        double s = 0.0;
        for (const auto& en : edge_) {
            double u = 0.0;
            cplx du(0.0);
            for (size_t k = 0; k < K_; ++k) {
                u += c[k] * en.B[k];
                du += c[k] * en.dB[k];
            }
            double lr = en.b + u;
            cplx dlr = en.db + du;
            double val = -en.Lg * (dlr * en.dgamma).imag() + lr * (en.dLg * en.dgamma).imag();
            s += en.weight * val;
        }
        return s;
    }
    double edge_term_dir(const std::vector<double>& c, const std::vector<double>& d) const {
        (void)c;
        double s = 0.0;
        for (const auto& en : edge_) {
            double v = 0.0;
            cplx dv(0.0);
            for (size_t k = 0; k < K_; ++k) {
                v += d[k] * en.B[k];
                dv += d[k] * en.dB[k];
            }
            double val = -en.Lg * (dv * en.dgamma).imag() + v * (en.dLg * en.dgamma).imag();
            s += en.weight * val;
        }
        return s;
    }

    static std::vector<double> solve_spd(std::vector<double> G, std::vector<double> b) {
        size_t n = b.size();
        for (size_t col = 0; col < n; ++col) {
            size_t piv = col;
            for (size_t r = col + 1; r < n; ++r)
                if (std::abs(G[r * n + col]) > std::abs(G[piv * n + col])) piv = r;
            if (piv != col) {
                for (size_t cidx = 0; cidx < n; ++cidx)
                    std::swap(G[col * n + cidx], G[piv * n + cidx]);
                std::swap(b[col], b[piv]);
            }
            double diag = G[col * n + col];
            if (std::abs(diag) < 1e-300) throw domain_error("singular projection system");
            for (size_t r = col + 1; r < n; ++r) {
                double f = G[r * n + col] / diag;
                for (size_t cidx = col; cidx < n; ++cidx) G[r * n + cidx] -= f * G[col * n + cidx];
                b[r] -= f * b[col];
            }
        }
        std::vector<double> x(n, 0.0);
        for (size_t r = n; r-- > 0;) {
            double s = b[r];
            for (size_t cidx = r + 1; cidx < n; ++cidx) s -= G[r * n + cidx] * x[cidx];
            x[r] = s / G[r * n + r];
        }
        return x;
    }

    ConformalMetric base_;
    size_t K_;
    std::vector<double> eps_;
    size_t fit_;
    std::vector<CellCache> cells_;
    std::vector<EdgeNode> edge_;
    std::vector<SampleCache> samples_;
};

inline SolverResult solve_hyperbolic(const ConformalMetric& m0, const SolverOptions& opts,
                                     const ExcisionSchedule& sched, const GridParams& gp) {
    if (m0.basis.empty())
        throw config_error("solver needs a deformation basis on the metric");
    LiouvilleWorkspace ws(m0, sched, gp);
    std::vector<double> c = m0.coeff;
    if (c.size() != ws.n_basis()) c.assign(ws.n_basis(), 0.0);

    SolverResult out;
    auto ev = ws.evaluate(c);
    double res = ws.residual_sup(c);
    out.trace.push_back({0, ev.S, res, ev.area, 0.0});
    double best_res = res;
    int stall = 0;
    double t_prev = 1.0;

    for (int it = 1; it <= opts.max_iters; ++it) {
        if (res <= opts.tol) {
            out.reached_tol = true;
            break;
        }
        // the defect density is the gradient; precondition it with the
        // second-variation form so the line search takes natural steps
        std::vector<double> d = ws.newton_direction(c);
        double slope = ws.dS_along(c, d);
        if (!(slope < -1e-15)) {
            d = ws.direction(c);  // fall back to the projected density
            slope = ws.dS_along(c, d);
            if (!(slope < -1e-15)) break;  // at the basis floor
        }
        double t = std::min(2.0 * t_prev, 1.0);
        double S0 = ev.S;
        bool accepted = false;
        for (int bt = 0; bt < opts.max_backtracks; ++bt) {
            std::vector<double> trial = c;
            for (size_t k = 0; k < trial.size(); ++k) trial[k] += t * d[k];
            auto evt = ws.evaluate(trial);
            if (evt.S <= S0 + opts.armijo * t * slope) {
                c = trial;
                ev = evt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
        t_prev = t;
        res = ws.residual_sup(c);
        out.trace.push_back({it, ev.S, res, ev.area, t});
        if (res < best_res) {
            best_res = res;
            stall = 0;
        } else if (res > 10.0 * best_res && ++stall > opts.patience) {
            throw convergence_error("residual diverged over the patience window");
        }
    }
    if (res <= opts.tol) out.reached_tol = true;
    out.metric = m0.with_coeff(c);
    return out;
}

}  // namespace deligne
