#pragma once
// Command line front end: scene parsing, subcommand dispatch, and report
// emission.  Exit codes: 0 pass, 1 configuration error, 2 convergence
// failure.

#include <CLI11.hpp>
#include <iomanip>
#include <iostream>

#include "growth.hpp"
#include "scene.hpp"

namespace deligne::cli {

struct CommonOpts {
    std::string scene_file;
    std::string out_json;
    std::string out_csv;
    double eps0 = 0.0, eps_ratio = 0.0, tolerance = 0.0;
    int eps_count = 0;
    int grid_density = 0;
    int threads = 0;
    std::uint64_t seed = 0;
    bool dry_run = false;
};

namespace detail {

inline void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("scene", o.scene_file, "scene configuration file")->required();
    cmd->add_option("--out", o.out_json, "machine report path (JSON)");
    cmd->add_option("--csv", o.out_csv, "convergence table path (CSV)");
    cmd->add_option("--eps0", o.eps0, "first excision radius");
    cmd->add_option("--eps-ratio", o.eps_ratio, "excision radius ratio");
    cmd->add_option("--eps-count", o.eps_count, "number of excision radii");
    cmd->add_option("--tolerance", o.tolerance, "convergence tolerance");
    cmd->add_option("--grid-density", o.grid_density, "angular nodes per ring");
    cmd->add_option("--threads", o.threads, "worker thread cap");
    cmd->add_option("--seed", o.seed, "sampling seed override");
    cmd->add_flag("--dry-run", o.dry_run, "validate the scene without computing");
}

inline SceneConfig load(const CommonOpts& o) {
    SceneConfig sc = load_scene_file(o.scene_file);
    if (o.eps0 > 0.0) sc.excision.eps0 = o.eps0;
    if (o.eps_ratio > 0.0) sc.excision.ratio = o.eps_ratio;
    if (o.eps_count > 0) sc.excision.count = o.eps_count;
    if (o.tolerance > 0.0) sc.tolerance = o.tolerance;
    if (o.grid_density > 0) sc.grid.theta = o.grid_density;
    if (o.seed != 0) sc.seed = o.seed;
    if (o.threads > 0) thread_cap() = o.threads;
    return sc;
}

inline void emit(const CommonOpts& o, const ordered_json& report) {
    if (!o.out_json.empty()) {
        std::ofstream f(o.out_json);
        f << report.dump(2) << "\n";
    }
}

inline void emit_csv(const CommonOpts& o, const IntegralResult& r) {
    if (!o.out_csv.empty()) {
        std::ofstream f(o.out_csv);
        write_convergence_csv(f, r);
    }
}

inline double num(double v) {  // canonical rounding for determinism
    return v;
}

}  // namespace detail

inline int cmd_pair(const CommonOpts& o, const std::string& route, std::ostream& os) {
    SceneConfig sc = detail::load(o);
    if (sc.bundles.size() < 2)
        throw config_error("pair needs two bundles in the scene");
    if (o.dry_run) {
        os << "scene ok: " << sc.name << "\n";
        return 0;
    }
    const auto& L = sc.bundles[0];
    const auto& Lp = sc.bundles[1];
    ordered_json rep;
    rep["scene"] = sc.name;
    std::vector<std::pair<std::string, PairingResult>> results;
    bool smooth = L.D.empty() && Lp.D.empty();
    if (route == "gabber" || route == "all")
        results.push_back(
            {"gabber", pairing_gabber(L, Lp, sc.partition, sc.excision, sc.grid, sc.tolerance)});
    if ((route == "distributional" || route == "all") && smooth)
        results.push_back({"distributional",
                           pairing_distributional(L, Lp, sc.excision, sc.grid, sc.tolerance)});
    if (route == "cup" || route == "all") {
        auto T = equatorial_decomposition(sc.atlas);
        results.push_back(
            {"cup", pairing_via_cup(L, Lp, T, sc.excision, sc.grid, sc.tolerance)});
    }
    if (results.empty()) throw config_error("unknown route: " + route);

    bool converged = true;
    char buf[160];
    for (auto& [name, r] : results) {
        std::snprintf(buf, sizeof buf, "%-15s log||<s,s'>||^2 = %+.10f   (imag %.2e)\n",
                      name.c_str(), r.value, r.imag_abs);
        os << buf;
        rep["routes"][name]["value"] = detail::num(r.value);
        rep["routes"][name]["imag_abs"] = r.imag_abs;
        rep["routes"][name]["err_est"] = r.convergence.err_est;
        converged = converged && (r.convergence.converged || r.convergence.eps.size() <= 1);
    }
    for (size_t a = 0; a < results.size(); ++a)
        for (size_t b = a + 1; b < results.size(); ++b) {
            double gap = std::abs(results[a].second.value - results[b].second.value);
            std::snprintf(buf, sizeof buf, "gap %s/%s = %.3e\n", results[a].first.c_str(),
                          results[b].first.c_str(), gap);
            os << buf;
            rep["gaps"][results[a].first + "/" + results[b].first] = gap;
        }
    detail::emit(o, rep);
    detail::emit_csv(o, results.back().second.convergence);
    return converged ? 0 : 2;
}

inline int cmd_verify_cocycle(const CommonOpts& o, std::ostream& os) {
    SceneConfig sc = detail::load(o);
    if (sc.bundles.empty()) throw config_error("verify-cocycle needs at least one bundle");
    if (o.dry_run) {
        os << "scene ok: " << sc.name << "\n";
        return 0;
    }
    auto cover = std::make_shared<Cover>();
    cover->atlas = sc.atlas;
    // two-open cover from the first two bundles' divisors when present,
    // otherwise the plain chart cover
    OpenSet U1{"U1", {}}, U2{"U2", {}};
    if (sc.bundles.size() >= 2) {
        for (auto& [p, m] : sc.bundles[1].E.points()) U1.excluded.push_back(p);
        for (auto& [p, m] : sc.bundles[0].E.points()) U2.excluded.push_back(p);
    } else {
        U1.excluded = {PointOnSurface{1, cplx(0.0)}};
        U2.excluded = {PointOnSurface{0, cplx(0.0)}};
    }
    cover->opens = {U1, U2};
    for (auto& p : sc.punctures.punctures()) cover->avoid.push_back(p.where);
    cover->seed = sc.seed;

    bool pass = true;
    char buf[160];
    ordered_json rep;
    for (size_t i = 0; i < sc.bundles.size(); ++i) {
        const auto& B = sc.bundles[i];
        // express the bundle in the cover trivializations via its section
        HermitianLineBundle other = sc.bundles.size() >= 2 ? sc.bundles[1 - i] : B;
        MetrizedLineBundleData data;
        data.cover = cover;
        SurfaceScalar lr = B.log_norm_sq();
        data.log_rho = {lr, lr};
        SurfaceScalar lg;
        lg.per_chart[0] = Expr::constant(0.0);
        lg.per_chart[1] = Expr::constant(0.0);
        data.log_g[{0, 1}] = lg;
        for (auto& p : B.D.punctures()) data.metric_singularities.push_back(p.where);
        for (auto& [p, m] : B.E.points()) data.metric_singularities.push_back(p);
        DeligneCochain c = bundle_cocycle(data);
        DeligneCochain dc = total_differential(c);
        double resid = cochain_residual(dc);
        std::snprintf(buf, sizeof buf, "bundle %zu: total-differential residual %.3e\n", i,
                      resid);
        os << buf;
        rep["bundles"][std::to_string(i)]["residual"] = resid;
        pass = pass && resid <= 1e-8;
    }
    detail::emit(o, rep);
    os << (pass ? "verify-cocycle: pass\n" : "verify-cocycle: FAIL\n");
    return pass ? 0 : 2;
}

inline int cmd_cup(const CommonOpts& o, std::ostream& os) {
    SceneConfig sc = detail::load(o);
    if (sc.bundles.size() < 2) throw config_error("cup needs two bundles");
    if (o.dry_run) {
        os << "scene ok: " << sc.name << "\n";
        return 0;
    }
    auto T = equatorial_decomposition(sc.atlas);
    auto r = pairing_via_cup(sc.bundles[0], sc.bundles[1], T, sc.excision, sc.grid,
                             sc.tolerance);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "cup pairing  log||<s,s'>||^2 = %+.10f   (imag %.2e, err %.2e)\n", r.value,
                  r.imag_abs, r.convergence.err_est);
    os << buf;
    ordered_json rep;
    rep["scene"] = sc.name;
    rep["value"] = r.value;
    rep["imag_abs"] = r.imag_abs;
    rep["err_est"] = r.convergence.err_est;
    detail::emit(o, rep);
    detail::emit_csv(o, r.convergence);
    return (r.convergence.converged || r.convergence.eps.size() <= 1) ? 0 : 2;
}

inline int cmd_functional(const CommonOpts& o, std::ostream& os) {
    SceneConfig sc = detail::load(o);
    if (!sc.metric) throw config_error("functional needs a metric in the scene");
    if (o.dry_run) {
        os << "scene ok: " << sc.name << "\n";
        return 0;
    }
    auto T = equatorial_decomposition(sc.atlas);
    FunctionalReport rep = functional_S(*sc.metric, T, sc.excision, sc.grid, sc.tolerance);
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "S = %.10f\n  pairing log||<L,L>|| = %.10f\n  area = %.10f\n  "
                  "pairing err %.2e, area err %.2e\n",
                  rep.S, rep.pairing_log_norm, rep.area, rep.pairing_conv.err_est,
                  rep.area_conv.err_est);
    os << buf;
    ordered_json out;
    out["scene"] = sc.name;
    out["S"] = rep.S;
    out["pairing_log_norm"] = rep.pairing_log_norm;
    out["area"] = rep.area;
    detail::emit(o, out);
    detail::emit_csv(o, rep.pairing_conv);
    return (rep.pairing_conv.converged || rep.pairing_conv.eps.size() <= 1) &&
                   (rep.area_conv.converged || rep.area_conv.eps.size() <= 1)
               ? 0
               : 2;
}

inline int cmd_variation(const CommonOpts& o, int n_random, std::ostream& os) {
    SceneConfig sc = detail::load(o);
    if (!sc.metric) throw config_error("variation needs a metric in the scene");
    if (o.dry_run) {
        os << "scene ok: " << sc.name << "\n";
        return 0;
    }
    ConformalMetric m = *sc.metric;
    if (m.basis.empty()) throw config_error("variation needs a deformation basis");
    LiouvilleWorkspace ws(m, sc.excision, sc.grid);
    Rng rng(sc.seed);
    os << "direction  analytic        finite-diff     rel-err\n";
    ordered_json rows = ordered_json::array();
    bool pass = true;
    double t = 1e-3;
    for (int k = 0; k < n_random; ++k) {
        size_t dir = size_t(rng.integer(1, int(m.basis.size()) - 1));
        VariationDirection sg{m.basis[dir]};
        double fv = first_variation(m, sg, sc.excision, sc.grid);
        std::vector<double> cp = m.coeff, cm = m.coeff;
        cp[dir] += t;
        cm[dir] -= t;
        double fd = (ws.evaluate(cp).S - ws.evaluate(cm).S) / (2.0 * t);
        double rel = std::abs(fv - fd) / std::max(0.05, std::abs(fd));
        char buf[160];
        std::snprintf(buf, sizeof buf, "B[%3zu]     %+.8e  %+.8e  %.2e\n", dir, fv, fd, rel);
        os << buf;
        ordered_json row;
        row["direction"] = dir;
        row["analytic"] = fv;
        row["finite_diff"] = fd;
        row["rel_err"] = rel;
        rows.push_back(row);
        pass = pass && rel <= 1e-2;
    }
    ordered_json rep;
    rep["scene"] = sc.name;
    rep["rows"] = rows;
    detail::emit(o, rep);
    os << (pass ? "variation: pass\n" : "variation: FAIL\n");
    return pass ? 0 : 2;
}

inline int cmd_uniformize(const CommonOpts& o, std::ostream& os) {
    SceneConfig sc = detail::load(o);
    if (!sc.metric) throw config_error("uniformize needs a metric in the scene");
    if (o.dry_run) {
        os << "scene ok: " << sc.name << "\n";
        return 0;
    }
    auto sol = solve_hyperbolic(*sc.metric, sc.solver, sc.excision, sc.grid);
    char buf[160];
    if (!o.out_csv.empty()) {
        std::ofstream f(o.out_csv);
        f << "iteration,S,residual,area\n";
        for (auto& r : sol.trace) {
            std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%.12g\n", r.iter, r.S, r.residual,
                          r.area);
            f << buf;
        }
    }
    for (auto& r : sol.trace) {
        std::snprintf(buf, sizeof buf, "it %3d  S=%.10f  residual=%.4e  area=%.8f\n", r.iter,
                      r.S, r.residual, r.area);
        os << buf;
    }
    const auto& last = sol.trace.back();
    std::snprintf(buf, sizeof buf, "final: residual=%.4e  area=%.8f (2 pi = %.8f)\n",
                  last.residual, last.area, 2.0 * pi);
    os << buf;
    if (!o.out_json.empty()) {
        // final metric dump: sampled log rho on a polar grid per chart
        ordered_json dump;
        dump["scene"] = sc.name;
        dump["residual"] = last.residual;
        dump["area"] = last.area;
        ordered_json samples = ordered_json::array();
        SurfaceScalar lr = sol.metric.log_rho();
        for (int chart = 0; chart <= 1; ++chart) {
            for (int i = 1; i <= 8; ++i)
                for (int k = 0; k < 16; ++k) {
                    cplx z = std::polar(i / 8.0, 2.0 * pi * k / 16.0);
                    bool ok = true;
                    for (auto& p : sol.metric.D.punctures())
                        ok = ok &&
                             chordal_dist(*sol.metric.atlas, {chart, z}, p.where) > 0.03;
                    if (!ok) continue;
                    ordered_json row;
                    row["chart"] = chart;
                    row["re"] = z.real();
                    row["im"] = z.imag();
                    row["log_rho"] = lr.per_chart.at(chart)(z).real();
                    samples.push_back(row);
                }
        }
        dump["log_rho_samples"] = samples;
        std::ofstream f(o.out_json);
        f << dump.dump(2) << "\n";
    }
    return sol.trace.back().residual <= sc.solver.tol * 50 ? 0 : 2;
}

inline int cmd_growth_check(const CommonOpts& o, std::ostream& os) {
    SceneConfig sc = detail::load(o);
    if (o.dry_run) {
        os << "scene ok: " << sc.name << "\n";
        return 0;
    }
    bool pass = true;
    ordered_json rep;
    if (sc.metric) {
        // the induced weight on the twisted tangent bundle at each puncture
        const ConformalMetric& m = *sc.metric;
        SurfaceScalar lr = m.log_rho();
        for (size_t i = 0; i < m.D.punctures().size(); ++i) {
            const auto& p = m.D.punctures()[i];
            auto r0 = repr_in(*m.atlas, p.where, 0);
            int chart = (r0 && std::abs(*r0) < 1e9) ? 0 : 1;
            cplx center = chart == 0 ? *r0 : cplx(0.0);
            SurfaceScalar lw;
            lw.per_chart[chart] =
                log(abs2(Expr::var() - Expr::constant(center))) + lr.per_chart.at(chart);
            // single-puncture view in its own frame
            PunctureSet D0(riemann_sphere_atlas(),
                           {{{chart, cplx(0.0)}, chart, p.radius}});
            SurfaceScalar shifted;
            shifted.per_chart[chart] =
                lw.per_chart.at(chart).compose(Expr::var() + Expr::constant(center));
            GrowthReport g = check_good_metric(shifted, D0, {1e-2, 1e-3, 1e-4, 1e-5, 1e-6});
            os << "puncture " << i << ": " << g.summary() << "\n";
            rep["punctures"][std::to_string(i)] = g.pass;
            pass = pass && g.pass;
        }
    }
    for (size_t i = 0; i < sc.bundles.size(); ++i) {
        if (sc.bundles[i].D.empty()) continue;
        GrowthReport g = check_good_metric(sc.bundles[i].log_rho_triv, sc.bundles[i].D,
                                           {1e-2, 1e-3, 1e-4, 1e-5, 1e-6});
        os << "bundle " << i << ": " << g.summary() << "\n";
        rep["bundles"][std::to_string(i)] = g.pass;
        pass = pass && g.pass;
    }
    detail::emit(o, rep);
    os << (pass ? "growth-check: pass\n" : "growth-check: FAIL\n");
    return pass ? 0 : 2;
}

inline int run(const std::vector<std::string>& args, std::ostream& os = std::cout) {
    CLI::App app{"numerical Deligne pairings and Liouville uniformization on the sphere"};
    app.require_subcommand(1);

    CommonOpts o_pair, o_cup, o_ver, o_fun, o_var, o_uni, o_gro;
    std::string route = "all";
    int n_random = 5;

    auto* c_pair = app.add_subcommand("pair", "Deligne pairing of the scene's two bundles");
    detail::add_common(c_pair, o_pair);
    c_pair->add_option("--route", route, "gabber|distributional|cup|all");

    auto* c_cup = app.add_subcommand("cup", "cup-product route only");
    detail::add_common(c_cup, o_cup);

    auto* c_ver = app.add_subcommand("verify-cocycle", "total-differential residuals");
    detail::add_common(c_ver, o_ver);

    auto* c_fun = app.add_subcommand("functional", "Liouville functional report");
    detail::add_common(c_fun, o_fun);

    auto* c_var = app.add_subcommand("variation", "analytic vs finite-difference variation");
    detail::add_common(c_var, o_var);
    c_var->add_option("--random", n_random, "number of random directions");

    auto* c_uni = app.add_subcommand("uniformize", "gradient-flow uniformization");
    detail::add_common(c_uni, o_uni);

    auto* c_gro = app.add_subcommand("growth-check", "good-metric growth verdicts");
    detail::add_common(c_gro, o_gro);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            os << app.help() << "\n";
            return 0;
        }
        os << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (c_pair->parsed()) return cmd_pair(o_pair, route, os);
        if (c_cup->parsed()) return cmd_cup(o_cup, os);
        if (c_ver->parsed()) return cmd_verify_cocycle(o_ver, os);
        if (c_fun->parsed()) return cmd_functional(o_fun, os);
        if (c_var->parsed()) return cmd_variation(o_var, n_random, os);
        if (c_uni->parsed()) return cmd_uniformize(o_uni, os);
        if (c_gro->parsed()) return cmd_growth_check(o_gro, os);
    } catch (const config_error& e) {
        os << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const convergence_error& e) {
        os << "convergence failure: " << e.what() << "\n";
        return 2;
    } catch (const domain_error& e) {
        os << "configuration error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace deligne::cli
