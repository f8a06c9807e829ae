#pragma once
// Scene configuration: a JSON file describing the atlas, punctures, metrized
// bundles with their sections, the conformal metric, and the numerical
// knobs.  Parsing is strict: unknown or malformed fields fail with a
// field-path message.

#include <fstream>
#include <json.hpp>

#include "pairing.hpp"
#include "solver.hpp"

namespace deligne {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct SceneConfig {
    AtlasPtr atlas;
    std::uint64_t seed = 2024;
    PunctureSet punctures;
    std::vector<HermitianLineBundle> bundles;
    std::optional<ConformalMetric> metric;
    PartitionPair partition;
    ExcisionSchedule excision;
    GridParams grid;
    SolverOptions solver;
    double tolerance = 1e-4;
    std::string name;
};

namespace detail {

[[noreturn]] inline void cfg_fail(const std::string& path, const std::string& what) {
    throw config_error(path + ": " + what);
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& path) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception& e) {
        cfg_fail(path + "." + key, e.what());
    }
}

inline cplx get_point(const json& j, const std::string& path) {
    return cplx(get_or<double>(j, "re", 0.0, path), get_or<double>(j, "im", 0.0, path));
}

inline Expr parse_expr(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) cfg_fail(path, "missing expression '" + key + "'");
    try {
        return Expr::parse(j.at(key).get<std::string>());
    } catch (const config_error& e) {
        cfg_fail(path + "." + key, e.what());
    }
}

}  // namespace detail

inline SceneConfig load_scene(const json& j) {
    using detail::cfg_fail;
    using detail::get_or;
    SceneConfig sc;
    sc.name = get_or<std::string>(j, "name", "scene", "$");
    sc.seed = get_or<std::uint64_t>(j, "seed", 2024, "$");
    sc.tolerance = get_or<double>(j, "tolerance", 1e-4, "$");

    std::string atlas_name = get_or<std::string>(j, "atlas", "riemann_sphere", "$");
    if (atlas_name != "riemann_sphere")
        cfg_fail("$.atlas", "only the riemann_sphere atlas ships");

    // punctures first: finite ones need adapted translation charts
    std::vector<cplx> finite_centers;
    std::vector<bool> at_inf;
    if (j.contains("punctures")) {
        size_t idx = 0;
        for (const auto& p : j.at("punctures")) {
            std::string path = "$.punctures[" + std::to_string(idx++) + "]";
            bool inf = get_or<bool>(p, "inf", false, path);
            at_inf.push_back(inf);
            if (!inf) finite_centers.push_back(detail::get_point(p, path));
        }
    }
    std::vector<cplx> adapted;
    for (cplx c : finite_centers)
        if (std::abs(c) > 1e-12) adapted.push_back(c);
    sc.atlas = adapted.empty() ? riemann_sphere_atlas() : sphere_atlas_with_adapted(adapted);

    if (j.contains("punctures")) {
        std::vector<Puncture> ps;
        size_t idx = 0, fin = 0, ad = 0;
        for (const auto& p : j.at("punctures")) {
            std::string path = "$.punctures[" + std::to_string(idx) + "]";
            double radius = get_or<double>(p, "radius", 0.2, path);
            if (at_inf[idx]) {
                ps.push_back({{1, cplx(0.0)}, 1, radius});
            } else {
                cplx c = finite_centers[fin++];
                int chart = std::abs(c) <= 1e-12 ? 0 : 2 + int(ad++);
                ps.push_back({{0, c}, chart, radius});
            }
            ++idx;
        }
        sc.punctures = PunctureSet(sc.atlas, ps);
    } else {
        sc.punctures = PunctureSet(sc.atlas, {});
    }

    if (j.contains("bundles")) {
        size_t idx = 0;
        for (const auto& b : j.at("bundles")) {
            std::string path = "$.bundles[" + std::to_string(idx++) + "]";
            HermitianLineBundle L;
            L.atlas = sc.atlas;
            L.deg = get_or<int>(b, "degree", 0, path);
            FactoredRational s;
            if (b.contains("section")) {
                const auto& js = b.at("section");
                s.scale = cplx(get_or<double>(js, "scale_re", 1.0, path + ".section"),
                               get_or<double>(js, "scale_im", 0.0, path + ".section"));
                if (js.contains("roots")) {
                    size_t ri = 0;
                    for (const auto& r : js.at("roots")) {
                        std::string rp = path + ".section.roots[" + std::to_string(ri++) + "]";
                        s.factors.push_back(
                            {detail::get_point(r, rp), get_or<int>(r, "mult", 1, rp)});
                    }
                }
            }
            L.section = s;
            std::string metric = get_or<std::string>(b, "metric", "fubini_study", path);
            if (metric == "fubini_study") {
                L.log_rho_triv.per_chart[0] =
                    double(-L.deg) * log(Expr::parse("1+abs2(z)"));
                L.log_rho_triv.per_chart[1] =
                    double(-L.deg) * log(Expr::parse("1+abs2(z)"));
            } else if (metric == "flat") {
                L.log_rho_triv.per_chart[0] = Expr::constant(0.0);
                L.log_rho_triv.per_chart[1] = Expr::constant(0.0);
                if (L.deg != 0) cfg_fail(path, "flat metric needs degree 0");
            } else if (metric == "expr") {
                if (!b.contains("log_rho")) cfg_fail(path, "metric 'expr' needs log_rho");
                const auto& lr = b.at("log_rho");
                L.log_rho_triv.per_chart[0] = detail::parse_expr(lr, "0", path + ".log_rho");
                L.log_rho_triv.per_chart[1] = detail::parse_expr(lr, "1", path + ".log_rho");
            } else {
                cfg_fail(path + ".metric", "unknown metric kind '" + metric + "'");
            }
            if (get_or<bool>(b, "singular", false, path)) L.D = sc.punctures;
            L.E = L.section.divisor(sc.atlas, L.deg);
            L.validate();
            sc.bundles.push_back(std::move(L));
        }
    }

    if (j.contains("metric")) {
        const auto& m = j.at("metric");
        std::string model = get_or<std::string>(m, "model", "cusp_blend", "$.metric");
        ConformalMetric cm;
        if (model == "cusp_blend") {
            ModelParams mp;
            mp.blend_r1 = get_or<double>(m, "blend_r1", 0.1, "$.metric");
            mp.blend_r2 = get_or<double>(m, "blend_r2", 0.2, "$.metric");
            mp.cusp_b = get_or<double>(m, "cusp_b", 2.0, "$.metric");
            cm = cusp_background_metric(sc.atlas, sc.punctures, mp);
        } else if (model == "exact_hyperbolic") {
            cplx s(get_or<double>(m, "s_re", 0.5, "$.metric"),
                   get_or<double>(m, "s_im", 0.0, "$.metric"));
            cm = exact_hyperbolic_metric(sc.atlas, s);
        } else {
            cfg_fail("$.metric.model", "unknown metric model '" + model + "'");
        }
        int bdeg = get_or<int>(m, "basis_degree", 3, "$.metric");
        int cusp_powers = get_or<int>(m, "cusp_powers", 0, "$.metric");
        cm.basis = deformation_basis(cm.atlas, cm.D, bdeg, cusp_powers);
        cm.coeff.assign(cm.basis.size(), 0.0);
        if (m.contains("coeff")) {
            size_t k = 0;
            for (const auto& v : m.at("coeff")) {
                if (k >= cm.coeff.size()) cfg_fail("$.metric.coeff", "more entries than basis functions");
                cm.coeff[k++] = v.get<double>();
            }
        }
        double pscale = get_or<double>(m, "perturb", 0.0, "$.metric");
        if (pscale != 0.0) {
            Rng rng(sc.seed);
            for (auto& c : cm.coeff) c += pscale * rng.uniform(-1.0, 1.0);
        }
        sc.metric = cm;
    }

    if (j.contains("partition")) {
        const auto& p = j.at("partition");
        sc.partition.r_inner = get_or<double>(p, "r_inner", 0.12, "$.partition");
        sc.partition.r_outer = get_or<double>(p, "r_outer", 0.3, "$.partition");
    }
    sc.partition.atlas = sc.atlas;
    if (sc.bundles.size() >= 2) {
        for (auto& [q, mm] : sc.bundles[1].E.points()) sc.partition.near.push_back(q);
        for (auto& [q, mm] : sc.bundles[0].E.points()) sc.partition.far.push_back(q);
    }

    if (j.contains("excision")) {
        const auto& e = j.at("excision");
        sc.excision.eps0 = get_or<double>(e, "eps0", 5e-3, "$.excision");
        sc.excision.ratio = get_or<double>(e, "ratio", 0.35, "$.excision");
        sc.excision.count = get_or<int>(e, "count", 14, "$.excision");
        sc.excision.fit_points = get_or<int>(e, "fit_points", 9, "$.excision");
    } else {
        sc.excision.eps0 = 5e-3;
        sc.excision.ratio = 0.35;
        sc.excision.count = 14;
        sc.excision.fit_points = 9;
    }

    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        sc.grid.theta = get_or<int>(g, "theta", sc.grid.theta, "$.grid");
        sc.grid.theta_dense = get_or<int>(g, "theta_dense", sc.grid.theta_dense, "$.grid");
        sc.grid.rad_panels = get_or<int>(g, "rad_panels", sc.grid.rad_panels, "$.grid");
        sc.grid.ann_panels = get_or<int>(g, "ann_panels", sc.grid.ann_panels, "$.grid");
    }

    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        sc.solver.tol = get_or<double>(s, "tol", 2e-2, "$.solver");
        sc.solver.max_iters = get_or<int>(s, "max_iters", 60, "$.solver");
        sc.solver.patience = get_or<int>(s, "patience", 10, "$.solver");
    }
    return sc;
}

inline SceneConfig load_scene_file(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw config_error("cannot open scene file: " + file);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw config_error(std::string("scene JSON parse error: ") + e.what());
    }
    return load_scene(j);
}

// convergence table in the documented CSV schema
inline void write_convergence_csv(std::ostream& os, const IntegralResult& r) {
    os << "epsilon,value_re,value_im,extrapolated_re,extrapolated_im,err_est\n";
    char buf[256];
    for (size_t i = 0; i < r.eps.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", r.eps[i],
                      r.per_eps[i].real(), r.per_eps[i].imag(), r.extrapolated.real(),
                      r.extrapolated.imag(), r.err_est);
        os << buf;
    }
}

}  // namespace deligne
