#pragma once
// Sampled growth predicates near punctures: Poincare growth, good forms and
// metrics, log-log and pre-log-log bounds.  These are falsification tests on
// shrinking radii, not proofs: constants are fitted on the outer radii and
// the bound is then tested on the inner ones.

#include <cmath>
#include <sstream>
#include <vector>

#include "forms.hpp"

namespace deligne {

struct GrowthReport {
    std::string predicate;
    bool pass = true;
    double fitted_C = 0.0;
    double fitted_N = 0.0;
    std::vector<double> radii;
    std::vector<double> ratios;  // measured quantity per radius (max over samples)
    std::string detail;

    std::string summary() const {
        std::ostringstream os;
        os << predicate << ": " << (pass ? "pass" : "FAIL")
           << "  C=" << fitted_C << " N=" << fitted_N;
        if (!detail.empty()) os << "  (" << detail << ")";
        return os.str();
    }
};

namespace detail {

// max over angular samples of the h_P-unit-frame pairing magnitude of omega
// at |zeta| = r in the adapted chart of the puncture.  The unit frame is
// |zeta| |log zeta| d/dzeta.
inline double frame_mag(const FormField& f, int chart, double r, int n_ang = 16) {
    double xi = r * std::abs(std::log(r));
    double worst = 0.0;
    for (int k = 0; k < n_ang; ++k) {
        cplx zeta = std::polar(r, 2.0 * pi * (k + 0.37) / n_ang);
        FormValue v = f.eval(chart, zeta);
        double m = 0.0;
        if (f.degree() == 0) m = std::abs(v(0, 0));
        if (f.degree() == 1) m = (std::abs(v(1, 0)) + std::abs(v(0, 1))) * xi;
        if (f.degree() == 2) m = 2.0 * std::abs(v(1, 1)) * xi * xi;
        worst = std::max(worst, m);
    }
    return worst;
}

inline double lsq_slope(const std::vector<double>& x, const std::vector<double>& y,
                        size_t lo, size_t hi) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    size_t n = hi - lo;
    for (size_t i = lo; i < hi; ++i) {
        sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i];
    }
    double det = double(n) * sxx - sx * sx;
    return det != 0.0 ? (double(n) * sxy - sx * sy) / det : 0.0;
}

// Sampled membership test for a power-law family  v <= C * e^{N x}  where x
// is the log of the family's growth variable.  The exponent is fitted on the
// outer radii; membership is falsified when the inner-radii slope keeps
// growing past it (the next singularity scale always does).
struct PowerFit {
    bool pass = true;
    double C = 0.0;
    double N = 0.0;
};

inline PowerFit fit_power_family(const std::vector<double>& x,
                                 const std::vector<double>& vals) {
    PowerFit out;
    size_t n = vals.size();
    double vmax_out = 0.0, vmax_in = 0.0;
    size_t m = n / 2 + 1;
    for (size_t i = 0; i < m; ++i) vmax_out = std::max(vmax_out, vals[i]);
    for (size_t i = m; i < n; ++i) vmax_in = std::max(vmax_in, vals[i]);
    if (vmax_in <= 1.2 * vmax_out + 1e-12) {  // bounded tail
        out.C = std::max(vmax_out, vmax_in);
        return out;
    }
    std::vector<double> logv(n);
    double floor = std::max(1e-300, 1e-13 * std::max(vmax_out, vmax_in));
    for (size_t i = 0; i < n; ++i) logv[i] = std::log(std::max(vals[i], floor));
    double n_out = lsq_slope(x, logv, 0, m);
    double n_in = lsq_slope(x, logv, m - 1, n);
    out.N = std::max(0.0, n_out);
    out.pass = (n_in <= n_out + 0.5) && (n_in <= 12.0);
    double logC = -1e300;
    for (size_t i = 0; i < n; ++i) logC = std::max(logC, logv[i] - out.N * x[i]);
    out.C = std::exp(logC);
    return out;
}

// bound C * (log|log r|)^N: growth variable log|log r|
inline PowerFit fit_loglog_bound(const std::vector<double>& radii,
                                 const std::vector<double>& vals) {
    std::vector<double> x;
    for (double r : radii) x.push_back(std::log(std::log(std::abs(std::log(r)))));
    return fit_power_family(x, vals);
}

// bound C * |log r|^N: growth variable |log r|
inline PowerFit fit_logpow_bound(const std::vector<double>& radii,
                                 const std::vector<double>& vals) {
    std::vector<double> x;
    for (double r : radii) x.push_back(std::log(std::abs(std::log(r))));
    return fit_power_family(x, vals);
}

}  // namespace detail

// Poincare growth along D: |omega(frame)|^2 <= C at shrinking radii.
inline GrowthReport check_poincare_growth(const FormField& f, const PunctureSet& D,
                                          std::vector<double> radii = {}) {
    GrowthReport rep;
    rep.predicate = "poincare";
    if (D.empty()) {
        rep.detail = "no punctures: vacuous";
        return rep;
    }
    if (radii.empty())
        for (double r = 1e-2; r > 0.9e-12; r *= 0.1) radii.push_back(r);
    rep.radii = radii;
    for (const auto& p : D.punctures()) {
        std::vector<double> sq;
        for (double r : radii) {
            double m = detail::frame_mag(f, p.adapted_chart, r);
            sq.push_back(m * m);
        }
        size_t half = sq.size() / 2 + 1;
        double C = 0.0;
        for (size_t i = 0; i < half; ++i) C = std::max(C, sq[i]);
        rep.fitted_C = std::max(rep.fitted_C, C);
        for (size_t i = half; i < sq.size(); ++i) {
            rep.ratios.push_back(sq[i]);
            if (sq[i] > 1.5 * C + 1e-9) {
                rep.pass = false;
                rep.detail = "unbounded frame ratio near puncture";
            }
        }
    }
    return rep;
}

// log-log growth of a single form: components measured against the
// generating frame dz/(z log|z|), bounded by C log^N|log r|.
inline GrowthReport check_loglog_growth(const FormField& f, const PunctureSet& D,
                                        std::vector<double> radii = {},
                                        const char* name = "loglog") {
    GrowthReport rep;
    rep.predicate = name;
    if (D.empty()) {
        rep.detail = "no punctures: vacuous";
        return rep;
    }
    if (radii.empty())
        for (double r = 1e-2; r > 0.9e-12; r *= 0.1) radii.push_back(r);
    rep.radii = radii;
    for (const auto& p : D.punctures()) {
        std::vector<double> vals;
        for (double r : radii) vals.push_back(detail::frame_mag(f, p.adapted_chart, r));
        auto fit = detail::fit_loglog_bound(radii, vals);
        rep.fitted_C = std::max(rep.fitted_C, fit.C);
        rep.fitted_N = std::max(rep.fitted_N, fit.N);
        rep.ratios.insert(rep.ratios.end(), vals.begin(), vals.end());
        if (!fit.pass) {
            rep.pass = false;
            rep.detail = "exceeds every log-log power bound";
        }
    }
    return rep;
}

// pre-log-log form: log-log growth for f, del f, delbar f, del delbar f
inline GrowthReport check_pre_log_log(const FormField& f, const PunctureSet& D,
                                      std::vector<double> radii = {}) {
    GrowthReport rep;
    rep.predicate = "preloglog";
    if (D.empty()) {
        rep.detail = "no punctures: vacuous";
        return rep;
    }
    std::vector<std::pair<const char*, FormField>> parts;
    parts.emplace_back("f", f);
    if (f.degree() < 2) {
        parts.emplace_back("del f", f.del());
        parts.emplace_back("delbar f", f.delbar());
    }
    if (f.degree() == 0) parts.emplace_back("del delbar f", f.delbar().del());
    for (auto& [nm, g] : parts) {
        GrowthReport sub = check_loglog_growth(g, D, radii, "loglog");
        rep.fitted_C = std::max(rep.fitted_C, sub.fitted_C);
        rep.fitted_N = std::max(rep.fitted_N, sub.fitted_N);
        if (!sub.pass) {
            rep.pass = false;
            rep.detail += std::string(nm) + " fails log-log growth; ";
        }
    }
    rep.radii = f.degree() == 0 ? radii : rep.radii;
    return rep;
}

// Good metric check for a line bundle given through its chart-local weights:
// on each adapted punctured disk the trivializing section s has
// ||s||^2 = rho_{adapted chart}; condition (i) bounds log||s|| by
// N log|log r| + log C, condition (ii) asks del log||s|| and
// delbar del log||s|| to be good forms (they and their d have Poincare
// growth; d del log||s|| = delbar del log||s|| and d of a 2-form vanishes).
inline GrowthReport check_good_metric(const SurfaceScalar& log_rho, const PunctureSet& D,
                                      std::vector<double> radii = {}) {
    GrowthReport rep;
    rep.predicate = "good";
    if (D.empty()) {
        rep.detail = "no punctures: vacuous";
        return rep;
    }
    if (radii.empty())
        for (double r = 1e-2; r > 0.9e-12; r *= 0.1) radii.push_back(r);
    rep.radii = radii;
    const auto& atlas = D.atlas();
    FormField log_norm_sq = FormField::scalar(atlas, log_rho);

    // (i) |log ||s|| | <= log C + N log|log r|
    for (const auto& p : D.punctures()) {
        if (log_rho.per_chart.find(p.adapted_chart) == log_rho.per_chart.end())
            throw config_error("good-metric check: no local weight on the adapted chart");
        std::vector<double> vals;
        for (double r : radii) {
            double worst = 0.0;
            for (int k = 0; k < 16; ++k) {
                cplx zeta = std::polar(r, 2.0 * pi * (k + 0.31) / 16);
                worst = std::max(worst,
                                 std::abs(0.5 * log_norm_sq.eval(p.adapted_chart, zeta)(0, 0).real()));
            }
            vals.push_back(std::exp(worst));  // max(||s||, 1/||s||)
        }
        auto fit = detail::fit_logpow_bound(radii, vals);
        rep.fitted_C = std::max(rep.fitted_C, fit.C);
        rep.fitted_N = std::max(rep.fitted_N, fit.N);
        if (!fit.pass) {
            rep.pass = false;
            rep.detail = "condition (i): log-power bound on ||s|| fails";
        }
    }

    // (ii) good-form conditions: del log||s|| and delbar del log||s|| have
    // Poincare growth; d(del log||s||) = delbar del log||s|| and the d of a
    // 2-form vanishes on a curve, so these two checks close the family.
    GrowthReport g1 = check_poincare_growth(0.5 * log_norm_sq.del(), D, radii);
    GrowthReport g2 = check_poincare_growth(0.5 * log_norm_sq.del().delbar(), D, radii);
    if (!g1.pass) {
        rep.pass = false;
        rep.detail += " del log||s|| not Poincare;";
    }
    if (!g2.pass) {
        rep.pass = false;
        rep.detail += " delbar del log||s|| not Poincare;";
    }
    return rep;
}

}  // namespace deligne
