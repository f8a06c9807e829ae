#pragma once
// The exact complete hyperbolic metric of curvature -1 on the thrice-
// punctured sphere, through the elliptic modular parametrization: for
// z in C minus {0, 1}, the covering map from the upper half plane has
// inverse tau(z) = i K(1-z)/K(z) up to the six anharmonic moves, and the
// Poincare density pulls back to rho(z) = |tau'(z)|^2 / Im(tau)^2.
//
// K and E are computed by the complex arithmetic-geometric mean; tau' and
// tau'' follow from dK/dm = (E - (1-m)K)/(2m(1-m)) and dE/dm = (E - K)/(2m).
// The argument is first moved into the lens |m| <= 1, |1 - m| <= 1 by the
// anharmonic group, where both K(m) and K(1-m) stay on principal branches.

#include "forms.hpp"

namespace deligne {
namespace agm {

struct KE {
    cplx K, E;
};

// complex AGM with the standard branch choice |a - b| <= |a + b|
inline KE elliptic_KE(cplx m) {
    cplx a(1.0, 0.0);
    cplx b = std::sqrt(cplx(1.0) - m);
    if (std::abs(a - b) > std::abs(a + b)) b = -b;
    // E/K = 1 - sum_{n>=0} 2^{n-1} c_n^2 with c_0^2 = m; the accumulator
    // carries twice that sum
    cplx c2_sum = m;
    double p = 1.0;
    for (int it = 0; it < 64; ++it) {
        cplx an = 0.5 * (a + b);
        cplx bn = std::sqrt(a * b);
        if (std::abs(an - bn) > std::abs(an + bn)) bn = -bn;
        cplx cn = 0.5 * (a - b);
        p *= 2.0;
        c2_sum += p * cn * cn;
        a = an;
        b = bn;
        if (std::abs(cn) < 1e-17 * std::abs(a)) break;
    }
    KE out;
    out.K = pi / (2.0 * a);
    out.E = out.K * (cplx(1.0) - 0.5 * c2_sum);
    return out;
}

inline cplx dK_dm(const KE& ke, cplx m) {
    return (ke.E - (cplx(1.0) - m) * ke.K) / (2.0 * m * (cplx(1.0) - m));
}
inline cplx dE_dm(const KE& ke, cplx m) { return (ke.E - ke.K) / (2.0 * m); }

struct TauJet {
    cplx tau, dtau, d2tau;  // w.r.t. the lens variable m
};

// tau(m) = i K(1-m)/K(m) with first and second m-derivatives
inline TauJet tau_jet(cplx m) {
    KE k = elliptic_KE(m);
    KE kp = elliptic_KE(cplx(1.0) - m);
    cplx K = k.K, Kp = kp.K;
    cplx dK = dK_dm(k, m);
    cplx dKp = -dK_dm(kp, cplx(1.0) - m);  // chain rule through 1 - m
    TauJet t;
    t.tau = iu * Kp / K;
    t.dtau = iu * (dKp * K - Kp * dK) / (K * K);
    // second derivatives of K and K' via the E-system
    cplx dE = dE_dm(k, m);
    cplx dEp = -dE_dm(kp, cplx(1.0) - m);
    cplx one = cplx(1.0);
    auto d2K_of = [&](cplx mm, const KE& ke, cplx dk, cplx de) {
        // differentiate (E - (1-m)K)/(2m(1-m))
        cplx num = de + ke.K - (one - mm) * dk;
        cplx den = 2.0 * mm * (one - mm);
        cplx dden = 2.0 * (one - 2.0 * mm);
        return (num * den - (ke.E - (one - mm) * ke.K) * dden) / (den * den);
    };
    cplx d2K = d2K_of(m, k, dK, dE);
    // K'(m) = K(1-m): d2/dm2 = +d2K/dm2 evaluated at 1-m
    cplx d2Kp = d2K_of(one - m, kp, -dKp, -dEp);
    t.d2tau = iu * ((d2Kp * K - Kp * d2K) / (K * K) -
                    2.0 * dK * (dKp * K - Kp * dK) / (K * K * K));
    return t;
}

}  // namespace agm

// tau(z) on C minus {0,1} with Im tau > 0, via the anharmonic reduction;
// returns tau and its first two z-derivatives.
struct HyperbolicJet {
    cplx tau, dtau, d2tau;
    double log_rho;   // log of the hyperbolic density
    cplx dlog_rho;    // d/dz log rho (Wirtinger)
};

namespace detail {

struct Anharmonic {
    double a, b, c, d;  // m = (a z + b)/(c z + d) moving z into the lens
};

// The six anharmonic moves of z.  The hyperbolic density is computed from
// tau* = tau(m): since the moves permute the punctures and every deck/coset
// transformation acts on the upper half plane by isometries, the density
// |d tau*/dz|^2 / Im(tau*)^2 is independent of the chosen move.
inline const std::array<Anharmonic, 6>& anharmonic_table() {
    static const std::array<Anharmonic, 6> T = {{
        {1, 0, 0, 1},    // z
        {-1, 1, 0, 1},   // 1 - z
        {1, 0, 1, -1},   // z/(z-1)
        {0, 1, 1, 0},    // 1/z
        {0, 1, -1, 1},   // 1/(1-z)
        {1, -1, 1, 0},   // (z-1)/z
    }};
    return T;
}

inline cplx moebius(double a, double b, double c, double d, cplx z) {
    return (a * z + b) / (c * z + d);
}

}  // namespace detail

inline HyperbolicJet hyperbolic_jet(cplx z) {
    if (std::abs(z) < 1e-100 || std::abs(z - 1.0) < 1e-100)
        throw domain_error("hyperbolic metric evaluated at a puncture");
    // pick the anharmonic move landing best inside the lens
    int best = 0;
    double best_score = 1e300;
    for (int i = 0; i < 6; ++i) {
        const auto& A = detail::anharmonic_table()[size_t(i)];
        cplx m = detail::moebius(A.a, A.b, A.c, A.d, z);
        double score = std::max(std::abs(m), std::abs(cplx(1.0) - m));
        if (score < best_score) {
            best_score = score;
            best = i;
        }
    }
    const auto& A = detail::anharmonic_table()[size_t(best)];
    cplx den0 = A.c * z + A.d;
    cplx m = detail::moebius(A.a, A.b, A.c, A.d, z);
    cplx dm = (A.a * A.d - A.b * A.c) / (den0 * den0);
    cplx d2m = -2.0 * A.c * (A.a * A.d - A.b * A.c) / (den0 * den0 * den0);

    agm::TauJet tj = agm::tau_jet(m);
    HyperbolicJet out;
    out.tau = tj.tau;
    out.dtau = tj.dtau * dm;
    out.d2tau = tj.d2tau * dm * dm + tj.dtau * d2m;
    double im = out.tau.imag();
    if (!(im > 0.0)) throw domain_error("modular parametrization left the upper half plane");
    out.log_rho = 2.0 * std::log(std::abs(out.dtau)) - 2.0 * std::log(im);
    // d/dz log rho = tau''/tau' - tau'/(i Im tau)   (Wirtinger derivative)
    out.dlog_rho = out.d2tau / out.dtau - out.dtau / (iu * im);
    return out;
}

// log of the hyperbolic weight on the sphere punctured at {0, s, infinity},
// transplanted from {0, 1, infinity} by z -> z/s: rho_s(z) = rho(z/s)/|s|^2.
// Returns per-chart expressions backed by the modular evaluator, carrying
// analytic first derivatives (second derivatives go numeric).
inline SurfaceScalar exact_hyperbolic_log_weight(cplx s = cplx(1.0, 0.0)) {
    auto mk_chart0 = [s]() {
        auto v = std::make_shared<ExternalFn>();
        v->eval = [s](cplx z) {
            return cplx(hyperbolic_jet(z / s).log_rho - 2.0 * std::log(std::abs(s)), 0.0);
        };
        auto d = std::make_shared<ExternalFn>();
        d->eval = [s](cplx z) { return hyperbolic_jet(z / s).dlog_rho / s; };
        auto db = std::make_shared<ExternalFn>();
        db->eval = [s](cplx z) { return std::conj(hyperbolic_jet(z / s).dlog_rho / s); };
        // mixed second derivative by the jet algebra: d/dzbar of
        // tau''/tau' - tau'/(i Im tau) is |tau'|^2 / (2 Im^2 tau)
        auto dzb_of_d = std::make_shared<ExternalFn>();
        dzb_of_d->eval = [s](cplx z) {
            auto j = hyperbolic_jet(z / s);
            double im = j.tau.imag();
            return cplx(std::norm(j.dtau) / (2.0 * im * im) / std::norm(s), 0.0);
        };
        v->singular = {cplx(0.0), s};
        d->singular = v->singular;
        db->singular = v->singular;
        dzb_of_d->singular = v->singular;
        d->dzb = dzb_of_d;
        v->dz = d;
        v->dzb = db;
        v->name = "log_rho_hyp";
        return Expr::external(v);
    };
    // chart 1: log rho^(w) = log rho(1/w ...) - 4 log|w|
    auto mk_chart1 = [s]() {
        auto val = std::make_shared<ExternalFn>();
        val->eval = [s](cplx w) {
            cplx z = cplx(1.0) / w;
            double lr = hyperbolic_jet(z / s).log_rho - 2.0 * std::log(std::abs(s));
            return cplx(lr - 4.0 * std::log(std::abs(w)), 0.0);
        };
        auto d = std::make_shared<ExternalFn>();
        d->eval = [s](cplx w) {
            cplx z = cplx(1.0) / w;
            cplx dz = hyperbolic_jet(z / s).dlog_rho / s;
            return dz * (-1.0 / (w * w)) - 2.0 / w;
        };
        auto db = std::make_shared<ExternalFn>();
        db->eval = [s](cplx w) {
            cplx z = cplx(1.0) / w;
            cplx dz = hyperbolic_jet(z / s).dlog_rho / s;
            return std::conj(dz * (-1.0 / (w * w)) - 2.0 / w);
        };
        auto dzb_of_d = std::make_shared<ExternalFn>();
        dzb_of_d->eval = [s](cplx w) {
            cplx z = cplx(1.0) / w;
            auto j = hyperbolic_jet(z / s);
            double im = j.tau.imag();
            cplx dtau_w = j.dtau / s * (-1.0 / (w * w));
            return cplx(std::norm(dtau_w) / (2.0 * im * im), 0.0);
        };
        val->singular = {cplx(0.0), cplx(1.0) / s};
        d->singular = val->singular;
        db->singular = val->singular;
        dzb_of_d->singular = val->singular;
        d->dzb = dzb_of_d;
        val->dz = d;
        val->dzb = db;
        val->name = "log_rho_hyp_w";
        return Expr::external(val);
    };
    SurfaceScalar out;
    out.per_chart[0] = mk_chart0();
    out.per_chart[1] = mk_chart1();
    return out;
}

// theta-series lambda for cross-validation: lambda(tau) = theta2^4/theta3^4
inline cplx lambda_theta(cplx tau) {
    cplx q = std::exp(iu * pi * tau);
    cplx th2(0.0), th3(1.0);
    for (int n = 0; n < 60; ++n) {
        th2 += 2.0 * std::pow(q, (n + 0.5) * (n + 0.5));
        if (n >= 1) th3 += 2.0 * std::pow(q, double(n) * double(n));
    }
    cplx r = th2 / th3;
    return r * r * r * r;
}

}  // namespace deligne
