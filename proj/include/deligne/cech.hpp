#pragma once
// Total Cech cochain algebra valued in the hermitian-holomorphic Deligne
// cone: integer/holomorphic leg, truncated smooth-form leg, the map between
// them, cone and total differentials, and the two cup products.
//
// Cochains live on strictly increasing index tuples of a finite cover; the
// coboundary, the front/back-face cup and the cone maps all close over
// increasing tuples.  Degree bookkeeping (cone degree nd, Cech degree q):
//   X-leg  at nd: holomorphic (nd-1)-form    (nd = 0: Z(p)-valued constants)
//   W-leg  at nd: smooth (nd-2)-form, R(p-1)-valued, Deligne-algebra degree nd-1
// All signs are derived in signs.md.

#include <cstdint>
#include <functional>
#include <map>
#include <set>

#include "quadrature.hpp"

namespace deligne {

// --------------------------------------------------------------------------
// Covers
// --------------------------------------------------------------------------

struct OpenSet {
    std::string name;
    std::vector<PointOnSurface> excluded;  // the open is X minus these
};

struct Cover {
    AtlasPtr atlas;
    std::vector<OpenSet> opens;
    std::vector<PointOnSurface> avoid;  // extra points samples stay away from
    std::uint64_t seed = 2024;

    int size() const { return int(opens.size()); }

    bool contains(int open, const PointOnSurface& p) const {
        for (const auto& q : opens.at(size_t(open)).excluded)
            if (chordal_dist(*atlas, p, q) < 1e-9) return false;
        return true;
    }

    // deterministic sample points interior to the overlap of a tuple
    std::vector<PointOnSurface> samples(const std::vector<int>& tuple, int n) const {
        std::uint64_t h = seed;
        for (int i : tuple) h = h * 1000003ull + std::uint64_t(i + 7);
        Rng rng(h);
        std::vector<PointOnSurface> out;
        int guard = 0;
        while (int(out.size()) < n && guard < 4000) {
            ++guard;
            PointOnSurface p{int(rng.next_u64() % 2), rng.disk(1.15)};
            bool ok = true;
            for (int o : tuple)
                for (const auto& q : opens.at(size_t(o)).excluded)
                    ok = ok && chordal_dist(*atlas, p, q) > 0.08;
            for (const auto& q : avoid) ok = ok && chordal_dist(*atlas, p, q) > 0.08;
            if (ok) out.push_back(p);
        }
        if (int(out.size()) < n)
            throw domain_error("could not sample the overlap of a cover tuple");
        return out;
    }
};

using CoverPtr = std::shared_ptr<const Cover>;

inline std::vector<std::vector<int>> increasing_tuples(int n_opens, int len) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    std::function<void(int)> rec = [&](int start) {
        if (int(cur.size()) == len) {
            out.push_back(cur);
            return;
        }
        for (int i = start; i < n_opens; ++i) {
            cur.push_back(i);
            rec(i + 1);
            cur.pop_back();
        }
    };
    rec(0);
    return out;
}

// --------------------------------------------------------------------------
// Cochains
// --------------------------------------------------------------------------

enum class Leg : int { X = 0, W = 1 };

struct PieceKey {
    Leg leg;
    int nd;  // cone degree
    int q;   // Cech degree
    bool operator<(const PieceKey& o) const {
        return std::tie(leg, nd, q) < std::tie(o.leg, o.nd, o.q);
    }
};

using Generator = std::function<FormField(const std::vector<int>&)>;

inline int x_form_degree(int nd) { return nd == 0 ? 0 : nd - 1; }
inline int w_form_degree(int nd) { return nd - 2; }

class DeligneCochain {
public:
    DeligneCochain() = default;
    DeligneCochain(CoverPtr cover, int weight, int total_degree)
        : cover_(std::move(cover)), weight_(weight), degree_(total_degree) {}

    int weight() const { return weight_; }
    int total_degree() const { return degree_; }
    const CoverPtr& cover() const { return cover_; }

    void add_piece(PieceKey k, Generator g) {
        if (k.nd + k.q != degree_)
            throw config_error("cochain piece violates total-degree bookkeeping");
        if (k.leg == Leg::W && (k.nd < 2 || k.nd > 2 * weight_))
            throw config_error("smooth-leg piece outside the truncation window");
        if (k.leg == Leg::X && (k.nd < 0 || k.nd > weight_))
            throw config_error("integer-leg piece outside the holomorphic range");
        auto it = pieces_.find(k);
        if (it == pieces_.end()) {
            pieces_[k] = std::move(g);
        } else {
            Generator old = it->second;
            Generator add = std::move(g);
            it->second = [old, add](const std::vector<int>& t) {
                return old(t) + add(t);
            };
        }
    }

    const std::map<PieceKey, Generator>& pieces() const { return pieces_; }
    bool has_piece(PieceKey k) const { return pieces_.count(k) > 0; }
    FormField piece_at(PieceKey k, const std::vector<int>& t) const {
        return pieces_.at(k)(t);
    }

private:
    CoverPtr cover_;
    int weight_ = 1;
    int degree_ = 0;
    std::map<PieceKey, Generator> pieces_;
};

inline DeligneCochain scale_cochain(double k, const DeligneCochain& c) {
    DeligneCochain out(c.cover(), c.weight(), c.total_degree());
    for (const auto& [key, gen] : c.pieces()) {
        Generator g = gen;
        out.add_piece(key, [g, k](const std::vector<int>& t) { return k * g(t); });
    }
    return out;
}

inline DeligneCochain add_cochains(const DeligneCochain& a, const DeligneCochain& b) {
    DeligneCochain out(a.cover(), a.weight(), a.total_degree());
    for (const auto& [key, gen] : a.pieces()) out.add_piece(key, gen);
    for (const auto& [key, gen] : b.pieces()) out.add_piece(key, gen);
    return out;
}

// max |component| of all pieces at deterministic overlap samples
inline double cochain_residual(const DeligneCochain& c, int n_samples = 6) {
    double worst = 0.0;
    for (const auto& [k, gen] : c.pieces()) {
        for (const auto& t : increasing_tuples(c.cover()->size(), k.q + 1)) {
            FormField f = gen(t);
            auto pts = c.cover()->samples(t, n_samples);
            for (const auto& p : pts) {
                FormValue v = f.eval(p.chart, p.z);
                for (auto [r, s] : f.slots()) worst = std::max(worst, std::abs(v(r, s)));
            }
        }
    }
    return worst;
}

inline double cochain_difference(const DeligneCochain& a, const DeligneCochain& b,
                                 int n_samples = 6) {
    double worst = 0.0;
    std::set<PieceKey> keys;
    for (auto& [k, g] : a.pieces()) keys.insert(k);
    for (auto& [k, g] : b.pieces()) keys.insert(k);
    for (const auto& k : keys) {
        int deg = k.leg == Leg::X ? x_form_degree(k.nd) : w_form_degree(k.nd);
        for (const auto& t : increasing_tuples(a.cover()->size(), k.q + 1)) {
            FormField fa = a.has_piece(k) ? a.piece_at(k, t)
                                          : FormField::zero(a.cover()->atlas, deg);
            FormField fb = b.has_piece(k) ? b.piece_at(k, t)
                                          : FormField::zero(a.cover()->atlas, deg);
            auto pts = a.cover()->samples(t, n_samples);
            for (const auto& p : pts) {
                FormValue va = fa.eval(p.chart, p.z);
                FormValue vb = fb.eval(p.chart, p.z);
                for (auto [r, s] : fa.slots())
                    worst = std::max(worst, std::abs(va(r, s) - vb(r, s)));
            }
        }
    }
    return worst;
}

// --------------------------------------------------------------------------
// Differentials
// --------------------------------------------------------------------------

namespace detail {

inline Generator cech_delta_gen(const Generator& g) {
    return [g](const std::vector<int>& t) {
        FormField acc;
        bool first = true;
        for (size_t k = 0; k < t.size(); ++k) {
            std::vector<int> face;
            for (size_t j = 0; j < t.size(); ++j)
                if (j != k) face.push_back(t[j]);
            FormField part = g(face);
            if (k % 2 == 1) part = (-1.0) * part;
            if (first) {
                acc = part;
                first = false;
            } else {
                acc = acc + part;
            }
        }
        return acc;
    };
}

}  // namespace detail

// The standalone Deligne-algebra differential (Eq-13 style): -pi o d below
// the middle degree, -2 delbar del at the middle, d above; the middle output
// is dropped for truncated cochains.  On a curve the bidegree window is full
// and pi is the reality projection.
struct DeligneAlgebraPiece {
    int weight = 1;
    int delalg_deg = 1;
    int q = 0;
    bool truncated = true;
    FormField field;  // form degree = delalg_deg - 1
};

inline std::optional<DeligneAlgebraPiece> deligne_algebra_differential(
    const DeligneAlgebraPiece& c) {
    int p = c.weight;
    DeligneAlgebraPiece out = c;
    out.delalg_deg = c.delalg_deg + 1;
    if (c.delalg_deg < 2 * p - 1) {
        out.field = (-1.0) * (c.field.d().tate(p - 1));
        return out;
    }
    if (c.delalg_deg == 2 * p - 1) {
        if (c.truncated) return std::nullopt;
        out.field = (-2.0) * c.field.del().delbar();
        return out;
    }
    out.field = c.field.d();
    return out;
}

// Total differential of the cone-valued total Cech complex:
//   D = d_F + (-1)^{complex degree} delta on each leg,
//   cone mixing D(x, w) = (D_Z x, -rho_p(x) - D_W w),
//   rho_p = (-1)^nd pi_{p-1} for 1 <= nd <= p.
inline DeligneCochain total_differential(const DeligneCochain& c) {
    int p = c.weight();
    DeligneCochain out(c.cover(), p, c.total_degree() + 1);

    for (const auto& [k, gen] : c.pieces()) {
        if (k.leg == Leg::X) {
            // differential of the holomorphic complex
            if (k.nd == 0) {
                out.add_piece({Leg::X, 1, k.q}, gen);  // inclusion Z(p) -> O
            } else if (k.nd < p) {
                Generator g = gen;
                out.add_piece({Leg::X, k.nd + 1, k.q},
                              [g](const std::vector<int>& t) { return g(t).del(); });
            }
            // Cech part with sign (-1)^{nd}
            {
                Generator dg = detail::cech_delta_gen(gen);
                if (k.nd % 2 == 1) {
                    Generator base = dg;
                    dg = [base](const std::vector<int>& t) { return (-1.0) * base(t); };
                }
                out.add_piece({Leg::X, k.nd, k.q + 1}, dg);
            }
            // cone leg: -rho_p
            if (k.nd >= 1 && k.nd <= p) {
                Generator g = gen;
                double sgn = (k.nd % 2 == 0) ? -1.0 : 1.0;  // -(-1)^nd
                int pp = p;
                out.add_piece({Leg::W, k.nd + 1, k.q},
                              [g, sgn, pp](const std::vector<int>& t) {
                                  return sgn * g(t).tate(pp - 1);
                              });
            }
        } else {
            int m = k.nd - 1;  // Deligne-algebra degree
            // -d_D part; the middle-degree output is cut by the truncation
            if (m < 2 * p - 1) {
                Generator g = gen;
                int pp = p;
                out.add_piece({Leg::W, k.nd + 1, k.q},
                              [g, pp](const std::vector<int>& t) {
                                  return g(t).d().tate(pp - 1);  // -(-pi o d)
                              });
            }
            // -(-1)^m delta part
            {
                Generator dg = detail::cech_delta_gen(gen);
                if (m % 2 == 0) {
                    Generator base = dg;
                    dg = [base](const std::vector<int>& t) { return (-1.0) * base(t); };
                }
                out.add_piece({Leg::W, k.nd, k.q + 1}, dg);
            }
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// Cup products
// --------------------------------------------------------------------------

namespace detail {

inline Generator front_back(const Generator& ga, int qa, const Generator& gb,
                            const std::function<FormField(FormField, FormField)>& combine,
                            double sign) {
    return [ga, qa, gb, combine, sign](const std::vector<int>& t) {
        std::vector<int> front(t.begin(), t.begin() + qa + 1);
        std::vector<int> back(t.begin() + qa, t.end());
        FormField f = combine(ga(front), gb(back));
        return sign * f;
    };
}

}  // namespace detail

// cup on the holomorphic legs (three-case product with the Cech sign)
inline DeligneCochain cup_deligne_Z(const DeligneCochain& a, const DeligneCochain& b) {
    int p = a.weight(), q = b.weight();
    if (p + q > 2)
        throw config_error("cup: weight overflow, only total weight <= 2 is supported on a curve");
    DeligneCochain out(a.cover(), p + q, a.total_degree() + b.total_degree());
    for (const auto& [ka, ga] : a.pieces()) {
        if (ka.leg != Leg::X) continue;
        for (const auto& [kb, gb] : b.pieces()) {
            if (kb.leg != Leg::X) continue;
            double sign = ((ka.q * kb.nd) % 2 == 0) ? 1.0 : -1.0;
            if (ka.nd == 0) {
                out.add_piece({Leg::X, kb.nd, ka.q + kb.q},
                              detail::front_back(ga, ka.q, gb,
                                                 [](FormField x, FormField y) { return x.wedge(y); },
                                                 sign));
            } else if (kb.nd == q) {
                out.add_piece({Leg::X, ka.nd + kb.nd, ka.q + kb.q},
                              detail::front_back(ga, ka.q, gb,
                                                 [](FormField x, FormField y) {
                                                     return x.wedge(y.del());
                                                 },
                                                 sign));
            }
        }
    }
    return out;
}

// The full cone-level product.  Case coefficients are the chain-map
// consistent ones (see signs.md): the only nonzero blocks are
//   X x X : (x cup x', correction pi_p ^ pi_{q-1} for nd, nd' >= 1)
//   X x W : pi_{p-1}(x) ^ (del w' - delbar w') for 1<=nd<=p-1, plus the
//           (-1)^p pi_p(dx) ^ w' term at nd = p
//   W x W : w ^ 2 delbar del w' when the right factor has top cone degree
inline DeligneCochain cup_hermitian(const DeligneCochain& a, const DeligneCochain& b) {
    int p = a.weight(), q = b.weight();
    if (p + q > 2)
        throw config_error("cup: weight overflow, only total weight <= 2 is supported on a curve");
    DeligneCochain out(a.cover(), p + q, a.total_degree() + b.total_degree());

    for (const auto& [ka, ga] : a.pieces()) {
        for (const auto& [kb, gb] : b.pieces()) {
            double sign = ((ka.q * kb.nd) % 2 == 0) ? 1.0 : -1.0;
            int nd1 = ka.nd, nd2 = kb.nd;

            if (ka.leg == Leg::X && kb.leg == Leg::X) {
                if (nd1 == 0) {
                    out.add_piece({Leg::X, nd2, ka.q + kb.q},
                                  detail::front_back(ga, ka.q, gb,
                                                     [](FormField x, FormField y) {
                                                         return x.wedge(y);
                                                     },
                                                     sign));
                } else if (nd2 == q) {
                    out.add_piece({Leg::X, nd1 + nd2, ka.q + kb.q},
                                  detail::front_back(ga, ka.q, gb,
                                                     [](FormField x, FormField y) {
                                                         return x.wedge(y.del());
                                                     },
                                                     sign));
                }
                if (nd1 >= 1 && nd2 >= 1) {
                    // correction (-1)^{nd2-1} pi_p(x) ^ pi_{q-1}(x')
                    double kappa = (nd2 % 2 == 1) ? 1.0 : -1.0;
                    int pp = p, qq = q;
                    out.add_piece({Leg::W, nd1 + nd2, ka.q + kb.q},
                                  detail::front_back(ga, ka.q, gb,
                                                     [pp, qq](FormField x, FormField y) {
                                                         return x.tate(pp).wedge(y.tate(qq - 1));
                                                     },
                                                     sign * kappa));
                }
            } else if (ka.leg == Leg::X && kb.leg == Leg::W) {
                int n = nd1, m = nd2;
                if (n == 0 || n >= p + 1) continue;
                int pp = p, qq = q;
                if (n <= p - 1 || n == p) {
                    // pi_{p-1}(x) ^ (del w'^{(q-1, m-q-1)} - delbar w'^{(m-q-1, q-1)})
                    out.add_piece(
                        {Leg::W, n + m, ka.q + kb.q},
                        detail::front_back(ga, ka.q, gb,
                                           [pp, qq, m](FormField x, FormField w) {
                                               int r1 = qq - 1, s1 = m - qq - 1;
                                               FormField combo =
                                                   w.pick(r1, s1).del() - w.pick(s1, r1).delbar();
                                               return x.tate(pp - 1).wedge(combo);
                                           },
                                           sign));
                }
                if (n == p) {
                    double c = (p % 2 == 0) ? 1.0 : -1.0;
                    out.add_piece({Leg::W, n + m, ka.q + kb.q},
                                  detail::front_back(ga, ka.q, gb,
                                                     [pp](FormField x, FormField w) {
                                                         return x.del().tate(pp).wedge(w);
                                                     },
                                                     sign * c));
                }
            } else if (ka.leg == Leg::W && kb.leg == Leg::W) {
                if (nd2 != 2 * q) continue;
                out.add_piece({Leg::W, nd1 + nd2, ka.q + kb.q},
                              detail::front_back(ga, ka.q, gb,
                                                 [](FormField w, FormField w2) {
                                                     return w.wedge(2.0 * w2.del().delbar());
                                                 },
                                                 sign));
            }
            // W x X is zero
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// Metrized line bundles and their cocycles
// --------------------------------------------------------------------------

struct MetrizedLineBundleData {
    CoverPtr cover;
    // log g_ij with chosen branches for increasing pairs i < j; accessors
    // supply log g_ji = -log g_ij and log g_ii = 0
    std::map<std::pair<int, int>, SurfaceScalar> log_g;
    std::vector<SurfaceScalar> log_rho;  // per open
    std::vector<PointOnSurface> metric_singularities;  // e.g. puncture set

    FormField log_g_field(int i, int j) const {
        const AtlasPtr& atlas = cover->atlas;
        if (i == j) return FormField::zero(atlas, 0);
        bool flip = i > j;
        auto it = log_g.find(flip ? std::make_pair(j, i) : std::make_pair(i, j));
        if (it == log_g.end()) throw config_error("missing transition branch log g_ij");
        FormField f = FormField::scalar(atlas, it->second);
        return flip ? (-1.0) * f : f;
    }
    FormField log_rho_field(int i) const {
        FormField f = FormField::scalar(cover->atlas, log_rho.at(size_t(i)));
        f.add_singular(metric_singularities);
        return f;
    }

    // rho_j = rho_i |g_ij|^2 and c_ijk integral, sampled
    void validate(double tol = 1e-8) const {
        int n = cover->size();
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                FormField lhs = log_rho_field(j) - log_rho_field(i) -
                                2.0 * log_g_field(i, j).tate(0);
                for (const auto& pt : cover->samples({i, j}, 8)) {
                    cplx v = lhs.eval(pt.chart, pt.z)(0, 0);
                    if (std::abs(v) > tol)
                        throw config_error("metric weights violate rho_j = rho_i |g_ij|^2");
                }
            }
        for (const auto& t : increasing_tuples(n, 3)) {
            FormField c = log_g_field(t[1], t[2]) - log_g_field(t[0], t[2]) +
                          log_g_field(t[0], t[1]);
            for (const auto& pt : cover->samples(t, 8)) {
                cplx v = c.eval(pt.chart, pt.z)(0, 0) / two_pi_i;
                if (std::abs(v - std::round(v.real())) > tol)
                    throw config_error("transition branches give non-integer c_ijk");
            }
        }
    }
};

// the degree-2, weight-1 total cocycle (2 pi i c_ijk, log g_ij, -1/2 log rho_i)
inline DeligneCochain bundle_cocycle(const MetrizedLineBundleData& L) {
    L.validate();
    DeligneCochain c(L.cover, 1, 2);
    const MetrizedLineBundleData data = L;
    c.add_piece({Leg::X, 0, 2}, [data](const std::vector<int>& t) {
        return data.log_g_field(t[1], t[2]) - data.log_g_field(t[0], t[2]) +
               data.log_g_field(t[0], t[1]);
    });
    c.add_piece({Leg::X, 1, 1}, [data](const std::vector<int>& t) {
        return data.log_g_field(t[0], t[1]);
    });
    c.add_piece({Leg::W, 2, 0}, [data](const std::vector<int>& t) {
        return (-0.5) * data.log_rho_field(t[0]);
    });
    return c;
}

// characteristic form: -2 delbar del applied to the top smooth component of
// a degree-2p cocycle.  Weight 1 gives the first Chern form delbar del
// log rho; weight 2 lands in form degree 4 which vanishes on a curve.
inline FormField characteristic_form(const DeligneCochain& c) {
    int p = c.weight();
    if (c.total_degree() != 2 * p)
        throw config_error("characteristic form needs a degree-2p cocycle");
    PieceKey k{Leg::W, 2 * p, 0};
    const AtlasPtr& atlas = c.cover()->atlas;
    if (!c.has_piece(k)) return FormField::zero(atlas, 2);
    if (p >= 2) return FormField::zero(atlas, 2);  // type (2,2) on a curve
    // collate per chart from the per-open fields
    FormField out(atlas, 2);
    for (int chart = 0; chart < atlas->n_charts(); ++chart) {
        for (int o = 0; o < c.cover()->size(); ++o) {
            FormField w = c.piece_at(k, {o});
            FormField cf = (-2.0) * w.del().delbar();
            if (cf.has_native(chart)) {
                out.set_component(chart, 1, 1, cf.component(chart, 1, 1));
                break;
            }
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// Reduction of the weight-2 product on a curve with a two-open cover
// --------------------------------------------------------------------------

struct CurveCocycle {
    CoverPtr cover;
    std::vector<FormField> omega0;                    // per open, degree 2
    std::function<FormField(int, int)> omega1;        // ordered pairs, degree 1
    // omega2 vanishes identically on a two-open cover

    CocycleView view() const {
        CocycleView v;
        v.omega0 = omega0;
        v.omega1 = omega1;
        for (const auto& o : cover->opens) v.excluded.push_back(o.excluded);
        return v;
    }

    // sampled total-cocycle residual: d omega1_{ij} = omega0_i - omega0_j
    double cocycle_residual(int n_samples = 8) const {
        double worst = 0.0;
        int n = cover->size();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                FormField lhs = omega1(i, j).d();
                FormField rhs = omega0[size_t(i)] - omega0[size_t(j)];
                for (const auto& p : cover->samples({std::min(i, j), std::max(i, j)},
                                                    n_samples)) {
                    cplx dv = lhs.eval(p.chart, p.z)(1, 1) - rhs.eval(p.chart, p.z)(1, 1);
                    worst = std::max(worst, std::abs(dv));
                }
            }
        return worst;
    }
};

// Extract the reduced total 2-cocycle from a weight-2 product cochain on a
// two-open cover: the holomorphic legs and the function-degree smooth leg
// have no increasing tuples left, so restriction is exact.
inline CurveCocycle reduce_product_on_curve(const DeligneCochain& prod) {
    if (prod.cover()->size() != 2)
        throw config_error("curve reduction requires a cover with exactly two opens");
    if (prod.weight() != 2 || prod.total_degree() != 4)
        throw config_error("curve reduction expects a weight-2 degree-4 product cocycle");
    CurveCocycle out;
    out.cover = prod.cover();
    PieceKey k0{Leg::W, 4, 0}, k1{Leg::W, 3, 1};
    for (int i = 0; i < 2; ++i) out.omega0.push_back(prod.piece_at(k0, {i}));
    const DeligneCochain p = prod;
    out.omega1 = [p, k1](int i, int j) {
        if (i == j) return FormField::zero(p.cover()->atlas, 1);
        return p.piece_at(k1, {i, j});
    };
    return out;
}

}  // namespace deligne
