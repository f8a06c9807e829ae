#pragma once
// Scalar-field expression trees over one complex chart coordinate.
//
// An Expr evaluates a smooth (not necessarily holomorphic) function of z and
// supports symbolic Wirtinger differentiation d/dz, d/dzbar.  Everything the
// engine integrates or differentiates is built from these trees, so analytic
// derivatives are available wherever the field was assembled from closed-form
// pieces; opaque leaves fall back to central differences.

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace deligne {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846264338327950288;
inline const cplx iu{0.0, 1.0};
inline const cplx two_pi_i{0.0, 2.0 * pi};

struct config_error : std::runtime_error {
    explicit config_error(const std::string& w) : std::runtime_error(w) {}
};
struct domain_error : std::runtime_error {
    explicit domain_error(const std::string& w) : std::runtime_error(w) {}
};
struct convergence_error : std::runtime_error {
    explicit convergence_error(const std::string& w) : std::runtime_error(w) {}
};

namespace detail {

// Smooth step h: 0 for t<=0, 1 for t>=1, h(t)=a/(a+b) with a=e^{-1/t},
// b=e^{-1/(1-t)}.  Derivatives up to third order, exact zeros outside (0,1).
inline void step_core(double t, double& h, double& g, double& gp, double& gpp) {
    double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
    h = a / (a + b);
    double t2 = t * t, s = 1.0 - t, s2 = s * s;
    g = 1.0 / t2 + 1.0 / s2;
    gp = -2.0 / (t2 * t) + 2.0 / (s2 * s);
    gpp = 6.0 / (t2 * t2) + 6.0 / (s2 * s2);
}

inline double step_val(double t) {
    if (t <= 1e-12) return 0.0;
    if (t >= 1.0 - 1e-12) return 1.0;
    double h, g, gp, gpp;
    step_core(t, h, g, gp, gpp);
    return h;
}

// k-th derivative of the step, k = 1..3; exact 0 outside the open interval.
inline double step_deriv(double t, int k) {
    if (t <= 1e-9 || t >= 1.0 - 1e-9) return 0.0;
    double h, g, gp, gpp;
    step_core(t, h, g, gp, gpp);
    double h1 = h * (1.0 - h) * g;
    if (k == 1) return h1;
    double h2 = h1 * (1.0 - 2.0 * h) * g + h * (1.0 - h) * gp;
    if (k == 2) return h2;
    double h3 = h2 * (1.0 - 2.0 * h) * g - 2.0 * h1 * h1 * g +
                2.0 * h1 * (1.0 - 2.0 * h) * gp + h * (1.0 - h) * gpp;
    return h3;
}

}  // namespace detail

class Expr;

// Opaque leaf: pointwise evaluator with optional analytic Wirtinger
// derivatives (as further leaves) and singular points for step control.
struct ExternalFn {
    std::function<cplx(cplx)> eval;
    std::shared_ptr<const ExternalFn> dz;    // may be null -> numeric
    std::shared_ptr<const ExternalFn> dzb;   // may be null -> numeric
    std::vector<cplx> singular;              // avoid differencing across these
    std::string name{"external"};
};

namespace detail {

enum class Op : std::uint8_t {
    Const, Var, Add, Sub, Mul, LazyMul, Div, Neg, Powi, Log, Exp,
    Conj, Abs2, Sqrt, Step, StepD, External
};

struct Node {
    Op op;
    cplx value{};                       // Const
    int ipar = 0;                       // Powi exponent, StepD order
    double branch = pi;                 // Log branch-cut direction
    std::shared_ptr<const Node> a, b;
    std::shared_ptr<const ExternalFn> ext;
};

using NodeP = std::shared_ptr<const Node>;

inline NodeP mk(Node n) { return std::make_shared<const Node>(std::move(n)); }

inline cplx log_branch(cplx w, double cut) {
    if (w == cplx(0.0, 0.0)) throw domain_error("log of zero");
    double a = std::arg(w);
    // choose arg in (cut - 2*pi, cut]
    while (a > cut) a -= 2.0 * pi;
    while (a <= cut - 2.0 * pi) a += 2.0 * pi;
    return cplx(std::log(std::abs(w)), a);
}

inline cplx powi(cplx w, int n) {
    if (n == 0) return cplx(1.0, 0.0);
    bool inv = n < 0;
    unsigned long k = inv ? static_cast<unsigned long>(-(long)n) : (unsigned long)n;
    cplx r(1.0, 0.0), base = w;
    while (k) {
        if (k & 1ul) r *= base;
        base *= base;
        k >>= 1;
    }
    return inv ? cplx(1.0, 0.0) / r : r;
}

cplx eval_node(const Node* n, cplx z);

inline cplx eval_external(const ExternalFn* e, cplx z) { return e->eval(z); }

// Wirtinger derivatives of an opaque evaluator: Richardson-extrapolated
// central differences, with the step kept clear of singular points.
inline cplx external_diff(const ExternalFn* e, cplx z, bool bar) {
    double h = 1e-5 * (1.0 + std::abs(z));
    for (const cplx& s : e->singular) {
        double d = std::abs(z - s);
        if (d > 0.0 && d / 4.0 < h) h = d / 4.0;
    }
    if (h <= 0.0) throw domain_error("numeric derivative at singular point");
    auto wirt = [&](double step) {
        cplx fx = (e->eval(z + step) - e->eval(z - step)) / (2.0 * step);
        cplx fy = (e->eval(z + iu * step) - e->eval(z - iu * step)) / (2.0 * step);
        return bar ? 0.5 * (fx + iu * fy) : 0.5 * (fx - iu * fy);
    };
    cplx d1 = wirt(h), d2 = wirt(0.5 * h);
    return (4.0 * d2 - d1) / 3.0;
}

inline cplx eval_node(const Node* n, cplx z) {
    switch (n->op) {
        case Op::Const: return n->value;
        case Op::Var: return z;
        case Op::Add: return eval_node(n->a.get(), z) + eval_node(n->b.get(), z);
        case Op::Sub: return eval_node(n->a.get(), z) - eval_node(n->b.get(), z);
        case Op::Mul: return eval_node(n->a.get(), z) * eval_node(n->b.get(), z);
        case Op::LazyMul: {
            cplx va = eval_node(n->a.get(), z);
            if (va == cplx(0.0, 0.0)) return va;
            return va * eval_node(n->b.get(), z);
        }
        case Op::Div: {
            cplx vb = eval_node(n->b.get(), z);
            if (vb == cplx(0.0, 0.0)) throw domain_error("division by zero in field");
            return eval_node(n->a.get(), z) / vb;
        }
        case Op::Neg: return -eval_node(n->a.get(), z);
        case Op::Powi: return powi(eval_node(n->a.get(), z), n->ipar);
        case Op::Log: return log_branch(eval_node(n->a.get(), z), n->branch);
        case Op::Exp: return std::exp(eval_node(n->a.get(), z));
        case Op::Conj: return std::conj(eval_node(n->a.get(), z));
        case Op::Abs2: return std::norm(eval_node(n->a.get(), z));
        case Op::Sqrt: return std::sqrt(eval_node(n->a.get(), z));
        case Op::Step: return detail::step_val(eval_node(n->a.get(), z).real());
        case Op::StepD: return detail::step_deriv(eval_node(n->a.get(), z).real(), n->ipar);
        case Op::External: return eval_external(n->ext.get(), z);
    }
    throw std::logic_error("bad node");
}

}  // namespace detail

class Expr {
public:
    Expr() : n_(detail::mk({detail::Op::Const, cplx(0.0)})) {}
    explicit Expr(detail::NodeP n) : n_(std::move(n)) {}

    static Expr constant(cplx c) { return Expr(detail::mk({detail::Op::Const, c})); }
    static Expr constant(double c) { return constant(cplx(c, 0.0)); }
    static Expr var() { return Expr(detail::mk({detail::Op::Var})); }
    static Expr external(std::shared_ptr<const ExternalFn> e) {
        detail::Node n{detail::Op::External};
        n.ext = std::move(e);
        return Expr(detail::mk(std::move(n)));
    }

    cplx operator()(cplx z) const { return detail::eval_node(n_.get(), z); }

    bool is_zero_const() const {
        return n_->op == detail::Op::Const && n_->value == cplx(0.0, 0.0);
    }

    Expr dz() const { return diff(false); }
    Expr dzbar() const { return diff(true); }
    Expr diff(bool bar) const;

    // substitute g for the chart variable: (this ∘ g)
    Expr compose(const Expr& g) const;

    static Expr parse(const std::string& src);

    const detail::NodeP& node() const { return n_; }

private:
    detail::NodeP n_;
};

inline Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_zero_const()) return b;
    if (b.is_zero_const()) return a;
    return Expr(detail::mk({detail::Op::Add, {}, 0, pi, a.node(), b.node()}));
}
inline Expr operator-(const Expr& a, const Expr& b) {
    if (b.is_zero_const()) return a;
    return Expr(detail::mk({detail::Op::Sub, {}, 0, pi, a.node(), b.node()}));
}
inline Expr operator-(const Expr& a) {
    if (a.is_zero_const()) return a;
    return Expr(detail::mk({detail::Op::Neg, {}, 0, pi, a.node()}));
}
inline Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_zero_const()) return a;
    if (b.is_zero_const()) return b;
    return Expr(detail::mk({detail::Op::Mul, {}, 0, pi, a.node(), b.node()}));
}
inline Expr operator*(cplx c, const Expr& b) { return Expr::constant(c) * b; }
inline Expr operator*(double c, const Expr& b) { return Expr::constant(c) * b; }
inline Expr operator/(const Expr& a, const Expr& b) {
    if (a.is_zero_const()) return a;
    return Expr(detail::mk({detail::Op::Div, {}, 0, pi, a.node(), b.node()}));
}
// multiply where the left factor gates the right: if a(z)==0 exactly, b is
// never evaluated.  Used to confine cusp-local expressions inside bumps.
inline Expr lazy_mul(const Expr& a, const Expr& b) {
    return Expr(detail::mk({detail::Op::LazyMul, {}, 0, pi, a.node(), b.node()}));
}
inline Expr powi(const Expr& a, int n) {
    if (n == 1) return a;
    return Expr(detail::mk({detail::Op::Powi, {}, n, pi, a.node()}));
}
inline Expr log(const Expr& a, double branch_cut = pi) {
    return Expr(detail::mk({detail::Op::Log, {}, 0, branch_cut, a.node()}));
}
inline Expr exp(const Expr& a) { return Expr(detail::mk({detail::Op::Exp, {}, 0, pi, a.node()})); }
inline Expr conj(const Expr& a) { return Expr(detail::mk({detail::Op::Conj, {}, 0, pi, a.node()})); }
inline Expr abs2(const Expr& a) { return Expr(detail::mk({detail::Op::Abs2, {}, 0, pi, a.node()})); }
inline Expr sqrt(const Expr& a) { return Expr(detail::mk({detail::Op::Sqrt, {}, 0, pi, a.node()})); }
inline Expr smooth_step(const Expr& a) {
    return Expr(detail::mk({detail::Op::Step, {}, 0, pi, a.node()}));
}
inline Expr re(const Expr& a) { return 0.5 * (a + conj(a)); }
inline Expr im(const Expr& a) { return cplx(0.0, -0.5) * (a - conj(a)); }

namespace detail {
inline Expr step_d(const NodeP& arg, int k) {
    if (k > 3) {
        // fourth and higher derivatives are never needed analytically
        auto base = Expr(mk({Op::StepD, {}, 3, pi, arg}));
        auto ext = std::make_shared<ExternalFn>();
        ext->eval = [base](cplx z) { return base(z); };
        ext->name = "step_d4";
        return Expr::external(ext).diff(false);  // numeric
    }
    return Expr(mk({Op::StepD, {}, k, pi, arg}));
}
}  // namespace detail

inline Expr Expr::diff(bool bar) const {
    using namespace detail;
    const Node* n = n_.get();
    auto A = [&] { return Expr(n->a); };
    auto B = [&] { return Expr(n->b); };
    switch (n->op) {
        case Op::Const: return constant(0.0);
        case Op::Var: return constant(bar ? 0.0 : 1.0);
        case Op::Add: return A().diff(bar) + B().diff(bar);
        case Op::Sub: return A().diff(bar) - B().diff(bar);
        case Op::Mul: return A().diff(bar) * B() + A() * B().diff(bar);
        case Op::LazyMul:
            // gate factors (bumps and their derivatives) vanish identically
            // outside their support, so each term stays lazily guarded
            return lazy_mul(A().diff(bar), B()) + lazy_mul(A(), B().diff(bar));
        case Op::Div:
            return (A().diff(bar) * B() - A() * B().diff(bar)) / (B() * B());
        case Op::Neg: return -A().diff(bar);
        case Op::Powi:
            return double(n->ipar) * powi(A(), n->ipar - 1) * A().diff(bar);
        case Op::Log: return A().diff(bar) / A();
        case Op::Exp: return Expr(n_) * A().diff(bar);
        case Op::Conj: return conj(A().diff(!bar));
        case Op::Abs2:
            // d(f conj f) = df*conj(f) + f*conj(d_bar f)  (and mirrored)
            return A().diff(bar) * conj(A()) + A() * conj(A().diff(!bar));
        case Op::Sqrt: return A().diff(bar) / (2.0 * Expr(n_));
        case Op::Step: return lazy_mul(step_d(n->a, 1), A().diff(bar));
        case Op::StepD: return lazy_mul(step_d(n->a, n->ipar + 1), A().diff(bar));
        case Op::External: {
            const auto& e = n->ext;
            std::shared_ptr<const ExternalFn> d = bar ? e->dzb : e->dz;
            if (d) return Expr::external(d);
            auto nd = std::make_shared<ExternalFn>();
            auto base = e;
            nd->eval = [base, bar](cplx z) { return external_diff(base.get(), z, bar); };
            nd->singular = e->singular;
            nd->name = e->name + (bar ? "_dzb" : "_dz");
            return Expr::external(nd);
        }
    }
    throw std::logic_error("bad node in diff");
}

inline Expr Expr::compose(const Expr& g) const {
    using namespace detail;
    const Node* n = n_.get();
    auto A = [&] { return Expr(n->a).compose(g); };
    auto B = [&] { return Expr(n->b).compose(g); };
    switch (n->op) {
        case Op::Const: return Expr(n_);
        case Op::Var: return g;
        case Op::Add: return A() + B();
        case Op::Sub: return A() - B();
        case Op::Mul: return A() * B();
        case Op::LazyMul: return lazy_mul(A(), B());
        case Op::Div: return A() / B();
        case Op::Neg: return -A();
        case Op::Powi: return powi(A(), n->ipar);
        case Op::Log: return log(A(), n->branch);
        case Op::Exp: return exp(A());
        case Op::Conj: return conj(A());
        case Op::Abs2: return abs2(A());
        case Op::Sqrt: return sqrt(A());
        case Op::Step: return smooth_step(A());
        case Op::StepD: return Expr(mk({Op::StepD, {}, n->ipar, pi, A().node()}));
        case Op::External: {
            // opaque composed with g: keep evaluation, derivatives go numeric
            auto e = n->ext;
            auto nd = std::make_shared<ExternalFn>();
            nd->eval = [e, g](cplx z) { return e->eval(g(z)); };
            nd->name = e->name + "_composed";
            return Expr::external(nd);
        }
    }
    throw std::logic_error("bad node in compose");
}

// ---------------------------------------------------------------------------
// Parser for the config DSL.
//
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := unary ('^' int)?
//   unary  := '-' unary | primary
//   primary:= number | 'z' | 'i' | 'pi' | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// functions: log, exp, conj, abs2, sqrt, re, im, step
// ---------------------------------------------------------------------------

namespace detail {

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    Expr run() {
        Expr e = expr();
        skip();
        if (pos_ != s_.size())
            fail("unexpected trailing input");
        return e;
    }

private:
    const std::string& s_;
    size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) {
        throw config_error("expression parse error at position " +
                           std::to_string(pos_) + ": " + msg + " in \"" + s_ + "\"");
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace((unsigned char)s_[pos_])) ++pos_;
    }
    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) { ++pos_; return true; }
        return false;
    }
    char peek() {
        skip();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }

    Expr expr() {
        Expr e = term();
        for (;;) {
            if (eat('+')) e = e + term();
            else if (eat('-')) e = e - term();
            else return e;
        }
    }
    Expr term() {
        Expr e = factor();
        for (;;) {
            if (eat('*')) e = e * factor();
            else if (eat('/')) e = e / factor();
            else return e;
        }
    }
    Expr factor() {
        Expr e = unary();
        if (eat('^')) {
            skip();
            bool neg = eat('-');
            size_t start = pos_;
            while (pos_ < s_.size() && std::isdigit((unsigned char)s_[pos_])) ++pos_;
            if (start == pos_) fail("integer exponent expected");
            int n = std::stoi(s_.substr(start, pos_ - start));
            e = powi(e, neg ? -n : n);
        }
        return e;
    }
    Expr unary() {
        if (eat('-')) return -unary();
        return primary();
    }
    Expr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        char c = s_[pos_];
        if (std::isdigit((unsigned char)c) || c == '.') {
            size_t used = 0;
            double v = std::stod(s_.substr(pos_), &used);
            pos_ += used;
            return Expr::constant(v);
        }
        if (c == '(') {
            ++pos_;
            Expr e = expr();
            if (!eat(')')) fail("')' expected");
            return e;
        }
        if (std::isalpha((unsigned char)c) || c == '_') {
            size_t start = pos_;
            while (pos_ < s_.size() &&
                   (std::isalnum((unsigned char)s_[pos_]) || s_[pos_] == '_'))
                ++pos_;
            std::string name = s_.substr(start, pos_ - start);
            if (name == "z") return Expr::var();
            if (name == "i") return Expr::constant(iu);
            if (name == "pi") return Expr::constant(pi);
            if (peek() != '(') fail("unknown identifier '" + name + "'");
            eat('(');
            std::vector<Expr> args;
            if (peek() != ')') {
                args.push_back(expr());
                while (eat(',')) args.push_back(expr());
            }
            if (!eat(')')) fail("')' expected after arguments");
            return apply(name, args);
        }
        fail(std::string("unexpected character '") + c + "'");
    }
    Expr apply(const std::string& name, const std::vector<Expr>& a) {
        auto one = [&]() -> const Expr& {
            if (a.size() != 1) fail(name + " takes one argument");
            return a[0];
        };
        if (name == "log") {
            if (a.size() == 2) {
                double cut = a[1](cplx(0.0)).real();
                return deligne::log(a[0], cut);
            }
            return deligne::log(one());
        }
        if (name == "exp") return deligne::exp(one());
        if (name == "conj") return deligne::conj(one());
        if (name == "abs2") return deligne::abs2(one());
        if (name == "sqrt") return deligne::sqrt(one());
        if (name == "re") return deligne::re(one());
        if (name == "im") return deligne::im(one());
        if (name == "step") return deligne::smooth_step(one());
        fail("unknown function '" + name + "'");
    }
};

}  // namespace detail

inline Expr Expr::parse(const std::string& src) { return detail::Parser(src).run(); }

// radial bump: 1 for |z-c| <= r1, 0 for |z-c| >= r2, smooth in between
inline Expr radial_bump(cplx center, double r1, double r2) {
    Expr r = sqrt(abs2(Expr::var() - Expr::constant(center)));
    return Expr::constant(1.0) -
           smooth_step((r - Expr::constant(r1)) * Expr::constant(1.0 / (r2 - r1)));
}

// deterministic splitmix64-based uniforms, platform independent
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next_u64() {
        std::uint64_t x = (state_ += 0x9E3779B97F4A7C15ull);
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }
    double uniform() {  // [0,1)
        return double(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    cplx disk(double radius) {
        for (;;) {
            double x = uniform(-1.0, 1.0), y = uniform(-1.0, 1.0);
            if (x * x + y * y <= 1.0) return cplx(radius * x, radius * y);
        }
    }
    int integer(int lo, int hi) {  // inclusive
        return lo + int(next_u64() % std::uint64_t(hi - lo + 1));
    }
private:
    std::uint64_t state_;
};

}  // namespace deligne
