#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "klmc/error.hpp"
#include "klmc/integrators.hpp"
#include "klmc/optimize.hpp"
#include "klmc/potentials.hpp"
#include "klmc/quadrature.hpp"

namespace klmc {

/**
 * @brief Tabulated concave profile f = int_0^r phi psi.
 *
 * phi(s) = exp(-a (s ^ R1)^2) with a = 64 alpha gamma^2. Values on [0, R1]
 * are cubic Hermite interpolants through Chebyshev-spaced nodes with exact
 * slopes; beyond R1 the profile is affine. Internally the psi integral is
 * kept in the scaled form e^{-a R1^2} int_0^r e^{a x^2} Phi(x) dx.
 */
class ConcaveProfile {
public:
    ConcaveProfile() = default;

    static ConcaveProfile identity() { return ConcaveProfile(); }

    ConcaveProfile(double a, double R1, std::size_t n_nodes, double rel_tol) : a_(a), R1_(R1) {
        if (!(a > 0.0) || !(R1 > 0.0)) throw ParameterError("profile needs a > 0 and R1 > 0");
        if (n_nodes < 4) throw ParameterError("profile needs at least 4 nodes");
        is_identity_ = false;
        const std::size_t n = n_nodes;
        nodes_.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            nodes_[i] = 0.5 * R1 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) /
                                                   static_cast<double>(n - 1)));
        nodes_.front() = 0.0;
        nodes_.back() = R1;
        const double aR2 = a * R1 * R1;
        auto g = [this](double x) { return std::exp(a_ * (x - R1_) * (x + R1_)) * big_phi(x); };
        auto gh = [this, &g](double x) { return g(x) * big_phi(x); };
        J_.assign(n, 0.0);
        std::vector<double> H(n, 0.0);
        slope_J_.assign(n, 0.0);
        for (std::size_t i = 1; i < n; ++i) {
            J_[i] = J_[i - 1] + adaptive_simpson(g, nodes_[i - 1], nodes_[i], rel_tol, 0.0, 2);
            H[i] = H[i - 1] + adaptive_simpson(gh, nodes_[i - 1], nodes_[i], rel_tol, 0.0, 2);
        }
        for (std::size_t i = 0; i < n; ++i) slope_J_[i] = g(nodes_[i]);
        JR1_ = J_.back();
        f_.resize(n);
        fp_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double P = big_phi(nodes_[i]);
            f_[i] = P - (P * J_[i] - H[i]) / (2.0 * JR1_);
            fp_[i] = small_phi(nodes_[i]) * (1.0 - 0.5 * J_[i] / JR1_);
        }
        f_[0] = 0.0;
        log_fprime_R1_ = -aR2 - std::log(2.0);
    }

    bool is_identity() const { return is_identity_; }
    double a() const { return a_; }
    double R1() const { return R1_; }
    const std::vector<double>& nodes() const { return nodes_; }

    /// phi(s) = exp(-a (s ^ R1)^2).
    double small_phi(double s) const {
        if (is_identity_) return 1.0;
        const double t = std::min(s, R1_);
        return std::exp(-a_ * t * t);
    }

    /// Phi(s) = int_0^s phi, closed form through erf.
    double big_phi(double s) const {
        if (is_identity_) return s;
        const double ra = std::sqrt(a_);
        const double t = std::min(s, R1_);
        double v = std::sqrt(std::numbers::pi) / (2.0 * ra) * std::erf(ra * t);
        if (s > R1_) v += small_phi(R1_) * (s - R1_);
        return v;
    }

    /// psi(s) in [1/2, 1].
    double psi(double s) const {
        if (is_identity_) return 1.0;
        return 1.0 - 0.5 * scaled_J(std::min(s, R1_)) / JR1_;
    }

    double operator()(double r) const { return eval(r); }

    double eval(double r) const {
        if (r < 0.0) throw ParameterError("f evaluated at negative r");
        if (is_identity_) return r;
        if (r >= R1_) return f_.back() + fp_.back() * (r - R1_);
        const std::size_t i = segment(r);
        return hermite(nodes_[i], nodes_[i + 1], f_[i], f_[i + 1], fp_[i], fp_[i + 1], r);
    }

    double prime(double r) const {
        if (r < 0.0) throw ParameterError("f' evaluated at negative r");
        if (is_identity_) return 1.0;
        return small_phi(r) * psi(r);
    }

    /// Right-hand side of f'' = -2 a r f' - (c_hat gamma / 2) Phi(r) on (0, R1).
    double ode_rhs(double r) const {
        if (is_identity_) return 0.0;
        return -2.0 * a_ * r * prime(r) - std::exp(-a_ * R1_ * R1_) * big_phi(r) / (2.0 * JR1_);
    }

    double fprime_R1() const { return is_identity_ ? 1.0 : 0.5 * small_phi(R1_); }
    double log_fprime_R1() const { return is_identity_ ? 0.0 : log_fprime_R1_; }

    /// log of int_0^R1 Phi / phi.
    double log_J_R1() const { return a_ * R1_ * R1_ + std::log(JR1_); }

private:
    std::size_t segment(double r) const {
        auto it = std::upper_bound(nodes_.begin(), nodes_.end(), r);
        std::size_t i = static_cast<std::size_t>(it - nodes_.begin());
        i = std::clamp<std::size_t>(i, 1, nodes_.size() - 1);
        return i - 1;
    }

    double scaled_J(double r) const {
        if (r >= R1_) return JR1_;
        const std::size_t i = segment(r);
        return hermite(nodes_[i], nodes_[i + 1], J_[i], J_[i + 1], slope_J_[i], slope_J_[i + 1], r);
    }

    static double hermite(double x0, double x1, double y0, double y1, double m0, double m1,
                          double x) {
        const double hh = x1 - x0;
        const double t = (x - x0) / hh;
        const double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * hh * m0 + (-2 * t3 + 3 * t2) * y1 +
               (t3 - t2) * hh * m1;
    }

    bool is_identity_ = true;
    double a_ = 0.0;
    double R1_ = 0.0;
    double JR1_ = 1.0;
    double log_fprime_R1_ = 0.0;
    std::vector<double> nodes_, f_, fp_, J_, slope_J_;
};

/// Friction and step-size conditions, evaluated as pure predicates.
struct ValidityFlags {
    bool em_gamma = false;
    bool em_h = false;
    bool bu_gamma = false;
    bool bu_h = false;

    bool valid_for(Scheme s) const {
        return s == Scheme::EM ? (em_gamma && em_h) : (bu_gamma && bu_h);
    }

    std::vector<std::string> failures(Scheme s) const {
        std::vector<std::string> out;
        if (s == Scheme::EM) {
            if (!em_gamma) out.emplace_back("friction condition for EM");
            if (!em_h) out.emplace_back("step-size condition for EM");
        } else {
            if (!bu_gamma) out.emplace_back("friction condition for BU/UBU");
            if (!bu_h) out.emplace_back("step-size condition for BU/UBU");
        }
        return out;
    }
};

/// Complete derived-constant record for a potential, friction and step size.
struct MetricConstants {
    Scheme scheme = Scheme::BU;
    double gamma = 1.0;
    double h = 0.01;
    double kappa = 1.0;
    double L = 1.0;
    double L_K = 1.0;
    double L_G = 0.0;
    double R = 0.0;

    double tau = 0.0;
    double alpha = 0.0;
    double epsilon = 0.0;
    double script_E = 0.0;
    double script_R = 0.0;
    double D_K = 0.0;
    double R1 = 0.0;
    double c_hat = std::numeric_limits<double>::quiet_NaN();
    double log_c_hat = std::numeric_limits<double>::quiet_NaN();
    double fprime_R1 = 1.0;
    double log_fprime_R1 = 0.0;
    double rate_em = 0.0;
    double rate_bu = 0.0;
    std::array<double, 6> rate_em_terms{};
    std::array<double, 6> rate_bu_terms{};
    double C_ubu = 1.0;
    double M_equiv = 0.0;
    double N_equiv = 0.0;

    QuadraticSplit K_mode;
    bool degenerate = true;  ///< R = 0 path: rho = r_l
    bool conservative = false;
    std::array<double, 2> D_K_interval{0.0, 0.0};
    std::array<double, 2> R1_interval{0.0, 0.0};

    std::shared_ptr<const ConcaveProfile> f = std::make_shared<ConcaveProfile>();
    ValidityFlags validity;

    double rate() const { return scheme == Scheme::EM ? rate_em : rate_bu; }
};

// ---------------------------------------------------------------------------
// Distances on difference vectors z = x - x', w = v - v'.

inline double r_l_diff(std::span<const double> z, std::span<const double> w,
                       const MetricConstants& mc) {
    const double ig = 1.0 / mc.gamma;
    const double c = 1.0 - 2.0 * mc.tau;
    double mid = 0.0, vel = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double t = c * z[i] + ig * w[i];
        mid += t * t;
        vel += w[i] * w[i];
    }
    const double q = ig * ig * mc.K_mode.quadratic_form(z) + 0.5 * mid + 0.5 * ig * ig * vel;
    return std::sqrt(std::max(q, 0.0));
}

inline double r_s_diff(std::span<const double> z, std::span<const double> w,
                       const MetricConstants& mc) {
    const double ig = 1.0 / mc.gamma;
    double zz = 0.0, qq = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        zz += z[i] * z[i];
        const double q = z[i] + ig * w[i];
        qq += q * q;
    }
    return mc.alpha * std::sqrt(zz) + std::sqrt(qq);
}

/// All metric quantities of one difference vector.
struct DiffMetrics {
    double r_l = 0.0;
    double r_s = 0.0;
    double rho = 0.0;
    bool far = true;  ///< synchronous branch of the switching rule
};

inline DiffMetrics diff_metrics(std::span<const double> z, std::span<const double> w,
                                const MetricConstants& mc) {
    DiffMetrics m;
    m.r_l = r_l_diff(z, w, mc);
    m.r_s = r_s_diff(z, w, mc);
    m.far = mc.D_K + mc.epsilon * m.r_l <= m.r_s;
    if (mc.degenerate) {
        m.rho = m.r_l;
    } else {
        const double delta = m.r_s - mc.epsilon * m.r_l;
        m.rho = mc.f->eval(std::max(0.0, std::min(delta, mc.D_K) + mc.epsilon * m.r_l));
    }
    return m;
}

inline std::pair<std::vector<double>, std::vector<double>> differences(const PhasePoint& a,
                                                                       const PhasePoint& b) {
    if (a.x.size() != b.x.size() || a.v.size() != b.v.size() || a.x.size() != a.v.size())
        throw ParameterError("phase points differ in dimension");
    std::vector<double> z(a.x.size()), w(a.v.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = a.x[i] - b.x[i];
        w[i] = a.v[i] - b.v[i];
    }
    return {z, w};
}

inline double r_l(const PhasePoint& a, const PhasePoint& b, const MetricConstants& mc) {
    auto [z, w] = differences(a, b);
    return r_l_diff(z, w, mc);
}

inline double r_s(const PhasePoint& a, const PhasePoint& b, const MetricConstants& mc) {
    auto [z, w] = differences(a, b);
    return r_s_diff(z, w, mc);
}

inline double rho(const PhasePoint& a, const PhasePoint& b, const MetricConstants& mc) {
    auto [z, w] = differences(a, b);
    return diff_metrics(z, w, mc).rho;
}

inline double f_eval(double r, const MetricConstants& mc) { return mc.f->eval(r); }
inline double f_prime(double r, const MetricConstants& mc) { return mc.f->prime(r); }

// ---------------------------------------------------------------------------
// Reduced-coordinate optimisation for D_K and R1 with K = kappa I.

/**
 * @brief Quantities along a unit direction in reduced coordinates.
 *
 * s1 = |z|, s3 = |w / gamma|, s2 = |z + w / gamma|, parametrised by
 * s1 = cos(theta), s3 = sin(theta), s2 = |s1 - s3| + t (s1 + s3 - |s1 - s3|).
 */
struct ReducedPoint {
    double s1, s2, s3;

    static ReducedPoint from_angles(double theta, double t) {
        theta = std::clamp(theta, 0.0, std::numbers::pi / 2);
        t = std::clamp(t, 0.0, 1.0);
        const double s1 = std::cos(theta), s3 = std::sin(theta);
        const double lo = std::abs(s1 - s3), hi = s1 + s3;
        return {s1, lo + t * (hi - lo), s3};
    }

    double r_l(double kq, double gamma, double tau) const {
        const double c = 1.0 - 2.0 * tau;
        const double cross = 0.5 * (s2 * s2 - s1 * s1 - s3 * s3);
        const double mid = c * c * s1 * s1 + 2.0 * c * cross + s3 * s3;
        return std::sqrt(std::max(0.0, kq / (gamma * gamma) * s1 * s1 + 0.5 * mid + 0.5 * s3 * s3));
    }
    double r_s(double alpha) const { return alpha * s1 + s2; }
    double k_form(double kappa, double gamma) const {
        return kappa / (gamma * gamma) * s1 * s1 + 0.5 * s2 * s2 + 0.5 * s3 * s3;
    }
};

/// Maximise a function of (theta, t) by a grid scan then Nelder-Mead polish.
template <class F>
double maximize_over_directions(const F& f, std::size_t grid) {
    const double half_pi = std::numbers::pi / 2;
    struct Cand { double v, th, t; };
    std::vector<Cand> best;
    for (std::size_t i = 0; i <= grid; ++i) {
        const double th = half_pi * static_cast<double>(i) / static_cast<double>(grid);
        for (std::size_t j = 0; j <= grid; ++j) {
            const double t = static_cast<double>(j) / static_cast<double>(grid);
            best.push_back({f(th, t), th, t});
        }
    }
    const std::size_t keep = std::min<std::size_t>(5, best.size());
    std::partial_sort(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(keep), best.end(),
                      [](const Cand& a, const Cand& b) { return a.v > b.v; });
    double out = best.front().v;
    const double step = half_pi / static_cast<double>(grid);
    for (std::size_t k = 0; k < keep; ++k) {
        auto neg = [&](const std::array<double, 2>& p) { return -f(p[0], p[1]); };
        const auto r = nelder_mead_2d(neg, {best[k].th, best[k].t}, step);
        out = std::max(out, -r.value);
    }
    return out;
}

struct ReducedSolution {
    double D_K = 0.0;
    double R1 = 0.0;
    double max_delta_ratio = 0.0;  ///< max of Delta / sqrt(E) over directions
    double max_rl_over_rs = 0.0;   ///< max of r_l / r_s over directions
};

/**
 * @brief D_K = sqrt(script_R) max Delta / sqrt(E), R1 = D_K / (1 - epsilon m).
 *
 * `kappa_rl` is the coefficient of |z|^2 inside r_l used for the D_K search
 * and `kappa_m` the one used for m = max r_l / r_s; both equal kappa for a
 * scalar split.
 */
inline ReducedSolution solve_DK_R1(double kappa, double gamma, double alpha, double epsilon,
                                   double tau, double script_R, std::size_t grid = 200,
                                   double kappa_rl = -1.0, double kappa_m = -1.0) {
    if (kappa_rl < 0.0) kappa_rl = kappa;
    if (kappa_m < 0.0) kappa_m = kappa;
    ReducedSolution s;
    if (!(script_R > 0.0)) return s;
    s.max_delta_ratio = maximize_over_directions(
        [&](double th, double t) {
            const auto p = ReducedPoint::from_angles(th, t);
            return (p.r_s(alpha) - epsilon * p.r_l(kappa_rl, gamma, tau)) /
                   std::sqrt(p.k_form(kappa, gamma));
        },
        grid);
    s.max_rl_over_rs = maximize_over_directions(
        [&](double th, double t) {
            const auto p = ReducedPoint::from_angles(th, t);
            return p.r_l(kappa_m, gamma, tau) / p.r_s(alpha);
        },
        grid);
    s.D_K = std::sqrt(script_R) * s.max_delta_ratio;
    s.R1 = s.D_K / (1.0 - epsilon * s.max_rl_over_rs);
    return s;
}

// ---------------------------------------------------------------------------
// Validity predicates.

inline bool em_gamma_condition(const RegularityConstants& c, double gamma) {
    return gamma >= 4.0 * c.L_G / std::sqrt(c.kappa);
}

inline bool bu_gamma_condition(const RegularityConstants& c, double gamma) {
    return gamma >= std::sqrt(13.0 * c.L_G * c.L_G / c.kappa);
}

namespace detail {
inline bool h_condition(const RegularityConstants& c, double gamma, double h, double R1,
                        double div_a, double div_b) {
    const double L = c.L, ig2 = 1.0 / (gamma * gamma);
    double bound = std::min({1.0 / (256.0 * 75.0 * (2.0 * L * ig2 + 1.0)), L * ig2 / div_a,
                             L / (div_b * c.L_K)});
    if (R1 > 0.0) bound = std::min(bound, 1.0 / (8.0 * L * R1 * R1));
    return L / gamma * h <= bound;
}
}  // namespace detail

inline bool em_h_condition(const RegularityConstants& c, double gamma, double h, double R1) {
    return detail::h_condition(c, gamma, h, R1, 8.0, 32.0);
}

inline bool bu_h_condition(const RegularityConstants& c, double gamma, double h, double R1) {
    return detail::h_condition(c, gamma, h, R1, 15.0, 55.0);
}

/// Hypothesis clauses of the one-step r_l contraction statements that fail.
inline std::vector<std::string> onestep_hypothesis_failures(Scheme s, const RegularityConstants& c,
                                                            double gamma, double h) {
    std::vector<std::string> out;
    const double ig2 = 1.0 / (gamma * gamma);
    const bool convex = c.R == 0.0 || c.L_G == 0.0;
    if (s == Scheme::EM) {
        if (!(h < std::min(gamma / (32.0 * c.L_K), 1.0 / (8.0 * gamma))))
            out.emplace_back("h < min(gamma/(32 L_K), 1/(8 gamma))");
        if (convex) {
            if (!(4.75 * c.L_G * ig2 <= 1.0)) out.emplace_back("(4 + 3/4) L_G gamma^-2 <= 1");
        } else if (!(c.L_G * ig2 <= c.kappa / (16.0 * c.L_G))) {
            out.emplace_back("L_G gamma^-2 <= kappa/(16 L_G)");
        }
    } else if (s == Scheme::BU) {
        if (!(h < std::min(gamma / (55.0 * c.L_K), 1.0 / (15.0 * gamma))))
            out.emplace_back("h < min(gamma/(55 L_K), 1/(15 gamma))");
        if (convex) {
            if (!(c.L_G * ig2 <= 1.0 / 6.0)) out.emplace_back("L_G gamma^-2 <= 1/6");
        } else if (!(c.L_G * ig2 <= c.kappa / (13.0 * c.L_G))) {
            out.emplace_back("L_G gamma^-2 <= kappa/(13 L_G)");
        }
    } else {
        out.emplace_back("one-step statement exists only for EM and BU");
    }
    return out;
}

/// tau used by the one-step statement for the given scheme.
inline double onestep_tau(Scheme s, double kappa, double gamma) {
    const double ig2 = 1.0 / (gamma * gamma);
    return s == Scheme::EM ? std::min(kappa * ig2 / 4.0, 1.0 / 8.0)
                           : std::min(kappa * ig2 / 6.0, 1.0 / 16.0);
}

/// Guaranteed bound on the r_l^2 ratio after one synchronous step.
inline double onestep_ratio_bound(Scheme s, double kappa, double gamma, double h) {
    const double tau = onestep_tau(s, kappa, gamma);
    return s == Scheme::EM ? 1.0 - tau * gamma * h : 1.0 - 0.875 * tau * gamma * h;
}

// ---------------------------------------------------------------------------

struct MetricOptions {
    std::size_t table_nodes = 2048;
    std::size_t direction_grid = 200;
    double quad_rel_tol = 1e-12;
};

/**
 * @brief Build every derived constant for (pot, gamma, h, scheme).
 *
 * Validity conditions are reported as flags; nothing is refused here.
 */
inline MetricConstants compute_constants(const PotentialModel& pot, double gamma, double h,
                                         Scheme scheme, const MetricOptions& opt = {}) {
    if (!(gamma > 0.0)) throw ParameterError("friction gamma must be positive");
    if (!(h > 0.0)) throw ParameterError("step size h must be positive");
    const RegularityConstants& c = pot.constants;
    c.validate(pot.dim);
    MetricConstants mc;
    mc.scheme = scheme;
    mc.gamma = gamma;
    mc.h = h;
    mc.kappa = c.kappa;
    mc.L = c.L;
    mc.L_K = c.L_K;
    mc.L_G = c.L_G;
    mc.R = c.R;
    mc.K_mode = pot.split;

    const double ig = 1.0 / gamma, ig2 = ig * ig;
    mc.tau = std::min(1.0 / 8.0, ig2 * c.kappa / 4.0);
    mc.alpha = 2.0 * c.L * ig2;
    mc.epsilon = 0.5 * std::min({1.0, 2.0 * mc.alpha / (3.0 * std::sqrt(c.L_K) * ig), mc.alpha});
    mc.script_E = std::min(std::sqrt(c.kappa) * ig / (std::sqrt(8.0) * mc.alpha), 0.5);
    mc.script_R = c.L_G * c.R * c.R / (mc.tau * gamma * gamma);

    const double lmax = mc.K_mode.mode == QuadraticSplit::Mode::scalar ? c.kappa : c.L_K;
    const double gh = gamma * h;
    if (mc.script_R > 0.0) {
        mc.degenerate = false;
        const ReducedSolution hi =
            solve_DK_R1(c.kappa, gamma, mc.alpha, mc.epsilon, mc.tau, mc.script_R,
                        opt.direction_grid, c.kappa, lmax);
        mc.D_K = hi.D_K;
        mc.R1 = hi.R1;
        mc.D_K_interval = {hi.D_K, hi.D_K};
        mc.R1_interval = {hi.R1, hi.R1};
        if (mc.K_mode.mode == QuadraticSplit::Mode::matrix) {
            const ReducedSolution lo =
                solve_DK_R1(c.kappa, gamma, mc.alpha, mc.epsilon, mc.tau, mc.script_R,
                            opt.direction_grid, lmax, c.kappa);
            mc.conservative = true;
            mc.D_K_interval = {lo.D_K, hi.D_K};
            mc.R1_interval = {lo.R1, hi.R1};
        }
        const double a = 64.0 * mc.alpha * gamma * gamma;
        auto prof = std::make_shared<ConcaveProfile>(a, mc.R1, opt.table_nodes, opt.quad_rel_tol);
        mc.log_fprime_R1 = prof->log_fprime_R1();
        mc.fprime_R1 = std::exp(mc.log_fprime_R1);
        mc.log_c_hat = -std::log(gamma) - prof->log_J_R1();
        mc.c_hat = std::exp(mc.log_c_hat);
        mc.f = prof;

        const double fp = mc.fprime_R1, eps = mc.epsilon, E = mc.script_E, al = mc.alpha;
        const double ch = mc.c_hat, eta = std::exp(-gh);
        mc.rate_em_terms = {fp * eps * c.kappa * ig / 8.0 * E,
                            fp * eps * gamma / 16.0 * E,
                            fp * gamma / 8.0,
                            fp * gamma * al / 2.0,
                            9.0 * ch / 640.0,
                            ch / (32.0 * (4.0 * al + 1.0))};
        mc.rate_bu_terms = {fp * 7.0 * eps * c.kappa * ig / 96.0 * E,
                            fp * 7.0 * eps * gamma / 256.0 * E,
                            fp * eta * gamma / 16.0,
                            fp * eta * gamma * al / 4.0,
                            9.0 * ch / 640.0,
                            ch / (32.0 * (4.0 * al + 1.0))};
        mc.rate_em = *std::min_element(mc.rate_em_terms.begin(), mc.rate_em_terms.end());
        mc.rate_bu = *std::min_element(mc.rate_bu_terms.begin(), mc.rate_bu_terms.end());
        const double s1 = (1.0 + mc.alpha * gh / 2.0);
        mc.C_ubu = (1.0 + gh / 16.0) * std::max(s1 * s1, 1.0 + gh * std::max(1.0, c.L_K * ig2));
    } else {
        mc.degenerate = true;
        mc.f = std::make_shared<ConcaveProfile>();
        mc.rate_em = std::min(c.kappa / (8.0 * gamma * gamma), 1.0 / 16.0) * gamma;
        mc.rate_bu = std::min(c.kappa * ig / 24.0, gamma / 64.0);
        mc.rate_em_terms.fill(mc.rate_em);
        mc.rate_bu_terms.fill(mc.rate_bu);
        mc.C_ubu = 1.0 + 2.0 * gh * std::max(1.0, c.L_K * ig2);
    }
    const double inv_fp = std::exp(-mc.log_fprime_R1);
    mc.M_equiv = inv_fp * 2.0 * std::max(gamma * (1.0 + mc.alpha), 1.0) /
                 (mc.epsilon * std::min(std::sqrt(2.0 * c.kappa), 1.0));
    mc.N_equiv = inv_fp * gamma / (mc.epsilon * std::min(std::sqrt(c.kappa), std::sqrt(0.5)));

    if (mc.degenerate) {
        mc.validity.em_gamma = 4.75 * c.L_G * ig2 <= 1.0;
        mc.validity.em_h = h < std::min(gamma / (32.0 * c.L_K), 1.0 / (8.0 * gamma));
        mc.validity.bu_gamma = c.L_G * ig2 <= 1.0 / 6.0;
        mc.validity.bu_h = h < std::min(gamma / (55.0 * c.L_K), 1.0 / (15.0 * gamma));
    } else {
        mc.validity.em_gamma = em_gamma_condition(c, gamma);
        mc.validity.em_h = em_h_condition(c, gamma, h, mc.R1);
        mc.validity.bu_gamma = bu_gamma_condition(c, gamma);
        mc.validity.bu_h = bu_h_condition(c, gamma, h, mc.R1);
    }
    return mc;
}

}  // namespace klmc
