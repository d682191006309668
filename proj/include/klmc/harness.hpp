#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "klmc/coupling.hpp"
#include "klmc/error.hpp"
#include "klmc/integrators.hpp"
#include "klmc/meanfield.hpp"
#include "klmc/metric.hpp"
#include "klmc/parallel.hpp"
#include "klmc/potentials.hpp"
#include "klmc/rng.hpp"

namespace klmc {

// ---------------------------------------------------------------------------
// Gaussian Lyapunov oracle.

/// Symmetric 2x2 covariance of (x, v) for one coordinate.
struct Cov2 {
    double xx = 0.0;
    double xv = 0.0;
    double vv = 0.0;
};

struct Mat2 {
    double a11 = 1.0, a12 = 0.0, a21 = 0.0, a22 = 1.0;

    Mat2 operator*(const Mat2& o) const {
        return {a11 * o.a11 + a12 * o.a21, a11 * o.a12 + a12 * o.a22,
                a21 * o.a11 + a22 * o.a21, a21 * o.a12 + a22 * o.a22};
    }

    /// A S A^T.
    Cov2 sandwich(const Cov2& s) const {
        const double m11 = a11 * s.xx + a12 * s.xv, m12 = a11 * s.xv + a12 * s.vv;
        const double m21 = a21 * s.xx + a22 * s.xv, m22 = a21 * s.xv + a22 * s.vv;
        return {m11 * a11 + m12 * a12, m11 * a21 + m12 * a22, m21 * a21 + m22 * a22};
    }

    double spectral_radius() const {
        const double tr = a11 + a22, det = a11 * a22 - a12 * a21;
        const double disc = 0.25 * tr * tr - det;
        if (disc < 0.0) return std::sqrt(det);
        const double s = std::sqrt(disc);
        return std::max(std::abs(0.5 * tr + s), std::abs(0.5 * tr - s));
    }
};

inline Cov2 operator+(const Cov2& a, const Cov2& b) {
    return {a.xx + b.xx, a.xv + b.xv, a.vv + b.vv};
}

/// Per-coordinate affine step (x, v) -> A (x, v) + noise with covariance Q.
struct AffineStep {
    Mat2 A;
    Cov2 Q;
};

inline AffineStep u_affine(double h, double gamma) {
    const double ome = -std::expm1(-gamma * h), eta = 1.0 - ome;
    const double ome2 = -std::expm1(-2.0 * gamma * h);
    const double var1 = h, var2 = ome2 / (2.0 * gamma), cov12 = ome / gamma;
    AffineStep s;
    s.A = {1.0, ome / gamma, 0.0, eta};
    s.Q.xx = 2.0 / gamma * (var1 - 2.0 * cov12 + var2);
    s.Q.xv = 2.0 * (cov12 - var2);
    s.Q.vv = 2.0 * gamma * var2;
    return s;
}

/// Exact per-coordinate affine form of one step on U = kappa |x|^2 / 2.
inline AffineStep scheme_affine(Scheme scheme, double kappa, double gamma, double h) {
    const Mat2 B{1.0, 0.0, -h * kappa, 1.0};
    switch (scheme) {
        case Scheme::EM: {
            AffineStep s;
            s.A = {1.0, h, -h * kappa, 1.0 - gamma * h};
            s.Q = {0.0, 0.0, 2.0 * gamma * h};
            return s;
        }
        case Scheme::BU: {
            const AffineStep u = u_affine(h, gamma);
            return {u.A * B, u.Q};
        }
        case Scheme::UBU: {
            const AffineStep u = u_affine(0.5 * h, gamma);
            const Mat2 UB = u.A * B;
            return {UB * u.A, UB.sandwich(u.Q) + u.Q};
        }
    }
    throw ParameterError("unknown scheme");
}

/**
 * @brief Stationary covariance of a scheme on a 1-D Gaussian target.
 *
 * Solves S = A S A^T + Q by the doubling iteration.
 */
inline Cov2 gaussian_lyapunov_oracle(Scheme scheme, double kappa, double gamma, double h) {
    if (!(kappa > 0.0) || !(gamma > 0.0) || !(h > 0.0))
        throw ParameterError("oracle needs kappa, gamma, h > 0");
    const AffineStep st = scheme_affine(scheme, kappa, gamma, h);
    const double sr = st.A.spectral_radius();
    if (!(sr < 1.0))
        throw StabilityError(std::string(scheme_name(scheme)) +
                             " step is not contractive: spectral radius " + std::to_string(sr) +
                             " >= 1 (reduce h)");
    Mat2 A = st.A;
    Cov2 S = st.Q;
    for (int it = 0; it < 200; ++it) {
        const Cov2 inc = A.sandwich(S);
        S = S + inc;
        A = A * A;
        const double scale = std::abs(S.xx) + std::abs(S.vv);
        if (std::abs(inc.xx) + std::abs(inc.xv) + std::abs(inc.vv) <= 1e-16 * scale) break;
    }
    return S;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double r2 = 1.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw ParameterError("line fit needs at least two points");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        sse += r * r;
    }
    f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    f.slope_se = n > 2 ? std::sqrt(sse / static_cast<double>(n - 2) / sxx) : 0.0;
    return f;
}

struct BiasReport {
    Scheme scheme = Scheme::EM;
    double kappa = 1.0;
    double gamma = 1.0;
    std::size_t d = 1;
    std::vector<double> h;
    std::vector<double> bias;  ///< sqrt(d) |sqrt(S_xx(h)) - 1/sqrt(kappa)|
    double slope = 0.0;
    double slope_se = 0.0;
    std::string oracle = "gaussian-lyapunov";
};

/// Bias orders from the Lyapunov oracle; no sampling involved.
inline BiasReport estimate_bias_order(Scheme scheme, double kappa, double gamma,
                                      const std::vector<double>& h_list, std::size_t d = 1) {
    if (h_list.size() < 2) throw ParameterError("bias fit needs at least two step sizes");
    BiasReport r;
    r.scheme = scheme;
    r.kappa = kappa;
    r.gamma = gamma;
    r.d = d;
    std::vector<double> lx, ly;
    for (double h : h_list) {
        const Cov2 S = gaussian_lyapunov_oracle(scheme, kappa, gamma, h);
        const double b = std::sqrt(static_cast<double>(d)) *
                         std::abs(std::sqrt(S.xx) - 1.0 / std::sqrt(kappa));
        r.h.push_back(h);
        r.bias.push_back(b);
        lx.push_back(std::log(h));
        ly.push_back(std::log(b));
    }
    const LineFit f = fit_line(lx, ly);
    r.slope = f.slope;
    r.slope_se = f.slope_se;
    return r;
}

// ---------------------------------------------------------------------------
// One-step r_l contraction check.

struct OneStepReport {
    Scheme scheme = Scheme::EM;
    std::size_t samples = 0;
    std::size_t violations = 0;
    std::size_t rejected = 0;
    double worst_ratio = 0.0;
    double bound = 1.0;
    double tau = 0.0;
    double script_R = 0.0;
    bool passed() const { return violations == 0 && samples > 0; }
};

/**
 * @brief Check r_l^2(next) <= bound * r_l^2(current) under synchronous noise.
 *
 * States are drawn with positions and velocities N(0, s^2) for a scale s
 * log-uniform in [scale_lo, scale_hi]; pairs with r_l^2 < script_R are
 * rejected. r_l and script_R use the statement's own tau.
 */
inline OneStepReport verify_onestep_proposition(Scheme scheme, const PotentialModel& pot,
                                                double gamma, double h, std::size_t n_samples,
                                                std::uint64_t seed = 1, double scale_lo = 1e-2,
                                                double scale_hi = 10.0) {
    if (scheme == Scheme::UBU) throw ParameterError("one-step check covers EM and BU only");
    const auto fails = onestep_hypothesis_failures(scheme, pot.constants, gamma, h);
    if (!fails.empty()) throw HypothesisError(fails.front());
    MetricConstants mc;
    mc.gamma = gamma;
    mc.K_mode = pot.split;
    mc.tau = onestep_tau(scheme, pot.constants.kappa, gamma);
    const double script_R =
        pot.constants.L_G * pot.constants.R * pot.constants.R / (mc.tau * gamma * gamma);
    OneStepReport rep;
    rep.scheme = scheme;
    rep.tau = mc.tau;
    rep.script_R = script_R;
    rep.bound = onestep_ratio_bound(scheme, pot.constants.kappa, gamma, h);
    const SchemeConfig cfg{scheme, h, gamma};
    const StepCoefficients sc(cfg);
    const std::size_t d = pot.dim;
    NoiseDraw noise(d);
    std::vector<double> g(d), z(d), w(d);
    const double llo = std::log(scale_lo), lhi = std::log(scale_hi);
    std::uint64_t draw = 0;
    while (rep.samples < n_samples) {
        Rng rng(seed, draw, Tag::sample, 0);
        ++draw;
        if (draw > 1000 * n_samples + 1000) throw ParameterError("rejection sampling stalled");
        const double s = std::exp(llo + (lhi - llo) * rng.uniform());
        PhasePoint a{std::vector<double>(d), std::vector<double>(d)}, b = a;
        for (std::size_t i = 0; i < d; ++i) {
            a.x[i] = s * rng.normal();
            a.v[i] = s * rng.normal();
            b.x[i] = s * rng.normal();
            b.v[i] = s * rng.normal();
        }
        for (std::size_t i = 0; i < d; ++i) {
            z[i] = a.x[i] - b.x[i];
            w[i] = a.v[i] - b.v[i];
        }
        const double before = r_l_diff(z, w, mc);
        if (before * before < script_R || before == 0.0) {
            ++rep.rejected;
            continue;
        }
        rng.fill_normal(noise.xi1);
        rng.fill_normal(noise.xi2);
        step_inplace(a.x, a.v, pot, sc, noise, g);
        step_inplace(b.x, b.v, pot, sc, noise, g);
        for (std::size_t i = 0; i < d; ++i) {
            z[i] = a.x[i] - b.x[i];
            w[i] = a.v[i] - b.v[i];
        }
        const double after = r_l_diff(z, w, mc);
        const double ratio = (after * after) / (before * before);
        rep.worst_ratio = std::max(rep.worst_ratio, ratio);
        if (ratio > rep.bound * (1.0 + 1e-12)) ++rep.violations;
        ++rep.samples;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Replica ensembles of coupled pairs.

/// Initial pair: fixed states, or every coordinate N(0, scale^2) per replica.
struct InitSpec {
    bool random = false;
    double scale = 1.0;
    PhasePoint a;
    PhasePoint b;
};

inline CoupledState initial_pair(const InitSpec& init, std::size_t dim, std::uint64_t seed,
                                 std::uint64_t replica) {
    if (!init.random) {
        if (init.a.x.size() != dim || init.b.x.size() != dim || init.a.v.size() != dim ||
            init.b.v.size() != dim)
            throw ParameterError("initial states do not match the potential dimension");
        return {init.a, init.b};
    }
    Rng rng(seed, replica, Tag::init, 0);
    CoupledState cs{{std::vector<double>(dim), std::vector<double>(dim)},
                    {std::vector<double>(dim), std::vector<double>(dim)}};
    for (auto* vec : {&cs.a.x, &cs.a.v, &cs.b.x, &cs.b.v})
        for (double& e : *vec) e = init.scale * rng.normal();
    return cs;
}

/// Particle layout for mean-field runs: rho column is rho_N with per-particle constants.
struct ParticleLayout {
    std::size_t N = 0;
    std::size_t d = 0;
};

struct DecayConfig {
    const PotentialModel* pot = nullptr;
    SchemeConfig scheme;
    CouplingMode mode = CouplingMode::reflection;
    const MetricConstants* mc = nullptr;  ///< constants used for stepping and for rho
    InitSpec init;
    std::uint64_t replicas = 1000;
    std::uint64_t n_steps = 1000;
    std::uint64_t stride = 10;
    std::uint64_t seed = 1;
    double coalescence_threshold = 1e-12;
    std::size_t chunk = 64;
    double max_excluded_fraction = 0.01;
    std::optional<ParticleLayout> particles;
    unsigned workers = 0;
};

/// Aggregated curve over replicas; per-chunk sums are retained for batch statistics.
struct DecayCurve {
    std::vector<double> t;
    std::vector<double> mean_dist;
    std::vector<double> stderr_dist;
    std::vector<double> frac_coalesced;
    std::vector<double> mean_rho;
    std::vector<double> stderr_rho;
    std::vector<std::vector<double>> chunk_rho_sum;
    std::vector<std::uint64_t> chunk_count;
    std::uint64_t included = 0;
    std::uint64_t excluded = 0;
    std::uint64_t configured = 0;
};

/**
 * @brief Run the replica ensemble and aggregate distances per recorded step.
 *
 * A replica that blows up is excluded and counted; more than
 * max_excluded_fraction excluded replicas raises NumericError.
 */
inline DecayCurve estimate_decay_curve(const DecayConfig& cfg) {
    if (cfg.pot == nullptr) throw ParameterError("decay config has no potential");
    if (cfg.replicas == 0) throw ParameterError("replica count must be positive");
    if (cfg.stride == 0 || cfg.chunk == 0) throw ParameterError("stride and chunk must be positive");
    const PotentialModel& pot = *cfg.pot;
    const std::size_t n_rec = static_cast<std::size_t>(cfg.n_steps / cfg.stride) + 1;
    const std::size_t n_chunks = static_cast<std::size_t>((cfg.replicas + cfg.chunk - 1) / cfg.chunk);
    struct ChunkSums {
        std::vector<double> d, d2, rho, rho2, coal;
        std::uint64_t included = 0, excluded = 0;
    };
    std::vector<ChunkSums> sums(n_chunks);

    auto rho_of = [&](const PhasePoint& a, const PhasePoint& b) {
        if (cfg.mc == nullptr) return std::numeric_limits<double>::quiet_NaN();
        if (cfg.particles) return rho_N(a, b, *cfg.mc, cfg.particles->N, cfg.particles->d);
        auto [z, w] = differences(a, b);
        return diff_metrics(z, w, *cfg.mc).rho;
    };
    // Switching on a mean-field system uses the per-particle constants only for rho.
    const MetricConstants* step_mc = cfg.particles ? nullptr : cfg.mc;
    const CouplingMode mode =
        (cfg.particles && cfg.mode == CouplingMode::switching) ? CouplingMode::synchronous : cfg.mode;

    parallel_chunks(
        n_chunks,
        [&](std::size_t c) {
            ChunkSums& s = sums[c];
            s.d.assign(n_rec, 0.0);
            s.d2.assign(n_rec, 0.0);
            s.rho.assign(n_rec, 0.0);
            s.rho2.assign(n_rec, 0.0);
            s.coal.assign(n_rec, 0.0);
            std::vector<double> rd(n_rec), rr(n_rec), rc(n_rec);
            CoupledStepper st(pot, cfg.scheme, step_mc, mode);
            const std::uint64_t lo = c * cfg.chunk;
            const std::uint64_t hi = std::min<std::uint64_t>(cfg.replicas, lo + cfg.chunk);
            for (std::uint64_t rep = lo; rep < hi; ++rep) {
                CoupledState cs = initial_pair(cfg.init, pot.dim, cfg.seed, rep);
                PhasePoint& a = cs.a;
                PhasePoint& b = cs.b;
                bool coal = euclid_distance(a, b) < cfg.coalescence_threshold;
                if (coal) b = a;
                bool ok = true;
                rd[0] = euclid_distance(a, b);
                rr[0] = rho_of(a, b);
                rc[0] = coal ? 1.0 : 0.0;
                try {
                    for (std::uint64_t k = 0; k < cfg.n_steps; ++k) {
                        if (coal) {
                            // Distance stays zero once merged; fill the remaining records.
                            for (std::size_t i = static_cast<std::size_t>(k / cfg.stride) + 1; i < n_rec; ++i) {
                                rd[i] = 0.0;
                                rr[i] = 0.0;
                                rc[i] = 1.0;
                            }
                            break;
                        }
                        st.step(a, b, cfg.seed, rep, k, coal);
                        if (!a.finite() || !b.finite()) {
                            ok = false;
                            break;
                        }
                        if (!coal && euclid_distance(a, b) < cfg.coalescence_threshold) {
                            coal = true;
                            b = a;
                        }
                        if ((k + 1) % cfg.stride == 0) {
                            const std::size_t i = static_cast<std::size_t>((k + 1) / cfg.stride);
                            rd[i] = euclid_distance(a, b);
                            rr[i] = coal ? 0.0 : rho_of(a, b);
                            rc[i] = coal ? 1.0 : 0.0;
                        }
                    }
                } catch (const NumericError&) {
                    ok = false;
                }
                if (!ok) {
                    ++s.excluded;
                    continue;
                }
                ++s.included;
                for (std::size_t i = 0; i < n_rec; ++i) {
                    s.d[i] += rd[i];
                    s.d2[i] += rd[i] * rd[i];
                    s.rho[i] += rr[i];
                    s.rho2[i] += rr[i] * rr[i];
                    s.coal[i] += rc[i];
                }
            }
        },
        cfg.workers);

    DecayCurve out;
    out.configured = cfg.replicas;
    std::vector<double> d(n_rec, 0.0), d2(n_rec, 0.0), r(n_rec, 0.0), r2(n_rec, 0.0), co(n_rec, 0.0);
    for (const ChunkSums& s : sums) {
        out.included += s.included;
        out.excluded += s.excluded;
        out.chunk_rho_sum.push_back(s.rho);
        out.chunk_count.push_back(s.included);
        for (std::size_t i = 0; i < n_rec; ++i) {
            d[i] += s.d[i];
            d2[i] += s.d2[i];
            r[i] += s.rho[i];
            r2[i] += s.rho2[i];
            co[i] += s.coal[i];
        }
    }
    if (static_cast<double>(out.excluded) >
        cfg.max_excluded_fraction * static_cast<double>(cfg.replicas))
        throw NumericError("too many replicas blew up: " + std::to_string(out.excluded) + " of " +
                               std::to_string(cfg.replicas),
                           cfg.n_steps, {}, {});
    const double n = static_cast<double>(out.included);
    auto se = [n](double s, double s2) {
        if (n < 2) return 0.0;
        const double m = s / n;
        return std::sqrt(std::max(0.0, (s2 / n - m * m) * n / (n - 1)) / n);
    };
    for (std::size_t i = 0; i < n_rec; ++i) {
        out.t.push_back(static_cast<double>(i * cfg.stride) * cfg.scheme.h);
        out.mean_dist.push_back(n > 0 ? d[i] / n : 0.0);
        out.stderr_dist.push_back(se(d[i], d2[i]));
        out.frac_coalesced.push_back(n > 0 ? co[i] / n : 0.0);
        out.mean_rho.push_back(n > 0 ? r[i] / n : 0.0);
        out.stderr_rho.push_back(se(r[i], r2[i]));
    }
    return out;
}

struct RateFit {
    double rate = 0.0;
    double ci95 = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t batches = 0;
    bool all_coalesced = false;
    double coalescence_time = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {
inline std::optional<LineFit> fit_log_curve(const std::vector<double>& t,
                                            const std::vector<double>& y, double lo, double hi) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < lo || t[i] > hi) continue;
        if (!(y[i] > 0.0)) return std::nullopt;
        xs.push_back(t[i]);
        ys.push_back(std::log(y[i]));
    }
    if (xs.size() < 2) return std::nullopt;
    return fit_line(xs, ys);
}
}  // namespace detail

/**
 * @brief Fit E[rho_k] ~ exp(-rate t) on the window [lo_frac T, hi_frac T].
 *
 * The 95% interval comes from batch means: chunks are grouped into
 * `batches` contiguous groups, each group's curve is fitted, and
 * ci = 1.96 sd / sqrt(batches).
 */
inline RateFit fit_decay_rate(const DecayCurve& curve, double lo_frac = 0.3, double hi_frac = 1.0,
                              std::size_t batches = 20) {
    RateFit out;
    const double T = curve.t.back();
    const double lo = lo_frac * T, hi = hi_frac * T;
    const auto full = detail::fit_log_curve(curve.t, curve.mean_rho, lo, hi);
    if (!full) {
        out.all_coalesced = true;
        for (std::size_t i = 0; i < curve.t.size(); ++i)
            if (curve.frac_coalesced[i] >= 1.0) {
                out.coalescence_time = curve.t[i];
                break;
            }
        return out;
    }
    out.rate = -full->slope;
    out.intercept = full->intercept;
    out.r2 = full->r2;
    const std::size_t nc = curve.chunk_rho_sum.size();
    batches = std::min(batches, nc);
    std::vector<double> rates;
    for (std::size_t bidx = 0; bidx < batches; ++bidx) {
        const std::size_t c0 = bidx * nc / batches, c1 = (bidx + 1) * nc / batches;
        std::vector<double> m(curve.t.size(), 0.0);
        double cnt = 0.0;
        for (std::size_t c = c0; c < c1; ++c) {
            cnt += static_cast<double>(curve.chunk_count[c]);
            for (std::size_t i = 0; i < m.size(); ++i) m[i] += curve.chunk_rho_sum[c][i];
        }
        if (cnt == 0.0) continue;
        for (double& v : m) v /= cnt;
        if (auto f = detail::fit_log_curve(curve.t, m, lo, hi)) rates.push_back(-f->slope);
    }
    out.batches = rates.size();
    if (rates.size() >= 2) {
        const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
        double ss = 0.0;
        for (double r : rates) ss += (r - mean) * (r - mean);
        const double sd = std::sqrt(ss / static_cast<double>(rates.size() - 1));
        out.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(rates.size()));
    }
    return out;
}

struct ContractionReport {
    RateFit fit;
    double theoretical = 0.0;
    double transient_factor = 0.0;  ///< max_k E[rho_k] / (E[rho_0] (1 - c h)^k)
    double C = 1.0;
    bool rate_ok = false;
    bool transient_ok = false;
};

/// Compare the fitted rate with the theoretical lower bound c (pass if fit >= c - ci).
inline ContractionReport estimate_contraction_rate(const DecayConfig& cfg, double lo_frac = 0.3,
                                                   std::size_t batches = 20) {
    if (cfg.mc == nullptr) throw ParameterError("contraction estimate needs metric constants");
    const DecayCurve curve = estimate_decay_curve(cfg);
    ContractionReport rep;
    rep.fit = fit_decay_rate(curve, lo_frac, 1.0, batches);
    rep.theoretical = cfg.mc->rate();
    rep.C = cfg.scheme.scheme == Scheme::UBU ? cfg.mc->C_ubu : 1.0;
    rep.rate_ok = rep.fit.all_coalesced || rep.fit.rate >= rep.theoretical - rep.fit.ci95;
    const double rho0 = curve.mean_rho.front();
    const double per_step = 1.0 - rep.theoretical * cfg.scheme.h;
    for (std::size_t i = 0; i < curve.t.size(); ++i) {
        const double k = static_cast<double>(i * cfg.stride);
        const double env = rho0 * std::pow(per_step, k);
        if (env > 0.0) rep.transient_factor = std::max(rep.transient_factor, curve.mean_rho[i] / env);
    }
    rep.transient_ok = rep.transient_factor <= rep.C;
    return rep;
}

}  // namespace klmc
