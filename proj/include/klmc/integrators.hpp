#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "klmc/error.hpp"
#include "klmc/potentials.hpp"
#include "klmc/rng.hpp"

namespace klmc {

enum class Scheme { EM, BU, UBU };

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::EM: return "EM";
        case Scheme::BU: return "BU";
        case Scheme::UBU: return "UBU";
    }
    return "?";
}

inline Scheme parse_scheme(const std::string& s) {
    std::string u = s;
    std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
    if (u == "EM") return Scheme::EM;
    if (u == "BU") return Scheme::BU;
    if (u == "UBU") return Scheme::UBU;
    throw ParameterError("unknown scheme '" + s + "'");
}

struct PhasePoint {
    std::vector<double> x;
    std::vector<double> v;

    std::size_t dim() const { return x.size(); }
    bool finite() const {
        for (double a : x) if (!std::isfinite(a)) return false;
        for (double a : v) if (!std::isfinite(a)) return false;
        return true;
    }
    bool operator==(const PhasePoint&) const = default;
};

struct SchemeConfig {
    Scheme scheme = Scheme::BU;
    double h = 0.01;
    double gamma = 1.0;

    double eta() const { return std::exp(-gamma * h); }
    void validate() const {
        if (!(h > 0.0)) throw ParameterError("step size h must be positive");
        if (!(gamma > 0.0)) throw ParameterError("friction gamma must be positive");
    }
};

/// Four standard normal vectors; EM uses xi1, BU xi1..xi2, UBU all four.
struct NoiseDraw {
    std::vector<double> xi1, xi2, xi3, xi4;

    explicit NoiseDraw(std::size_t d = 0) : xi1(d, 0.0), xi2(d, 0.0), xi3(d, 0.0), xi4(d, 0.0) {}
};

/// Times the inner radicand of the OU noise law was clamped into [0, 1].
inline std::atomic<std::uint64_t>& ou_clamp_counter() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}

/// Scalar coefficients of the exact OU transition over one step of size h.
struct OuCoefficients {
    double h = 0.0;
    double gamma = 0.0;
    double eta = 1.0;
    double drift = 0.0;       // (1 - eta) / gamma
    double z1_scale = 0.0;    // sqrt(h)
    double z2_scale = 0.0;    // sqrt((1 - eta^2) / (2 gamma))
    double mix1 = 1.0;        // sqrt(r)
    double mix2 = 0.0;        // sqrt(1 - r)
    double x_noise = 0.0;     // sqrt(2 / gamma)
    double v_noise = 0.0;     // sqrt(2 gamma)
};

/**
 * @brief Coefficients for Z1 = sqrt(h) xi1 and
 * Z2 = sqrt((1 - eta^2)/(2 gamma)) (sqrt(r) xi1 + sqrt(1 - r) xi2),
 * r = (1 - eta)/(1 + eta) * 2/(gamma h) = tanh(gamma h / 2) / (gamma h / 2).
 */
inline OuCoefficients ou_coefficients(double h, double gamma) {
    if (!(h > 0.0)) throw ParameterError("step size h must be positive");
    if (!(gamma > 0.0)) throw ParameterError("friction gamma must be positive");
    OuCoefficients c;
    c.h = h;
    c.gamma = gamma;
    const double gh = gamma * h;
    const double one_minus_eta = -std::expm1(-gh);
    c.eta = 1.0 - one_minus_eta;
    c.drift = one_minus_eta / gamma;
    c.z1_scale = std::sqrt(h);
    c.z2_scale = std::sqrt(-std::expm1(-2.0 * gh) / (2.0 * gamma));
    const double y = 0.5 * gh;
    double r, one_minus_r;
    if (y < 1e-3) {
        const double y2 = y * y;
        one_minus_r = y2 * (1.0 / 3.0 - y2 * (2.0 / 15.0 - y2 * 17.0 / 315.0));
        r = 1.0 - one_minus_r;
    } else {
        r = std::tanh(y) / y;
        one_minus_r = 1.0 - r;
    }
    if (r > 1.0 || one_minus_r < 0.0) {
        ou_clamp_counter().fetch_add(1, std::memory_order_relaxed);
        r = 1.0;
        one_minus_r = 0.0;
    }
    c.mix1 = std::sqrt(r);
    c.mix2 = std::sqrt(one_minus_r);
    c.x_noise = std::sqrt(2.0 / gamma);
    c.v_noise = std::sqrt(2.0 * gamma);
    return c;
}

inline void sample_ou_noise(const OuCoefficients& c, std::span<const double> xi1,
                            std::span<const double> xi2, std::span<double> z1,
                            std::span<double> z2) {
    for (std::size_t i = 0; i < xi1.size(); ++i) {
        z1[i] = c.z1_scale * xi1[i];
        z2[i] = c.z2_scale * (c.mix1 * xi1[i] + c.mix2 * xi2[i]);
    }
}

inline std::pair<std::vector<double>, std::vector<double>> sample_ou_noise(
    double h, double gamma, std::span<const double> xi1, std::span<const double> xi2) {
    if (xi1.size() != xi2.size()) throw ParameterError("noise vectors differ in length");
    const OuCoefficients c = ou_coefficients(h, gamma);
    std::vector<double> z1(xi1.size()), z2(xi1.size());
    sample_ou_noise(c, xi1, xi2, z1, z2);
    return {z1, z2};
}

/// In-place U map.
inline void u_map_inplace(std::span<double> x, std::span<double> v, const OuCoefficients& c,
                          std::span<const double> xi1, std::span<const double> xi2) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double z1 = c.z1_scale * xi1[i];
        const double z2 = c.z2_scale * (c.mix1 * xi1[i] + c.mix2 * xi2[i]);
        x[i] += c.drift * v[i] + c.x_noise * (z1 - z2);
        v[i] = c.eta * v[i] + c.v_noise * z2;
    }
}

inline void check_gradient(std::span<const double> g, std::span<const double> x,
                           std::span<const double> v, std::uint64_t step) {
    for (double gi : g)
        if (!std::isfinite(gi))
            throw NumericError("non-finite gradient", step, {x.begin(), x.end()},
                               {v.begin(), v.end()});
}

/// In-place B map; `grad` is scratch of size d.
inline void b_map_inplace(std::span<double> x, std::span<double> v, const PotentialModel& pot,
                          double h, std::span<double> grad, std::uint64_t step = 0) {
    pot.gradient(x, grad);
    check_gradient(grad, x, v, step);
    for (std::size_t i = 0; i < x.size(); ++i) v[i] -= h * grad[i];
}

/// In-place EM step with a single normal vector xi.
inline void em_step_inplace(std::span<double> x, std::span<double> v, const PotentialModel& pot,
                            const SchemeConfig& cfg, std::span<const double> xi,
                            std::span<double> grad, std::uint64_t step = 0) {
    pot.gradient(x, grad);
    check_gradient(grad, x, v, step);
    const double noise = std::sqrt(2.0 * cfg.gamma * cfg.h);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double vi = v[i];
        x[i] += cfg.h * vi;
        v[i] = vi - cfg.h * grad[i] - cfg.h * cfg.gamma * vi + noise * xi[i];
    }
}

/// Precomputed per-scheme coefficients, reused across steps.
struct StepCoefficients {
    SchemeConfig cfg;
    OuCoefficients full;
    OuCoefficients half;

    explicit StepCoefficients(const SchemeConfig& c) : cfg(c) {
        cfg.validate();
        full = ou_coefficients(c.h, c.gamma);
        half = ou_coefficients(0.5 * c.h, c.gamma);
    }
};

/// Advance one step of the configured scheme in place.
inline void step_inplace(std::span<double> x, std::span<double> v, const PotentialModel& pot,
                         const StepCoefficients& sc, const NoiseDraw& n, std::span<double> grad,
                         std::uint64_t step = 0) {
    switch (sc.cfg.scheme) {
        case Scheme::EM:
            em_step_inplace(x, v, pot, sc.cfg, n.xi1, grad, step);
            break;
        case Scheme::BU:
            b_map_inplace(x, v, pot, sc.cfg.h, grad, step);
            u_map_inplace(x, v, sc.full, n.xi1, n.xi2);
            break;
        case Scheme::UBU:
            u_map_inplace(x, v, sc.half, n.xi1, n.xi2);
            b_map_inplace(x, v, pot, sc.cfg.h, grad, step);
            u_map_inplace(x, v, sc.half, n.xi3, n.xi4);
            break;
    }
}

/// Number of standard normal vectors a scheme consumes per step.
inline int normals_per_step(Scheme s) {
    switch (s) {
        case Scheme::EM: return 1;
        case Scheme::BU: return 2;
        case Scheme::UBU: return 4;
    }
    return 0;
}

/// Fill the draws a scheme needs from the (seed, replica, step) noise stream.
inline void draw_noise(NoiseDraw& n, Scheme s, std::uint64_t seed, std::uint64_t replica,
                       std::uint64_t step) {
    Rng rng(seed, replica, Tag::noise, step);
    const int k = normals_per_step(s);
    rng.fill_normal(n.xi1);
    if (k >= 2) rng.fill_normal(n.xi2);
    if (k >= 4) {
        rng.fill_normal(n.xi3);
        rng.fill_normal(n.xi4);
    }
}

inline PhasePoint em_step(PhasePoint p, const PotentialModel& pot, const SchemeConfig& cfg,
                          std::span<const double> xi) {
    if (cfg.scheme != Scheme::EM) throw ParameterError("em_step requires scheme EM");
    std::vector<double> g(p.dim());
    em_step_inplace(p.x, p.v, pot, cfg, xi, g);
    return p;
}

inline PhasePoint b_map(PhasePoint p, const PotentialModel& pot, double h) {
    std::vector<double> g(p.dim());
    b_map_inplace(p.x, p.v, pot, h, g);
    return p;
}

inline PhasePoint u_map(PhasePoint p, double h, double gamma, std::span<const double> xi1,
                        std::span<const double> xi2) {
    u_map_inplace(p.x, p.v, ou_coefficients(h, gamma), xi1, xi2);
    return p;
}

inline PhasePoint bu_step(PhasePoint p, const PotentialModel& pot, const SchemeConfig& cfg,
                          const NoiseDraw& n) {
    if (cfg.scheme != Scheme::BU) throw ParameterError("bu_step requires scheme BU");
    std::vector<double> g(p.dim());
    step_inplace(p.x, p.v, pot, StepCoefficients(cfg), n, g);
    return p;
}

inline PhasePoint ubu_step(PhasePoint p, const PotentialModel& pot, const SchemeConfig& cfg,
                           const NoiseDraw& n) {
    if (cfg.scheme != Scheme::UBU) throw ParameterError("ubu_step requires scheme UBU");
    std::vector<double> g(p.dim());
    step_inplace(p.x, p.v, pot, StepCoefficients(cfg), n, g);
    return p;
}

/**
 * @brief Iterate the configured scheme from p0.
 *
 * Records p0 and every `stride`-th state. Noise for step k comes from the
 * stream (seed, replica, noise, k).
 */
inline std::vector<PhasePoint> run_chain(const PhasePoint& p0, const PotentialModel& pot,
                                         const SchemeConfig& cfg, std::uint64_t n_steps,
                                         std::uint64_t seed, std::uint64_t replica = 0,
                                         std::uint64_t stride = 1) {
    if (stride == 0) throw ParameterError("stride must be positive");
    if (p0.x.size() != pot.dim || p0.v.size() != pot.dim)
        throw ParameterError("initial state dimension does not match potential");
    const StepCoefficients sc(cfg);
    PhasePoint p = p0;
    NoiseDraw noise(pot.dim);
    std::vector<double> g(pot.dim);
    std::vector<PhasePoint> out{p};
    for (std::uint64_t k = 0; k < n_steps; ++k) {
        draw_noise(noise, cfg.scheme, seed, replica, k);
        step_inplace(p.x, p.v, pot, sc, noise, g, k);
        if (!p.finite()) throw NumericError("state blew up", k + 1, p.x, p.v);
        if ((k + 1) % stride == 0) out.push_back(p);
    }
    return out;
}

}  // namespace klmc
