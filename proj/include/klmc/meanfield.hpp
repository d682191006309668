#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "klmc/error.hpp"
#include "klmc/integrators.hpp"
#include "klmc/metric.hpp"
#include "klmc/potentials.hpp"

namespace klmc {

/// Even pairwise interaction W on R^d with its gradient.
struct Interaction {
    std::string kind = "harmonic";
    std::function<double(std::span<const double>)> energy;
    GradientFn gradient;
    double L_W = 0.0;
};

/// W(x) = lambda |x|^2 / 2.
inline Interaction make_harmonic_interaction(double lambda) {
    if (!(lambda >= 0.0)) throw ParameterError("harmonic strength must be nonnegative");
    Interaction w;
    w.kind = "harmonic";
    w.energy = [lambda](std::span<const double> x) {
        double s = 0.0;
        for (double xi : x) s += xi * xi;
        return 0.5 * lambda * s;
    };
    w.gradient = [lambda](std::span<const double> x, std::span<double> g) {
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = lambda * x[i];
    };
    w.L_W = lambda;
    return w;
}

/// Morse-type W(x) = depth (1 - exp(-width |x|))^2, with L_W = 2 depth width^2.
inline Interaction make_morse_interaction(double depth, double width) {
    if (!(depth >= 0.0) || !(width > 0.0)) throw ParameterError("morse needs depth >= 0, width > 0");
    Interaction w;
    w.kind = "morse";
    w.energy = [depth, width](std::span<const double> x) {
        double r2 = 0.0;
        for (double xi : x) r2 += xi * xi;
        const double e = 1.0 - std::exp(-width * std::sqrt(r2));
        return depth * e * e;
    };
    w.gradient = [depth, width](std::span<const double> x, std::span<double> g) {
        double r2 = 0.0;
        for (double xi : x) r2 += xi * xi;
        const double r = std::sqrt(r2);
        if (r == 0.0) {
            std::fill(g.begin(), g.end(), 0.0);
            return;
        }
        const double e = std::exp(-width * r);
        const double dw = 2.0 * depth * width * e * (1.0 - e);
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = dw * x[i] / r;
    };
    w.L_W = 2.0 * depth * width * width;
    return w;
}

struct MeanFieldSpec {
    std::size_t N = 1;
    PotentialModel confining;
    Interaction interaction;
    double smallness_factor = 0.25;  ///< flag when L_W exceeds this times kappa_V
};

/// Constants of one particle: kappa_V - 2 L_W and L_V + 2 L_W.
inline RegularityConstants particle_constants(const MeanFieldSpec& spec) {
    const RegularityConstants& v = spec.confining.constants;
    const double lw = spec.interaction.L_W;
    RegularityConstants c;
    c.kappa = v.kappa - 2.0 * lw;
    if (!(c.kappa > 0.0)) throw ParameterError("interaction too strong: kappa_V - 2 L_W <= 0");
    c.L = v.L + 2.0 * lw;
    c.R = v.R;
    c.L_K = c.kappa;
    c.L_G = c.L - c.kappa;
    return c;
}

/// Whether L_W is within the configured fraction of kappa_V.
inline bool interaction_is_small(const MeanFieldSpec& spec) {
    return spec.interaction.L_W <= spec.smallness_factor * spec.confining.constants.kappa;
}

/**
 * @brief N-particle potential U(x) = sum_i V(x^i) + N^{-1} sum_i sum_{j != i} W(x^i - x^j).
 *
 * For even W the gradient of particle i is grad V(x^i) + (2/N) sum_j grad W(x^i - x^j).
 * Summation runs in index order.
 */
inline PotentialModel make_meanfield(const MeanFieldSpec& spec) {
    if (spec.N == 0) throw ParameterError("particle count must be positive");
    const std::size_t d = spec.confining.dim;
    const std::size_t N = spec.N;
    auto V = std::make_shared<PotentialModel>(spec.confining);
    auto W = std::make_shared<Interaction>(spec.interaction);
    PotentialModel p;
    p.dim = d * N;
    p.label = "meanfield";
    p.energy = [V, W, d, N](std::span<const double> x) {
        double e = 0.0;
        std::vector<double> diff(d);
        for (std::size_t i = 0; i < N; ++i) {
            e += V->energy(x.subspan(i * d, d));
            for (std::size_t j = 0; j < N; ++j) {
                if (j == i) continue;
                for (std::size_t k = 0; k < d; ++k) diff[k] = x[i * d + k] - x[j * d + k];
                e += W->energy(diff) / static_cast<double>(N);
            }
        }
        return e;
    };
    p.gradient = [V, W, d, N](std::span<const double> x, std::span<double> g) {
        std::vector<double> diff(d), gw(d);
        const double scale = 2.0 / static_cast<double>(N);
        for (std::size_t i = 0; i < N; ++i) {
            V->gradient(x.subspan(i * d, d), g.subspan(i * d, d));
            for (std::size_t j = 0; j < N; ++j) {
                if (j == i) continue;
                for (std::size_t k = 0; k < d; ++k) diff[k] = x[i * d + k] - x[j * d + k];
                W->gradient(diff, gw);
                for (std::size_t k = 0; k < d; ++k) g[i * d + k] += scale * gw[k];
            }
        }
    };
    RegularityConstants c = particle_constants(spec);
    p.constants = c;
    p.split = QuadraticSplit::scalar_split(c.kappa);
    return p;
}

/// A d-dimensional model carrying the per-particle constants (energy is V's).
inline PotentialModel particle_model(const MeanFieldSpec& spec) {
    PotentialModel p = spec.confining;
    p.constants = particle_constants(spec);
    p.split = QuadraticSplit::scalar_split(p.constants.kappa);
    p.label = "meanfield_particle";
    return p;
}

namespace detail {
inline void check_blocks(const PhasePoint& a, const PhasePoint& b, std::size_t N, std::size_t d) {
    if (N == 0 || d == 0) throw ParameterError("N and d must be positive");
    if (a.x.size() != N * d || b.x.size() != N * d || a.v.size() != N * d || b.v.size() != N * d)
        throw ParameterError("state is not N blocks of dimension d");
}
}  // namespace detail

/// rho_N = N^{-1} sum_i rho((x^i, v^i), (x'^i, v'^i)) with per-particle constants.
inline double rho_N(const PhasePoint& a, const PhasePoint& b, const MetricConstants& mc,
                    std::size_t N, std::size_t d) {
    detail::check_blocks(a, b, N, d);
    std::vector<double> z(d), w(d);
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            z[k] = a.x[i * d + k] - b.x[i * d + k];
            w[k] = a.v[i * d + k] - b.v[i * d + k];
        }
        s += diff_metrics(z, w, mc).rho;
    }
    return s / static_cast<double>(N);
}

/// l1_N = N^{-1} sum_i |(x^i, v^i) - (x'^i, v'^i)|.
inline double ell1_N(const PhasePoint& a, const PhasePoint& b, std::size_t N, std::size_t d) {
    detail::check_blocks(a, b, N, d);
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double b2 = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double dz = a.x[i * d + k] - b.x[i * d + k];
            const double dw = a.v[i * d + k] - b.v[i * d + k];
            b2 += dz * dz + dw * dw;
        }
        s += std::sqrt(b2);
    }
    return s / static_cast<double>(N);
}

}  // namespace klmc
