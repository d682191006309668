#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "klmc/error.hpp"
#include "klmc/rng.hpp"

namespace klmc {

using EnergyFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;
using LinearMap = std::function<void(std::span<const double>, std::span<double>)>;

/// Declared regularity of a potential.
struct RegularityConstants {
    double kappa = 1.0;
    double L = 1.0;
    double R = 0.0;
    double L_G = 0.0;
    double L_K = 1.0;
    std::optional<double> L1;
    std::optional<double> L1_strong;

    /// Throws ParameterError when the split-consistency relations fail.
    void validate(std::size_t dim) const {
        constexpr double slack = 1e-12;
        if (!(kappa > 0.0)) throw ParameterError("kappa must be positive");
        if (!(L > 0.0)) throw ParameterError("L must be positive");
        if (!(R >= 0.0)) throw ParameterError("R must be nonnegative");
        if (!(L_G >= 0.0)) throw ParameterError("L_G must be nonnegative");
        if (!(L_K > 0.0)) throw ParameterError("L_K must be positive");
        if (kappa > L * (1 + slack)) throw ParameterError("kappa exceeds L");
        if (kappa > L_K * (1 + slack) || L_K > L * (1 + slack))
            throw ParameterError("need kappa <= L_K <= L");
        if (L_G > (L + L_K) * (1 + slack)) throw ParameterError("L_G exceeds L + L_K");
        if (L1 && *L1 < 0.0) throw ParameterError("L1 must be nonnegative");
        if (L1_strong && *L1_strong < 0.0) throw ParameterError("L1_strong must be nonnegative");
        if (L1 && L1_strong) {
            if (*L1 > *L1_strong * (1 + slack) ||
                *L1_strong > std::sqrt(static_cast<double>(dim)) * *L1 * (1 + slack))
                throw ParameterError("need L1 <= L1_strong <= sqrt(d) L1");
        }
    }
};

/// Quadratic part K of the split U = x^T K x / 2 + G(x).
struct QuadraticSplit {
    enum class Mode { scalar, matrix };
    Mode mode = Mode::scalar;
    double scalar = 1.0;
    std::size_t dim = 0;
    std::vector<double> matrix;  // row-major dim x dim

    static QuadraticSplit scalar_split(double k) {
        QuadraticSplit s;
        s.scalar = k;
        return s;
    }

    static QuadraticSplit matrix_split(std::size_t d, std::vector<double> k) {
        if (k.size() != d * d) throw ParameterError("K must be d x d");
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (std::abs(k[i * d + j] - k[j * d + i]) > 1e-12 * (1 + std::abs(k[i * d + j])))
                    throw ParameterError("K must be symmetric");
        QuadraticSplit s;
        s.mode = Mode::matrix;
        s.dim = d;
        s.matrix = std::move(k);
        return s;
    }

    void apply(std::span<const double> x, std::span<double> out) const {
        if (mode == Mode::scalar) {
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = scalar * x[i];
            return;
        }
        for (std::size_t i = 0; i < dim; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < dim; ++j) acc += matrix[i * dim + j] * x[j];
            out[i] = acc;
        }
    }

    /// z^T K z.
    double quadratic_form(std::span<const double> z) const {
        if (mode == Mode::scalar) {
            double s = 0.0;
            for (double zi : z) s += zi * zi;
            return scalar * s;
        }
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < dim; ++j) acc += matrix[i * dim + j] * z[j];
            s += z[i] * acc;
        }
        return s;
    }

    /// Extreme eigenvalues (Jacobi sweeps for the matrix case).
    std::pair<double, double> eigen_range() const {
        if (mode == Mode::scalar) return {scalar, scalar};
        std::vector<double> a = matrix;
        const std::size_t n = dim;
        for (int sweep = 0; sweep < 100; ++sweep) {
            double off = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
            if (off < 1e-30) break;
            for (std::size_t p = 0; p < n; ++p) {
                for (std::size_t q = p + 1; q < n; ++q) {
                    const double apq = a[p * n + q];
                    if (std::abs(apq) < 1e-300) continue;
                    const double theta = (a[q * n + q] - a[p * n + p]) / (2 * apq);
                    const double t = (theta >= 0 ? 1.0 : -1.0) /
                                     (std::abs(theta) + std::sqrt(theta * theta + 1));
                    const double c = 1 / std::sqrt(t * t + 1), s = t * c;
                    for (std::size_t k = 0; k < n; ++k) {
                        const double akp = a[k * n + p], akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for (std::size_t k = 0; k < n; ++k) {
                        const double apk = a[p * n + k], aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = 0; i < n; ++i) {
            lo = std::min(lo, a[i * n + i]);
            hi = std::max(hi, a[i * n + i]);
        }
        return {lo, hi};
    }
};

/// Axis-aligned box used for constant estimation and strict-mode checks.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    bool contains(std::span<const double> x) const {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i] < lo[i] || x[i] > hi[i]) return false;
        return true;
    }
};

/**
 * @brief Potential U with gradient, regularity constants and quadratic split.
 *
 * Immutable after construction; energy and gradient are reentrant.
 */
struct PotentialModel {
    std::size_t dim = 0;
    EnergyFn energy;
    GradientFn gradient;
    RegularityConstants constants;
    QuadraticSplit split;
    std::string label;
    std::optional<Box> box;
    std::shared_ptr<std::atomic<std::uint64_t>> domain_warnings =
        std::make_shared<std::atomic<std::uint64_t>>(0);

    std::vector<double> grad(std::span<const double> x) const {
        std::vector<double> g(dim);
        gradient(x, g);
        return g;
    }

    std::uint64_t domain_warning_count() const { return domain_warnings->load(); }
};

/// U(x) = kappa |x|^2 / 2.
inline PotentialModel make_gaussian(std::size_t d, double kappa) {
    if (d == 0) throw ParameterError("dimension must be positive");
    if (!(kappa > 0.0)) throw ParameterError("kappa must be positive");
    PotentialModel p;
    p.dim = d;
    p.label = "gaussian";
    p.energy = [kappa](std::span<const double> x) {
        double s = 0.0;
        for (double xi : x) s += xi * xi;
        return 0.5 * kappa * s;
    };
    p.gradient = [kappa](std::span<const double> x, std::span<double> g) {
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = kappa * x[i];
    };
    p.constants = {kappa, kappa, 0.0, 0.0, kappa, 0.0, 0.0};
    p.split = QuadraticSplit::scalar_split(kappa);
    return p;
}

/// U == 0. Only meaningful as a test fixture; carries placeholder constants.
inline PotentialModel make_zero(std::size_t d) {
    PotentialModel p;
    p.dim = d;
    p.label = "zero";
    p.energy = [](std::span<const double>) { return 0.0; };
    p.gradient = [](std::span<const double>, std::span<double> g) {
        std::fill(g.begin(), g.end(), 0.0);
    };
    p.constants = {1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0};
    p.split = QuadraticSplit::scalar_split(1.0);
    return p;
}

/**
 * @brief Sup of |grad(x) - grad(y)| / |x - y| over sampled pairs in a box.
 *
 * Half the pairs are close (difference quotients approximating the Hessian
 * norm) and half are uniform in the box.
 */
inline double estimate_gradient_lipschitz(const GradientFn& grad, const Box& box,
                                          std::size_t n_pairs, std::uint64_t seed) {
    const std::size_t d = box.lo.size();
    std::vector<double> x(d), y(d), gx(d), gy(d);
    Rng rng(seed, 0, Tag::sample, 0);
    double best = 0.0;
    for (std::size_t k = 0; k < n_pairs; ++k) {
        for (std::size_t i = 0; i < d; ++i) x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * rng.uniform();
        if (k % 2 == 0) {
            double scale = 0.0;
            for (std::size_t i = 0; i < d; ++i) scale = std::max(scale, box.hi[i] - box.lo[i]);
            for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + 1e-5 * scale * rng.normal();
        } else {
            for (std::size_t i = 0; i < d; ++i)
                y[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * rng.uniform();
        }
        grad(x, gx);
        grad(y, gy);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            num += (gx[i] - gy[i]) * (gx[i] - gy[i]);
            den += (x[i] - y[i]) * (x[i] - y[i]);
        }
        if (den > 0.0) best = std::max(best, std::sqrt(num / den));
    }
    return best;
}

struct BananaOptions {
    Box box{{-6.0, -4.0}, {6.0, 36.0}};
    double kappa = 1.0;
    double R = 10.0;
    bool strict = false;
    std::size_t n_pairs = 20000;
    std::uint64_t seed = 7;
};

/// U(x, y) = (1 - x)^2 + 10 (y - x^2)^2 with constants estimated on a box.
inline PotentialModel make_banana(const BananaOptions& opt = {}) {
    if (opt.box.lo.size() != 2 || opt.box.hi.size() != 2)
        throw ParameterError("banana box must be two-dimensional");
    if (!(opt.kappa > 0.0)) throw ParameterError("kappa must be positive");
    PotentialModel p;
    p.dim = 2;
    p.label = "banana";
    p.box = opt.box;
    p.energy = [](std::span<const double> x) {
        const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
        return a * a + 10.0 * b * b;
    };
    auto raw = [](std::span<const double> x, std::span<double> g) {
        const double b = x[1] - x[0] * x[0];
        g[0] = -2.0 * (1.0 - x[0]) - 40.0 * x[0] * b;
        g[1] = 20.0 * b;
    };
    const double kappa = opt.kappa;
    const Box box = opt.box;
    double L = std::max(estimate_gradient_lipschitz(raw, box, opt.n_pairs, opt.seed), kappa);
    const double L_G = estimate_gradient_lipschitz(
        [&](std::span<const double> x, std::span<double> g) {
            raw(x, g);
            g[0] -= kappa * x[0];
            g[1] -= kappa * x[1];
        },
        box, opt.n_pairs, opt.seed + 1);
    // The two sampled sups come from different pairs; keep L_G <= L + kappa.
    L = std::max(L, L_G - kappa);
    if (opt.strict) {
        auto counter = p.domain_warnings;
        p.gradient = [raw, box, counter](std::span<const double> x, std::span<double> g) {
            if (!box.contains(x)) counter->fetch_add(1, std::memory_order_relaxed);
            raw(x, g);
        };
    } else {
        p.gradient = raw;
    }
    p.constants = {kappa, L, opt.R, L_G, kappa, std::nullopt, std::nullopt};
    p.split = QuadraticSplit::scalar_split(kappa);
    return p;
}

/**
 * @brief U(x) = -log sum_i w_i exp(-|x - m_i|^2 / (2 sigma^2)).
 *
 * Constants are analytic bounds in terms of the diameter D of the means:
 * kappa = 1/(2 sigma^2), R = 2D.
 */
inline PotentialModel make_gaussian_mixture(std::vector<std::vector<double>> means, double sigma,
                                            std::vector<double> weights = {}) {
    if (means.empty()) throw ParameterError("mixture needs at least one mean");
    if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
    const std::size_t d = means.front().size();
    if (d == 0) throw ParameterError("dimension must be positive");
    for (const auto& m : means)
        if (m.size() != d) throw ParameterError("mixture means differ in dimension");
    const std::size_t n = means.size();
    if (weights.empty()) weights.assign(n, 1.0 / static_cast<double>(n));
    if (weights.size() != n) throw ParameterError("weights and means differ in length");
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw ParameterError("weights must be positive");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-12) throw ParameterError("weights must sum to 1");

    std::vector<double> logw(n);
    for (std::size_t i = 0; i < n; ++i) logw[i] = std::log(weights[i]);
    const double s2 = sigma * sigma;

    auto exponents = [means, logw, s2, n, d](std::span<const double> x, std::vector<double>& e) {
        e.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double r2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double t = x[k] - means[i][k];
                r2 += t * t;
            }
            e[i] = logw[i] - r2 / (2 * s2);
        }
    };

    PotentialModel p;
    p.dim = d;
    p.label = "gmm";
    p.energy = [exponents](std::span<const double> x) {
        std::vector<double> e;
        exponents(x, e);
        const double mx = *std::max_element(e.begin(), e.end());
        double s = 0.0;
        for (double ei : e) s += std::exp(ei - mx);
        return -(mx + std::log(s));
    };
    p.gradient = [exponents, means, s2, n, d](std::span<const double> x, std::span<double> g) {
        std::vector<double> e;
        exponents(x, e);
        const double mx = *std::max_element(e.begin(), e.end());
        double s = 0.0;
        for (double& ei : e) {
            ei = std::exp(ei - mx);
            s += ei;
        }
        for (std::size_t k = 0; k < d; ++k) g[k] = x[k];
        for (std::size_t i = 0; i < n; ++i) {
            const double r = e[i] / s;
            for (std::size_t k = 0; k < d; ++k) g[k] -= r * means[i][k];
        }
        for (std::size_t k = 0; k < d; ++k) g[k] /= s2;
    };

    double diam = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double r2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) r2 += (means[i][k] - means[j][k]) * (means[i][k] - means[j][k]);
            diam = std::max(diam, std::sqrt(r2));
        }
    const double kappa = 1.0 / (2 * s2);
    const double spread = diam * diam / (4 * s2 * s2);
    const double L = std::max(1.0 / s2, spread - 1.0 / s2);
    const double L_G = std::max(1.0 / (2 * s2), spread - 1.0 / (2 * s2));
    p.constants = {kappa, L, 2 * diam, L_G, kappa, std::nullopt, std::nullopt};
    p.split = QuadraticSplit::scalar_split(kappa);
    return p;
}

/**
 * @brief U(x) = kappa0 |x|^2 / 2 + A exp(-|x|^2 / (2 s^2)).
 *
 * Strongly convex with the declared kappa < kappa0 outside
 * R = 2 (A / s) e^{-1/2} / (kappa0 - kappa).
 */
inline PotentialModel make_double_well(std::size_t d, double kappa0, double A, double s,
                                       double kappa) {
    if (d == 0) throw ParameterError("dimension must be positive");
    if (!(kappa0 > 0.0) || !(A >= 0.0) || !(s > 0.0))
        throw ParameterError("double well needs kappa0 > 0, A >= 0, s > 0");
    if (!(kappa > 0.0) || !(kappa < kappa0)) throw ParameterError("need 0 < kappa < kappa0");
    PotentialModel p;
    p.dim = d;
    p.label = "double_well";
    p.energy = [kappa0, A, s](std::span<const double> x) {
        double r2 = 0.0;
        for (double xi : x) r2 += xi * xi;
        return 0.5 * kappa0 * r2 + A * std::exp(-r2 / (2 * s * s));
    };
    p.gradient = [kappa0, A, s](std::span<const double> x, std::span<double> g) {
        double r2 = 0.0;
        for (double xi : x) r2 += xi * xi;
        const double c = kappa0 - A / (s * s) * std::exp(-r2 / (2 * s * s));
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = c * x[i];
    };
    const double bump = A / (s * s);
    const double peak = 2 * std::exp(-1.5) * bump;
    const double L = std::max(std::abs(kappa0 - bump), kappa0 + peak);
    const double gap = kappa0 - kappa;
    const double L_G = std::max(std::abs(gap - bump), gap + peak);
    const double R = 2 * (A / s) * std::exp(-0.5) / gap;
    p.constants = {kappa, L, R, L_G, kappa, std::nullopt, std::nullopt};
    p.split = QuadraticSplit::scalar_split(kappa);
    return p;
}

/// Returns (x -> Kx, x -> grad G(x)) with grad U = Kx + grad G.
inline std::pair<LinearMap, GradientFn> split_components(const PotentialModel& p) {
    QuadraticSplit split = p.split;
    GradientFn grad = p.gradient;
    LinearMap kx = [split](std::span<const double> x, std::span<double> out) { split.apply(x, out); };
    GradientFn gg = [split, grad](std::span<const double> x, std::span<double> out) {
        grad(x, out);
        std::vector<double> k(x.size());
        split.apply(x, k);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] -= k[i];
    };
    return {kx, gg};
}

}  // namespace klmc
