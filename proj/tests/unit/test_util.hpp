#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "klmc/potentials.hpp"

namespace tu {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Kolmogorov asymptotic p-value for sqrt(n) D.
inline double kolmogorov_pvalue(double d, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lam = (sn + 0.12 + 0.11 / sn) * d;
    if (lam < 1e-3) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
        sum += term;
        if (std::abs(term) < 1e-16) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

/// One-sample KS statistic against the standard normal.
inline double ks_normal_statistic(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = normal_cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
    }
    return d;
}

/// Central-difference gradient of an energy.
inline std::vector<double> fd_gradient(const klmc::EnergyFn& U, std::span<const double> x, double step = 1e-5) {
    std::vector<double> g(x.size()), y(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = step * std::max(1.0, std::abs(x[i]));
        y[i] = x[i] + s;
        const double up = U(y);
        y[i] = x[i] - s;
        const double dn = U(y);
        y[i] = x[i];
        g[i] = (up - dn) / (2 * s);
    }
    return g;
}

inline double norm(std::span<const double> v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
}

/// Running mean and standard error.
struct Moments {
    double n = 0, sum = 0, sum2 = 0;
    void add(double x) {
        n += 1;
        sum += x;
        sum2 += x * x;
    }
    double mean() const { return sum / n; }
    double var() const { return (sum2 - sum * sum / n) / (n - 1); }
    double se() const { return std::sqrt(var() / n); }
};

}  // namespace tu
