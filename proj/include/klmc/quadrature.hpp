#pragma once

#include <cmath>
#include <functional>

namespace klmc {

namespace detail {

template <class F>
double simpson_recurse(const F& f, double a, double b, double fa, double fm, double fb,
                       double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
    return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/**
 * @brief Adaptive Simpson quadrature of f over [a, b].
 *
 * The interval is first split into `panels` pieces; each piece is refined
 * until the local error estimate is below rel_tol times the coarse estimate
 * of the total (or abs_tol, whichever is larger).
 */
template <class F>
double adaptive_simpson(const F& f, double a, double b, double rel_tol = 1e-10,
                        double abs_tol = 0.0, int panels = 16, int max_depth = 40) {
    if (b == a) return 0.0;
    const double hstep = (b - a) / panels;
    double coarse = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double lo = a + i * hstep, hi = lo + hstep;
        coarse += hstep / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi));
    }
    const double tol = std::max(abs_tol, rel_tol * std::abs(coarse)) / panels;
    double total = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double lo = a + i * hstep, hi = (i + 1 == panels) ? b : lo + hstep;
        const double flo = f(lo), fhi = f(hi), fm = f(0.5 * (lo + hi));
        const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
        total += detail::simpson_recurse(f, lo, hi, flo, fm, fhi, whole, tol, max_depth);
    }
    return total;
}

}  // namespace klmc
