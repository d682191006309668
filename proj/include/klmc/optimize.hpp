#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace klmc {

struct NelderMeadResult {
    std::array<double, 2> x{};
    double value = 0.0;
    int iterations = 0;
};

/// Minimize a function of two variables with the Nelder-Mead simplex method.
template <class F>
NelderMeadResult nelder_mead_2d(const F& f, std::array<double, 2> x0, double step,
                                double tol = 1e-14, int max_iter = 2000) {
    using P = std::array<double, 2>;
    std::array<P, 3> s{x0, P{x0[0] + step, x0[1]}, P{x0[0], x0[1] + step}};
    std::array<double, 3> fv{f(s[0]), f(s[1]), f(s[2])};
    int it = 0;
    auto lerp = [](const P& a, const P& b, double t) {
        return P{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])};
    };
    for (; it < max_iter; ++it) {
        std::array<int, 3> idx{0, 1, 2};
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        const P best = s[idx[0]], mid = s[idx[1]], worst = s[idx[2]];
        const double fb = fv[idx[0]], fm = fv[idx[1]], fw = fv[idx[2]];
        if (std::abs(fw - fb) <= tol * (std::abs(fb) + 1e-300)) {
            double spread = 0.0;
            for (const P& p : s) spread = std::max(spread, std::hypot(p[0] - best[0], p[1] - best[1]));
            if (spread < 1e-12) break;
        }
        const P c{0.5 * (best[0] + mid[0]), 0.5 * (best[1] + mid[1])};
        const P xr = lerp(c, worst, -1.0);
        const double fr = f(xr);
        if (fr < fb) {
            const P xe = lerp(c, worst, -2.0);
            const double fe = f(xe);
            if (fe < fr) { s[idx[2]] = xe; fv[idx[2]] = fe; }
            else { s[idx[2]] = xr; fv[idx[2]] = fr; }
        } else if (fr < fm) {
            s[idx[2]] = xr; fv[idx[2]] = fr;
        } else {
            const bool outside = fr < fw;
            const P xc = outside ? lerp(c, xr, 0.5) : lerp(c, worst, 0.5);
            const double fc = f(xc);
            if (fc < std::min(fr, fw)) {
                s[idx[2]] = xc; fv[idx[2]] = fc;
            } else {
                for (int k = 1; k < 3; ++k) {
                    s[idx[k]] = lerp(best, s[idx[k]], 0.5);
                    fv[idx[k]] = f(s[idx[k]]);
                }
            }
        }
    }
    const int b = static_cast<int>(std::min_element(fv.begin(), fv.end()) - fv.begin());
    return {s[b], fv[b], it};
}

}  // namespace klmc
