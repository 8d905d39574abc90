#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace p2pswarm {

class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template <typename Fn>
double simpson_step(Fn& f, double a, double fa, double b, double fb, double m, double fm,
                    double whole, double abs_tol, int depth, int& budget) {
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    if (--budget < 0) throw QuadratureError("adaptive Simpson exhausted its evaluation budget");
    if (depth <= 0) {
        if (std::abs(diff) > 15.0 * abs_tol && std::abs(diff) > 1e-300) {
            throw QuadratureError("adaptive Simpson did not converge at maximum depth");
        }
        return left + right + diff / 15.0;
    }
    if (std::abs(diff) <= 15.0 * abs_tol) return left + right + diff / 15.0;
    return simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * abs_tol, depth - 1, budget) +
           simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * abs_tol, depth - 1, budget);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b] with interval bisection and
/// Richardson correction. abs_tol is the target absolute error.
template <typename Fn>
double adaptive_simpson(Fn&& f, double a, double b, double abs_tol, int max_depth = 48) {
    if (!(b >= a)) throw std::invalid_argument("integration bounds out of order");
    if (a == b) return 0.0;
    int budget = 50'000'000;
    // seed with a few panels so narrow features are not skipped by the first estimate
    constexpr int panels = 8;
    const double h = (b - a) / panels;
    double total = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double lo = a + h * i;
        const double hi = (i + 1 == panels) ? b : a + h * (i + 1);
        const double mid = 0.5 * (lo + hi);
        const double flo = f(lo), fhi = f(hi), fmid = f(mid);
        const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += detail::simpson_step(f, lo, flo, hi, fhi, mid, fmid, whole, abs_tol / panels,
                                      max_depth, budget);
    }
    return total;
}

}  // namespace p2pswarm
