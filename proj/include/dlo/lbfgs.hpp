#pragma once

#include <dlo/types.hpp>

#include <functional>
#include <limits>
#include <vector>

namespace dlo {

// Unconstrained L-BFGS with a weak-Wolfe bracketing line search. The
// objective returns the value and fills the gradient; +inf values make the
// line search back off, which is how the rod energy guards its curvature
// singularity. Problems here are small (tens of variables) but stiff from the
// inextensibility penalty, so the history is deep and the curvature condition
// keeps the correction pairs well scaled.
struct LbfgsOptions {
    int max_iterations = 500;
    int history = 30;
    double gradient_tolerance = 1e-8;  // ||g||_2
    double armijo_c = 1e-4;
    double wolfe_c = 0.9;
    int max_line_search = 60;
    double min_improvement = 0.0;  // stop when f stops decreasing by more than this
};

struct LbfgsResult {
    VecX x;
    double f = 0.0;
    double gradient_norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

using Objective = std::function<double(const VecX&, VecX&)>;

namespace detail {

struct LineSearchResult {
    double step = 0.0;
    double f = 0.0;
    bool ok = false;
};

// Weak Wolfe line search by bisection bracketing (Lewis-Overton style).
inline LineSearchResult wolfeLineSearch(const Objective& objective, const VecX& x, const VecX& d, double f0,
                                        double dg0, double g0_norm, VecX& x_new, VecX& g_new, int& evals,
                                        const LbfgsOptions& opts) {
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double step = 1.0;
    LineSearchResult res;
    for (int i = 0; i < opts.max_line_search; ++i) {
        x_new = x + step * d;
        const double f = objective(x_new, g_new);
        ++evals;
        const double noise = 8.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(f0), 1e-300);
        if (std::isfinite(f) && std::abs(f - f0) <= noise && g_new.norm() <= 0.999 * g0_norm) {
            // decreases are below the rounding floor of f; gradient progress
            // is the only remaining signal
            res = {step, std::min(f, f0), true};
            return res;
        }
        if (!std::isfinite(f) || f > f0 + opts.armijo_c * step * dg0) {
            hi = step;  // too long
        } else if (g_new.dot(d) < opts.wolfe_c * dg0) {
            lo = step;  // too short
        } else {
            res = {step, f, true};
            return res;
        }
        if (std::isfinite(hi)) {
            step = 0.5 * (lo + hi);
        } else {
            step *= 2.0;
        }
        if (step < 1e-20) break;
    }
    // fall back to the best Armijo point seen, if any
    if (std::isfinite(hi) && lo > 0.0) {
        x_new = x + lo * d;
        const double f = objective(x_new, g_new);
        ++evals;
        if (std::isfinite(f) && f <= f0 + opts.armijo_c * lo * dg0) res = {lo, f, true};
    }
    return res;
}

}  // namespace detail

inline LbfgsResult lbfgsMinimize(const Objective& objective, const VecX& x0, const LbfgsOptions& opts = {}) {
    const int n = static_cast<int>(x0.size());
    LbfgsResult res;
    res.x = x0;

    VecX g(n), g_new(n), x_new(n), d(n);
    std::vector<VecX> s_hist, y_hist;
    std::vector<double> rho_hist;
    std::vector<double> alpha(opts.history);

    double f = objective(res.x, g);
    res.evaluations = 1;
    if (!std::isfinite(f)) return res;  // bad start

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        res.gradient_norm = g.norm();
        if (res.gradient_norm <= opts.gradient_tolerance) {
            res.converged = true;
            break;
        }

        // two-loop recursion
        d = -g;
        const int k = static_cast<int>(s_hist.size());
        for (int i = k - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(d);
            d -= alpha[i] * y_hist[i];
        }
        if (k > 0) {
            const double gamma = s_hist[k - 1].dot(y_hist[k - 1]) / y_hist[k - 1].squaredNorm();
            d *= gamma;
        }
        for (int i = 0; i < k; ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(d);
            d += (alpha[i] - beta) * s_hist[i];
        }

        double dg = g.dot(d);
        if (dg >= 0.0) {  // not a descent direction, restart from steepest descent
            d = -g;
            dg = -g.squaredNorm();
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        const auto ls = detail::wolfeLineSearch(objective, res.x, d, f, dg, res.gradient_norm, x_new, g_new, res.evaluations, opts);
        if (!ls.ok) break;  // no measurable progress; report current point

        const VecX s = x_new - res.x;
        const VecX y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-14 * y.squaredNorm()) {
            if (static_cast<int>(s_hist.size()) == opts.history) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
        }

        const double decrease = f - ls.f;
        res.x = x_new;
        f = ls.f;
        g.swap(g_new);
        res.iterations = iter + 1;
        if (decrease <= opts.min_improvement && decrease >= 0.0 && opts.min_improvement > 0.0) break;
    }

    res.f = f;
    res.gradient_norm = g.norm();
    if (res.gradient_norm <= opts.gradient_tolerance) res.converged = true;
    return res;
}

}  // namespace dlo
