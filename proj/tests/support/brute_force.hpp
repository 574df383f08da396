#pragma once

// Direct-search minimisers for the spectrum programs. They never look at the
// dual variable, so agreement with the library is a genuine cross-check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

struct BruteResult {
    std::vector<double> p;
    double objective = std::numeric_limits<double>::infinity();
};

namespace internal {

/// Every point of {x >= 0, sum x <= 1} in `dims` dimensions on a mesh 1/steps.
inline void for_each_mesh_point(int dims, int steps, const std::function<void(const std::vector<double>&)>& visit) {
    std::vector<int> idx(dims, 0);
    std::vector<double> x(dims, 0.0);
    std::function<void(int, int)> rec = [&](int d, int left) {
        if (d == dims) {
            for (int i = 0; i < dims; ++i) x[i] = static_cast<double>(idx[i]) / steps;
            visit(x);
            return;
        }
        for (int v = 0; v <= left; ++v) {
            idx[d] = v;
            rec(d + 1, left - v);
        }
    };
    rec(0, steps);
}

/// Compass search on f over {x >= 0, sum x <= 1}; infeasible points are +inf.
inline std::vector<double> compass(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                   double step, double min_step) {
    const int dims = static_cast<int>(x.size());
    double fx = f(x);
    auto inside = [&](const std::vector<double>& y) {
        double s = 0.0;
        for (double v : y) {
            if (v < 0.0) return false;
            s += v;
        }
        return s <= 1.0;
    };
    while (step > min_step) {
        bool improved = false;
        for (int d = 0; d < dims && !improved; ++d)
            for (double sign : {1.0, -1.0}) {
                auto y = x;
                y[d] += sign * step;
                if (!inside(y)) {
                    // Slide to the face instead of giving up.
                    y[d] = std::max(0.0, y[d]);
                    double s = 0.0;
                    for (double v : y) s += v;
                    if (s > 1.0) y[d] -= s - 1.0;
                    if (!inside(y) || y == x) continue;
                }
                const double fy = f(y);
                if (fy < fx) {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        if (!improved) {
            // Try pairwise exchange moves, which follow the simplex face sum x = 1.
            for (int a = 0; a < dims && !improved; ++a)
                for (int b = 0; b < dims && !improved; ++b) {
                    if (a == b) continue;
                    auto y = x;
                    y[a] += step;
                    y[b] -= step;
                    if (!inside(y)) continue;
                    const double fy = f(y);
                    if (fy < fx) {
                        x = y;
                        fx = fy;
                        improved = true;
                    }
                }
        }
        if (!improved) step *= 0.5;
    }
    return x;
}

}  // namespace internal

/// minimise sum p_i E_i over the simplex with sum_i sqrt(p_i / M_i) >= 1/sqrt(m), E ascending, k >= 2.
/// p_3..p_k are searched; for fixed values the best (p_1, p_2) is closed form.
inline BruteResult brute_force_spectrum(const std::vector<double>& E, const std::vector<double>& M, double m,
                                        int mesh = 30) {
    const int k = static_cast<int>(E.size());
    const double r = 1.0 / std::sqrt(m);
    const double R = std::sqrt(1.0 / M[0] + 1.0 / M[1]);
    const double phi = std::atan2(1.0 / std::sqrt(M[1]), 1.0 / std::sqrt(M[0]));

    auto complete = [&](const std::vector<double>& rest, std::vector<double>* p_out) {
        double s = 0.0, g = 0.0, e = 0.0;
        for (int i = 0; i < k - 2; ++i) {
            s += rest[i];
            g += std::sqrt(rest[i] / M[i + 2]);
            e += rest[i] * E[i + 2];
        }
        const double a = 1.0 - s;
        if (a < 0.0) return std::numeric_limits<double>::infinity();
        const double need = r - g;
        double theta = 0.0;
        if (need > 0.0) {
            if (a == 0.0) return std::numeric_limits<double>::infinity();
            const double c = need / (std::sqrt(a) * R);
            if (c > 1.0) return std::numeric_limits<double>::infinity();
            theta = std::max(0.0, phi - std::acos(c));
        }
        const double p1 = a * std::cos(theta) * std::cos(theta);
        const double p2 = a * std::sin(theta) * std::sin(theta);
        if (p_out) {
            p_out->assign(k, 0.0);
            (*p_out)[0] = p1;
            (*p_out)[1] = p2;
            for (int i = 0; i < k - 2; ++i) (*p_out)[i + 2] = rest[i];
        }
        return e + p1 * E[0] + p2 * E[1];
    };

    BruteResult out;
    std::vector<double> best(k - 2, 0.0);
    if (k > 2) {
        internal::for_each_mesh_point(k - 2, mesh, [&](const std::vector<double>& x) {
            const double v = complete(x, nullptr);
            if (v < out.objective) {
                out.objective = v;
                best = x;
            }
        });
        best = internal::compass([&](const std::vector<double>& x) { return complete(x, nullptr); }, best,
                                 1.0 / mesh, 1e-11);
    }
    out.objective = complete(best, &out.p);
    return out;
}

/// minimise sum p_i E_i over the simplex subject to sum_ij gamma_ij sqrt(p_i p_j) >= 1/m,
/// for E ascending with a unique minimum E_1. Points are written p = (1 - s) e_1 + s w with
/// w on the face opposite e_1; for fixed w the objective grows with s, so the best s is the
/// smallest feasible one, found by bisection on the concave constraint along the segment.
inline BruteResult brute_force_gamma(const std::vector<double>& E, const std::vector<std::vector<double>>& gamma,
                                     double m, int mesh = 200) {
    const int k = static_cast<int>(E.size());
    const double target = 1.0 / m;
    auto g_of = [&](const std::vector<double>& p) {
        double g = 0.0;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) g += gamma[i][j] * std::sqrt(p[i] * p[j]);
        return g;
    };
    auto point = [&](const std::vector<double>& w, double s) {
        std::vector<double> p(k, 0.0);
        p[0] = 1.0 - s;
        for (int i = 1; i < k; ++i) p[i] = s * w[i - 1];
        return p;
    };
    if (g_of(point(std::vector<double>(k - 1, 0.0), 0.0)) >= target) {
        BruteResult r;
        r.p.assign(k, 0.0);
        r.p[0] = 1.0;
        r.objective = E[0];
        return r;
    }
    auto smallest_s = [&](const std::vector<double>& w) {
        // Golden-section search for the maximiser of the concave g(s).
        double a = 0.0, b = 1.0;
        const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
        double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
        double gc = g_of(point(w, c)), gd = g_of(point(w, d));
        for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
            if (gc < gd) {
                a = c;
                c = d;
                gc = gd;
                d = a + inv_phi * (b - a);
                gd = g_of(point(w, d));
            } else {
                b = d;
                d = c;
                gd = gc;
                c = b - inv_phi * (b - a);
                gc = g_of(point(w, c));
            }
        }
        const double s_max = 0.5 * (a + b);
        if (g_of(point(w, s_max)) < target) return std::numeric_limits<double>::infinity();
        double lo = 0.0, hi = s_max;
        for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
            const double mid = 0.5 * (lo + hi);
            (g_of(point(w, mid)) >= target ? hi : lo) = mid;
        }
        return hi;
    };
    auto objective = [&](const std::vector<double>& x) {
        // x holds w_2..w_{k-1}; w_1 takes the rest.
        double rest = 1.0;
        for (double v : x) rest -= v;
        if (rest < -1e-15) return std::numeric_limits<double>::infinity();
        std::vector<double> w(k - 1);
        w[0] = std::max(0.0, rest);
        for (int i = 1; i < k - 1; ++i) w[i] = x[i - 1];
        const double s = smallest_s(w);
        if (!std::isfinite(s)) return std::numeric_limits<double>::infinity();
        double e = 0.0;
        for (int i = 1; i < k; ++i) e += w[i - 1] * E[i];
        return E[0] + s * (e - E[0]);
    };

    std::vector<double> best(k - 2, 0.0);
    double best_value = std::numeric_limits<double>::infinity();
    if (k > 2) {
        internal::for_each_mesh_point(k - 2, mesh, [&](const std::vector<double>& x) {
            const double v = objective(x);
            if (v < best_value) {
                best_value = v;
                best = x;
            }
        });
        best = internal::compass(objective, best, 1.0 / mesh, 1e-10);
    }
    BruteResult r;
    r.objective = objective(best);
    double rest = 1.0;
    for (double v : best) rest -= v;
    std::vector<double> w(k - 1);
    w[0] = std::max(0.0, rest);
    for (int i = 1; i < k - 1; ++i) w[i] = best[i - 1];
    r.p = point(w, smallest_s(w));
    return r;
}

}  // namespace oracle
