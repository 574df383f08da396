#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "spectra_lab/linalg.hpp"

namespace spectra_lab {

inline double harmonic_mean(const std::vector<double>& v) {
    detail::require(!v.empty(), "harmonic_mean: empty list");
    linalg::CompensatedSum inv;
    for (double x : v) {
        detail::require(x > 0.0 && std::isfinite(x), "harmonic_mean: entries must be positive and finite");
        inv.add(1.0 / x);
    }
    return static_cast<double>(v.size()) / inv.value();
}

/// Minimise sum_i p_i E_i over the simplex subject to sum_i sqrt(p_i / M_i) >= 1/sqrt(m).
struct SpectrumProblem {
    std::vector<double> E;  // ascending
    std::vector<double> M;  // stable ranks of the eigenstates
    double m = 1.0;         // stable rank budget

    std::size_t k() const { return E.size(); }

    void validate() const {
        detail::require(!E.empty(), "SpectrumProblem: k must be >= 1");
        detail::require(E.size() == M.size(), "SpectrumProblem: E and M differ in length");
        detail::require(m > 0.0 && std::isfinite(m), "SpectrumProblem: m must be positive");
        for (std::size_t i = 0; i < E.size(); ++i) {
            detail::require(std::isfinite(E[i]), "SpectrumProblem: non-finite energy");
            detail::require(M[i] > 0.0 && std::isfinite(M[i]), "SpectrumProblem: M entries must be positive");
            if (i > 0) detail::require(E[i - 1] <= E[i], "SpectrumProblem: energies must be ascending");
        }
    }
};

enum class SpectrumCase { DegenerateGround, Infeasible, Boundary, Generic };

inline std::string to_string(SpectrumCase c) {
    switch (c) {
        case SpectrumCase::DegenerateGround: return "DEGENERATE_L";
        case SpectrumCase::Infeasible: return "INFEASIBLE";
        case SpectrumCase::Boundary: return "BOUNDARY";
        case SpectrumCase::Generic: return "GENERIC";
    }
    return "?";
}

struct NonTrivialityReport {
    std::size_t l = 0;  // ground multiplicity
    SpectrumCase kind = SpectrumCase::Generic;
    double harmonic_l = 0.0;
    double harmonic_k = 0.0;
};

inline constexpr double kEnergyTieTol = 1e-12;
inline constexpr double kThresholdTol = 1e-12;

inline std::size_t ground_multiplicity(const std::vector<double>& E) {
    const double tol = kEnergyTieTol * std::max(1.0, std::abs(E.front()));
    std::size_t l = 0;
    while (l < E.size() && E[l] - E.front() <= tol) ++l;
    return l;
}

inline NonTrivialityReport classify(const SpectrumProblem& problem) {
    problem.validate();
    NonTrivialityReport r;
    r.l = ground_multiplicity(problem.E);
    r.harmonic_l = harmonic_mean(std::vector<double>(problem.M.begin(), problem.M.begin() + r.l));
    r.harmonic_k = harmonic_mean(problem.M);
    const double k = static_cast<double>(problem.k());
    const double l = static_cast<double>(r.l);
    const double threshold_k = r.harmonic_k / problem.m;
    const double threshold_l = r.harmonic_l / problem.m;
    const double tol_k = kThresholdTol * std::max(1.0, k);
    if (k < threshold_k - tol_k)
        r.kind = SpectrumCase::Infeasible;
    else if (l >= threshold_l - kThresholdTol * std::max(1.0, l))
        r.kind = SpectrumCase::DegenerateGround;
    else if (std::abs(k - threshold_k) <= tol_k)
        r.kind = SpectrumCase::Boundary;
    else
        r.kind = SpectrumCase::Generic;
    return r;
}

/// h(nu) = nu + 1 / (m S_1(nu)) on nu < E_1 with S_p(nu) = sum_i 1 / (M_i (E_i - nu)^p).
/// Internally everything is written in t = E_1 - nu > 0 and offsets
/// d_i = E_i - E_1, which keeps E_i - nu exact when nu is close to E_1.
class DualFunction {
public:
    explicit DualFunction(const SpectrumProblem& problem) : m_(problem.m), e1_(problem.E.front()) {
        problem.validate();
        d_.reserve(problem.k());
        inv_m_.reserve(problem.k());
        for (std::size_t i = 0; i < problem.k(); ++i) {
            d_.push_back(problem.E[i] - e1_);
            inv_m_.push_back(1.0 / problem.M[i]);
        }
    }

    double e1() const { return e1_; }
    double m() const { return m_; }

    struct Sums {
        double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    };

    Sums sums_t(double t) const {
        linalg::CompensatedSum a, b, c;
        for (std::size_t i = 0; i < d_.size(); ++i) {
            const double x = 1.0 / (d_[i] + t);
            const double w = inv_m_[i] * x;
            a.add(w);
            b.add(w * x);
            c.add(w * x * x);
        }
        return {a.value(), b.value(), c.value()};
    }

    double S(int p, double nu) const {
        detail::require(p >= 1 && p <= 3, "DualFunction::S: p must be 1, 2 or 3");
        const Sums s = sums_t(e1_ - nu);
        return p == 1 ? s.s1 : (p == 2 ? s.s2 : s.s3);
    }

    double h(double nu) const { return nu + 1.0 / (m_ * sums_t(e1_ - nu).s1); }

    double h1(double nu) const { return dh_t(e1_ - nu); }

    double h2(double nu) const {
        const Sums s = sums_t(e1_ - nu);
        return -(2.0 / m_) * (s.s1 * s.s3 - s.s2 * s.s2) / (s.s1 * s.s1 * s.s1);
    }

    /// h'(E_1 - t).
    double dh_t(double t) const {
        const Sums s = sums_t(t);
        return 1.0 - s.s2 / (m_ * s.s1 * s.s1);
    }

    /// Limits of h' at nu -> E_1^- and nu -> -infinity.
    double h1_at_e1(std::size_t l) const {
        linalg::CompensatedSum g;
        for (std::size_t i = 0; i < l; ++i) g.add(inv_m_[i]);
        return 1.0 - 1.0 / (m_ * g.value());
    }
    double h1_at_minus_infinity() const {
        linalg::CompensatedSum g;
        for (double x : inv_m_) g.add(x);
        return 1.0 - 1.0 / (m_ * g.value());
    }

private:
    double m_;
    double e1_;
    std::vector<double> d_;
    std::vector<double> inv_m_;
};

struct NuStarResult {
    double nu = 0.0;
    double h1 = 0.0;  // h'(nu*)
    int iterations = 0;
};

/// Root of h' below E_1 in the GENERIC case. The root is bracketed by
/// doubling t = E_1 - nu from max(1, E_k - E_1) until h' > 0, then refined
/// by Newton steps that fall back to bisection whenever they leave the bracket.
inline NuStarResult solve_nu_star_detailed(const SpectrumProblem& problem) {
    const auto report = classify(problem);
    if (report.kind != SpectrumCase::Generic)
        throw InvalidArgument("solve_nu_star: problem is " + to_string(report.kind) + ", not GENERIC");
    const DualFunction f(problem);
    const double span = problem.E.back() - problem.E.front();
    const double delta = std::max(1.0, span);

    double lo = 0.0;  // h' < 0 in the limit t -> 0+
    double hi = delta;
    double f_hi = f.dh_t(hi);
    while (!(f_hi > 0.0)) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6 * delta) throw NumericalError("solve_nu_star: bracket expansion failed");
        f_hi = f.dh_t(hi);
    }
    const double f_lo_limit = f.h1_at_e1(report.l);
    const double tol = 1e-12 * std::max({1.0, std::abs(f_hi), std::abs(f_lo_limit)});

    double t = 0.5 * (lo + hi);
    NuStarResult out;
    for (int iter = 1; iter <= 200; ++iter) {
        out.iterations = iter;
        const auto s = f.sums_t(t);
        const double g = 1.0 - s.s2 / (problem.m * s.s1 * s.s1);
        if (std::abs(g) <= tol) {
            out.nu = f.e1() - t;
            out.h1 = g;
            return out;
        }
        if (g < 0.0)
            lo = t;
        else
            hi = t;
        // dg/dt = -h''(nu) > 0.
        const double slope = (2.0 / problem.m) * (s.s1 * s.s3 - s.s2 * s.s2) / (s.s1 * s.s1 * s.s1);
        double next = slope > 0.0 ? t - g / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (next == t || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
            out.nu = f.e1() - t;
            out.h1 = g;
            if (std::abs(g) <= 1e-9) return out;  // bracket at machine resolution
            throw NumericalError("solve_nu_star: stalled with h' = " + std::to_string(g));
        }
        t = next;
    }
    throw NumericalError("solve_nu_star: no convergence in 200 iterations");
}

inline double solve_nu_star(const SpectrumProblem& problem) { return solve_nu_star_detailed(problem).nu; }

struct PredictedSpectrum {
    std::vector<double> p;
    std::optional<double> nu_star;
    double optimum_energy = 0.0;
    SpectrumCase kind = SpectrumCase::Generic;
    std::size_t l = 0;
};

inline PredictedSpectrum predict(const SpectrumProblem& problem) {
    const auto report = classify(problem);
    PredictedSpectrum out;
    out.kind = report.kind;
    out.l = report.l;
    out.p.assign(problem.k(), 0.0);
    switch (report.kind) {
        case SpectrumCase::Infeasible:
            throw InfeasibleError("predict: no feasible spectrum (k < H(M)/m)");
        case SpectrumCase::DegenerateGround: {
            linalg::CompensatedSum total;
            for (std::size_t i = 0; i < report.l; ++i) total.add(1.0 / problem.M[i]);
            for (std::size_t i = 0; i < report.l; ++i) out.p[i] = (1.0 / problem.M[i]) / total.value();
            out.optimum_energy = problem.E.front();
            return out;
        }
        case SpectrumCase::Boundary: {
            linalg::CompensatedSum total, energy;
            for (std::size_t i = 0; i < problem.k(); ++i) total.add(1.0 / problem.M[i]);
            // p_i = m / M_i up to the tolerance of the boundary test; normalise exactly.
            for (std::size_t i = 0; i < problem.k(); ++i) {
                out.p[i] = (1.0 / problem.M[i]) / total.value();
                energy.add(out.p[i] * problem.E[i]);
            }
            out.optimum_energy = energy.value();
            return out;
        }
        case SpectrumCase::Generic: {
            const double nu = solve_nu_star(problem);
            const double e1 = problem.E.front();
            const double t = e1 - nu;
            linalg::CompensatedSum total;
            for (std::size_t i = 0; i < problem.k(); ++i) {
                const double gap = (problem.E[i] - e1) + t;
                out.p[i] = 1.0 / (problem.M[i] * gap * gap);
                total.add(out.p[i]);
            }
            for (double& x : out.p) x /= total.value();
            out.nu_star = nu;
            out.optimum_energy = DualFunction(problem).h(nu);
            return out;
        }
    }
    return out;
}

struct OptimalityResiduals {
    double normalization = 0.0;  // |sum p - 1|
    double constraint = 0.0;     // |sum sqrt(p_i / M_i) - 1/sqrt(m)| (negative slack for DEGENERATE_L is allowed)
    double stationarity = 0.0;   // max_i |p_i - lambda0^2 / (4 M_i (E_i - nu*)^2)|
    double duality_gap = 0.0;    // |sum p_i E_i - optimum_energy|
    double lambda0 = 0.0;

    double worst() const { return std::max({normalization, constraint, stationarity, duality_gap}); }
};

/// Substitutes a prediction back into the primal problem and its KKT system.
/// Throws NumericalError when a residual exceeds tol.
inline OptimalityResiduals primal_optimum_check(const SpectrumProblem& problem, const PredictedSpectrum& spectrum,
                                                double tol = 1e-10) {
    detail::require(spectrum.p.size() == problem.k(), "primal_optimum_check: length mismatch");
    OptimalityResiduals r;
    linalg::CompensatedSum total, g, energy;
    for (std::size_t i = 0; i < problem.k(); ++i) {
        detail::require(spectrum.p[i] >= 0.0, "primal_optimum_check: negative probability");
        total.add(spectrum.p[i]);
        g.add(std::sqrt(spectrum.p[i] / problem.M[i]));
        energy.add(spectrum.p[i] * problem.E[i]);
    }
    r.normalization = std::abs(total.value() - 1.0);
    const double slack = g.value() - 1.0 / std::sqrt(problem.m);
    r.duality_gap = std::abs(energy.value() - spectrum.optimum_energy);

    switch (spectrum.kind) {
        case SpectrumCase::DegenerateGround:
            r.constraint = slack >= -tol ? 0.0 : -slack;
            break;
        case SpectrumCase::Boundary:
            r.constraint = std::abs(slack);
            break;
        case SpectrumCase::Generic: {
            r.constraint = std::abs(slack);
            const DualFunction f(problem);
            const double nu = spectrum.nu_star.value();
            const double t = f.e1() - nu;
            const auto s = f.sums_t(t);
            // Maximiser of lambda0 / sqrt(m) - lambda0^2 S_1 / 4.
            r.lambda0 = 2.0 / (std::sqrt(problem.m) * s.s1);
            for (std::size_t i = 0; i < problem.k(); ++i) {
                const double gap = (problem.E[i] - f.e1()) + t;
                const double expected = r.lambda0 * r.lambda0 / (4.0 * problem.M[i] * gap * gap);
                r.stationarity = std::max(r.stationarity, std::abs(spectrum.p[i] - expected));
            }
            break;
        }
        case SpectrumCase::Infeasible:
            throw InvalidArgument("primal_optimum_check: infeasible problem");
    }
    if (r.worst() > tol)
        throw NumericalError("primal_optimum_check: residual " + std::to_string(r.worst()) + " above tolerance");
    return r;
}

// ---------------------------------------------------------------------------
// Coefficient bound for an explicit eigen-expansion

struct CoefficientBound {
    double lhs = 0.0;  // sum_i |alpha_i| / sqrt(M_i)
    double rhs = 0.0;  // 1 / sqrt(m)
    bool holds = false;
    std::size_t terms = 0;            // nonzero coefficients
    double term_lower_bound = 0.0;    // H(M over nonzero terms) / m
    bool term_bound_holds = false;
};

/// For psi = sum_i alpha_i psi_i with chi(psi) = m and chi(psi_i) <= M_i.
inline CoefficientBound coefficient_bound(const std::vector<Complex>& alpha, const std::vector<double>& M, double m,
                                          double zero_tol = 0.0) {
    detail::require(alpha.size() == M.size() && !alpha.empty(), "coefficient_bound: length mismatch");
    detail::require(m > 0.0, "coefficient_bound: m must be positive");
    CoefficientBound b;
    linalg::CompensatedSum lhs;
    std::vector<double> support;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        lhs.add(std::abs(alpha[i]) / std::sqrt(M[i]));
        if (std::abs(alpha[i]) > zero_tol) support.push_back(M[i]);
    }
    b.lhs = lhs.value();
    b.rhs = 1.0 / std::sqrt(m);
    b.holds = b.lhs >= b.rhs * (1.0 - 1e-12);
    b.terms = support.size();
    b.term_lower_bound = support.empty() ? 0.0 : harmonic_mean(support) / m;
    b.term_bound_holds = static_cast<double>(b.terms) >= b.term_lower_bound * (1.0 - 1e-12);
    return b;
}

// ---------------------------------------------------------------------------
// Post-processing

/// sum_i p_i N(x; E_i, width^2) at each grid point.
inline std::vector<double> broaden(const std::vector<double>& E, const std::vector<double>& p, double width,
                                   const std::vector<double>& grid) {
    detail::require(E.size() == p.size(), "broaden: length mismatch");
    detail::require(width > 0.0, "broaden: width must be positive");
    const double norm = 1.0 / (width * std::sqrt(2.0 * std::numbers::pi));
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        linalg::CompensatedSum acc;
        for (std::size_t i = 0; i < E.size(); ++i) {
            const double z = (grid[g] - E[i]) / width;
            acc.add(p[i] * norm * std::exp(-0.5 * z * z));
        }
        out[g] = acc.value();
    }
    return out;
}

/// [E_1 - 1, E_k + 1] with step width / 5.
inline std::vector<double> default_grid(double e_min, double e_max, double width) {
    detail::require(width > 0.0 && e_max >= e_min, "default_grid: bad range");
    const double step = width / 5.0;
    const double lo = e_min - 1.0;
    const auto count = static_cast<std::size_t>(std::floor((e_max + 1.0 - lo) / step + 1e-9)) + 1;
    std::vector<double> grid(count);
    for (std::size_t i = 0; i < count; ++i) grid[i] = lo + step * static_cast<double>(i);
    return grid;
}

struct Bin {
    long long j = 0;
    double center = 0.0;  // 0.1 j
    double mean = 0.0;
    std::size_t count = 0;
};

/// Means of values whose x falls in [0.1 j - 0.05, 0.1 j + 0.05). Empty bins are omitted.
inline std::vector<Bin> bin_means(const std::vector<std::pair<double, double>>& pairs) {
    std::map<long long, std::pair<linalg::CompensatedSum, std::size_t>> acc;
    for (auto [x, v] : pairs) {
        const auto j = static_cast<long long>(std::floor(x * 10.0 + 0.5));
        auto& slot = acc[j];
        slot.first.add(v);
        ++slot.second;
    }
    std::vector<Bin> out;
    for (auto& [j, slot] : acc)
        out.push_back({j, 0.1 * static_cast<double>(j), slot.first.value() / static_cast<double>(slot.second), slot.second});
    return out;
}

}  // namespace spectra_lab
