#pragma once

// Closed forms for Hamiltonians with exactly two distinct energy levels, and the
// m_C / m_Q comparison built on them.

#include <cmath>
#include <string>
#include <vector>

#include "spectra_lab/errors.hpp"
#include "spectra_lab/predictor.hpp"

namespace spectra_lab {

/// a1, a2 are the sums of 1/M_i over the ground and excited levels.
struct TwoLevelSystem {
    double xi1 = 0.0;
    double xi2 = 1.0;
    double a1 = 1.0;
    double a2 = 1.0;

    double gap() const { return xi2 - xi1; }
    double p_floor() const { return a1 / (a1 + a2); }

    void validate() const {
        detail::require(std::isfinite(xi1) && std::isfinite(xi2) && gap() > 0.0, "TwoLevelSystem: need xi2 > xi1");
        detail::require(a1 > 0.0 && a2 > 0.0 && std::isfinite(a1) && std::isfinite(a2),
                        "TwoLevelSystem: a1, a2 must be positive");
    }
};

struct TwoLevelPoint {
    double mu = 0.0;
    double m = 0.0;
    double p = 0.0;  // weight on the ground level
    double energy = 0.0;
};

inline TwoLevelPoint spectrum_from_mu(const TwoLevelSystem& sys, double mu) {
    sys.validate();
    if (!(mu > 0.0 && mu < 1.0)) throw InvalidArgument("spectrum_from_mu: mu must lie in (0, 1)");
    const double a1 = sys.a1, a2 = sys.a2;
    TwoLevelPoint out;
    out.mu = mu;
    out.m = (a1 + mu * a2) / (a1 * (a1 + a2));
    const double top = a1 + std::sqrt(mu) * a2;
    out.p = top * top / ((a1 + a2) * (a1 + mu * a2));
    out.energy = sys.xi1 + sys.gap() * (1.0 - out.p);
    return out;
}

inline double m_from_p(const TwoLevelSystem& sys, double p) {
    sys.validate();
    if (!(p > sys.p_floor() && p < 1.0))
        throw InvalidArgument("m_from_p: p must lie in (a1/(a1+a2), 1), got " + std::to_string(p));
    const double root = std::sqrt(sys.a1 * p) + std::sqrt(sys.a2 * (1.0 - p));
    return 1.0 / (root * root);
}

enum class AdvantageCase { GroundHeavy, ExcitedHeavy };  // a1 >= a2, a1 <= a2

inline std::string to_string(AdvantageCase c) { return c == AdvantageCase::GroundHeavy ? "a1>=a2" : "a1<=a2"; }

struct AdvantageReport {
    double m_q = 0.0;
    double m_c = 0.0;
    double ratio = 0.0;  // m_C / m_Q
    AdvantageCase case_tag = AdvantageCase::GroundHeavy;
    // Sandwich on m for both p values, from the case analysis.
    double m_q_lower = 0.0, m_q_upper = 0.0;
    double m_c_lower = 0.0, m_c_upper = 0.0;
    double ratio_bound = 0.0;
    bool bounds_hold = false;
};

/// The case split bounds m between c^-1 (sqrt p + sqrt(1-p))^-2 and c^-1 q^-1, where
/// (c, q) = (a1, p) when a1 >= a2 and (a2, 1 - p) otherwise. Dividing the upper bound
/// at p_C by the lower bound at p_Q gives the ratio bound.
inline AdvantageReport advantage(const TwoLevelSystem& sys, double p_quantum, double p_classical) {
    AdvantageReport r;
    r.m_q = m_from_p(sys, p_quantum);
    r.m_c = m_from_p(sys, p_classical);
    r.ratio = r.m_c / r.m_q;
    r.case_tag = sys.a1 >= sys.a2 ? AdvantageCase::GroundHeavy : AdvantageCase::ExcitedHeavy;
    const bool ground = r.case_tag == AdvantageCase::GroundHeavy;
    const double c = ground ? sys.a1 : sys.a2;
    auto lower = [&](double p) {
        const double s = std::sqrt(p) + std::sqrt(1.0 - p);
        return 1.0 / (c * s * s);
    };
    auto upper = [&](double p) { return 1.0 / (c * (ground ? p : 1.0 - p)); };
    r.m_q_lower = lower(p_quantum);
    r.m_q_upper = upper(p_quantum);
    r.m_c_lower = lower(p_classical);
    r.m_c_upper = upper(p_classical);
    r.ratio_bound = r.m_c_upper / r.m_q_lower;
    const double slack = 1e-12;
    auto within = [&](double v, double lo, double hi) { return v >= lo * (1 - slack) && v <= hi * (1 + slack); };
    r.bounds_hold = within(r.m_q, r.m_q_lower, r.m_q_upper) && within(r.m_c, r.m_c_lower, r.m_c_upper) &&
                    r.ratio <= r.ratio_bound * (1 + slack);
    return r;
}

/// Spreads a1 over `ground_count` equal stable ranks and a2 over `excited_count`,
/// runs the general predictor and compares the level-summed weight with the closed form.
/// Returns max(|p_pred - p|, |E_pred - E|).
inline double cross_check_predictor(const TwoLevelSystem& sys, double mu, int ground_count, int excited_count) {
    detail::require(ground_count >= 1 && excited_count >= 1, "cross_check_predictor: counts must be >= 1");
    const auto closed = spectrum_from_mu(sys, mu);
    SpectrumProblem problem;
    for (int i = 0; i < ground_count; ++i) {
        problem.E.push_back(sys.xi1);
        problem.M.push_back(ground_count / sys.a1);
    }
    for (int i = 0; i < excited_count; ++i) {
        problem.E.push_back(sys.xi2);
        problem.M.push_back(excited_count / sys.a2);
    }
    problem.m = closed.m;
    const auto kind = classify(problem).kind;
    if (kind != SpectrumCase::Generic)
        throw InvalidArgument("cross_check_predictor: problem classified " + to_string(kind));
    const auto predicted = predict(problem);
    double p = 0.0;
    for (int i = 0; i < ground_count; ++i) p += predicted.p[i];
    return std::max(std::abs(p - closed.p), std::abs(predicted.optimum_energy - closed.energy));
}

/// Dense mu sweep on (0, 1), endpoints excluded.
inline std::vector<TwoLevelPoint> two_level_sweep(const TwoLevelSystem& sys, int points) {
    detail::require(points >= 1, "two_level_sweep: need at least one point");
    std::vector<TwoLevelPoint> out;
    out.reserve(points);
    for (int i = 1; i <= points; ++i) out.push_back(spectrum_from_mu(sys, static_cast<double>(i) / (points + 1)));
    return out;
}

}  // namespace spectra_lab
