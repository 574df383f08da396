#pragma once

// Haar-random orthonormal bases of d x d matrices and Monte Carlo statistics of
// A = ||sum alpha_i Gamma_i|| and B = sum |alpha_i| ||Gamma_i||.
//
// Reproducibility: every trial draws from its own mt19937_64 seeded with
// splitmix64(seed, trial), so results depend only on (seed, trial index).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include "json.hpp"
#include "spectra_lab/errors.hpp"
#include "spectra_lab/linalg.hpp"

namespace spectra_lab {

/// One step of the splitmix64 mixer applied to seed + stream * golden gamma.
inline std::uint64_t splitmix64(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + (stream + 1) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

/// Entries a + ib with a, b independent standard normals.
inline ComplexMatrix sample_ginibre(Index rows, Index cols, Rng& rng) {
    detail::require(rows >= 1 && cols >= 1, "sample_ginibre: dimensions must be >= 1");
    std::normal_distribution<double> normal(0.0, 1.0);
    ComplexMatrix g(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) {
            const double re = normal(rng);
            g(i, j) = Complex(re, normal(rng));
        }
    return g;
}

inline ComplexMatrix sample_ginibre(Index d, std::uint64_t seed) {
    Rng rng(seed);
    return sample_ginibre(d, d, rng);
}

/// QR of a Ginibre matrix with the phases of diag(R) pushed into Q, which makes Q Haar.
inline ComplexMatrix haar_unitary(Index k, Rng& rng) {
    const ComplexMatrix g = sample_ginibre(k, k, rng);
    Eigen::HouseholderQR<ComplexMatrix> qr(g);
    ComplexMatrix q = qr.householderQ();
    for (Index j = 0; j < k; ++j) {
        const Complex r = qr.matrixQR()(j, j);
        const double a = std::abs(r);
        if (a > 0.0) q.col(j) *= r / a;
    }
    return q;
}

inline ComplexMatrix haar_unitary(Index k, std::uint64_t seed) {
    Rng rng(seed);
    return haar_unitary(k, rng);
}

/// Gamma_i(r, c) = U(r d + c, i): column i of a Haar unitary laid out over the matrix units.
struct HaarBasisSample {
    Index d = 0;
    Index k = 0;
    std::uint64_t seed = 0;
    ComplexMatrix unitary;  // k x k

    ComplexMatrix gamma(Index i) const { return as_matrix(unitary.col(i)); }

    /// sum_i c_i Gamma_i
    ComplexMatrix combine(const StateVector& c) const { return as_matrix(unitary * c); }

    /// max |tr(Gamma_i^H Gamma_j) - delta_ij|
    double orthonormality_error() const {
        return (unitary.adjoint() * unitary - ComplexMatrix::Identity(k, k)).cwiseAbs().maxCoeff();
    }

private:
    ComplexMatrix as_matrix(const StateVector& v) const {
        ComplexMatrix m(d, d);
        for (Index r = 0; r < d; ++r)
            for (Index c = 0; c < d; ++c) m(r, c) = v(r * d + c);
        return m;
    }
};

inline HaarBasisSample sample_basis(Index d, std::uint64_t seed) {
    detail::require(d >= 1, "sample_basis: d must be >= 1");
    HaarBasisSample s;
    s.d = d;
    s.k = d * d;
    s.seed = seed;
    s.unitary = haar_unitary(s.k, seed);
    return s;
}

/// sup |F_a - F_b| between two empirical distributions.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    detail::require(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

/// sup |F_n - F| for a continuous reference CDF.
template <class Cdf>
double ks_one_sample(std::vector<double> xs, Cdf&& cdf) {
    detail::require(!xs.empty(), "ks_one_sample: empty sample");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

/// Asymptotic Kolmogorov critical value at level 1e-3.
inline constexpr double kKsCritical = 1.949;

inline double quantile(std::vector<double> xs, double q) {
    detail::require(!xs.empty(), "quantile: empty sample");
    std::sort(xs.begin(), xs.end());
    const double pos = q * (xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - lo) * (xs[hi] - xs[lo]);
}

struct TailCheck {
    double r = 0.0;
    double empirical = 0.0;
    double bound = 0.0;
    double standard_error = 0.0;  // of the empirical frequency
    bool holds = false;
};

inline void to_json(nlohmann::json& j, const TailCheck& t) {
    j = {{"r", t.r}, {"empirical", t.empirical}, {"bound", t.bound}, {"standard_error", t.standard_error},
         {"holds", t.holds}};
}

namespace internal {

inline TailCheck tail_check(double r, std::size_t hits, std::size_t trials, double bound) {
    TailCheck t;
    t.r = r;
    t.empirical = static_cast<double>(hits) / trials;
    t.bound = bound;
    t.standard_error = std::sqrt(t.empirical * (1.0 - t.empirical) / trials);
    t.holds = t.empirical <= bound + 3.0 * t.standard_error;
    return t;
}

inline double mean(const std::vector<double>& v) {
    linalg::CompensatedSum s;
    for (double x : v) s.add(x);
    return s.value() / v.size();
}

inline double variance(const std::vector<double>& v) {
    const double m = mean(v);
    linalg::CompensatedSum s;
    for (double x : v) s.add((x - m) * (x - m));
    return v.size() > 1 ? s.value() / (v.size() - 1) : 0.0;
}

}  // namespace internal

struct ConcentrationReport {
    Index d = 0;
    Index k = 0;
    double alpha_norm1 = 0.0;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    double mean_a = 0.0, var_a = 0.0;
    double mean_b = 0.0, var_b = 0.0;
    double pilot_mean_b = 0.0;  // independent run used to centre the tail check
    double ratio = 0.0;         // mean(A) ||alpha||_1 / mean(B)
    double max_a_minus_b = 0.0;  // <= 0 when A <= B in every trial
    std::vector<TailCheck> tails;
    std::vector<double> a_samples;
    std::vector<double> b_samples;

    nlohmann::json to_json() const {
        return {{"d", d},           {"k", k},           {"alpha_norm1", alpha_norm1}, {"trials", trials},
                {"seed", seed},     {"mean_A", mean_a}, {"mean_B", mean_b},           {"var_A", var_a},
                {"var_B", var_b},   {"pilot_mean_B", pilot_mean_b}, {"ratio", ratio},
                {"max_A_minus_B", max_a_minus_b}, {"tails", tails}};
    }
};

namespace internal {

/// Largest singular value from the top eigenvalue of the d x d Gram matrix.
/// Several times cheaper than an SVD for the small blocks used in the trials.
inline double top_singular(const ComplexMatrix& m) {
    const ComplexMatrix gram = m.rows() <= m.cols() ? ComplexMatrix(m * m.adjoint()) : ComplexMatrix(m.adjoint() * m);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> s(gram, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, s.eigenvalues()(s.eigenvalues().size() - 1)));
}

/// (A, B) for one Haar basis drawn from `seed`.
inline std::pair<double, double> ab_trial(const StateVector& alpha, Index d, std::uint64_t seed) {
    const auto basis = sample_basis(d, seed);
    const double a = top_singular(basis.combine(alpha));
    linalg::CompensatedSum b;
    for (Index i = 0; i < basis.k; ++i)
        if (alpha(i) != 0.0) b.add(std::abs(alpha(i)) * top_singular(basis.gamma(i)));
    return {a, b.value()};
}

}  // namespace internal

/// Monte Carlo over Haar bases. Trials use streams [0, trials) of `seed`; the pilot
/// run for the centring mean uses streams [trials, 2 trials), so the tail
/// frequencies never reuse the samples that fixed the centre.
inline ConcentrationReport ab_statistics(const std::vector<Complex>& alpha, Index d, std::size_t trials,
                                         std::uint64_t seed, const std::vector<double>& tail_r = {}) {
    detail::require(d >= 1 && trials >= 2, "ab_statistics: need d >= 1 and trials >= 2");
    const Index k = d * d;
    detail::require(static_cast<Index>(alpha.size()) == k, "ab_statistics: alpha must have d^2 entries");
    double norm2 = 0.0, norm1 = 0.0;
    for (const auto& a : alpha) {
        norm2 += std::norm(a);
        norm1 += std::abs(a);
    }
    detail::require(std::abs(norm2 - 1.0) <= 1e-10, "ab_statistics: alpha must be normalised");
    const StateVector a = Eigen::Map<const StateVector>(alpha.data(), k);

    ConcentrationReport r;
    r.d = d;
    r.k = k;
    r.alpha_norm1 = norm1;
    r.trials = trials;
    r.seed = seed;
    r.max_a_minus_b = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
        const auto [av, bv] = internal::ab_trial(a, d, splitmix64(seed, t));
        r.a_samples.push_back(av);
        r.b_samples.push_back(bv);
        r.max_a_minus_b = std::max(r.max_a_minus_b, av - bv);
    }
    std::vector<double> pilot;
    for (std::size_t t = 0; t < trials; ++t) pilot.push_back(internal::ab_trial(a, d, splitmix64(seed, trials + t)).second);

    r.mean_a = internal::mean(r.a_samples);
    r.var_a = internal::variance(r.a_samples);
    r.mean_b = internal::mean(r.b_samples);
    r.var_b = internal::variance(r.b_samples);
    r.pilot_mean_b = internal::mean(pilot);
    r.ratio = r.mean_a * norm1 / r.mean_b;

    const double sk = std::sqrt(static_cast<double>(k));
    const std::vector<double> rs = tail_r.empty() ? std::vector<double>{0.5 / sk, 1.0 / sk, 2.0 / sk} : tail_r;
    for (double rr : rs) {
        std::size_t hits = 0;
        for (double b : r.b_samples)
            if (std::abs(b - r.pilot_mean_b) >= rr) ++hits;
        r.tails.push_back(internal::tail_check(rr, hits, trials, 2.0 * std::exp(-static_cast<double>(k) * rr * rr / 24.0)));
    }
    return r;
}

inline std::vector<Complex> uniform_alpha(Index k) {
    return std::vector<Complex>(static_cast<std::size_t>(k), Complex(1.0 / std::sqrt(static_cast<double>(k))));
}

/// alpha_i proportional to 1/i, normalised.
inline std::vector<Complex> heavy_tailed_alpha(Index k) {
    std::vector<Complex> a;
    double norm2 = 0.0;
    for (Index i = 1; i <= k; ++i) {
        a.emplace_back(1.0 / static_cast<double>(i));
        norm2 += 1.0 / (static_cast<double>(i) * i);
    }
    for (auto& v : a) v /= std::sqrt(norm2);
    return a;
}

struct NormScalingRow {
    Index d = 0;
    double median = 0.0;  // of sqrt(d) ||G|| / ||G||_F
    double q05 = 0.0;
    double q95 = 0.0;
    double ks_statistic = 0.0;  // ||G||_F^2 against chi-squared with 2 d^2 degrees of freedom
    double ks_critical = 0.0;
    std::vector<TailCheck> chi_square_tails;
};

struct NormScalingReport {
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    std::vector<NormScalingRow> rows;
    double median_ratio = 0.0;  // last row median over first row median
    double fitted_lower = 0.0;  // smallest q05 over d
    double fitted_upper = 0.0;  // largest q95 over d

    nlohmann::json to_json() const {
        nlohmann::json j = {{"trials", trials}, {"seed", seed}, {"median_ratio", median_ratio},
                            {"fitted_lower", fitted_lower}, {"fitted_upper", fitted_upper}};
        j["rows"] = nlohmann::json::array();
        for (const auto& r : rows)
            j["rows"].push_back({{"d", r.d}, {"median", r.median}, {"q05", r.q05}, {"q95", r.q95},
                                 {"ks_statistic", r.ks_statistic}, {"ks_critical", r.ks_critical},
                                 {"chi_square_tails", r.chi_square_tails}});
        return j;
    }
};

/// Checks that sqrt(d) ||G|| / ||G||_F stays bounded across d, that ||G||_F^2 follows
/// chi-squared(2 d^2), and the upper tail Pr(X >= D + 2 sqrt(D r) + 2 r) <= e^-r.
inline NormScalingReport norm_scaling_check(const std::vector<Index>& d_list, std::size_t trials, std::uint64_t seed) {
    detail::require(!d_list.empty() && trials >= 2, "norm_scaling_check: need d values and trials >= 2");
    NormScalingReport report;
    report.trials = trials;
    report.seed = seed;
    for (std::size_t di = 0; di < d_list.size(); ++di) {
        const Index d = d_list[di];
        std::vector<double> scaled, frob2;
        for (std::size_t t = 0; t < trials; ++t) {
            Rng rng(splitmix64(seed, di * trials + t));
            const ComplexMatrix g = sample_ginibre(d, d, rng);
            const double f = g.norm();
            scaled.push_back(std::sqrt(static_cast<double>(d)) * linalg::spectral_norm(g) / f);
            frob2.push_back(f * f);
        }
        NormScalingRow row;
        row.d = d;
        row.median = quantile(scaled, 0.5);
        row.q05 = quantile(scaled, 0.05);
        row.q95 = quantile(scaled, 0.95);
        const double dof = 2.0 * d * d;
        row.ks_statistic = ks_one_sample(frob2, [&](double x) { return boost::math::gamma_p(dof / 2.0, x / 2.0); });
        row.ks_critical = kKsCritical / std::sqrt(static_cast<double>(trials));
        for (double r : {1.0, 2.0, 4.0}) {
            const double threshold = dof + 2.0 * std::sqrt(dof * r) + 2.0 * r;
            std::size_t hits = 0;
            for (double x : frob2)
                if (x >= threshold) ++hits;
            row.chi_square_tails.push_back(internal::tail_check(r, hits, trials, std::exp(-r)));
        }
        report.rows.push_back(row);
    }
    report.median_ratio = report.rows.back().median / report.rows.front().median;
    report.fitted_lower = report.rows.front().q05;
    report.fitted_upper = report.rows.front().q95;
    for (const auto& r : report.rows) {
        report.fitted_lower = std::min(report.fitted_lower, r.q05);
        report.fitted_upper = std::max(report.fitted_upper, r.q95);
    }
    return report;
}

}  // namespace spectra_lab
