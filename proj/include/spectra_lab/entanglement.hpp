#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "spectra_lab/linalg.hpp"

namespace spectra_lab {

/// Split of sites [0, n) into A and its complement B. Within each part the
/// global site order is kept, and the lowest-numbered site is the most
/// significant bit of the row (A) or column (B) index of the reshaped state.
class Bipartition {
public:
    Bipartition(int n, std::vector<int> a) : n_(n), a_(std::move(a)) {
        detail::require(n >= 2 && n <= 62, "Bipartition: n must be in [2, 62]");
        std::sort(a_.begin(), a_.end());
        detail::require(std::adjacent_find(a_.begin(), a_.end()) == a_.end(), "Bipartition: repeated site");
        for (int s : a_) detail::require(s >= 0 && s < n, "Bipartition: site out of range");
        detail::require(!a_.empty() && static_cast<int>(a_.size()) < n, "Bipartition: A and B must be nonempty");
        for (int s = 0; s < n; ++s)
            if (!std::binary_search(a_.begin(), a_.end(), s)) b_.push_back(s);
    }

    /// A = the first `left` sites.
    static Bipartition left_right(int n, int left) {
        std::vector<int> a(left);
        std::iota(a.begin(), a.end(), 0);
        return Bipartition(n, std::move(a));
    }

    static Bipartition halves(int n) { return left_right(n, n / 2); }

    int qubits() const { return n_; }
    const std::vector<int>& a() const { return a_; }
    const std::vector<int>& b() const { return b_; }
    Index rows() const { return Index{1} << a_.size(); }
    Index cols() const { return Index{1} << b_.size(); }
    Bipartition swapped() const { return Bipartition(n_, b_); }

    /// True when A is a prefix [0, |A|), so the reshape is a plain row-major view.
    bool is_prefix() const { return a_.back() == static_cast<int>(a_.size()) - 1; }

    std::string describe() const {
        std::string s = "A=";
        for (std::size_t i = 0; i < a_.size(); ++i) s += (i ? "," : "") + std::to_string(a_[i]);
        return s;
    }

    /// (row, col) of full basis index `index`.
    std::pair<Index, Index> split(std::uint64_t index) const {
        return {gather(index, a_), gather(index, b_)};
    }

private:
    Index gather(std::uint64_t index, const std::vector<int>& sites) const {
        Index out = 0;
        for (int s : sites) out = (out << 1) | static_cast<Index>((index >> (n_ - 1 - s)) & 1U);
        return out;
    }

    int n_;
    std::vector<int> a_;
    std::vector<int> b_;
};

/// Coefficient matrix Gamma with psi = sum_{x,y} Gamma_{x,y} |x>_A |y>_B.
inline ComplexMatrix reshape_state(const StateVector& state, const Bipartition& cut) {
    const Index dim = Index{1} << cut.qubits();
    detail::require(state.size() == dim, "reshape_state: state length differs from 2^n");
    ComplexMatrix gamma(cut.rows(), cut.cols());
    if (cut.is_prefix()) {
        // Row-major reshape: index = x * cols + y.
        for (Index x = 0; x < gamma.rows(); ++x)
            gamma.row(x) = state.segment(x * gamma.cols(), gamma.cols()).transpose();
        return gamma;
    }
    for (Index i = 0; i < dim; ++i) {
        auto [x, y] = cut.split(static_cast<std::uint64_t>(i));
        gamma(x, y) = state(i);
    }
    return gamma;
}

inline StateVector unreshape_state(const ComplexMatrix& gamma, const Bipartition& cut) {
    detail::require(gamma.rows() == cut.rows() && gamma.cols() == cut.cols(), "unreshape_state: shape mismatch");
    const Index dim = Index{1} << cut.qubits();
    StateVector state(dim);
    for (Index i = 0; i < dim; ++i) {
        auto [x, y] = cut.split(static_cast<std::uint64_t>(i));
        state(i) = gamma(x, y);
    }
    return state;
}

/// ||A||_F^2 / ||A||^2.
inline double stable_rank(const ComplexMatrix& m) {
    const double spec = linalg::spectral_norm(m);
    detail::require(spec > 0.0, "stable_rank: zero matrix");
    const double fro = linalg::frobenius_norm(m);
    return (fro * fro) / (spec * spec);
}

inline int numerical_rank(const RealVector& singular_values, double rel_tol = 1e-10) {
    if (singular_values.size() == 0 || singular_values(0) == 0.0) return 0;
    int r = 0;
    for (Index i = 0; i < singular_values.size(); ++i)
        if (singular_values(i) > rel_tol * singular_values(0)) ++r;
    return r;
}

struct SchmidtData {
    ComplexMatrix gamma;
    RealVector singular_values;  // descending; empty when the power-iteration route was used
    double frobenius = 0.0;
    double spectral = 0.0;
    double chi = 0.0;
};

/// Size at which the Schmidt data switches from full SVD to power iteration.
inline constexpr Index kSchmidtSvdLimit = 256;

/// chi = ||Gamma||_F^2 / ||Gamma||^2, cross-checked against 1 / ||rho_A|| with
/// rho_A = Gamma Gamma^H / ||Gamma||_F^2 computed from the smaller Gram matrix.
inline SchmidtData schmidt_data(ComplexMatrix gamma) {
    SchmidtData out;
    out.frobenius = linalg::frobenius_norm(gamma);
    if (out.frobenius == 0.0) throw InvalidArgument("schmidt_data: zero state");
    if (std::min(gamma.rows(), gamma.cols()) < kSchmidtSvdLimit) {
        out.singular_values = linalg::singular_values(gamma);
        out.spectral = out.singular_values(0);
    } else {
        out.spectral = linalg::spectral_norm(gamma);
    }
    out.chi = (out.frobenius * out.frobenius) / (out.spectral * out.spectral);

    const ComplexMatrix gram = gamma.rows() <= gamma.cols() ? ComplexMatrix(gamma * gamma.adjoint())
                                                             : ComplexMatrix(gamma.adjoint() * gamma);
    const Eigen::SelfAdjointEigenSolver<ComplexMatrix> eig(ComplexMatrix((gram + gram.adjoint()) / 2.0),
                                                           Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("schmidt_data: Gram eigensolver failed");
    const double rho_norm = eig.eigenvalues()(eig.eigenvalues().size() - 1) / (out.frobenius * out.frobenius);
    const double chi_rho = 1.0 / rho_norm;
    if (std::abs(chi_rho - out.chi) > 1e-9 * out.chi)
        throw NumericalError("schmidt_data: stable rank routes disagree (" + std::to_string(out.chi) + " vs " +
                             std::to_string(chi_rho) + ")");
    out.gamma = std::move(gamma);
    return out;
}

inline SchmidtData schmidt_data(const StateVector& state, const Bipartition& cut) {
    return schmidt_data(reshape_state(state, cut));
}

inline double stable_schmidt_rank(const StateVector& state, const Bipartition& cut) {
    return schmidt_data(state, cut).chi;
}

struct EntropyProfile {
    double s_min = 0.0;                              // bits
    std::vector<std::pair<double, double>> s_alpha;  // (alpha, bits); alpha = inf gives s_min
    double chi = 0.0;

    double at(double alpha) const {
        for (auto [a, s] : s_alpha)
            if (a == alpha) return s;
        throw InvalidArgument("EntropyProfile: alpha not computed");
    }
};

/// Renyi entropies of rho_A from the Schmidt spectrum. alpha = 1 is the von
/// Neumann entropy, alpha = 0 the log of the Schmidt rank.
inline EntropyProfile entropy_profile(const StateVector& state, const Bipartition& cut,
                                      const std::vector<double>& alphas) {
    for (double a : alphas) detail::require(a >= 0.0 && !std::isnan(a), "entropy_profile: alpha must be >= 0");
    const ComplexMatrix gamma = reshape_state(state, cut);
    const RealVector s = linalg::singular_values(gamma);
    const double total = s.squaredNorm();
    if (total == 0.0) throw InvalidArgument("entropy_profile: zero state");
    const RealVector lambda = s.array().square() / total;

    EntropyProfile out;
    out.s_min = -std::log2(lambda(0));
    out.chi = 1.0 / lambda(0);
    for (double a : alphas) {
        double value = 0.0;
        if (std::isinf(a)) {
            value = out.s_min;
        } else if (a == 0.0) {
            value = std::log2(static_cast<double>(numerical_rank(s)));
        } else if (a == 1.0) {
            linalg::CompensatedSum acc;
            for (Index i = 0; i < lambda.size(); ++i)
                if (lambda(i) > 0.0) acc.add(-lambda(i) * std::log2(lambda(i)));
            value = acc.value();
        } else {
            linalg::CompensatedSum acc;
            for (Index i = 0; i < lambda.size(); ++i)
                if (lambda(i) > 0.0) acc.add(std::pow(lambda(i), a));
            value = std::log2(acc.value()) / (1.0 - a);
        }
        out.s_alpha.emplace_back(a, value);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stable rank of an orthogonal decomposition

struct StableRankReport {
    int k = 0;
    double chi_gamma = 0.0;
    double min_chi_parts = 0.0;
    double bound = 0.0;  // min_i chi(Gamma_i) / chi(Gamma)
    bool holds = false;  // k >= bound
    int rank_gamma = 0;
    int min_rank_parts = 0;
    double rank_bound = 0.0;  // min_i rank(Gamma_i) / rank(Gamma)
    bool rank_version_holds = false;
    double decomposition_error = 0.0;
    double orthogonality_error = 0.0;
};

/// For gamma = sum_i c_i Gamma_i with pairwise Hilbert-Schmidt orthogonal,
/// nonzero parts, checks k >= min_i chi(Gamma_i) / chi(gamma). The same
/// statement with rank in place of stable rank is reported alongside, since
/// it can fail.
inline StableRankReport stable_rank_inequality_check(const ComplexMatrix& gamma,
                                                     const std::vector<ComplexMatrix>& parts,
                                                     const std::vector<Complex>& coeffs, double tol = 1e-10) {
    detail::require(!parts.empty(), "stable_rank_inequality_check: no parts");
    detail::require(parts.size() == coeffs.size(), "stable_rank_inequality_check: coefficient count mismatch");
    const double scale = std::max(1.0, linalg::frobenius_norm(gamma));

    StableRankReport r;
    r.k = static_cast<int>(parts.size());
    ComplexMatrix sum = ComplexMatrix::Zero(gamma.rows(), gamma.cols());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        detail::require(parts[i].rows() == gamma.rows() && parts[i].cols() == gamma.cols(),
                        "stable_rank_inequality_check: shape mismatch");
        detail::require(coeffs[i] != Complex(0.0) && linalg::frobenius_norm(parts[i]) > 0.0,
                        "stable_rank_inequality_check: zero part");
        sum += coeffs[i] * parts[i];
        for (std::size_t j = 0; j < i; ++j) {
            const double overlap = std::abs((parts[j].adjoint() * parts[i]).trace());
            const double norm = linalg::frobenius_norm(parts[i]) * linalg::frobenius_norm(parts[j]);
            r.orthogonality_error = std::max(r.orthogonality_error, overlap / norm);
        }
    }
    r.decomposition_error = linalg::max_abs(ComplexMatrix(sum - gamma)) / scale;
    if (r.decomposition_error > tol) throw InvalidArgument("stable_rank_inequality_check: parts do not sum to gamma");
    if (r.orthogonality_error > tol) throw InvalidArgument("stable_rank_inequality_check: parts not orthogonal");

    r.chi_gamma = stable_rank(gamma);
    r.min_chi_parts = std::numeric_limits<double>::infinity();
    r.min_rank_parts = std::numeric_limits<int>::max();
    for (const auto& p : parts) {
        r.min_chi_parts = std::min(r.min_chi_parts, stable_rank(p));
        r.min_rank_parts = std::min(r.min_rank_parts, numerical_rank(linalg::singular_values(p)));
    }
    r.rank_gamma = numerical_rank(linalg::singular_values(gamma));
    r.bound = r.min_chi_parts / r.chi_gamma;
    r.holds = static_cast<double>(r.k) >= r.bound * (1.0 - 1e-12);
    r.rank_bound = static_cast<double>(r.min_rank_parts) / static_cast<double>(r.rank_gamma);
    r.rank_version_holds = static_cast<double>(r.k) >= r.rank_bound;
    return r;
}

}  // namespace spectra_lab
