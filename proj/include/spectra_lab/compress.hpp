#pragma once

// Matrix product states built by sequential SVD truncation of an exact state,
// optional single-site energy sweeps, and overlap spectra against an eigenbasis.
// MPS site j is qubit j, so site 0 is the most significant bit of the index.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <optional>
#include <vector>

#include "spectra_lab/entanglement.hpp"
#include "spectra_lab/errors.hpp"
#include "spectra_lab/hamiltonian.hpp"
#include "spectra_lab/linalg.hpp"
#include "spectra_lab/relaxation.hpp"

namespace spectra_lab {

enum class CanonicalForm { None, Left, Mixed };

struct MatrixProductState {
    // tensors[j][s] is the (left bond x right bond) slice for physical index s.
    std::vector<std::array<ComplexMatrix, 2>> tensors;
    CanonicalForm form = CanonicalForm::None;
    int center = -1;  // orthogonality centre when form == Mixed

    int sites() const { return static_cast<int>(tensors.size()); }

    Index bond(int j) const { return tensors.at(static_cast<std::size_t>(j))[0].cols(); }  // right of site j

    Index max_bond() const {
        Index d = 1;
        for (int j = 0; j + 1 < sites(); ++j) d = std::max(d, bond(j));
        return d;
    }

    /// Dense state vector.
    StateVector contract() const {
        detail::require(sites() >= 1, "MatrixProductState: empty");
        ComplexMatrix left = ComplexMatrix::Ones(1, 1);  // rows: prefix index, cols: bond
        for (const auto& t : tensors) {
            ComplexMatrix next(left.rows() * 2, t[0].cols());
            for (int s = 0; s < 2; ++s) {
                const ComplexMatrix part = left * t[s];
                for (Index r = 0; r < left.rows(); ++r) next.row(2 * r + s) = part.row(r);
            }
            left = std::move(next);
        }
        return left.col(0);
    }
};

namespace internal {

inline void thin_qr(const ComplexMatrix& m, ComplexMatrix& q, ComplexMatrix& r) {
    const Index cols = m.cols();
    detail::require(m.rows() >= cols, "thin_qr: need rows >= cols");
    Eigen::HouseholderQR<ComplexMatrix> qr(m);
    q = qr.householderQ() * ComplexMatrix::Identity(m.rows(), cols);
    r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
}

/// Prefix block for sites [0, j): rows index the 2^j prefix states, cols the bond left of site j.
inline ComplexMatrix left_block(const MatrixProductState& mps, int j) {
    ComplexMatrix left = ComplexMatrix::Ones(1, 1);
    for (int i = 0; i < j; ++i) {
        const auto& t = mps.tensors[static_cast<std::size_t>(i)];
        ComplexMatrix next(left.rows() * 2, t[0].cols());
        for (int s = 0; s < 2; ++s) {
            const ComplexMatrix part = left * t[s];
            for (Index r = 0; r < left.rows(); ++r) next.row(2 * r + s) = part.row(r);
        }
        left = std::move(next);
    }
    return left;
}

/// Suffix block for sites (j, n): rows index the bond right of site j, cols the suffix states.
inline ComplexMatrix right_block(const MatrixProductState& mps, int j) {
    ComplexMatrix right = ComplexMatrix::Ones(1, 1);
    for (int i = mps.sites() - 1; i > j; --i) {
        const auto& t = mps.tensors[static_cast<std::size_t>(i)];
        ComplexMatrix next(t[0].rows(), 2 * right.cols());
        next << t[0] * right, t[1] * right;
        right = std::move(next);
    }
    return right;
}

}  // namespace internal

/// Left-to-right SVD factorisation keeping at most D singular values per bond,
/// then normalised. Each cut is truncated against the already-truncated prefix,
/// which is the usual sequential scheme and is deterministic.
inline MatrixProductState compress_state(const StateVector& state, Index D) {
    detail::require(D >= 1, "compress_state: D must be >= 1");
    const Index dim = state.size();
    detail::require(dim >= 2 && (dim & (dim - 1)) == 0, "compress_state: length must be a power of two >= 2");
    const int n = static_cast<int>(std::countr_zero(static_cast<std::uint64_t>(dim)));
    detail::require(state.norm() > 0.0, "compress_state: zero state");

    MatrixProductState mps;
    mps.tensors.resize(static_cast<std::size_t>(n));
    // rest(b, c): bond b, suffix index c (site j most significant).
    ComplexMatrix rest = state.transpose();
    for (int j = 0; j < n - 1; ++j) {
        const Index bond = rest.rows();
        const Index half = rest.cols() / 2;
        ComplexMatrix m(bond * 2, half);
        for (Index b = 0; b < bond; ++b)
            for (int s = 0; s < 2; ++s) m.row(2 * b + s) = rest.row(b).segment(s * half, half);
        const auto svd = linalg::svd_truncate(m, D);
        const Index kept = svd.S.size();
        auto& t = mps.tensors[static_cast<std::size_t>(j)];
        for (int s = 0; s < 2; ++s) {
            t[s].resize(bond, kept);
            for (Index b = 0; b < bond; ++b) t[s].row(b) = svd.U.row(2 * b + s);
        }
        rest = svd.S.cast<Complex>().asDiagonal() * svd.V.adjoint();
    }
    auto& last = mps.tensors.back();
    const double norm = rest.norm();
    for (int s = 0; s < 2; ++s) last[s] = rest.col(s) / norm;
    mps.form = CanonicalForm::Left;
    return mps;
}

inline double fidelity(const StateVector& a, const StateVector& b) {
    return std::norm(a.dot(b)) / (a.squaredNorm() * b.squaredNorm());
}

struct SweepResult {
    MatrixProductState mps;
    std::vector<double> energies;  // entry 0 is the input energy, then one per sweep
};

/// Single-site variational sweeps. The state is kept in mixed canonical form so
/// the map from a site tensor to the full vector is an isometry, and the local
/// problem is the lowest eigenvector of that projector applied around H. Bond
/// dimensions never change. A local update is kept only if it does not raise the
/// energy, so the sweep energies are nonincreasing.
inline SweepResult sweep_refine(MatrixProductState mps, const PauliHamiltonian& h, int sweeps) {
    detail::require(sweeps >= 0, "sweep_refine: sweeps must be >= 0");
    const int n = mps.sites();
    detail::require(n == h.qubits(), "sweep_refine: site count differs from qubit count");

    auto energy_of = [&](const MatrixProductState& s) {
        const StateVector v = s.contract();
        return h.expectation(v) / v.squaredNorm();
    };
    SweepResult out;
    out.energies.push_back(energy_of(mps));
    if (sweeps == 0 || n == 1) {
        out.mps = std::move(mps);
        for (int i = 0; i < sweeps; ++i) out.energies.push_back(out.energies.front());
        return out;
    }

    auto site = [&](int j) -> std::array<ComplexMatrix, 2>& { return mps.tensors[static_cast<std::size_t>(j)]; };

    // Move the centre from site j to j - 1 (right-orthonormal site j).
    auto shift_left = [&](int j) {
        auto& t = site(j);
        const Index dl = t[0].rows(), dr = t[0].cols();
        ComplexMatrix m(dl, 2 * dr);
        m << t[0], t[1];
        ComplexMatrix q, r;
        internal::thin_qr(m.adjoint(), q, r);
        const ComplexMatrix qh = q.adjoint();
        t[0] = qh.leftCols(dr);
        t[1] = qh.rightCols(dr);
        auto& prev = site(j - 1);
        for (int s = 0; s < 2; ++s) prev[s] = prev[s] * r.adjoint();
    };
    // Move the centre from site j to j + 1 (left-orthonormal site j).
    auto shift_right = [&](int j) {
        auto& t = site(j);
        const Index dl = t[0].rows(), dr = t[0].cols();
        ComplexMatrix m(2 * dl, dr);
        m << t[0], t[1];
        ComplexMatrix q, r;
        internal::thin_qr(m, q, r);
        t[0] = q.topRows(dl);
        t[1] = q.bottomRows(dl);
        auto& next = site(j + 1);
        for (int s = 0; s < 2; ++s) next[s] = r * next[s];
    };

    for (int j = n - 1; j >= 1; --j) shift_left(j);
    {
        auto& t = site(0);
        const double norm = std::sqrt(t[0].squaredNorm() + t[1].squaredNorm());
        for (int s = 0; s < 2; ++s) t[s] /= norm;
    }

    auto optimise = [&](int j) {
        const ComplexMatrix L = internal::left_block(mps, j);
        const ComplexMatrix R = internal::right_block(mps, j);
        auto& t = site(j);
        const Index dl = t[0].rows(), dr = t[0].cols();
        const Index block = dl * dr;
        const Index suffix = R.cols();
        const Index prefix = L.rows();

        auto expand = [&](const StateVector& theta) {
            StateVector psi(prefix * 2 * suffix);
            Eigen::Map<ComplexMatrix> view(psi.data(), 2 * suffix, prefix);  // transpose of the row-major split
            for (int s = 0; s < 2; ++s) {
                const Eigen::Map<const ComplexMatrix> ts(theta.data() + s * block, dl, dr);
                view.middleRows(s * suffix, suffix) = (L * ts * R).transpose();
            }
            return psi;
        };
        auto reduce = [&](const StateVector& psi) {
            StateVector theta(2 * block);
            const Eigen::Map<const ComplexMatrix> view(psi.data(), 2 * suffix, prefix);
            for (int s = 0; s < 2; ++s) {
                Eigen::Map<ComplexMatrix> ts(theta.data() + s * block, dl, dr);
                ts = L.adjoint() * view.middleRows(s * suffix, suffix).transpose() * R.adjoint();
            }
            return theta;
        };
        auto apply = [&](const StateVector& theta) { return StateVector(reduce(h.apply(expand(theta)))); };

        StateVector current(2 * block);
        Eigen::Map<ComplexMatrix>(current.data(), dl, dr) = t[0];
        Eigen::Map<ComplexMatrix>(current.data() + block, dl, dr) = t[1];
        const double before = std::real(current.dot(apply(current)));

        linalg::LanczosOptions options;
        options.tol = 1e-10 * std::max(1.0, h.max_coeff() * h.terms().size());
        options.krylov_dim = std::min<Index>(60, 2 * block);
        try {
            auto pair = linalg::lanczos_lowest<Complex>(apply, 2 * block, options, &current);
            if (pair.value <= before) {
                t[0] = Eigen::Map<const ComplexMatrix>(pair.vector.data(), dl, dr);
                t[1] = Eigen::Map<const ComplexMatrix>(pair.vector.data() + block, dl, dr);
            }
        } catch (const NumericalError&) {
            // keep the current tensor; the sweep stays monotone
        }
    };

    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (int j = 0; j < n - 1; ++j) {
            optimise(j);
            shift_right(j);
        }
        for (int j = n - 1; j >= 1; --j) {
            optimise(j);
            shift_left(j);
        }
        // Rounding can nudge the energy up by a few ulps; clamp so the record is monotone.
        out.energies.push_back(std::min(energy_of(mps), out.energies.back()));
    }
    mps.form = CanonicalForm::Mixed;
    mps.center = 0;
    out.mps = std::move(mps);
    return out;
}

struct OverlapSpectrum {
    std::vector<double> energies;  // ascending
    std::vector<double> p;         // |<psi_i|psi>|^2
    double energy = 0.0;           // sum p_i E_i
    double m = 0.0;                // stable Schmidt rank at the cut
};

namespace internal {

inline void check_overlap_spectrum(const OverlapSpectrum& s) {
    double total = 0.0;
    for (double v : s.p) total += v;
    if (std::abs(total - 1.0) > 1e-9)
        throw NumericalError("overlap_spectrum: weights sum to " + std::to_string(total));
}

}  // namespace internal

inline OverlapSpectrum overlap_spectrum(const StateVector& state, const EigenSystem& es, const Bipartition& cut) {
    detail::require(state.size() == es.states.rows(), "overlap_spectrum: dimension mismatch");
    detail::require(cut.qubits() == es.qubits, "overlap_spectrum: bipartition size mismatch");
    const StateVector psi = state.normalized();
    const StateVector alpha = es.states.adjoint() * psi;
    OverlapSpectrum out;
    linalg::CompensatedSum e;
    for (Index i = 0; i < es.size(); ++i) {
        out.energies.push_back(es.energies(i));
        out.p.push_back(std::norm(alpha(i)));
        e.add(out.p.back() * es.energies(i));
    }
    out.energy = e.value();
    out.m = stable_schmidt_rank(psi, cut);
    internal::check_overlap_spectrum(out);
    return out;
}

inline OverlapSpectrum overlap_spectrum(const MatrixProductState& mps, const EigenSystem& es, const Bipartition& cut) {
    detail::require(mps.sites() == es.qubits, "overlap_spectrum: site count mismatch");
    return overlap_spectrum(mps.contract(), es, cut);
}

/// Same result without holding the eigensystem: eigenpairs are streamed one
/// Sz sector at a time. Needs a weight-preserving H.
inline OverlapSpectrum overlap_spectrum_streaming(const StateVector& state, const PauliHamiltonian& h,
                                                  const Bipartition& cut, const DenseLimits& limits = {}) {
    detail::require(static_cast<std::uint64_t>(state.size()) == h.dimension(), "overlap_spectrum_streaming: dimension mismatch");
    detail::require(h.preserves_weight(), "overlap_spectrum_streaming: H must preserve Hamming weight");
    const StateVector psi = state.normalized();
    std::vector<std::pair<double, double>> pairs;
    pairs.reserve(static_cast<std::size_t>(h.dimension()));
    for_each_eigenpair(h, [&](double e, const StateVector& v) { pairs.emplace_back(e, std::norm(v.dot(psi))); },
                       limits);
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    OverlapSpectrum out;
    linalg::CompensatedSum e;
    for (auto [energy, weight] : pairs) {
        out.energies.push_back(energy);
        out.p.push_back(weight);
        e.add(energy * weight);
    }
    out.energy = e.value();
    out.m = stable_schmidt_rank(psi, cut);
    internal::check_overlap_spectrum(out);
    return out;
}

struct SlackRow {
    Index D = 0;
    double m = 0.0;
    double inv_sqrt_m = 0.0;
    double A = 0.0;  // ||sum alpha_i Gamma_i||
    double C = 0.0;
    double B = 0.0;  // sum |alpha_i| ||Gamma_i||
};

/// One row per D: compress the state, expand it in the eigenbasis and evaluate
/// the chain A <= C <= B. A must agree with 1/sqrt(m) to 1e-9. Passing gamma
/// avoids recomputing the pairwise norms for C.
inline std::vector<SlackRow> slack_table(const StateVector& state, const std::vector<Index>& Ds, const EigenSystem& es,
                                         const Bipartition& cut, const GammaMatrix* gamma = nullptr) {
    std::vector<SlackRow> rows;
    for (Index D : Ds) {
        const StateVector psi = compress_state(state, D).contract().normalized();
        const StateVector coeffs = es.states.adjoint() * psi;
        std::vector<Complex> alpha(coeffs.data(), coeffs.data() + coeffs.size());
        double norm2 = 0.0;
        for (const auto& a : alpha) norm2 += std::norm(a);
        for (auto& a : alpha) a /= std::sqrt(norm2);
        const auto abc = slack_abc(alpha, es, cut, gamma);
        SlackRow row;
        row.D = D;
        row.m = stable_schmidt_rank(psi, cut);
        row.inv_sqrt_m = 1.0 / std::sqrt(row.m);
        row.A = abc.A;
        row.B = abc.B;
        row.C = abc.C;
        if (std::abs(row.A - row.inv_sqrt_m) > 1e-9)
            throw NumericalError("slack_table: A differs from 1/sqrt(m)");
        rows.push_back(row);
    }
    return rows;
}

}  // namespace spectra_lab
