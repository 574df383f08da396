#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "spectra_lab/errors.hpp"

namespace spectra_lab {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using StateVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace linalg {

/// Neumaier-compensated running sum. Order of additions is the caller's, so
/// results are reproducible for a fixed input order.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            carry_ += (sum_ - t) + x;
        else
            carry_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + carry_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline bool is_real(const ComplexMatrix& m, double tol = 0.0) {
    return m.size() == 0 || m.imag().cwiseAbs().maxCoeff() <= tol;
}

inline double hermiticity_error(const ComplexMatrix& m) {
    return m.size() == 0 ? 0.0 : (m - m.adjoint()).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Dense Hermitian eigensolver

struct HermitianEigenResult {
    RealVector eigenvalues;      // ascending
    ComplexMatrix eigenvectors;  // orthonormal columns
};

/// Full eigendecomposition of a real symmetric matrix, eigenvalues ascending.
inline std::pair<RealVector, RealMatrix> symmetric_eig(const RealMatrix& matrix) {
    detail::require(matrix.rows() == matrix.cols(), "symmetric_eig: matrix must be square");
    if (matrix.size() == 0) return {};
    Eigen::SelfAdjointEigenSolver<RealMatrix> solver(matrix);
    if (solver.info() != Eigen::Success) throw NumericalError("symmetric_eig: eigensolver failed");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Full ascending eigensystem of a Hermitian matrix. Real input takes the
/// real-symmetric path. Equal eigenvalues come back in no particular order.
inline HermitianEigenResult hermitian_eig(const ComplexMatrix& matrix) {
    detail::require(matrix.rows() == matrix.cols(), "hermitian_eig: matrix must be square");
    detail::require(matrix.allFinite(), "hermitian_eig: non-finite entries");
    if (matrix.size() == 0) return {};
    const double scale = std::max(1.0, max_abs(matrix));
    if (hermiticity_error(matrix) > 1e-12 * scale)
        throw InvalidArgument("hermitian_eig: matrix is not Hermitian");

    if (is_real(matrix)) {
        auto [values, vectors] = symmetric_eig(matrix.real());
        return {std::move(values), vectors.cast<Complex>()};
    }
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(matrix);
    if (solver.info() != Eigen::Success) throw NumericalError("hermitian_eig: eigensolver failed");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

// ---------------------------------------------------------------------------
// Sparse Hermitian storage

enum class Closure {
    Full,   // triplets already describe both triangles
    Upper,  // triplets hold the upper triangle (row <= col); the lower one is mirrored
};

class SparseHermitian {
public:
    using Triplet = Eigen::Triplet<Complex>;
    using ComplexSparse = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;
    using RealSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

    SparseHermitian(Index dimension, std::vector<Triplet> triplets, Closure closure = Closure::Full)
        : closure_(closure), matrix_(dimension, dimension) {
        detail::require(dimension >= 1, "SparseHermitian: dimension must be >= 1");
        if (closure == Closure::Upper) {
            const std::size_t given = triplets.size();
            for (std::size_t t = 0; t < given; ++t) {
                const auto tr = triplets[t];
                detail::require(tr.row() <= tr.col(), "SparseHermitian: Upper closure needs row <= col");
                if (tr.row() != tr.col()) triplets.emplace_back(tr.col(), tr.row(), std::conj(tr.value()));
            }
        }
        for (const auto& tr : triplets) {
            detail::require(tr.row() >= 0 && tr.row() < dimension && tr.col() >= 0 && tr.col() < dimension,
                            "SparseHermitian: triplet index out of range");
            detail::require(std::isfinite(tr.value().real()) && std::isfinite(tr.value().imag()),
                            "SparseHermitian: non-finite entry");
        }
        matrix_.setFromTriplets(triplets.begin(), triplets.end());
        matrix_.prune([](Index, Index, const Complex& v) { return v != Complex(0.0, 0.0); });
        matrix_.makeCompressed();

        const ComplexSparse adjoint = matrix_.adjoint();
        const ComplexSparse diff = matrix_ - adjoint;
        double scale = 1.0;
        double worst = 0.0;
        for (Index k = 0; k < matrix_.outerSize(); ++k)
            for (ComplexSparse::InnerIterator it(matrix_, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
        for (Index k = 0; k < diff.outerSize(); ++k)
            for (ComplexSparse::InnerIterator it(diff, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
        if (worst > 1e-12 * scale) throw InvalidArgument("SparseHermitian: matrix is not Hermitian");

        real_ = true;
        for (Index k = 0; k < matrix_.outerSize() && real_; ++k)
            for (ComplexSparse::InnerIterator it(matrix_, k); it; ++it)
                if (it.value().imag() != 0.0) {
                    real_ = false;
                    break;
                }
        if (real_) real_matrix_ = matrix_.real();
    }

    Index dimension() const { return matrix_.rows(); }
    Index nonzeros() const { return matrix_.nonZeros(); }
    Closure closure() const { return closure_; }
    bool is_real() const { return real_; }

    const ComplexSparse& matrix() const { return matrix_; }
    /// Only meaningful when is_real().
    const RealSparse& real_matrix() const { return real_matrix_; }

    StateVector apply(const StateVector& v) const {
        detail::require(v.size() == dimension(), "SparseHermitian::apply: size mismatch");
        return matrix_ * v;
    }

    ComplexMatrix to_dense() const { return ComplexMatrix(matrix_); }

private:
    Closure closure_;
    ComplexSparse matrix_;
    RealSparse real_matrix_;
    bool real_ = false;
};

// ---------------------------------------------------------------------------
// Lanczos

struct LanczosOptions {
    double tol = 1e-10;          // absolute residual target ||A v - theta v||_2
    Index krylov_dim = 200;      // basis size per restart cycle
    int max_restarts = 200;
    std::uint64_t seed = 0x5eed5eed5eedULL;
};

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
struct EigenPair {
    double value = 0.0;
    Vector<Scalar> vector;
    double residual = 0.0;
    int matvecs = 0;
};

namespace internal {

template <class Scalar>
Vector<Scalar> gaussian_vector(Index dim, std::uint64_t seed) {
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal;
    Vector<Scalar> v(dim);
    for (Index i = 0; i < dim; ++i) {
        if constexpr (std::is_same_v<Scalar, double>) {
            v(i) = normal(engine);
        } else {
            const double re = normal(engine);
            v(i) = Scalar(re, normal(engine));
        }
    }
    return v;
}

}  // namespace internal

/// Lowest eigenpair of a Hermitian operator given only through `apply`.
///
/// Restarted Lanczos with full reorthogonalization. Each cycle builds up to
/// `krylov_dim` vectors and restarts from the current Ritz vector. Vectors in
/// `deflate` (orthonormal) are projected out of every Krylov vector, which
/// yields the lowest eigenpair on their orthogonal complement.
template <class Scalar, class Apply>
EigenPair<Scalar> lanczos_lowest(Apply&& apply, Index dim, const LanczosOptions& options = {},
                                 const Vector<Scalar>* start = nullptr,
                                 std::span<const Vector<Scalar>> deflate = {}) {
    using Vec = Vector<Scalar>;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    detail::require(dim >= 1, "lanczos: dimension must be >= 1");
    detail::require(options.tol > 0.0, "lanczos: tol must be positive");
    const Index free_dim = dim - static_cast<Index>(deflate.size());
    detail::require(free_dim >= 1, "lanczos: deflation leaves no space");

    auto project_out = [&](Vec& v) {
        for (const auto& d : deflate) v -= d * d.dot(v);
    };

    // A deflated run needs a fresh start: the first run's start vector has no
    // weight on other copies of a degenerate level once its Ritz vector is removed.
    const std::uint64_t seed = options.seed + 0x9e3779b97f4a7c15ULL * deflate.size();
    Vec x = start ? *start : internal::gaussian_vector<Scalar>(dim, seed);
    project_out(x);
    if (x.norm() < 1e-8) {
        x = internal::gaussian_vector<Scalar>(dim, seed ^ 0xa5a5a5a5ULL);
        project_out(x);
    }
    x.normalize();

    int matvecs = 0;
    double best_residual = std::numeric_limits<double>::infinity();
    for (int cycle = 0; cycle <= options.max_restarts; ++cycle) {
        const Index m_max = std::min(options.krylov_dim, free_dim);
        Mat basis(dim, m_max);
        std::vector<double> alpha;
        std::vector<double> beta;
        basis.col(0) = x;
        double anorm = 0.0;

        for (Index j = 0; j < m_max; ++j) {
            Vec w = apply(Vec(basis.col(j)));
            ++matvecs;
            project_out(w);
            const double a = std::real(basis.col(j).dot(w));
            alpha.push_back(a);
            for (int pass = 0; pass < 2; ++pass) {
                w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).adjoint() * w);
                project_out(w);
            }
            const double b = w.norm();
            anorm = std::max(anorm, std::abs(a) + b + (beta.empty() ? 0.0 : beta.back()));

            const Index size = j + 1;
            RealVector diag = Eigen::Map<const RealVector>(alpha.data(), size);
            RealVector sub = size > 1 ? RealVector(Eigen::Map<const RealVector>(beta.data(), size - 1))
                                      : RealVector();
            Eigen::SelfAdjointEigenSolver<RealMatrix> tri;
            tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
            const RealVector y = tri.eigenvectors().col(0);
            const double estimate = b * std::abs(y(size - 1));
            const bool invariant = b <= 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, anorm);

            if (estimate <= 0.5 * options.tol || invariant || size == m_max) {
                Vec candidate = basis.leftCols(size) * y.cast<Scalar>();
                candidate.normalize();
                Vec r = apply(candidate);
                ++matvecs;
                project_out(r);
                const double theta = std::real(candidate.dot(r));
                r -= theta * candidate;
                const double residual = r.norm();
                x = candidate;
                best_residual = std::min(best_residual, residual);
                if (residual <= options.tol) return {theta, std::move(candidate), residual, matvecs};
                if (invariant || size == m_max) break;
            }
            beta.push_back(b);
            basis.col(j + 1) = w / b;
        }
    }
    throw NumericalError("lanczos: no convergence (best residual " + std::to_string(best_residual) + ")");
}

struct GroundPair {
    double energy = 0.0;
    StateVector state;
    double residual = 0.0;
};

/// Ground state of a sparse Hermitian matrix with residual <= tol.
inline GroundPair lanczos_ground(const SparseHermitian& h, double tol = 1e-10,
                                 std::span<const StateVector> deflate = {}) {
    LanczosOptions options;
    options.tol = tol;
    if (h.is_real()) {
        std::vector<RealVector> real_deflate;
        bool deflate_real = true;
        for (const auto& d : deflate) {
            if (!is_real(ComplexMatrix(d))) deflate_real = false;
            real_deflate.push_back(d.real());
        }
        if (deflate_real) {
            const auto& a = h.real_matrix();
            auto pair = lanczos_lowest<double>([&](const RealVector& v) { RealVector out = a * v; return out; },
                                               h.dimension(), options, nullptr,
                                               std::span<const RealVector>(real_deflate));
            return {pair.value, pair.vector.cast<Complex>(), pair.residual};
        }
    }
    const auto& a = h.matrix();
    auto pair = lanczos_lowest<Complex>([&](const StateVector& v) { StateVector out = a * v; return out; },
                                        h.dimension(), options, nullptr, deflate);
    return {pair.value, std::move(pair.vector), pair.residual};
}

// ---------------------------------------------------------------------------
// Norms and SVD

inline double frobenius_norm(const ComplexMatrix& matrix) { return matrix.norm(); }

inline RealVector singular_values(const ComplexMatrix& matrix) {
    if (matrix.size() == 0) return {};
    // Jacobi, not BDCSVD: the divide-and-conquer path in Eigen 3.4.0 can lose the top value on
    // matrices with exactly repeated singular values (seen on Heisenberg eigenstates).
    Eigen::JacobiSVD<ComplexMatrix> svd(matrix);
    return svd.singularValues();
}

/// Largest singular value. Full SVD when the smaller side is below 64,
/// otherwise Lanczos on -A^H A (or -A A^H) from a fixed seed. Plain power
/// iteration is not enough here: with a near-degenerate top pair it stalls and
/// stops early, several digits off.
inline double spectral_norm(const ComplexMatrix& matrix, double rel_tol = 1e-12) {
    detail::require(matrix.allFinite(), "spectral_norm: non-finite entries");
    if (matrix.size() == 0) return 0.0;
    const Index small_side = std::min(matrix.rows(), matrix.cols());
    if (small_side < 64) return singular_values(matrix)(0);
    const double fro = matrix.norm();
    if (fro == 0.0) return 0.0;

    const bool tall = matrix.rows() >= matrix.cols();
    LanczosOptions options;
    options.tol = rel_tol * fro * fro;
    options.krylov_dim = std::min<Index>(small_side, 60);
    options.seed = 0x51ec7a1ULL;
    const auto pair = lanczos_lowest<Complex>(
        [&](const StateVector& x) {
            StateVector y = tall ? StateVector(matrix * x) : StateVector(matrix.adjoint() * x);
            StateVector z = tall ? StateVector(matrix.adjoint() * y) : StateVector(matrix * y);
            return StateVector(-z);
        },
        small_side, options);
    return std::sqrt(std::max(0.0, -pair.value));
}

struct TruncatedSvd {
    ComplexMatrix U;
    RealVector S;
    ComplexMatrix V;  // matrix ~= U * S.asDiagonal() * V^H
    double discarded_weight = 0.0;
};

/// Best rank-<=max_rank approximation in Frobenius norm.
inline TruncatedSvd svd_truncate(const ComplexMatrix& matrix, Index max_rank) {
    detail::require(max_rank >= 1, "svd_truncate: max_rank must be >= 1");
    detail::require(matrix.size() > 0, "svd_truncate: empty matrix");
    Eigen::JacobiSVD<ComplexMatrix> svd(matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const RealVector& s = svd.singularValues();
    const Index keep = std::min<Index>(max_rank, s.size());
    TruncatedSvd out;
    out.U = svd.matrixU().leftCols(keep);
    out.S = s.head(keep);
    out.V = svd.matrixV().leftCols(keep);
    CompensatedSum tail;
    for (Index i = keep; i < s.size(); ++i) tail.add(s(i) * s(i));
    out.discarded_weight = tail.value();
    return out;
}

}  // namespace linalg

using linalg::Closure;
using linalg::HermitianEigenResult;
using linalg::SparseHermitian;

}  // namespace spectra_lab
