#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "json.hpp"

#include "spectra_lab/entanglement.hpp"
#include "spectra_lab/hamiltonian.hpp"
#include "spectra_lab/linalg.hpp"
#include "spectra_lab/predictor.hpp"

namespace spectra_lab {

/// gamma_ij = || Gamma_i Gamma_j^H ||, symmetric and nonnegative.
struct GammaMatrix {
    RealMatrix values;

    Index size() const { return values.rows(); }
    double operator()(Index i, Index j) const { return values(i, j); }

    /// gamma_ij = 1/sqrt(M_i M_j): the largest matrix the definition allows,
    /// for which the relaxation reduces to the plain stable-rank one.
    static GammaMatrix from_stable_ranks(const std::vector<double>& M) {
        GammaMatrix g;
        const Index k = static_cast<Index>(M.size());
        RealVector v(k);
        for (Index i = 0; i < k; ++i) {
            detail::require(M[static_cast<std::size_t>(i)] > 0.0, "GammaMatrix: M entries must be positive");
            v(i) = 1.0 / std::sqrt(M[static_cast<std::size_t>(i)]);
        }
        g.values = v * v.transpose();
        return g;
    }

    void validate() const {
        detail::require(values.rows() == values.cols() && values.rows() >= 1, "GammaMatrix: must be square");
        detail::require(values.allFinite() && values.minCoeff() >= 0.0, "GammaMatrix: entries must be finite and >= 0");
        detail::require((values - values.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, values.maxCoeff()),
                        "GammaMatrix: must be symmetric");
    }
};

namespace internal {

/// Largest eigenvalue of a small symmetric PSD matrix, eigenvalues only.
inline double top_eigenvalue(const RealMatrix& s) {
    Eigen::SelfAdjointEigenSolver<RealMatrix> solver(s, Eigen::EigenvaluesOnly);
    return std::max(0.0, solver.eigenvalues()(s.rows() - 1));
}

inline double top_eigenvalue(const ComplexMatrix& s) {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(s, Eigen::EigenvaluesOnly);
    return std::max(0.0, solver.eigenvalues()(s.rows() - 1));
}

/// ||X Y^H|| via the top eigenvalue of the smaller Gram matrix.
template <class Mat>
double product_norm(const Mat& x, const Mat& y) {
    const Mat c = x * y.adjoint();
    const Mat gram = c.rows() <= c.cols() ? Mat(c * c.adjoint()) : Mat(c.adjoint() * c);
    return std::sqrt(top_eigenvalue(Mat((gram + gram.adjoint()) / 2.0)));
}

}  // namespace internal

/// All pairwise ||Gamma_i Gamma_j^H|| for the eigenstates of `es` at `cut`.
/// The diagonal is checked against 1/chi(psi_i) from the Schmidt data.
inline GammaMatrix gamma_matrix(const EigenSystem& es, const Bipartition& cut) {
    const Index k = es.size();
    detail::require(k >= 1, "gamma_matrix: empty eigensystem");
    detail::require(es.qubits == cut.qubits(), "gamma_matrix: qubit count mismatch");
    const bool real = linalg::is_real(es.states);

    std::vector<ComplexMatrix> complex_parts;
    std::vector<RealMatrix> real_parts;
    for (Index i = 0; i < k; ++i) {
        ComplexMatrix g = reshape_state(es.state(i), cut);
        if (real)
            real_parts.push_back(g.real());
        else
            complex_parts.push_back(std::move(g));
    }

    GammaMatrix out;
    out.values.resize(k, k);
    for (Index i = 0; i < k; ++i)
        for (Index j = i; j < k; ++j) {
            const auto si = static_cast<std::size_t>(i);
            const auto sj = static_cast<std::size_t>(j);
            const double v = real ? internal::product_norm(real_parts[si], real_parts[sj])
                                  : internal::product_norm(complex_parts[si], complex_parts[sj]);
            out.values(i, j) = v;
            out.values(j, i) = v;
        }

    for (Index i = 0; i < k; ++i) {
        const double chi = stable_schmidt_rank(es.state(i), cut);
        if (std::abs(out.values(i, i) * chi - 1.0) > 1e-9)
            throw NumericalError("gamma_matrix: diagonal disagrees with stable Schmidt rank at i = " + std::to_string(i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Disk cache: one JSON header line, then the upper triangle as raw little-endian doubles.

struct GammaCacheKey {
    std::string hamiltonian_hash;
    std::string bipartition;
    Index k = 0;

    nlohmann::json to_json() const { return {{"k", k}, {"hamiltonian_hash", hamiltonian_hash}, {"bipartition", bipartition}}; }
    std::string file_name() const { return "gamma_" + hamiltonian_hash + "_" + std::to_string(k) + "_" + bipartition + ".bin"; }
};

namespace internal {

class FileLock {
public:
    explicit FileLock(const std::filesystem::path& path) {
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw Error("gamma cache: cannot open lock file " + path.string());
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw Error("gamma cache: cannot lock " + path.string());
        }
    }
    ~FileLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

}  // namespace internal

inline void write_gamma_cache(const std::filesystem::path& file, const GammaCacheKey& key, const GammaMatrix& g) {
    const auto tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("gamma cache: cannot write " + tmp);
        out << key.to_json().dump() << '\n';
        for (Index i = 0; i < g.size(); ++i)
            for (Index j = i; j < g.size(); ++j) {
                const double v = g.values(i, j);
                out.write(reinterpret_cast<const char*>(&v), sizeof v);
            }
        if (!out) throw Error("gamma cache: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, file);
}

inline std::optional<GammaMatrix> read_gamma_cache(const std::filesystem::path& file, const GammaCacheKey& key) {
    std::ifstream in(file, std::ios::binary);
    if (!in) return std::nullopt;
    std::string header;
    if (!std::getline(in, header)) return std::nullopt;
    nlohmann::json doc = nlohmann::json::parse(header, nullptr, false);
    if (doc.is_discarded() || doc != key.to_json()) return std::nullopt;
    GammaMatrix g;
    g.values.resize(key.k, key.k);
    for (Index i = 0; i < key.k; ++i)
        for (Index j = i; j < key.k; ++j) {
            double v = 0.0;
            if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) return std::nullopt;
            g.values(i, j) = v;
            g.values(j, i) = v;
        }
    return g;
}

/// Reads gamma from `dir` when a matching entry exists, otherwise computes and stores it.
/// Concurrent processes serialise on a lock file in the same directory.
inline GammaMatrix cached_gamma_matrix(const std::filesystem::path& dir, const PauliHamiltonian& h,
                                       const EigenSystem& es, const Bipartition& cut) {
    std::filesystem::create_directories(dir);
    const GammaCacheKey key{h.hash(), cut.describe(), es.size()};
    const auto file = dir / key.file_name();
    internal::FileLock lock(dir / ".gamma.lock");
    if (auto hit = read_gamma_cache(file, key)) return *hit;
    GammaMatrix g = gamma_matrix(es, cut);
    write_gamma_cache(file, key, g);
    return g;
}

// ---------------------------------------------------------------------------
// Concavity of g(p) = sum_ij gamma_ij sqrt(p_i p_j)

inline double relaxed_constraint(const GammaMatrix& gamma, const std::vector<double>& p) {
    detail::require(static_cast<Index>(p.size()) == gamma.size(), "relaxed_constraint: length mismatch");
    RealVector x(gamma.size());
    for (Index i = 0; i < gamma.size(); ++i) x(i) = std::sqrt(std::max(0.0, p[static_cast<std::size_t>(i)]));
    return x.dot(gamma.values * x);
}

struct ConcavityReport {
    int trials = 0;
    double worst_violation = 0.0;  // max of lambda f(p) + (1-lambda) f(q) - f(mix)
    bool ok = true;
    std::vector<double> witness_p, witness_q;
    double witness_lambda = 0.0;
};

inline ConcavityReport concavity_check(const GammaMatrix& gamma, int trials, std::uint64_t seed = 1) {
    gamma.validate();
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> expo(1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto k = static_cast<std::size_t>(gamma.size());
    auto simplex_point = [&] {
        std::vector<double> p(k);
        double s = 0.0;
        for (double& x : p) s += (x = expo(rng));
        for (double& x : p) x /= s;
        return p;
    };
    ConcavityReport r;
    r.trials = trials;
    for (int t = 0; t < trials; ++t) {
        const auto p = simplex_point();
        const auto q = simplex_point();
        const double lambda = unit(rng);
        std::vector<double> mix(k);
        for (std::size_t i = 0; i < k; ++i) mix[i] = lambda * p[i] + (1 - lambda) * q[i];
        const double gap = lambda * relaxed_constraint(gamma, p) + (1 - lambda) * relaxed_constraint(gamma, q) -
                           relaxed_constraint(gamma, mix);
        if (gap > r.worst_violation) {
            r.worst_violation = gap;
            r.witness_p = p;
            r.witness_q = q;
            r.witness_lambda = lambda;
        }
    }
    r.ok = r.worst_violation <= 1e-10;
    return r;
}

// ---------------------------------------------------------------------------
// Solver

struct CRPlusSolution {
    std::vector<double> p;
    double g = 0.0;               // achieved sum_ij gamma_ij sqrt(p_i p_j)
    double optimum_energy = 0.0;  // primal objective at p
    double dual_value = 0.0;      // best lower bound found
    double lambda = 0.0;          // multiplier of the constraint
    double duality_gap = 0.0;
    int iterations = 0;
    bool constraint_active = true;
    std::vector<double> history;  // best feasible objective after each outer iteration
};

namespace internal {

struct InnerPoint {
    RealVector x;  // unit vector, x >= 0, p = x^2
    double g = 0.0;
    double energy = 0.0;
    double value = 0.0;  // energy - lambda g
};

/// Lowest eigenpair of a symmetric matrix given by its action.
class LowestEigen {
public:
    LowestEigen(Index k, double scale) : k_(k), scale_(scale) {}

    template <class Apply, class Dense>
    std::pair<double, RealVector> operator()(Apply&& apply, Dense&& dense, const RealVector* warm) {
        if (k_ <= 256) {
            Eigen::SelfAdjointEigenSolver<RealMatrix> s(dense());
            if (s.info() != Eigen::Success) throw NumericalError("solve_cr_plus: eigensolver failed");
            return {s.eigenvalues()(0), s.eigenvectors().col(0)};
        }
        linalg::LanczosOptions opt;
        opt.tol = 1e-12 * scale_;
        opt.krylov_dim = 120;
        auto pair = linalg::lanczos_lowest<double>(apply, k_, opt, warm);
        return {pair.value, pair.vector};
    }

private:
    Index k_;
    double scale_;
};

}  // namespace internal

/// Minimises sum p_i E_i over the simplex subject to sum_ij gamma_ij sqrt(p_i p_j) >= 1/m.
///
/// With x = sqrt(p) the Lagrangian minimum for a multiplier lambda >= 0 is the
/// lowest eigenvalue of diag(E) - lambda gamma, and since gamma >= 0 its
/// eigenvector can be taken nonnegative. The multiplier is bisected on
/// constraint activity; the final point mixes the iterates on either side so
/// that the constraint is met, and iteration stops on the duality gap.
inline CRPlusSolution solve_cr_plus(const std::vector<double>& E, const GammaMatrix& gamma, double m,
                                    double tol = 1e-12) {
    gamma.validate();
    const Index k = gamma.size();
    detail::require(static_cast<Index>(E.size()) == k, "solve_cr_plus: E and gamma differ in size");
    detail::require(m > 0.0 && tol > 0.0, "solve_cr_plus: m and tol must be positive");
    for (std::size_t i = 1; i < E.size(); ++i) detail::require(E[i - 1] <= E[i], "solve_cr_plus: E must be ascending");

    const double target = 1.0 / m;
    const double e_scale = std::max({1.0, std::abs(E.front()), std::abs(E.back())});
    const RealVector energies = Eigen::Map<const RealVector>(E.data(), k);
    const RealMatrix& G = gamma.values;

    auto make_point = [&](RealVector x, double lambda) {
        x = x.cwiseAbs();
        x /= x.norm();
        internal::InnerPoint pt;
        pt.g = x.dot(G * x);
        pt.energy = energies.dot(x.cwiseProduct(x));
        pt.value = pt.energy - lambda * pt.g;
        pt.x = std::move(x);
        return pt;
    };
    auto to_p = [](const RealVector& x) {
        std::vector<double> p(static_cast<std::size_t>(x.size()));
        for (Index i = 0; i < x.size(); ++i) p[static_cast<std::size_t>(i)] = x(i) * x(i);
        return p;
    };

    // Feasibility: the largest value of g on the simplex is lambda_max(gamma).
    const double g_scale = std::max(1e-300, G.maxCoeff());
    internal::LowestEigen lowest(k, std::max(e_scale, g_scale));
    auto [neg_top, perron] = lowest([&](const RealVector& v) { RealVector out = -(G * v); return out; },
                                    [&] { return RealMatrix(-G); }, nullptr);
    const double g_max = -neg_top;
    if (g_max < target * (1.0 - 1e-8)) throw InfeasibleError("solve_cr_plus: constraint cannot be met (max g below 1/m)");

    // Ground-energy face: if it can meet the constraint, lambda = 0 is optimal.
    const double tie = kEnergyTieTol * std::max(1.0, std::abs(E.front()));
    Index l = 0;
    while (l < k && E[static_cast<std::size_t>(l)] - E.front() <= tie) ++l;
    RealVector ground_x = RealVector::Zero(k);
    {
        Eigen::SelfAdjointEigenSolver<RealMatrix> s(G.topLeftCorner(l, l));
        ground_x.head(l) = s.eigenvectors().col(l - 1);
    }
    const auto ground = make_point(ground_x, 0.0);
    CRPlusSolution sol;
    if (ground.g >= target) {
        sol.p = to_p(ground.x);
        sol.g = ground.g;
        sol.optimum_energy = ground.energy;
        sol.dual_value = E.front();
        sol.constraint_active = false;
        sol.history.push_back(sol.optimum_energy);
        return sol;
    }

    auto inner = [&](double lambda, const RealVector* warm) {
        auto [value, x] = lowest(
            [&](const RealVector& v) { RealVector out = energies.cwiseProduct(v) - lambda * (G * v); return out; },
            [&] {
                RealMatrix a = -lambda * G;
                a.diagonal() += energies;
                return a;
            },
            warm);
        auto pt = make_point(std::move(x), lambda);
        return pt;
    };

    // Bracket the multiplier.
    internal::InnerPoint lo_pt = ground;
    double lambda_lo = 0.0;
    double lambda_hi = std::max(1.0, (E.back() - E.front())) / std::max(g_scale, 1e-300);
    double best_dual = E.front();  // q(0)
    internal::InnerPoint hi_pt = inner(lambda_hi, nullptr);
    best_dual = std::max(best_dual, lambda_hi * target + hi_pt.value);
    int expansions = 0;
    while (hi_pt.g < target) {
        lambda_lo = lambda_hi;
        lo_pt = hi_pt;
        lambda_hi *= 4.0;
        if (++expansions > 200) {
            // Only the maximiser of g is feasible.
            hi_pt = make_point(perron, lambda_hi);
            break;
        }
        hi_pt = inner(lambda_hi, &lo_pt.x);
        best_dual = std::max(best_dual, lambda_hi * target + hi_pt.value);
    }
    if (hi_pt.g < target) hi_pt = make_point(perron, lambda_hi);

    auto mixed = [&](std::vector<double>& p, double& energy) {
        const double theta = hi_pt.g > lo_pt.g ? std::clamp((hi_pt.g - target) / (hi_pt.g - lo_pt.g), 0.0, 1.0) : 0.0;
        p.assign(static_cast<std::size_t>(k), 0.0);
        for (Index i = 0; i < k; ++i)
            p[static_cast<std::size_t>(i)] = theta * lo_pt.x(i) * lo_pt.x(i) + (1 - theta) * hi_pt.x(i) * hi_pt.x(i);
        energy = theta * lo_pt.energy + (1 - theta) * hi_pt.energy;
    };

    std::vector<double> p;
    double energy = 0.0;
    mixed(p, energy);
    double best_primal = energy;
    sol.history.push_back(best_primal);
    int iter = 0;
    for (; iter < 300; ++iter) {
        if (best_primal - best_dual <= tol * e_scale) break;
        const double lambda = 0.5 * (lambda_lo + lambda_hi);
        if (!(lambda > lambda_lo && lambda < lambda_hi)) break;
        auto pt = inner(lambda, &hi_pt.x);
        best_dual = std::max(best_dual, lambda * target + pt.value);
        if (pt.g >= target) {
            lambda_hi = lambda;
            hi_pt = std::move(pt);
        } else {
            lambda_lo = lambda;
            lo_pt = std::move(pt);
        }
        std::vector<double> candidate;
        double candidate_energy = 0.0;
        mixed(candidate, candidate_energy);
        if (candidate_energy <= best_primal) {
            best_primal = candidate_energy;
            p = std::move(candidate);
        }
        sol.history.push_back(best_primal);
    }

    sol.p = std::move(p);
    double total = 0.0;
    for (double v : sol.p) total += v;
    for (double& v : sol.p) v /= total;
    sol.g = relaxed_constraint(gamma, sol.p);
    sol.optimum_energy = energies.dot(Eigen::Map<const RealVector>(sol.p.data(), k));
    sol.dual_value = best_dual;
    sol.lambda = 0.5 * (lambda_lo + lambda_hi);
    sol.duality_gap = sol.optimum_energy - best_dual;
    sol.iterations = iter;
    if (sol.g < target - 1e-8) throw NumericalError("solve_cr_plus: final point violates the constraint");
    if (sol.duality_gap > std::max(1e-8, 1e3 * tol) * e_scale)
        throw NumericalError("solve_cr_plus: duality gap " + std::to_string(sol.duality_gap) + " did not close");
    return sol;
}

// ---------------------------------------------------------------------------
// Triangle-inequality slack of an eigen-expansion

struct SlackABC {
    double A = 0.0;  // || sum alpha_i Gamma_i ||
    double B = 0.0;  // sum |alpha_i| ||Gamma_i||
    double C = 0.0;  // sqrt(sum |alpha_i||alpha_j| gamma_ij)
};

/// Computes A <= C <= B for the state sum_i alpha_i |psi_i>. Pass `gamma` to
/// reuse a precomputed matrix; otherwise only the entries on the support of
/// alpha are formed.
inline SlackABC slack_abc(const std::vector<Complex>& alpha, const EigenSystem& es, const Bipartition& cut,
                          const GammaMatrix* gamma = nullptr, double zero_tol = 0.0) {
    detail::require(static_cast<Index>(alpha.size()) == es.size(), "slack_abc: alpha length differs from k");
    double norm2 = 0.0;
    for (const auto& a : alpha) norm2 += std::norm(a);
    detail::require(std::abs(norm2 - 1.0) <= 1e-10, "slack_abc: alpha must be normalised");

    std::vector<Index> support;
    for (Index i = 0; i < es.size(); ++i)
        if (std::abs(alpha[static_cast<std::size_t>(i)]) > zero_tol) support.push_back(i);

    StateVector psi = StateVector::Zero(es.states.rows());
    std::vector<ComplexMatrix> parts;
    SlackABC r;
    for (Index i : support) {
        const Complex a = alpha[static_cast<std::size_t>(i)];
        psi += a * es.state(i);
        parts.push_back(reshape_state(es.state(i), cut));
        r.B += std::abs(a) * linalg::spectral_norm(parts.back());
    }
    r.A = linalg::spectral_norm(reshape_state(psi, cut));
    double c2 = 0.0;
    for (std::size_t s = 0; s < support.size(); ++s)
        for (std::size_t t = 0; t < support.size(); ++t) {
            const double gij = gamma ? gamma->values(support[s], support[t])
                                     : (s == t ? std::pow(linalg::spectral_norm(parts[s]), 2)
                                               : internal::product_norm(parts[s], parts[t]));
            c2 += std::abs(alpha[static_cast<std::size_t>(support[s])]) *
                  std::abs(alpha[static_cast<std::size_t>(support[t])]) * gij;
        }
    r.C = std::sqrt(c2);
    const double slack = 1e-10 * std::max(1.0, r.B);
    if (r.A > r.C + slack || r.C > r.B + slack)
        throw NumericalError("slack_abc: chain A <= C <= B violated");
    return r;
}

}  // namespace spectra_lab
