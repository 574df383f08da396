#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "spectra_lab/linalg.hpp"

namespace spectra_lab {

// Basis convention used everywhere: site 0 is the most significant bit of a
// basis index, so |b> with b = sum_i b_i 2^(n-1-i).

inline std::uint64_t site_bit(int n, int site) { return std::uint64_t{1} << (n - 1 - site); }

class PauliString {
public:
    PauliString() = default;

    explicit PauliString(std::string ops) : ops_(std::move(ops)) {
        detail::require(!ops_.empty() && ops_.size() <= 62, "PauliString: length must be in [1, 62]");
        const int n = size();
        for (int i = 0; i < n; ++i) {
            const std::uint64_t bit = site_bit(n, i);
            switch (ops_[i]) {
                case 'I': break;
                case 'X': flip_ |= bit; break;
                case 'Y': flip_ |= bit; sign_ |= bit; ++y_count_; break;
                case 'Z': sign_ |= bit; break;
                default: throw InvalidArgument(std::string("PauliString: bad operator '") + ops_[i] + "'");
            }
        }
    }

    /// Identity on n sites with the given single-site operators placed.
    static PauliString on_sites(int n, std::initializer_list<std::pair<int, char>> placed) {
        detail::require(n >= 1, "PauliString: n must be >= 1");
        std::string ops(n, 'I');
        for (auto [site, op] : placed) {
            detail::require(site >= 0 && site < n, "PauliString: site out of range");
            ops[site] = op;
        }
        return PauliString(std::move(ops));
    }

    int size() const { return static_cast<int>(ops_.size()); }
    const std::string& str() const { return ops_; }
    char op(int site) const { return ops_.at(site); }

    std::uint64_t flip_mask() const { return flip_; }  // X or Y sites
    std::uint64_t sign_mask() const { return sign_; }  // Z or Y sites
    int y_count() const { return y_count_; }
    bool is_identity() const { return flip_ == 0 && sign_ == 0; }

    /// i^{#Y}, the b-independent part of the phase.
    Complex y_phase() const {
        static const Complex table[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        return table[y_count_ % 4];
    }

    /// P|b> = phase(b) |b ^ flip_mask()>.
    Complex phase(std::uint64_t b) const {
        return (std::popcount(b & sign_) & 1) ? -y_phase() : y_phase();
    }

    bool operator==(const PauliString& other) const { return ops_ == other.ops_; }

private:
    std::string ops_;
    std::uint64_t flip_ = 0;
    std::uint64_t sign_ = 0;
    int y_count_ = 0;
};

struct PauliTerm {
    double coeff = 0.0;
    PauliString ops;
};

class SzSector;

class PauliHamiltonian {
public:
    PauliHamiltonian() = default;

    PauliHamiltonian(int n, std::vector<PauliTerm> terms) : n_(n), terms_(std::move(terms)) {
        detail::require(n >= 1 && n <= 62, "PauliHamiltonian: n must be in [1, 62]");
        for (const auto& t : terms_) {
            detail::require(t.ops.size() == n, "PauliHamiltonian: term length differs from n");
            detail::require(std::isfinite(t.coeff), "PauliHamiltonian: non-finite coefficient");
        }
    }

    int qubits() const { return n_; }
    std::uint64_t dimension() const { return std::uint64_t{1} << n_; }
    const std::vector<PauliTerm>& terms() const { return terms_; }

    double max_coeff() const {
        double c = 0.0;
        for (const auto& t : terms_) c = std::max(c, std::abs(t.coeff));
        return c;
    }

    double trace() const {
        double s = 0.0;
        for (const auto& t : terms_)
            if (t.ops.is_identity()) s += t.coeff;
        return s * static_cast<double>(dimension());
    }

    /// Terms with the same flip mask act on a basis state together; grouping
    /// them lets cancelling pairs like XX + YY be recognised.
    struct FlipGroup {
        std::uint64_t flip = 0;
        std::vector<std::pair<Complex, std::uint64_t>> parts;  // (coeff * i^#Y, sign mask)

        Complex amplitude(std::uint64_t b) const {
            Complex a = 0.0;
            for (const auto& [c, s] : parts) a += (std::popcount(b & s) & 1) ? -c : c;
            return a;
        }
    };

    std::vector<FlipGroup> flip_groups() const {
        std::map<std::uint64_t, FlipGroup> groups;
        for (const auto& t : terms_) {
            auto& g = groups[t.ops.flip_mask()];
            g.flip = t.ops.flip_mask();
            g.parts.emplace_back(t.coeff * t.ops.y_phase(), t.ops.sign_mask());
        }
        std::vector<FlipGroup> out;
        for (auto& [mask, g] : groups) out.push_back(std::move(g));
        return out;
    }

    /// True when H commutes with total Z, i.e. never connects basis states of
    /// different Hamming weight. Checked exactly over the bits each group touches.
    bool preserves_weight() const {
        const double tol = 1e-13 * std::max(1.0, max_coeff());
        for (const auto& g : flip_groups()) {
            if (g.flip == 0) continue;
            std::uint64_t touched = g.flip;
            for (const auto& part : g.parts) touched |= part.second;
            // Enumerate all assignments of the touched bits.
            for (std::uint64_t b = touched;; b = (b - 1) & touched) {
                const bool changes = std::popcount(b & g.flip) * 2 != std::popcount(g.flip);
                if (changes && std::abs(g.amplitude(b)) > tol) return false;
                if (b == 0) break;
            }
        }
        return true;
    }

    StateVector apply(const StateVector& v) const {
        detail::require(static_cast<std::uint64_t>(v.size()) == dimension(), "PauliHamiltonian::apply: size mismatch");
        StateVector out = StateVector::Zero(v.size());
        const auto groups = flip_groups();
        for (std::uint64_t b = 0; b < dimension(); ++b) {
            const Complex vb = v(static_cast<Index>(b));
            if (vb == Complex(0.0)) continue;
            for (const auto& g : groups) out(static_cast<Index>(b ^ g.flip)) += g.amplitude(b) * vb;
        }
        return out;
    }

    double expectation(const StateVector& v) const { return std::real(v.dot(apply(v))); }

    SparseHermitian to_sparse() const {
        detail::require(n_ <= 26, "PauliHamiltonian::to_sparse: n too large");
        std::vector<SparseHermitian::Triplet> triplets;
        const auto groups = flip_groups();
        const double tol = 1e-14 * std::max(1.0, max_coeff());
        for (std::uint64_t b = 0; b < dimension(); ++b)
            for (const auto& g : groups) {
                const Complex a = g.amplitude(b);
                if (std::abs(a) > tol)
                    triplets.emplace_back(static_cast<Index>(b ^ g.flip), static_cast<Index>(b), a);
            }
        return SparseHermitian(static_cast<Index>(dimension()), std::move(triplets));
    }

    ComplexMatrix to_dense() const { return to_sparse().to_dense(); }

    /// Relabel sites: old site i becomes new site perm[i].
    PauliHamiltonian permuted(const std::vector<int>& perm) const {
        detail::require(static_cast<int>(perm.size()) == n_, "permuted: permutation length differs from n");
        std::vector<int> seen(n_, 0);
        for (int p : perm) {
            detail::require(p >= 0 && p < n_ && !seen[p], "permuted: not a permutation");
            seen[p] = 1;
        }
        std::vector<PauliTerm> out;
        for (const auto& t : terms_) {
            std::string ops(n_, 'I');
            for (int i = 0; i < n_; ++i) ops[perm[i]] = t.ops.op(i);
            out.push_back({t.coeff, PauliString(std::move(ops))});
        }
        return PauliHamiltonian(n_, std::move(out));
    }

    nlohmann::json to_json() const {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& t : terms_) terms.push_back({{"coeff", t.coeff}, {"paulis", t.ops.str()}});
        return {{"n", n_}, {"terms", terms}};
    }

    static PauliHamiltonian from_json(const nlohmann::json& doc) {
        try {
            const int n = doc.at("n").get<int>();
            std::vector<PauliTerm> terms;
            for (const auto& t : doc.at("terms"))
                terms.push_back({t.at("coeff").get<double>(), PauliString(t.at("paulis").get<std::string>())});
            return PauliHamiltonian(n, std::move(terms));
        } catch (const nlohmann::json::exception& e) {
            throw InvalidArgument(std::string("PauliHamiltonian JSON: ") + e.what());
        }
    }

    /// FNV-1a over the canonical JSON text, as 16 hex digits.
    std::string hash() const {
        const std::string text = to_json().dump();
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : text) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

private:
    int n_ = 0;
    std::vector<PauliTerm> terms_;
};

// ---------------------------------------------------------------------------
// Model builders

enum class Boundary { Periodic, Open };

namespace internal {

inline PauliHamiltonian heisenberg_on_edges(int n, const std::set<std::pair<int, int>>& edges) {
    std::vector<PauliTerm> terms;
    for (auto [i, j] : edges)
        for (char op : {'X', 'Y', 'Z'}) terms.push_back({0.25, PauliString::on_sites(n, {{i, op}, {j, op}})});
    return PauliHamiltonian(n, std::move(terms));
}

inline std::pair<int, int> edge(int i, int j) { return {std::min(i, j), std::max(i, j)}; }

}  // namespace internal

/// H = 1/4 sum_i (X_i X_{i+1} + Y_i Y_{i+1} + Z_i Z_{i+1}); each distinct
/// pair of sites appears once, so n = 2 has a single edge.
inline PauliHamiltonian build_afhm_1d(int n, Boundary boundary = Boundary::Periodic) {
    detail::require(n >= 2, "build_afhm_1d: n must be >= 2");
    std::set<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < n; ++i) edges.insert(internal::edge(i, i + 1));
    if (boundary == Boundary::Periodic) edges.insert(internal::edge(n - 1, 0));
    return internal::heisenberg_on_edges(n, edges);
}

/// Site index of grid point (column x, row y) on a side x side lattice.
/// Columns are laid out one after another, alternating direction, so the
/// left half of the grid is sites [0, n/2) and nearest neighbours inside a
/// column stay adjacent in the chain.
inline int grid_site(int side, int x, int y) { return x * side + (x % 2 == 0 ? y : side - 1 - y); }

inline PauliHamiltonian build_afhm_2d(int side, Boundary boundary = Boundary::Periodic) {
    detail::require(side >= 2, "build_afhm_2d: side must be >= 2");
    const int n = side * side;
    detail::require(n <= 62, "build_afhm_2d: side too large");
    std::set<std::pair<int, int>> edges;
    for (int x = 0; x < side; ++x)
        for (int y = 0; y < side; ++y) {
            const int here = grid_site(side, x, y);
            if (x + 1 < side || boundary == Boundary::Periodic)
                edges.insert(internal::edge(here, grid_site(side, (x + 1) % side, y)));
            if (y + 1 < side || boundary == Boundary::Periodic)
                edges.insert(internal::edge(here, grid_site(side, x, (y + 1) % side)));
        }
    return internal::heisenberg_on_edges(n, edges);
}

// ---------------------------------------------------------------------------
// Total-Z sectors

inline std::uint64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    return r;
}

/// Basis states with fixed Hamming weight, in increasing numeric order.
class SzSector {
public:
    SzSector(int n, int weight) : n_(n), weight_(weight) {
        detail::require(n >= 1 && n <= 62, "SzSector: n must be in [1, 62]");
        detail::require(weight >= 0 && weight <= n, "SzSector: weight out of range");
        const std::uint64_t count = binomial(n, weight);
        detail::require(count <= (std::uint64_t{1} << 32), "SzSector: sector too large");
        basis_.reserve(count);
        if (weight == 0) {
            basis_.push_back(0);
        } else {
            // Gosper's hack walks same-popcount integers in increasing order.
            std::uint64_t b = (std::uint64_t{1} << weight) - 1;
            const std::uint64_t limit = std::uint64_t{1} << n;
            while (b < limit) {
                basis_.push_back(b);
                const std::uint64_t c = b & (~b + 1);
                const std::uint64_t r = b + c;
                b = (((r ^ b) >> 2) / c) | r;
            }
        }
        binom_.assign(n + 1, std::vector<std::uint64_t>(weight + 2, 0));
        for (int p = 0; p <= n; ++p)
            for (int j = 0; j <= weight + 1; ++j) binom_[p][j] = binomial(p, j);
    }

    int qubits() const { return n_; }
    int weight() const { return weight_; }
    Index size() const { return static_cast<Index>(basis_.size()); }
    std::uint64_t state(Index i) const { return basis_[static_cast<std::size_t>(i)]; }
    const std::vector<std::uint64_t>& basis() const { return basis_; }

    bool contains(std::uint64_t b) const { return std::popcount(b) == weight_ && b < (std::uint64_t{1} << n_); }

    /// Position of b in basis(), via the combinatorial number system.
    Index index(std::uint64_t b) const {
        detail::require(contains(b), "SzSector::index: state not in sector");
        std::uint64_t r = 0;
        int j = 0;
        while (b) {
            const int pos = std::countr_zero(b);
            ++j;
            r += binom_[pos][j];
            b &= b - 1;
        }
        return static_cast<Index>(r);
    }

    /// Embed sector amplitudes into the full 2^n space.
    StateVector embed(const StateVector& v) const {
        detail::require(v.size() == size(), "SzSector::embed: size mismatch");
        StateVector out = StateVector::Zero(static_cast<Index>(std::uint64_t{1} << n_));
        for (Index i = 0; i < size(); ++i) out(static_cast<Index>(state(i))) = v(i);
        return out;
    }

private:
    int n_;
    int weight_;
    std::vector<std::uint64_t> basis_;
    std::vector<std::vector<std::uint64_t>> binom_;
};

/// H restricted to a sector. Throws if H moves amplitude out of the sector.
inline SparseHermitian sector_matrix(const PauliHamiltonian& h, const SzSector& sector) {
    detail::require(h.qubits() == sector.qubits(), "sector_matrix: qubit count mismatch");
    const auto groups = h.flip_groups();
    const double tol = 1e-13 * std::max(1.0, h.max_coeff());
    std::vector<SparseHermitian::Triplet> triplets;
    for (Index col = 0; col < sector.size(); ++col) {
        const std::uint64_t b = sector.state(col);
        for (const auto& g : groups) {
            const Complex a = g.amplitude(b);
            if (std::abs(a) <= tol) continue;
            const std::uint64_t target = b ^ g.flip;
            if (!sector.contains(target))
                throw InvalidArgument("sector_matrix: Hamiltonian does not preserve Hamming weight");
            triplets.emplace_back(sector.index(target), col, a);
        }
    }
    return SparseHermitian(sector.size(), std::move(triplets));
}

// ---------------------------------------------------------------------------
// Eigensystems

struct EigenSystem {
    int qubits = 0;
    RealVector energies;   // ascending
    ComplexMatrix states;  // column i is |psi_i> in the full 2^n basis

    Index size() const { return energies.size(); }
    StateVector state(Index i) const { return states.col(i); }
};

struct DenseLimits {
    int full_space_qubits = 14;
    int sector_qubits = 16;
};

namespace internal {

inline EigenSystem sort_eigensystem(int n, std::vector<std::pair<double, StateVector>> pairs) {
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    EigenSystem es;
    es.qubits = n;
    const Index dim = static_cast<Index>(std::uint64_t{1} << n);
    es.energies.resize(static_cast<Index>(pairs.size()));
    es.states.resize(dim, static_cast<Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        es.energies(static_cast<Index>(i)) = pairs[i].first;
        es.states.col(static_cast<Index>(i)) = pairs[i].second;
    }
    return es;
}

}  // namespace internal

/// Calls visit(energy, state) for every eigenpair of one Sz sector, ascending in energy.
inline void for_each_eigenpair_in_sector(const PauliHamiltonian& h, int weight,
                                         const std::function<void(double, const StateVector&)>& visit) {
    const SzSector sector(h.qubits(), weight);
    const auto m = sector_matrix(h, sector);
    if (m.is_real()) {
        // Real path with one dense copy alive at a time: the n = 16 middle sector
        // (12870 states) would not fit in memory as a complex eigensystem.
        Eigen::SelfAdjointEigenSolver<RealMatrix> solver;
        {
            RealMatrix dense(m.real_matrix());
            solver.compute(dense);
        }
        if (solver.info() != Eigen::Success) throw NumericalError("for_each_eigenpair: eigensolver failed");
        for (Index i = 0; i < solver.eigenvalues().size(); ++i)
            visit(solver.eigenvalues()(i), sector.embed(solver.eigenvectors().col(i).cast<Complex>()));
        return;
    }
    const auto eig = linalg::hermitian_eig(m.to_dense());
    for (Index i = 0; i < eig.eigenvalues.size(); ++i) visit(eig.eigenvalues(i), sector.embed(eig.eigenvectors.col(i)));
}

/// Calls visit(energy, state) for every eigenpair, one sector at a time, so
/// only one sector's dense eigensystem is held in memory. Order is by sector
/// weight, then ascending energy within the sector.
inline void for_each_eigenpair(const PauliHamiltonian& h,
                               const std::function<void(double, const StateVector&)>& visit,
                               const DenseLimits& limits = {}) {
    const int n = h.qubits();
    if (n > limits.sector_qubits) throw InvalidArgument("for_each_eigenpair: n above sector limit");
    for (int w = 0; w <= n; ++w) for_each_eigenpair_in_sector(h, w, visit);
}

/// All 2^n eigenpairs, globally sorted by energy. Equal energies come back in
/// no guaranteed order.
inline EigenSystem full_eigensystem(const PauliHamiltonian& h, bool use_sectors, const DenseLimits& limits = {}) {
    const int n = h.qubits();
    if (use_sectors) {
        if (n > limits.sector_qubits) throw InvalidArgument("full_eigensystem: n above sector limit");
        std::vector<std::pair<double, StateVector>> pairs;
        for_each_eigenpair(h, [&](double e, const StateVector& v) { pairs.emplace_back(e, v); }, limits);
        return internal::sort_eigensystem(n, std::move(pairs));
    }
    if (n > limits.full_space_qubits) throw InvalidArgument("full_eigensystem: n above dense limit");
    const auto eig = linalg::hermitian_eig(h.to_dense());
    EigenSystem es;
    es.qubits = n;
    es.energies = eig.eigenvalues;
    es.states = eig.eigenvectors;
    return es;
}

struct GroundStateOptions {
    std::optional<int> sector_weight;  // force a sector
    double tol = 1e-9;                 // residual target
    double degeneracy_gap = 1e-10;
    int max_qubits = 24;
};

struct GroundState {
    double energy = 0.0;
    StateVector state;       // full 2^n basis
    double gap = 0.0;        // to the next level searched (same sector, or the next-best sector)
    double residual = 0.0;
    std::optional<int> sector_weight;
};

/// Ground state by Lanczos. With an explicit sector only that sector is
/// searched. Otherwise a weight-preserving H is searched sector by sector and
/// anything else over the full space. A gap below the degeneracy threshold
/// throws DegenerateGroundState.
inline GroundState ground_state(const PauliHamiltonian& h, const GroundStateOptions& options = {}) {
    const int n = h.qubits();
    if (n > options.max_qubits) throw InvalidArgument("ground_state: n above sparse limit");

    auto lowest_two = [&](const SparseHermitian& m) {
        auto first = linalg::lanczos_ground(m, options.tol);
        double second = std::numeric_limits<double>::infinity();
        if (m.dimension() > 1) {
            const StateVector d[1] = {first.state};
            second = linalg::lanczos_ground(m, options.tol, std::span<const StateVector>(d, 1)).energy;
        }
        return std::make_pair(first, second);
    };

    auto finish = [&](GroundState g) {
        if (g.gap < options.degeneracy_gap) throw DegenerateGroundState(g.energy, g.gap);
        return g;
    };

    if (options.sector_weight) {
        const SzSector sector(n, *options.sector_weight);
        auto [first, second] = lowest_two(sector_matrix(h, sector));
        return finish({first.energy, sector.embed(first.state), second - first.energy, first.residual, sector.weight()});
    }

    if (h.preserves_weight()) {
        GroundState best;
        best.energy = std::numeric_limits<double>::infinity();
        double runner_up = std::numeric_limits<double>::infinity();
        for (int w = 0; w <= n; ++w) {
            const SzSector sector(n, w);
            auto [first, second] = lowest_two(sector_matrix(h, sector));
            if (first.energy < best.energy) {
                runner_up = std::min(best.energy, second);
                best = {first.energy, sector.embed(first.state), 0.0, first.residual, w};
            } else {
                runner_up = std::min(runner_up, first.energy);
            }
        }
        best.gap = runner_up - best.energy;
        return finish(best);
    }

    auto [first, second] = lowest_two(h.to_sparse());
    return finish({first.energy, first.state, second - first.energy, first.residual, std::nullopt});
}

}  // namespace spectra_lab
