#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spectra_lab/hamiltonian.hpp"

using namespace spectra_lab;

namespace {

std::vector<std::pair<int, int>> ring(int n) {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < n; ++i) e.emplace_back(std::min(i, (i + 1) % n), std::max(i, (i + 1) % n));
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
    return e;
}

}  // namespace

TEST(PauliString, ActionMatchesKronecker) {
    std::mt19937_64 rng(4);
    for (const std::string ops : {"X", "Y", "Z", "XY", "YZX", "IYYZ", "ZZYX"}) {
        const int n = static_cast<int>(ops.size());
        PauliHamiltonian h(n, {{1.0, PauliString(ops)}});
        const auto v = oracle::random_state(Index{1} << n, rng);
        const StateVector expected = oracle::pauli_string(ops) * v;
        EXPECT_LE((h.apply(v) - expected).norm(), 1e-13) << ops;
        EXPECT_LE(linalg::max_abs(h.to_dense() - oracle::pauli_string(ops)), 1e-14) << ops;
    }
}

TEST(PauliString, RejectsBadOperator) { EXPECT_THROW(PauliString("XQ"), InvalidArgument); }

TEST(Afhm1d, TermCountsAndSmallSpectra) {
    EXPECT_EQ(build_afhm_1d(2).terms().size(), 3u);
    EXPECT_EQ(build_afhm_1d(3).terms().size(), 9u);
    EXPECT_THROW(build_afhm_1d(1), InvalidArgument);

    const auto es = full_eigensystem(build_afhm_1d(2), false);
    EXPECT_NEAR(es.energies(0), -0.75, 1e-12);
    for (int i = 1; i < 4; ++i) EXPECT_NEAR(es.energies(i), 0.25, 1e-12);
}

TEST(Afhm1d, DenseMatchesKroneckerOracle) {
    for (int n : {2, 3, 4, 6}) {
        const auto mine = build_afhm_1d(n).to_dense();
        EXPECT_LE(linalg::max_abs(mine - oracle::heisenberg_dense(n, ring(n))), 1e-14) << n;
    }
}

TEST(Afhm1d, ChainOfTenGroundEnergy) {
    const auto g = ground_state(build_afhm_1d(10));
    std::vector<std::pair<int, int>> edges = ring(10);
    EXPECT_NEAR(g.energy, oracle::dense_eigenvalues(oracle::heisenberg_dense(10, edges))(0), 1e-9);
    EXPECT_NEAR(g.energy, -4.515446354492037, 1e-9);
    EXPECT_NEAR(g.gap, -4.092207346738683 - g.energy, 1e-8);
    EXPECT_EQ(g.sector_weight.value(), 5);
    EXPECT_LE(g.residual, 1e-9);
}

TEST(Afhm2d, SmallTorus) {
    const auto h = build_afhm_2d(2);
    EXPECT_EQ(h.terms().size(), 12u);
    const auto es = full_eigensystem(h, false);
    EXPECT_NEAR(es.energies(0), -2.0, 1e-12);
    // Oracle: explicit edge list of the 2x2 torus with each pair once.
    const auto dense = oracle::heisenberg_dense(4, {{0, 1}, {0, 3}, {1, 2}, {2, 3}});
    EXPECT_LE((es.energies - oracle::dense_eigenvalues(dense)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Afhm2d, SideFourCounts) {
    const auto h = build_afhm_2d(4);
    EXPECT_EQ(h.qubits(), 16);
    EXPECT_EQ(h.terms().size(), 96u);
    EXPECT_THROW(build_afhm_2d(1), InvalidArgument);
}

TEST(Afhm2d, LeftHalfIsFirstSites) {
    for (int y = 0; y < 4; ++y) {
        EXPECT_LT(grid_site(4, 0, y), 8);
        EXPECT_LT(grid_site(4, 1, y), 8);
        EXPECT_GE(grid_site(4, 2, y), 8);
    }
}

TEST(SzSector, OrderingAndIndex) {
    const SzSector s(6, 3);
    EXPECT_EQ(s.size(), 20);
    for (Index i = 0; i < s.size(); ++i) {
        EXPECT_EQ(s.index(s.state(i)), i);
        if (i > 0) EXPECT_LT(s.state(i - 1), s.state(i));
    }
    EXPECT_THROW(s.index(0b1), InvalidArgument);
}

TEST(SectorMatrix, TwoSiteBlocks) {
    const auto h = build_afhm_1d(2);
    const auto one = sector_matrix(h, SzSector(2, 1)).to_dense();
    EXPECT_NEAR(one(0, 0).real(), -0.25, 1e-15);
    EXPECT_NEAR(one(0, 1).real(), 0.5, 1e-15);
    EXPECT_NEAR(one(1, 0).real(), 0.5, 1e-15);
    EXPECT_NEAR(one(1, 1).real(), -0.25, 1e-15);
    const auto zero = sector_matrix(h, SzSector(2, 0)).to_dense();
    EXPECT_NEAR(zero(0, 0).real(), 0.25, 1e-15);
}

TEST(SectorMatrix, RejectsWeightChangingTerm) {
    PauliHamiltonian h(2, {{1.0, PauliString("XI")}});
    EXPECT_FALSE(h.preserves_weight());
    EXPECT_THROW(sector_matrix(h, SzSector(2, 1)), InvalidArgument);
    EXPECT_TRUE(build_afhm_1d(4).preserves_weight());
    // XX alone changes weight; XX + YY does not.
    EXPECT_FALSE(PauliHamiltonian(2, {{1.0, PauliString("XX")}}).preserves_weight());
}

TEST(FullEigensystem, SectorAndDensePathsAgree) {
    const auto h = build_afhm_1d(6);
    const auto a = full_eigensystem(h, true);
    const auto b = full_eigensystem(h, false);
    EXPECT_LE((a.energies - b.energies).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE(linalg::max_abs(a.states.adjoint() * a.states - ComplexMatrix::Identity(64, 64)), 1e-10);
    for (Index i = 0; i < a.size(); ++i) EXPECT_NEAR(h.expectation(a.state(i)), a.energies(i), 1e-8);
}

TEST(FullEigensystem, DiagonalHamiltonianHasComputationalBasis) {
    PauliHamiltonian h(3, {{1.0, PauliString("ZII")}, {0.5, PauliString("IZI")}, {0.25, PauliString("IIZ")}});
    const auto es = full_eigensystem(h, false);
    for (Index i = 0; i < es.size(); ++i) EXPECT_NEAR(es.states.col(i).cwiseAbs().maxCoeff(), 1.0, 1e-12);
}

TEST(FullEigensystem, RespectsLimits) {
    DenseLimits limits;
    limits.full_space_qubits = 3;
    EXPECT_THROW(full_eigensystem(build_afhm_1d(4), false, limits), InvalidArgument);
}

TEST(Invariants, TracelessSpectrum) {
    for (int n : {4, 6, 8}) {
        const auto es = full_eigensystem(build_afhm_1d(n), true);
        EXPECT_NEAR(es.energies.sum(), 0.0, 1e-8);
        EXPECT_EQ(build_afhm_1d(n).trace(), 0.0);
    }
}

TEST(Invariants, TranslationInvariance) {
    const auto h = build_afhm_1d(7);
    std::vector<int> shift(7);
    for (int i = 0; i < 7; ++i) shift[i] = (i + 3) % 7;
    const auto a = full_eigensystem(h, true).energies;
    const auto b = full_eigensystem(h.permuted(shift), true).energies;
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-9);

    const auto t = build_afhm_2d(3);
    std::vector<int> torus(9);
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y) torus[grid_site(3, x, y)] = grid_site(3, (x + 1) % 3, (y + 2) % 3);
    const auto c = full_eigensystem(t, true).energies;
    const auto d = full_eigensystem(t.permuted(torus), true).energies;
    EXPECT_LE((c - d).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Invariants, SpinFlipSectorsCoincide) {
    const int n = 8;
    const auto h = build_afhm_1d(n);
    for (int w = 0; w <= n / 2; ++w) {
        const auto a = linalg::hermitian_eig(sector_matrix(h, SzSector(n, w)).to_dense()).eigenvalues;
        const auto b = linalg::hermitian_eig(sector_matrix(h, SzSector(n, n - w)).to_dense()).eigenvalues;
        EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-9);
    }
    // Global X commutes with H.
    std::string all_x(n, 'X');
    const auto x = PauliHamiltonian(n, {{1.0, PauliString(all_x)}}).to_dense();
    const auto hd = h.to_dense();
    EXPECT_LE(linalg::max_abs(ComplexMatrix(x * hd - hd * x)), 1e-13);
}

TEST(GroundState, ProductZ) {
    PauliHamiltonian h(3, {{1.0, PauliString("ZII")}, {1.0, PauliString("IZI")}, {1.0, PauliString("IIZ")}});
    const auto g = ground_state(h);
    EXPECT_NEAR(g.energy, -3.0, 1e-10);
    EXPECT_NEAR(std::abs(g.state(7)), 1.0, 1e-9);
}

TEST(GroundState, NonWeightPreservingUsesFullSpace) {
    PauliHamiltonian h(2, {{1.0, PauliString("XI")}, {0.5, PauliString("ZZ")}, {0.3, PauliString("IZ")}});
    const auto g = ground_state(h);
    EXPECT_FALSE(g.sector_weight.has_value());
    EXPECT_NEAR(g.energy, oracle::dense_eigenvalues(h.to_dense())(0), 1e-10);
}

TEST(GroundState, DegeneracyIsReported) {
    // Odd ring: fourfold degenerate ground level.
    EXPECT_THROW(ground_state(build_afhm_1d(3)), DegenerateGroundState);
    GroundStateOptions opt;
    opt.sector_weight = 1;
    EXPECT_THROW(ground_state(build_afhm_1d(3), opt), DegenerateGroundState);
}

TEST(Json, RoundTripAndHash) {
    const auto h = build_afhm_1d(4);
    const auto back = PauliHamiltonian::from_json(nlohmann::json::parse(h.to_json().dump()));
    EXPECT_EQ(back.to_json(), h.to_json());
    EXPECT_EQ(back.hash(), h.hash());
    EXPECT_NE(build_afhm_1d(5).hash(), h.hash());
    EXPECT_THROW(PauliHamiltonian::from_json(nlohmann::json::parse(R"({"n": 2})")), InvalidArgument);
}
