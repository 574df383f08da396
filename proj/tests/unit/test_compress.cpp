#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spectra_lab/compress.hpp"

using namespace spectra_lab;

namespace {

// Explicit sum over all configurations of the product of slices.
StateVector contract_by_enumeration(const MatrixProductState& mps) {
    const int n = mps.sites();
    StateVector out(Index{1} << n);
    for (Index idx = 0; idx < out.size(); ++idx) {
        ComplexMatrix acc = ComplexMatrix::Identity(1, 1);
        for (int j = 0; j < n; ++j) acc = acc * mps.tensors[j][(idx >> (n - 1 - j)) & 1];
        out(idx) = acc(0, 0);
    }
    return out;
}

StateVector ghz(int n) {
    StateVector v = StateVector::Zero(Index{1} << n);
    v(0) = v(v.size() - 1) = 1 / std::sqrt(2.0);
    return v;
}

}  // namespace

TEST(Compress, ContractMatchesEnumeration) {
    std::mt19937_64 rng(4);
    MatrixProductState mps;
    const std::vector<Index> bonds{1, 2, 3, 2, 1};
    for (int j = 0; j < 4; ++j)
        mps.tensors.push_back({oracle::random_matrix(bonds[j], bonds[j + 1], rng),
                               oracle::random_matrix(bonds[j], bonds[j + 1], rng)});
    EXPECT_LE((mps.contract() - contract_by_enumeration(mps)).norm(), 1e-12);
    EXPECT_EQ(mps.max_bond(), 3);
}

TEST(Compress, ExactWhenDLargeEnough) {
    std::mt19937_64 rng(8);
    for (int n : {1, 2, 5, 8}) {
        const StateVector v = oracle::random_state(Index{1} << n, rng);
        const auto mps = compress_state(v, Index{1} << (n / 2));
        EXPECT_NEAR(fidelity(mps.contract(), v), 1.0, 1e-12);
        EXPECT_LE((mps.contract() - v).norm(), 1e-12);  // no phase change either
        EXPECT_LE((contract_by_enumeration(mps) - v).norm(), 1e-12);
    }
}

TEST(Compress, SchmidtWeightExamples) {
    EXPECT_NEAR(fidelity(compress_state(ghz(2), 1).contract(), ghz(2)), 0.5, 1e-14);
    EXPECT_NEAR(fidelity(compress_state(ghz(4), 1).contract(), ghz(4)), 0.5, 1e-14);
    StateVector product = StateVector::Zero(16);
    product(5) = 1.0;
    EXPECT_NEAR(fidelity(compress_state(product, 1).contract(), product), 1.0, 1e-14);
    EXPECT_THROW(compress_state(product, 0), InvalidArgument);
}

TEST(Compress, FidelityMonotoneAndRankBounded) {
    std::mt19937_64 rng(15);
    const StateVector v = oracle::random_state(Index{1} << 8, rng);
    double last = 0.0;
    for (Index D = 1; D <= 16; ++D) {
        const auto mps = compress_state(v, D);
        const StateVector c = mps.contract();
        EXPECT_NEAR(c.norm(), 1.0, 1e-12);
        EXPECT_LE(mps.max_bond(), D);
        const double f = fidelity(c, v);
        EXPECT_GE(f, last - 1e-12);
        last = f;
        for (int a = 1; a < 8; ++a) EXPECT_LE(stable_schmidt_rank(c, Bipartition::left_right(8, a)), D + 1e-9);
    }
    // D = 1 keeps at most the top Schmidt weight of the first cut.
    const RealVector s = linalg::singular_values(reshape_state(v, Bipartition::left_right(8, 1)));
    EXPECT_GE(s(0) * s(0), fidelity(compress_state(v, 1).contract(), v) - 1e-12);
}

TEST(Compress, Deterministic) {
    std::mt19937_64 rng(2);
    const StateVector v = oracle::random_state(Index{1} << 7, rng);
    EXPECT_EQ(compress_state(v, 3).contract(), compress_state(v, 3).contract());
}

TEST(Sweep, ZeroSweepsAndExactInput) {
    const auto h = build_afhm_1d(8);
    const auto g = ground_state(h);
    const auto exact = compress_state(g.state, 16);
    const auto same = sweep_refine(exact, h, 0);
    EXPECT_EQ(same.mps.contract(), exact.contract());
    const auto swept = sweep_refine(exact, h, 2);
    EXPECT_NEAR(swept.energies.back(), g.energy, 1e-10);
    EXPECT_NEAR(fidelity(swept.mps.contract(), g.state), 1.0, 1e-9);
}

TEST(Sweep, LowersEnergyMonotonically) {
    const auto h = build_afhm_1d(10);
    const auto g = ground_state(h);
    const auto mps = compress_state(g.state, 4);
    const double truncated = h.expectation(mps.contract());
    const auto r = sweep_refine(mps, h, 10);
    ASSERT_EQ(r.energies.size(), 11u);
    EXPECT_NEAR(r.energies.front(), truncated, 1e-12);
    for (std::size_t i = 1; i < r.energies.size(); ++i) EXPECT_LE(r.energies[i], r.energies[i - 1]);
    EXPECT_LT(r.energies.back(), truncated);
    EXPECT_GE(r.energies.back(), g.energy - 1e-10);
    for (int j = 0; j + 1 < 10; ++j) EXPECT_EQ(r.mps.bond(j), mps.bond(j));
    const StateVector c = r.mps.contract();
    EXPECT_NEAR(c.norm(), 1.0, 1e-10);
    EXPECT_NEAR(h.expectation(c), r.energies.back(), 1e-10);
}

TEST(Overlap, GroundStateAndCompleteness) {
    const auto h = build_afhm_1d(8);
    const auto es = full_eigensystem(h, true);
    const auto cut = Bipartition::halves(8);
    const auto g = ground_state(h);
    const auto exact = overlap_spectrum(g.state, es, cut);
    EXPECT_NEAR(exact.p[0], 1.0, 1e-9);
    EXPECT_NEAR(exact.energy, g.energy, 1e-9);

    std::mt19937_64 rng(1);
    const StateVector v = oracle::random_state(256, rng);
    const auto r = overlap_spectrum(v, es, cut);
    double total = 0.0;
    for (double p : r.p) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(r.energy, h.expectation(v), 1e-8);
    EXPECT_NEAR(r.m, stable_schmidt_rank(v, cut), 1e-12);

    const auto streamed = overlap_spectrum_streaming(v, h, cut);
    EXPECT_NEAR(streamed.energy, r.energy, 1e-10);
    for (std::size_t i = 0; i < r.p.size(); ++i) EXPECT_NEAR(streamed.energies[i], r.energies[i], 1e-10);
}

TEST(Overlap, CompressedStateBounds) {
    const auto h = build_afhm_1d(10);
    const auto es = full_eigensystem(h, true);
    const auto cut = Bipartition::halves(10);
    const auto g = ground_state(h);
    for (Index D : {2, 4, 8}) {
        const auto mps = compress_state(g.state, D);
        const auto s = overlap_spectrum(mps, es, cut);
        EXPECT_LE(s.m, static_cast<double>(D) + 1e-9);
        EXPECT_NEAR(s.energy, h.expectation(mps.contract()), 1e-8);
    }
}

TEST(Slack, ProductStateInProductBasis) {
    // Distinct Z fields: the eigenbasis is the computational basis.
    PauliHamiltonian h(3, {{1.0, PauliString("ZII")}, {2.0, PauliString("IZI")}, {4.0, PauliString("IIZ")}});
    const auto es = full_eigensystem(h, false);
    StateVector v = StateVector::Zero(8);
    v(6) = 1.0;
    const auto rows = slack_table(v, {1, 2}, es, Bipartition(3, {0}));
    for (const auto& row : rows) {
        EXPECT_NEAR(row.A, 1.0, 1e-12);
        EXPECT_NEAR(row.B, 1.0, 1e-12);
        EXPECT_NEAR(row.inv_sqrt_m, 1.0, 1e-12);
    }
}

TEST(Slack, ChainOnChain) {
    const auto h = build_afhm_1d(8);
    const auto es = full_eigensystem(h, true);
    const auto cut = Bipartition::halves(8);
    const auto gamma = gamma_matrix(es, cut);
    const auto rows = slack_table(ground_state(h).state, {2, 4, 16}, es, cut, &gamma);
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& row : rows) {
        EXPECT_LE(row.A, row.C + 1e-10);
        EXPECT_LE(row.C, row.B + 1e-10);
        EXPECT_NEAR(row.A * row.A * row.m, 1.0, 1e-9);
    }
    // D = 16 is exact: a single eigenstate, so A = B.
    EXPECT_NEAR(rows[2].A, rows[2].B, 1e-9);
}
