#include <gtest/gtest.h>

#include <filesystem>

#include "brute_force.hpp"
#include "oracles.hpp"
#include "spectra_lab/relaxation.hpp"

using namespace spectra_lab;

namespace {

std::vector<std::vector<double>> to_rows(const GammaMatrix& g) {
    std::vector<std::vector<double>> rows(g.size(), std::vector<double>(g.size()));
    for (Index i = 0; i < g.size(); ++i)
        for (Index j = 0; j < g.size(); ++j) rows[i][j] = g(i, j);
    return rows;
}

std::vector<double> energies(const EigenSystem& es) { return {es.energies.data(), es.energies.data() + es.size()}; }

std::vector<double> stable_ranks(const EigenSystem& es, const Bipartition& cut) {
    std::vector<double> M;
    for (Index i = 0; i < es.size(); ++i) M.push_back(stable_schmidt_rank(es.state(i), cut));
    return M;
}

// A small random eigensystem with a nondegenerate ground state.
EigenSystem random_eigensystem(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto h = oracle::random_hermitian(Index{1} << n, rng);
    const auto r = linalg::hermitian_eig(h);
    return {n, r.eigenvalues, r.eigenvectors};
}

}  // namespace

TEST(GammaMatrix, BellBasisByHand) {
    // Bell states: each Gamma_i is a unitary divided by sqrt 2, so every product has norm 1/2.
    const double s = 1 / std::sqrt(2.0);
    ComplexMatrix states = ComplexMatrix::Zero(4, 4);
    states(0, 0) = s, states(3, 0) = s;
    states(0, 1) = s, states(3, 1) = -s;
    states(1, 2) = s, states(2, 2) = s;
    states(1, 3) = s, states(2, 3) = -s;
    const EigenSystem es{2, RealVector::LinSpaced(4, 0, 3), states};
    const auto g = gamma_matrix(es, Bipartition(2, {0}));
    for (Index i = 0; i < 4; ++i)
        for (Index j = 0; j < 4; ++j) EXPECT_NEAR(g(i, j), 0.5, 1e-14);
}

TEST(GammaMatrix, ProductBasis) {
    // Computational basis: Gamma_i Gamma_j^H is nonzero exactly when the B parts agree.
    const int n = 3;
    const EigenSystem es{n, RealVector::LinSpaced(8, 0, 7), ComplexMatrix::Identity(8, 8)};
    const Bipartition cut(n, {0});
    const auto g = gamma_matrix(es, cut);
    for (std::uint64_t i = 0; i < 8; ++i)
        for (std::uint64_t j = 0; j < 8; ++j) EXPECT_EQ(g(i, j), cut.split(i).second == cut.split(j).second ? 1.0 : 0.0);
}

TEST(GammaMatrix, MatchesDirectNormsAndBounds) {
    const auto es = full_eigensystem(build_afhm_1d(6), true);
    const auto cut = Bipartition::halves(6);
    const auto g = gamma_matrix(es, cut);
    const auto M = stable_ranks(es, cut);
    for (Index i = 0; i < es.size(); ++i) {
        EXPECT_NEAR(g(i, i) * M[i], 1.0, 1e-9);
        for (Index j = 0; j < es.size(); ++j) {
            EXPECT_EQ(g(i, j), g(j, i));
            EXPECT_LE(g(i, j), 1 / std::sqrt(M[i] * M[j]) + 1e-12);
        }
    }
    for (Index i = 0; i < 64; i += 9)
        for (Index j = 0; j < 64; j += 7) {
            const oracle::Mat a = reshape_state(es.state(i), cut);
            const oracle::Mat b = reshape_state(es.state(j), cut);
            EXPECT_NEAR(g(i, j), oracle::largest_singular(a * b.adjoint()), 1e-12);
        }
    // Complex path.
    const auto rs = random_eigensystem(4, 3);
    const auto gc = gamma_matrix(rs, Bipartition(4, {1, 2}));
    const oracle::Mat a = reshape_state(rs.state(2), Bipartition(4, {1, 2}));
    const oracle::Mat b = reshape_state(rs.state(5), Bipartition(4, {1, 2}));
    EXPECT_NEAR(gc(2, 5), oracle::largest_singular(a * b.adjoint()), 1e-12);
}

TEST(GammaCache, RoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "spectra_lab_gamma_test";
    std::filesystem::remove_all(dir);
    const auto h = build_afhm_1d(4);
    const auto es = full_eigensystem(h, true);
    const auto cut = Bipartition::halves(4);
    const auto first = cached_gamma_matrix(dir, h, es, cut);
    const GammaCacheKey key{h.hash(), cut.describe(), es.size()};
    ASSERT_TRUE(std::filesystem::exists(dir / key.file_name()));
    const auto second = cached_gamma_matrix(dir, h, es, cut);
    EXPECT_EQ(first.values, second.values);
    GammaCacheKey other = key;
    other.bipartition = "A=0";
    EXPECT_FALSE(read_gamma_cache(dir / key.file_name(), other).has_value());
    std::filesystem::remove_all(dir);
}

TEST(Concavity, Examples) {
    GammaMatrix id{RealMatrix::Identity(2, 2)};
    EXPECT_TRUE(concavity_check(id, 1000).ok);
    EXPECT_TRUE(concavity_check(GammaMatrix::from_stable_ranks({1.0, 2.0, 5.0, 3.0}), 1000).ok);
    const auto es = full_eigensystem(build_afhm_1d(6), true);
    EXPECT_TRUE(concavity_check(gamma_matrix(es, Bipartition::halves(6)), 500).ok);
}

TEST(SolveCrPlus, InactiveConstraint) {
    const auto gamma = GammaMatrix::from_stable_ranks({1.5, 2.0, 3.0});
    const auto s = solve_cr_plus({-1.0, 0.0, 2.0}, gamma, 100.0);
    EXPECT_FALSE(s.constraint_active);
    EXPECT_EQ(s.p[0], 1.0);
    EXPECT_EQ(s.optimum_energy, -1.0);
}

TEST(SolveCrPlus, Infeasible) {
    const auto gamma = GammaMatrix::from_stable_ranks({4.0, 4.0});
    EXPECT_THROW(solve_cr_plus({0.0, 1.0}, gamma, 1.0), InfeasibleError);
}

TEST(SolveCrPlus, RankOneGammaMatchesPredictor) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 2 + trial % 7;
        SpectrumProblem problem;
        problem.E.push_back(0.0);
        for (int i = 1; i < k; ++i) problem.E.push_back(0.1 + 2.0 * u(rng));
        std::sort(problem.E.begin(), problem.E.end());
        for (int i = 0; i < k; ++i) problem.M.push_back(1.0 + 5.0 * u(rng));
        const double lo = harmonic_mean(problem.M) / k;
        problem.m = lo + (0.1 + 0.8 * u(rng)) * (problem.M[0] - lo);
        const auto expected = predict(problem);
        const auto s = solve_cr_plus(problem.E, GammaMatrix::from_stable_ranks(problem.M), problem.m);
        for (int i = 0; i < k; ++i) EXPECT_NEAR(s.p[i], expected.p[i], 1e-5);
        EXPECT_NEAR(s.optimum_energy, expected.optimum_energy, 1e-9);
    }
}

TEST(SolveCrPlus, MatchesBruteForceSmallK) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const int n = 2;
        const auto es = random_eigensystem(n, seed);
        const auto cut = Bipartition(n, {0});
        const auto gamma = gamma_matrix(es, cut);
        const auto E = energies(es);
        // Budget between the ground-face value and the maximum of g.
        const double g_ground = gamma(0, 0);
        const double g_max = linalg::symmetric_eig(gamma.values).first(3);
        const double target = g_ground + (0.2 + 0.1 * seed) * (g_max - g_ground);
        const double m = 1 / target;
        const auto s = solve_cr_plus(E, gamma, m);
        const auto brute = oracle::brute_force_gamma(E, to_rows(gamma), m);
        EXPECT_NEAR(s.optimum_energy, brute.objective, 1e-4) << "seed " << seed;
        EXPECT_GE(s.g, target - 1e-8);
    }
}

TEST(SolveCrPlus, NestingDeterminismAndHistory) {
    const auto h = build_afhm_1d(6);
    const auto es = full_eigensystem(h, true);
    const auto cut = Bipartition::halves(6);
    const auto gamma = gamma_matrix(es, cut);
    const auto M = stable_ranks(es, cut);
    const auto E = energies(es);
    for (double m : {1.2, 1.5, 1.8}) {
        SpectrumProblem problem{E, M, m};
        if (classify(problem).kind != SpectrumCase::Generic) continue;
        const auto cr = predict(problem);
        const auto a = solve_cr_plus(E, gamma, m);
        const auto b = solve_cr_plus(E, gamma, m);
        EXPECT_GE(a.optimum_energy, cr.optimum_energy - 1e-10);
        EXPECT_EQ(a.p, b.p);
        for (std::size_t i = 1; i < a.history.size(); ++i) EXPECT_LE(a.history[i], a.history[i - 1]);
        EXPECT_LE(a.lambda * (a.g - 1 / m), 1e-8);
        EXPECT_NEAR(std::accumulate(a.p.begin(), a.p.end(), 0.0), 1.0, 1e-10);
    }
}

TEST(SolveCrPlus, LargeKUsesIterativeEigensolver) {
    const auto h = build_afhm_1d(9);
    const auto es = full_eigensystem(h, true);
    // k = 512 sits above the dense inner-eigensolver limit.
    const auto cut = Bipartition::halves(9);
    auto gamma = gamma_matrix(es, cut);
    auto E = energies(es);
    const auto M = stable_ranks(es, cut);
    const double m = 0.9 * M[0];
    const auto s = solve_cr_plus(E, gamma, m);
    EXPECT_LE(s.duality_gap, 1e-8);
    EXPECT_GE(s.g, 1 / m - 1e-8);
}

TEST(SlackAbc, Examples) {
    const auto es = full_eigensystem(build_afhm_1d(4), true);
    const auto cut = Bipartition::halves(4);
    std::vector<Complex> e1(es.size(), 0.0);
    e1[0] = 1.0;
    const auto r = slack_abc(e1, es, cut);
    const double norm1 = linalg::spectral_norm(reshape_state(es.state(0), cut));
    EXPECT_NEAR(r.A, norm1, 1e-12);
    EXPECT_NEAR(r.B, norm1, 1e-12);
    EXPECT_NEAR(r.C, norm1, 1e-12);

    std::mt19937_64 rng(5);
    const auto rs = random_eigensystem(3, 9);
    const auto c = oracle::random_state(8, rng);
    std::vector<Complex> alpha(c.data(), c.data() + 8);
    const auto chain = slack_abc(alpha, rs, Bipartition(3, {0}));
    EXPECT_LE(chain.A, chain.C + 1e-12);
    EXPECT_LE(chain.C, chain.B + 1e-12);
    // A = 1/sqrt(m) for the state itself.
    StateVector psi = rs.states * c;
    EXPECT_NEAR(chain.A, 1 / std::sqrt(stable_schmidt_rank(psi, Bipartition(3, {0}))), 1e-12);
    alpha[0] *= 2.0;
    EXPECT_THROW(slack_abc(alpha, rs, Bipartition(3, {0})), InvalidArgument);
}
