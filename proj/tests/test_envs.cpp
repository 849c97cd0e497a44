#include "rrmdp/envs.hpp"
#include "rrmdp/io.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rrmdp;

TEST(CycleEnv, SlipExample) {
    const TabularMDP mdp = make_exemplar14(0.15);
    const auto p = mdp.next(0, 2); // a = +1
    EXPECT_NEAR(p(1), 0.7, 1e-15);
    EXPECT_NEAR(p(0), 0.15, 1e-15);
    EXPECT_NEAR(p(2), 0.15, 1e-15);
    EXPECT_NEAR(p.sum(), 1.0, 1e-15);
}

TEST(CycleEnv, ZeroSlipIsDeterministicShift) {
    const TabularMDP mdp = make_exemplar14(0.0);
    for (int s = 0; s < 14; ++s)
        for (int a = 0; a < 3; ++a) {
            const int target = (s + kCycleOffsets[static_cast<std::size_t>(a)] + 14) % 14;
            EXPECT_EQ(mdp.next(s, a)(target), 1.0);
        }
}

TEST(CycleEnv, RowsStochasticOnGrid) {
    for (int n = 3; n <= 50; ++n)
        for (int k = 0; k <= 5; ++k) {
            const double alpha = 0.1 * k;
            CycleEnvSpec spec{n, alpha, std::vector<double>(static_cast<std::size_t>(n), 1.0), 0.9, std::nullopt};
            const TabularMDP mdp = make_cycle_env(spec); // constructor validates rows
            for (int s = 0; s < n; ++s)
                for (int a = 0; a < 3; ++a) {
                    EXPECT_NEAR(mdp.next(s, a).sum(), 1.0, 1e-12);
                    if (k == 5) {
                        const int target = (s + kCycleOffsets[static_cast<std::size_t>(a)] + n) % n;
                        EXPECT_EQ(mdp.next(s, a)(target), 0.0);
                        EXPECT_NEAR(mdp.next(s, a)((target + 1) % n), 0.5, 1e-15);
                        EXPECT_NEAR(mdp.next(s, a)((target + n - 1) % n), 0.5, 1e-15);
                    }
                }
        }
}

TEST(CycleEnv, RewardsDependOnStateOnly) {
    const TabularMDP mdp = make_exemplar14(0.1);
    for (int s = 0; s < 14; ++s)
        for (int a = 0; a < 3; ++a) EXPECT_EQ(mdp.rewards()(s, a), kExemplar14Rewards[static_cast<std::size_t>(s)]);
    EXPECT_NEAR(mdp.rho().sum(), 1.0, 1e-15);
    EXPECT_EQ(mdp.rho()(3), 1.0 / 14);
}

TEST(CycleEnv, RejectsInvalidSpecs) {
    EXPECT_THROW(make_cycle_env(CycleEnvSpec{2, 0.1, {0, 0}, 0.9, std::nullopt}), InvalidModel);
    EXPECT_THROW(make_cycle_env(CycleEnvSpec{4, 0.6, {0, 0, 0, 0}, 0.9, std::nullopt}), InvalidModel);
    EXPECT_THROW(make_cycle_env(CycleEnvSpec{4, 0.1, {0, 0, 0}, 0.9, std::nullopt}), InvalidModel);
}

TEST(CycleEnv, MultiZoneRewards) {
    const auto r = multi_zone_rewards(100, 3);
    ASSERT_EQ(r.size(), 100u);
    EXPECT_EQ(std::count(r.begin(), r.end(), 5.0), 3);
    EXPECT_EQ(std::count(r.begin(), r.end(), -10.0), 6);
    EXPECT_EQ(multi_zone_rewards(14, 1), kExemplar14Rewards);
    EXPECT_THROW(multi_zone_rewards(20, 2), InvalidModel);
}

TEST(Dataset, SameSeedIdentical) {
    const TabularMDP mdp = make_exemplar14(0.15);
    const Dataset a = generate_dataset(mdp, DataGenSpec{std::nullopt, 5000, 17});
    const Dataset b = generate_dataset(mdp, DataGenSpec{std::nullopt, 5000, 17});
    EXPECT_EQ(a.records, b.records);
    EXPECT_EQ(io::dataset_jsonl(a), io::dataset_jsonl(b));
    const Dataset c = generate_dataset(mdp, DataGenSpec{std::nullopt, 5000, 18});
    EXPECT_NE(a.records, c.records);
}

TEST(Dataset, PrefixStable) {
    // record i depends only on (seed, i)
    const TabularMDP mdp = make_exemplar14(0.15);
    const Dataset small = generate_dataset(mdp, DataGenSpec{std::nullopt, 100, 3});
    const Dataset big = generate_dataset(mdp, DataGenSpec{std::nullopt, 1000, 3});
    EXPECT_TRUE(std::equal(small.records.begin(), small.records.end(), big.records.begin()));
}

TEST(Dataset, DeterministicEnvTransitions) {
    const TabularMDP mdp = make_exemplar14(0.0);
    const Dataset d = generate_dataset(mdp, DataGenSpec{std::nullopt, 3000, 9});
    for (const auto& t : d.records) {
        EXPECT_EQ(t.sp, (t.s + kCycleOffsets[static_cast<std::size_t>(t.a)] + 14) % 14);
        EXPECT_EQ(t.r, kExemplar14Rewards[static_cast<std::size_t>(t.s)]);
    }
}

TEST(Dataset, UniformFrequenciesWithinFourStandardErrors) {
    const TabularMDP mdp = make_exemplar14(0.15);
    const int n = 100000;
    const Dataset d = generate_dataset(mdp, DataGenSpec{std::nullopt, n, 21});
    Matrix counts = Matrix::Zero(14, 3);
    for (const auto& t : d.records) counts(t.s, t.a) += 1.0;
    const double p = 1.0 / 42;
    const double se = std::sqrt(p * (1 - p) / n);
    for (int i = 0; i < counts.size(); ++i) EXPECT_LE(std::abs(counts.data()[i] / n - p), 4 * se);
}

TEST(Dataset, ExplicitMuRespected) {
    const TabularMDP mdp = make_exemplar14(0.15);
    Matrix mu = Matrix::Zero(14, 3);
    mu(2, 1) = 0.25;
    mu(8, 0) = 0.75;
    const int n = 40000;
    const Dataset d = generate_dataset(mdp, DataGenSpec{mu, n, 22});
    int hits = 0;
    for (const auto& t : d.records) {
        ASSERT_TRUE((t.s == 2 && t.a == 1) || (t.s == 8 && t.a == 0));
        hits += t.s == 2;
    }
    EXPECT_NEAR(static_cast<double>(hits) / n, 0.25, 4 * std::sqrt(0.25 * 0.75 / n));
    Matrix bad = mu;
    bad(0, 0) = 0.5;
    EXPECT_THROW(generate_dataset(mdp, DataGenSpec{bad, 10, 0}), ConfigError);
    EXPECT_THROW(generate_dataset(mdp, DataGenSpec{std::nullopt, 0, 0}), ConfigError);
}

TEST(Dataset, NextStateChiSquare) {
    // Per (s,a) goodness of fit against the kernel row at significance 1e-3.
    // With 3 non-zero cells (2 degrees of freedom) the critical value is -2 log(1e-3).
    const TabularMDP mdp = make_exemplar14(0.15);
    const int n = 100000;
    Matrix mu = Matrix::Zero(14, 3);
    mu(5, 2) = 0.5;
    mu(11, 0) = 0.5;
    const Dataset d = generate_dataset(mdp, DataGenSpec{mu, n, 23});
    const double critical = -2.0 * std::log(1e-3);
    for (const auto& [s, a] : {std::pair{5, 2}, std::pair{11, 0}}) {
        Vector counts = Vector::Zero(14);
        double total = 0.0;
        for (const auto& t : d.records)
            if (t.s == s && t.a == a) {
                counts(t.sp) += 1.0;
                total += 1.0;
            }
        double chi2 = 0.0;
        for (int k = 0; k < 14; ++k) {
            const double expected = total * mdp.next(s, a)(k);
            if (expected == 0.0) {
                EXPECT_EQ(counts(k), 0.0);
                continue;
            }
            chi2 += std::pow(counts(k) - expected, 2) / expected;
        }
        EXPECT_LT(chi2, critical) << "(s,a) = (" << s << "," << a << ")";
    }
}
