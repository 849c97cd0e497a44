#include "rrmdp/envs.hpp"
#include "rrmdp/policy_gradient.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rrmdp;
using rrmdp::testing::random_mdp;

TEST(DirectGradient, OneStateZeroDiscount) {
    Matrix r(1, 2);
    r << 1.0, 0.0;
    const TabularMDP mdp(1, 2, Matrix::Ones(2, 1), r, 0.0, Vector::Ones(1));
    for (double p : {0.1, 0.5, 0.9}) {
        Matrix theta(1, 2);
        theta << p, 1 - p;
        const Matrix g = policy_gradient_direct(mdp, RiskMeasure::entropy(1.0), StochasticPolicy(theta));
        EXPECT_NEAR(g(0, 0), 1.0, 1e-15);
        EXPECT_NEAR(g(0, 1), 0.0, 1e-15);
    }
}

TEST(DirectGradient, ConstantRewardsGiveRowConstantGradient) {
    std::mt19937_64 gen(1);
    TabularMDP base = random_mdp(gen, 4, 3, 0.9);
    const TabularMDP mdp(4, 3, base.transitions(), Matrix::Constant(4, 3, 0.7), 0.9, base.rho());
    const StochasticPolicy pi(rrmdp::testing::random_interior_policy(gen, 4, 3));
    const Matrix g = policy_gradient_direct(mdp, RiskMeasure::entropy(2.0), pi);
    for (int s = 0; s < 4; ++s) EXPECT_LT(g.row(s).maxCoeff() - g.row(s).minCoeff(), 1e-12);
    // the projected update leaves pi unchanged
    const StochasticPolicy next = project_simplex_rows(pi.probs() + 0.1 * g);
    EXPECT_LT((next.probs() - pi.probs()).lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(DirectGradient, MatchesFiniteDifferences) {
    std::mt19937_64 gen(2);
    for (int i = 0; i < 5; ++i) {
        TabularMDP mdp = random_mdp(gen, 4, 3, 0.9);
        const Matrix theta = rrmdp::testing::random_interior_policy(gen, 4, 3);
        const Matrix g = policy_gradient_direct(mdp, RiskMeasure::entropy(1.0), StochasticPolicy(theta));
        const Matrix fd = rrmdp::testing::fd_direct_gradient(mdp, 1.0, theta);
        EXPECT_LE(rrmdp::testing::rel_err(g, fd), 1e-5);
    }
}

TEST(ScoreGradient, UniformRewardsGiveZero) {
    std::mt19937_64 gen(3);
    TabularMDP base = random_mdp(gen, 3, 2, 0.9);
    const TabularMDP mdp(3, 2, base.transitions(), Matrix::Constant(3, 2, -1.5), 0.9, base.rho());
    const Matrix logits = Matrix::Random(3, 2);
    const StochasticPolicy pi(softmax_rows(logits));
    EXPECT_LT(gradient_score_form(mdp, RiskMeasure::entropy(1.0), pi, logits).lpNorm<Eigen::Infinity>(), 1e-13);
}

TEST(ScoreGradient, OneStateHandExample) {
    Matrix r(1, 2);
    r << 1.0, 0.0;
    const TabularMDP mdp(1, 2, Matrix::Ones(2, 1), r, 0.0, Vector::Ones(1));
    const Matrix logits = Matrix::Zero(1, 2);
    const Matrix g = gradient_score_form(mdp, RiskMeasure::entropy(1.0), StochasticPolicy(softmax_rows(logits)), logits);
    EXPECT_NEAR(g(0, 0), 0.25, 1e-15);
    EXPECT_NEAR(g(0, 1), -0.25, 1e-15);
}

TEST(ScoreGradient, MatchesFiniteDifferences) {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> n(0.0, 0.7);
    for (int i = 0; i < 5; ++i) {
        TabularMDP mdp = random_mdp(gen, 3, 2, 0.9);
        Matrix logits(3, 2);
        for (int k = 0; k < logits.size(); ++k) logits.data()[k] = n(gen);
        const Matrix g = gradient_score_form(mdp, RiskMeasure::entropy(1.0), StochasticPolicy(softmax_rows(logits)), logits);
        const Matrix fd = rrmdp::testing::fd_softmax_gradient(mdp, 1.0, logits);
        EXPECT_LE(rrmdp::testing::rel_err(g, fd), 1e-5);
    }
}

TEST(ScoreGradient, RejectsMismatchedLogitsAndCvar) {
    std::mt19937_64 gen(5);
    TabularMDP mdp = random_mdp(gen, 3, 2, 0.9);
    const Matrix logits = Matrix::Zero(3, 2);
    const StochasticPolicy uniform = StochasticPolicy::uniform(3, 2);
    EXPECT_THROW(gradient_score_form(mdp, RiskMeasure::cvar(0.5), uniform, logits), DomainError);
    EXPECT_THROW(gradient_score_form(mdp, RiskMeasure::entropy(1.0), StochasticPolicy::deterministic({0, 0, 0}, 2),
                                     logits),
                 DomainError);
}

TEST(Projection, Examples) {
    const auto proj = [](double a, double b) {
        Matrix x(1, 2);
        x << a, b;
        return project_simplex_rows(x).probs();
    };
    EXPECT_EQ(proj(0.5, 0.5), (Matrix(1, 2) << 0.5, 0.5).finished());
    EXPECT_EQ(proj(1.2, -0.2), (Matrix(1, 2) << 1.0, 0.0).finished());
    EXPECT_EQ(proj(0.6, 0.6), (Matrix(1, 2) << 0.5, 0.5).finished());
}

TEST(Projection, IsNearestFeasiblePoint) {
    std::mt19937_64 gen(6);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        Vector x(4);
        for (int k = 0; k < 4; ++k) x(k) = n(gen);
        const Vector p = project_simplex(x);
        EXPECT_NEAR(p.sum(), 1.0, 1e-14);
        EXPECT_GE(p.minCoeff(), 0.0);
        for (int j = 0; j < 1000 / 100; ++j) {
            const Vector q = rrmdp::testing::random_distribution(gen, 4, 0.3);
            EXPECT_LE((p - x).norm(), (q - x).norm() + 1e-12);
        }
    }
}

TEST(Projection, RejectsNonFinite) {
    Matrix x(1, 2);
    x << 1.0, std::numeric_limits<double>::infinity();
    EXPECT_THROW(project_simplex_rows(x), DomainError);
}

TEST(Stepsize, Theorem4Default) {
    std::mt19937_64 gen(7);
    TabularMDP mdp = random_mdp(gen, 4, 3, 0.9);
    // M = 1 / (0.1 * 0.25) = 40, eta = 0.001 / (2 * 3 * 40)
    EXPECT_NEAR(theorem4_stepsize(mdp, std::nullopt), 1e-3 / 240.0, 1e-18);
    EXPECT_NEAR(theorem4_stepsize(mdp, 10.0), 1e-3 / 60.0, 1e-18);
    PGConfig c;
    c.eta = 0.3;
    EXPECT_EQ(effective_stepsize(mdp, c), 0.3);
    Vector rho(4);
    rho << 1, 0, 0, 0;
    const TabularMDP corner(4, 3, mdp.transitions(), mdp.rewards(), 0.9, rho);
    EXPECT_THROW(theorem4_stepsize(corner, std::nullopt), ConfigError);
}

TEST(Ascent, StartsAtOptimumAndExits) {
    const TabularMDP mdp = make_exemplar14(0.15);
    const auto m = RiskMeasure::entropy(1.0);
    const auto opt = solve_optimal_exact(mdp, m);
    const PGResult r = pg_ascent(mdp, m, opt.policy, PGConfig{});
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.steps, 0);
    ASSERT_EQ(r.trace.size(), 1u);
    EXPECT_LE(r.trace[0].optimality_gap, 1e-10);
}

TEST(Ascent, TheoremStepsizeNeverDecreasesValue) {
    std::mt19937_64 gen(8);
    for (int i = 0; i < 3; ++i) {
        TabularMDP mdp = random_mdp(gen, 4, 3, 0.8, -1.0, 1.0);
        PGConfig c;
        c.stepsize_rule = StepsizeRule::theorem4;
        c.max_iters = 300;
        const PGResult r = pg_ascent(mdp, RiskMeasure::entropy(1.0), StochasticPolicy::uniform(4, 3), c);
        for (std::size_t k = 1; k < r.trace.size(); ++k)
            EXPECT_GE(r.trace[k].expected_value, r.trace[k - 1].expected_value - 1e-9);
    }
}

TEST(Ascent, BestGapIsMonotone) {
    std::mt19937_64 gen(9);
    TabularMDP mdp = random_mdp(gen, 5, 3, 0.9, -1.0, 1.0);
    PGConfig c;
    c.eta = 0.5;
    c.max_iters = 200;
    const PGResult r = pg_ascent(mdp, RiskMeasure::cvar(0.3), StochasticPolicy::uniform(5, 3), c);
    double best = std::numeric_limits<double>::infinity();
    double prev = best;
    for (const auto& rec : r.trace) {
        best = std::min(best, rec.optimality_gap);
        EXPECT_LE(best, prev);
        EXPECT_GE(rec.optimality_gap, -1e-9);
        prev = best;
    }
}

TEST(Ascent, NonConvergenceReturnsBestIterate) {
    const TabularMDP mdp = make_exemplar14(0.15);
    PGConfig c;
    c.max_iters = 3;
    const PGResult r = pg_ascent(mdp, RiskMeasure::entropy(1.0), StochasticPolicy::uniform(14, 3), c);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.trace.size(), 4u);
    const auto min_gap = std::min_element(r.trace.begin(), r.trace.end(), [](const auto& a, const auto& b) {
        return a.optimality_gap < b.optimality_gap;
    });
    const double gap = mdp.rho().dot(solve_optimal_exact(mdp, RiskMeasure::entropy(1.0)).values) -
                       mdp.rho().dot(evaluate_policy_exact(mdp, RiskMeasure::entropy(1.0), r.policy).values);
    EXPECT_NEAR(gap, min_gap->optimality_gap, 1e-12);
}

TEST(Ascent, RewardScalingScalesGradientAndKeepsFixedPolicies) {
    std::mt19937_64 gen(10);
    TabularMDP mdp = random_mdp(gen, 4, 3, 0.9);
    const double c = 3.0;
    // entropy with beta/c on c*r has the same adversary, so V and G scale by c
    const TabularMDP scaled(4, 3, mdp.transitions(), c * mdp.rewards(), 0.9, mdp.rho());
    const StochasticPolicy pi(rrmdp::testing::random_interior_policy(gen, 4, 3));
    const Matrix g = policy_gradient_direct(mdp, RiskMeasure::entropy(1.0), pi);
    const Matrix gs = policy_gradient_direct(scaled, RiskMeasure::entropy(1.0 / c), pi);
    EXPECT_LE(rrmdp::testing::rel_err(gs, c * g), 1e-10);
    for (const auto& m : {RiskMeasure::cvar(0.4)}) {
        const Matrix gc = policy_gradient_direct(mdp, m, pi);
        const Matrix gcs = policy_gradient_direct(scaled, m, pi);
        EXPECT_LE(rrmdp::testing::rel_err(gcs, c * gc), 1e-10);
    }
    // the optimal deterministic policy is a zero-step fixed point of the projected map in both models
    const auto opt = solve_optimal_exact(mdp, RiskMeasure::cvar(0.4));
    const StochasticPolicy star = opt.policy;
    const Matrix step = project_simplex_rows(star.probs() + 0.1 * policy_gradient_direct(mdp, RiskMeasure::cvar(0.4), star)).probs();
    const Matrix step_s =
        project_simplex_rows(star.probs() + 0.1 * policy_gradient_direct(scaled, RiskMeasure::cvar(0.4), star)).probs();
    EXPECT_EQ(step, star.probs());
    EXPECT_EQ(step_s, star.probs());
}

TEST(Ascent, ExemplarConvergesToGreedyOptimum) {
    const TabularMDP mdp = make_exemplar14(0.01);
    const auto m = RiskMeasure::entropy(1.0);
    const PGResult r = pg_ascent(mdp, m, StochasticPolicy::uniform(14, 3), PGConfig{});
    ASSERT_TRUE(r.converged);
    const Vector v = solve_fixed_point(mdp, m, BackupMode::star(), 1e-12).values;
    EXPECT_EQ(r.policy.probs(), greedy_policy(q_from_v(mdp, m, v)).probs());
}
