#pragma once

#include "rrmdp/dataset.hpp"
#include "rrmdp/errors.hpp"
#include "rrmdp/mdp.hpp"
#include "rrmdp/rng.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace rrmdp {

/// Action index a in {0,1,2} moves by kCycleOffsets[a] in {-1, 0, +1}.
inline constexpr std::array<int, 3> kCycleOffsets{-1, 0, 1};

/// Hitting rewards of the 14-state exemplar; index 0 is the top node, increasing clockwise.
inline const std::vector<double> kExemplar14Rewards{0, 0, -1, 2, -1, 0, 0, -10, 5, -10, 0, 0.9, 1, 0};

struct CycleEnvSpec {
    int n = 14;
    double alpha = 0.0;
    std::vector<double> hitting_rewards;
    double gamma = 0.95;
    std::optional<Vector> rho; ///< uniform when empty
};

/**
 * Cycle-graph environment: action a aims at (s + offset(a)) mod n and misses
 * by one step on either side with probability alpha each. Rewards depend on
 * the current state only.
 */
inline TabularMDP make_cycle_env(const CycleEnvSpec& spec) {
    const int n = spec.n;
    if (n < 3) throw InvalidModel("cycle environment needs n >= 3");
    if (!(spec.alpha >= 0.0 && spec.alpha <= 0.5)) throw InvalidModel("cycle slip alpha must lie in [0, 0.5]");
    if (static_cast<int>(spec.hitting_rewards.size()) != n)
        throw InvalidModel("hitting_rewards must have length n");
    constexpr int n_actions = static_cast<int>(kCycleOffsets.size());
    Matrix transitions = Matrix::Zero(n * n_actions, n);
    Matrix rewards(n, n_actions);
    const auto wrap = [n](int x) { return ((x % n) + n) % n; };
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < n_actions; ++a) {
            const int target = wrap(s + kCycleOffsets[static_cast<std::size_t>(a)]);
            auto row = transitions.row(s * n_actions + a);
            row(target) += 1.0 - 2.0 * spec.alpha;
            row(wrap(target - 1)) += spec.alpha;
            row(wrap(target + 1)) += spec.alpha;
            rewards(s, a) = spec.hitting_rewards[static_cast<std::size_t>(s)];
        }
    Vector rho = spec.rho ? *spec.rho : Vector::Constant(n, 1.0 / n);
    return TabularMDP(n, n_actions, transitions, std::move(rewards), spec.gamma, std::move(rho));
}

inline CycleEnvSpec exemplar14_spec(double alpha, double gamma = 0.95) {
    return CycleEnvSpec{14, alpha, kExemplar14Rewards, gamma, std::nullopt};
}

inline TabularMDP make_exemplar14(double alpha, double gamma = 0.95) {
    return make_cycle_env(exemplar14_spec(alpha, gamma));
}

/**
 * Reward vector for a larger cycle built from repeated risk zones: each zone
 * places a high reward between two heavy penalties, a medium reward between
 * mild penalties, and a small safe reward, in the pattern of the exemplar.
 */
inline std::vector<double> multi_zone_rewards(int n, int zones) {
    if (zones < 1 || n < 14 * zones) throw InvalidModel("multi-zone layout needs n >= 14 * zones");
    std::vector<double> r(static_cast<std::size_t>(n), 0.0);
    const int width = n / zones;
    for (int z = 0; z < zones; ++z) {
        const int base = z * width;
        const auto put = [&](int offset, double value) {
            r[static_cast<std::size_t>(base + offset * width / 14)] = value;
        };
        put(2, -1.0);
        put(3, 2.0);
        put(4, -1.0);
        put(7, -10.0);
        put(8, 5.0);
        put(9, -10.0);
        put(11, 0.9);
        put(12, 1.0);
    }
    return r;
}

struct DataGenSpec {
    std::optional<Matrix> mu; ///< S x A distribution; uniform when empty
    int N = 1;
    std::uint64_t seed = 0;
};

/**
 * N i.i.d. records (s, a) ~ mu, r = r(s, a), s' ~ P(.|s, a).
 *
 * Record i draws from its own counter-based stream derive_seed(seed, i), so
 * any slice of the dataset can be regenerated independently and the output
 * does not depend on how generation is split.
 */
inline Dataset generate_dataset(const TabularMDP& mdp, const DataGenSpec& spec) {
    if (spec.N < 1) throw ConfigError("dataset size N must be at least 1");
    const int n_s = mdp.n_states();
    const int n_a = mdp.n_actions();
    Vector flat_mu;
    std::string descriptor = "uniform";
    if (spec.mu) {
        const Matrix& mu = *spec.mu;
        if (mu.rows() != n_s || mu.cols() != n_a) throw ConfigError("mu must have shape S x A");
        flat_mu.resize(n_s * n_a);
        for (int s = 0; s < n_s; ++s)
            for (int a = 0; a < n_a; ++a) flat_mu(s * n_a + a) = mu(s, a);
        try {
            detail::check_distribution(flat_mu, 1e-10, "mu");
        } catch (const InvalidModel& e) {
            throw ConfigError(e.what());
        }
        descriptor = "explicit";
    }
    Dataset data;
    data.n_states = n_s;
    data.n_actions = n_a;
    data.mu_spec = descriptor;
    data.seed = spec.seed;
    data.records.reserve(static_cast<std::size_t>(spec.N));
    for (int i = 0; i < spec.N; ++i) {
        CounterRng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
        const int pair = spec.mu ? static_cast<int>(rng.categorical(flat_mu))
                                 : static_cast<int>(rng.index(static_cast<std::size_t>(n_s * n_a)));
        const int s = pair / n_a;
        const int a = pair % n_a;
        const int sp = static_cast<int>(rng.categorical(mdp.next(s, a)));
        data.records.push_back({s, a, mdp.rewards()(s, a), sp});
    }
    return data;
}

} // namespace rrmdp
