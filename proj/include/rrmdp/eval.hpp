#pragma once

#include "rrmdp/bellman.hpp"
#include "rrmdp/errors.hpp"
#include "rrmdp/mdp.hpp"
#include "rrmdp/risk.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace rrmdp {

/// Default number of test episodes for average_test_reward.
inline constexpr int kDefaultTestEpisodes = 20;

namespace detail {

struct Tilt {
    double kl;
    double mean;
};

/// q_t(s) proportional to p(s) exp(-t (v(s) - v_min)) on supp(p); returns KL(q_t || p) and E_q v.
template <class P, class V>
Tilt exponential_tilt(const P& p, const V& v, double t, double v_min) {
    double z = 0.0;
    double zv = 0.0;
    double zx = 0.0; // sum of w * exponent
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) <= 0.0) continue;
        const double x = -t * (v(i) - v_min);
        const double w = p(i) * std::exp(x);
        z += w;
        zv += w * v(i);
        zx += w * x;
    }
    // KL = E_q[log(q/p)] = E_q[x] - log z
    return {std::max(0.0, zx / z - std::log(z)), zv / z};
}

} // namespace detail

/**
 * min { E_q v : KL(q || p) <= delta, supp(q) within supp(p) }.
 *
 * The optimum is an exponential tilt q(s) ~ p(s) exp(-v(s)/lambda); the
 * inverse temperature t = 1/lambda is found by bisection on the increasing
 * map t -> KL(q_t || p). When the ball reaches the minimizing face of the
 * simplex the result is min v over supp(p).
 */
template <class P, class V>
double kl_ball_min(const P& p, const V& v, double delta) {
    if (!(delta >= 0.0)) throw DomainError("kl_ball_min: delta must be non-negative");
    if (p.size() != v.size()) throw DomainError("kl_ball_min: sizes differ");
    double v_min = std::numeric_limits<double>::infinity();
    double v_max = -v_min;
    double mass_at_min = 0.0;
    double mean = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) <= 0.0) continue;
        mean += p(i) * v(i);
        v_max = std::max(v_max, v(i));
        if (v(i) < v_min) {
            v_min = v(i);
            mass_at_min = p(i);
        } else if (v(i) == v_min) {
            mass_at_min += p(i);
        }
    }
    if (delta == 0.0 || v_max == v_min) return mean;
    // lambda -> 0+ concentrates q on argmin v with KL = -log p(argmin)
    if (delta >= -std::log(mass_at_min)) return v_min;

    double lo = 0.0;
    double hi = 1.0 / (v_max - v_min);
    while (detail::exponential_tilt(p, v, hi, v_min).kl < delta) {
        lo = hi;
        hi *= 2.0;
        if (!std::isfinite(hi)) return v_min;
    }
    for (int it = 0; it < 200 && (hi - lo) > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (detail::exponential_tilt(p, v, mid, v_min).kl <= delta)
            lo = mid;
        else
            hi = mid;
    }
    // lo is on the feasible side of the constraint
    return detail::exponential_tilt(p, v, lo, v_min).mean;
}

/// Smallest H with gamma^H max|r| / (1 - gamma) <= tol.
inline int default_horizon(const TabularMDP& mdp, double tol = 1e-4) {
    const double scale = mdp.rewards().cwiseAbs().maxCoeff() / (1.0 - mdp.gamma());
    if (scale <= tol || mdp.gamma() == 0.0) return 1;
    return std::max(1, static_cast<int>(std::ceil(std::log(tol / scale) / std::log(mdp.gamma()))));
}

/**
 * Worst-case H-step discounted return of a fixed policy over kernels whose
 * rows stay within KL radius delta of the nominal rows, by backward robust
 * dynamic programming (the adversary may vary its choice per step).
 */
inline double robustness_value(const TabularMDP& mdp, const StochasticPolicy& policy, double delta,
                               int horizon) {
    check_compatible(mdp, policy.probs());
    if (horizon < 1) throw DomainError("robustness_value: horizon must be at least 1");
    if (!(delta >= 0.0)) throw DomainError("robustness_value: delta must be non-negative");
    Vector v = Vector::Zero(mdp.n_states());
    for (int t = horizon - 1; t >= 0; --t) {
        Vector next = Vector::Zero(mdp.n_states());
        for (int s = 0; s < mdp.n_states(); ++s)
            for (int a = 0; a < mdp.n_actions(); ++a) {
                const double w = policy(s, a);
                if (w == 0.0) continue;
                next(s) += w * (mdp.rewards()(s, a) + mdp.gamma() * kl_ball_min(mdp.next(s, a), v, delta));
            }
        v = std::move(next);
    }
    return mdp.rho().dot(v);
}

/// E_rho[V*(s0) - V^pi(s0)] for the risk-sensitive model.
inline double optimality_gap(const TabularMDP& mdp, const RiskMeasure& measure,
                             const StochasticPolicy& policy) {
    check_compatible(mdp, policy.probs());
    const Vector v_star = solve_optimal_exact(mdp, measure).values;
    const Vector v_pi = evaluate_policy_exact(mdp, measure, policy).values;
    return mdp.rho().dot(v_star - v_pi);
}

/// Mean discounted return of seeded rollouts; episode e uses seed derive_seed(seed, e).
inline double average_test_reward(const TabularMDP& mdp, const StochasticPolicy& policy, int episodes,
                                  int horizon, std::uint64_t seed) {
    if (episodes < 1) throw DomainError("average_test_reward: episodes must be at least 1");
    double total = 0.0;
    for (int e = 0; e < episodes; ++e)
        total += rollout(mdp, policy, horizon, derive_seed(seed, static_cast<std::uint64_t>(e))).discounted_return;
    return total / episodes;
}

} // namespace rrmdp
