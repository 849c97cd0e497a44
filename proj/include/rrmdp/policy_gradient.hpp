#pragma once

#include "rrmdp/bellman.hpp"
#include "rrmdp/errors.hpp"
#include "rrmdp/mdp.hpp"
#include "rrmdp/risk.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace rrmdp {

/// Pieces shared by the two gradient forms at a given parameter point.
struct GradientTerms {
    Vector values;      ///< V^theta
    Matrix q;           ///< Q^theta
    Matrix worst_case;  ///< P-hat^theta, (S*A) x S
    Vector visitation;  ///< d^{pi_theta, P-hat^theta}
};

/// V, Q, worst-case kernel and visitation at an action-weight matrix.
inline GradientTerms gradient_terms(const TabularMDP& mdp, const RiskMeasure& measure,
                                    const Matrix& weights) {
    GradientTerms t;
    t.values = evaluate_policy_exact(mdp, measure, weights).values;
    t.q = q_from_v(mdp, measure, t.values);
    t.worst_case = worst_case_kernel(mdp, measure, t.values);
    Matrix chain = Matrix::Zero(mdp.n_states(), mdp.n_states());
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a)
            chain.row(s) += weights(s, a) * t.worst_case.row(s * mdp.n_actions() + a);
    t.visitation = visitation_from_chain(chain, mdp.rho(), mdp.gamma());
    return t;
}

/**
 * Quasi-gradient under direct parameterization,
 *   G[s,a] = d^{pi_theta, P-hat^theta}(s) Q^theta(s,a) / (1 - gamma).
 * Equals the gradient of E_rho V^theta whenever sigma is differentiable.
 */
inline Matrix policy_gradient_direct(const TabularMDP& mdp, const RiskMeasure& measure,
                                     const StochasticPolicy& theta) {
    check_compatible(mdp, theta.probs());
    const GradientTerms t = gradient_terms(mdp, measure, theta.probs());
    return (t.visitation.asDiagonal() * t.q) / (1.0 - mdp.gamma());
}

/// Row-wise softmax.
inline Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index s = 0; s < logits.rows(); ++s) {
        const double m = logits.row(s).maxCoeff();
        out.row(s) = (logits.row(s).array() - m).exp().matrix();
        out.row(s) /= out.row(s).sum();
    }
    return out;
}

/**
 * Score-function form of the gradient with respect to softmax logits:
 *   sum_{s,a} d(s) pi(a|s) Q(s,a) grad log pi(a|s) / (1 - gamma),
 * with the expectation over trajectories under the worst-case kernel taken
 * exactly through the visitation distribution.
 */
inline Matrix gradient_score_form(const TabularMDP& mdp, const RiskMeasure& measure,
                                  const StochasticPolicy& policy, const Matrix& logits) {
    check_compatible(mdp, policy.probs());
    if (measure.kind() != RiskKind::entropy)
        throw DomainError("gradient_score_form requires a differentiable (entropy) risk measure");
    if ((softmax_rows(logits) - policy.probs()).lpNorm<Eigen::Infinity>() > 1e-9)
        throw DomainError("gradient_score_form: policy is not the softmax of the logits");
    const GradientTerms t = gradient_terms(mdp, measure, policy.probs());
    const int n_a = mdp.n_actions();
    Matrix grad = Matrix::Zero(mdp.n_states(), n_a);
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < n_a; ++a) {
            const double weight = t.visitation(s) * policy(s, a) * t.q(s, a);
            // d log pi(a|s) / d logit(s,b) = 1[a == b] - pi(b|s)
            for (int b = 0; b < n_a; ++b)
                grad(s, b) += weight * ((a == b ? 1.0 : 0.0) - policy(s, b));
        }
    return grad / (1.0 - mdp.gamma());
}

/// Euclidean projection of one vector onto the probability simplex.
inline Vector project_simplex(const Vector& x) {
    const auto n = x.size();
    std::vector<double> sorted(x.data(), x.data() + n);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double threshold = 0.0;
    Eigen::Index support = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
        cumulative += sorted[static_cast<std::size_t>(k)];
        const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
        if (sorted[static_cast<std::size_t>(k)] - t > 0.0) {
            threshold = t;
            support = k + 1;
        }
    }
    Vector out = (x.array() - threshold).max(0.0).matrix();
    if (support == 1) {
        // x - (x - 1) need not round to exactly 1
        Eigen::Index top = 0;
        out.maxCoeff(&top);
        out.setZero();
        out(top) = 1.0;
    }
    return out;
}

inline StochasticPolicy project_simplex_rows(const Matrix& x) {
    if (!x.allFinite()) throw DomainError("project_simplex_rows: input has non-finite entries");
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index s = 0; s < x.rows(); ++s) out.row(s) = project_simplex(x.row(s).transpose()).transpose();
    return StochasticPolicy(std::move(out));
}

enum class StepsizeRule { fixed, theorem4 };

struct PGConfig {
    double eta = 0.1;
    int max_iters = 5000;
    double gap_tol = 1e-10;
    StepsizeRule stepsize_rule = StepsizeRule::fixed;
    std::optional<double> M_bound;
};

/// eta = (1-gamma)^3 / (2 |A| M), with M defaulting to 1 / ((1-gamma) min_s rho(s)).
inline double theorem4_stepsize(const TabularMDP& mdp, std::optional<double> M_bound) {
    const double one_minus_gamma = 1.0 - mdp.gamma();
    double m = 0.0;
    if (M_bound) {
        m = *M_bound;
    } else {
        const double rho_min = mdp.rho().minCoeff();
        if (!(rho_min > 0.0))
            throw ConfigError("theorem4 stepsize needs M_bound when rho has zero entries");
        m = 1.0 / (one_minus_gamma * rho_min);
    }
    if (!(m > 0.0)) throw ConfigError("M_bound must be positive");
    return std::pow(one_minus_gamma, 3) / (2.0 * mdp.n_actions() * m);
}

inline double effective_stepsize(const TabularMDP& mdp, const PGConfig& config) {
    if (config.stepsize_rule == StepsizeRule::theorem4) return theorem4_stepsize(mdp, config.M_bound);
    if (!(config.eta > 0.0)) throw ConfigError("pg eta must be positive");
    return config.eta;
}

struct PGRecord {
    int iter;
    double expected_value;
    double optimality_gap;
    double grad_norm;
};

struct PGResult {
    StochasticPolicy policy;      ///< final iterate, or best iterate when not converged
    std::vector<PGRecord> trace;
    bool converged = false;
    int steps = 0;                ///< ascent steps taken before the gap criterion held
};

/**
 * Projected (quasi-)gradient ascent theta <- Proj(theta + eta G(theta)).
 *
 * The optimality gap E_rho[V* - V^theta] is recorded for every iterate, the
 * loop stops as soon as it drops to gap_tol. Without convergence the iterate
 * with the smallest gap is returned and `converged` is false.
 */
inline PGResult pg_ascent(const TabularMDP& mdp, const RiskMeasure& measure,
                          const StochasticPolicy& theta0, const PGConfig& config) {
    check_compatible(mdp, theta0.probs());
    if (config.max_iters < 0) throw ConfigError("pg max_iters must be non-negative");
    if (!(config.gap_tol >= 0.0)) throw ConfigError("pg gap_tol must be non-negative");
    const double eta = effective_stepsize(mdp, config);
    const double optimal = mdp.rho().dot(solve_optimal_exact(mdp, measure).values);

    StochasticPolicy theta = theta0;
    StochasticPolicy best = theta0;
    double best_gap = std::numeric_limits<double>::infinity();
    PGResult result{theta0, {}, false, 0};
    for (int k = 0;; ++k) {
        const GradientTerms t = gradient_terms(mdp, measure, theta.probs());
        const Matrix g = (t.visitation.asDiagonal() * t.q) / (1.0 - mdp.gamma());
        const double value = mdp.rho().dot(t.values);
        const double gap = optimal - value;
        result.trace.push_back({k, value, gap, g.norm()});
        if (gap < best_gap) {
            best_gap = gap;
            best = theta;
        }
        if (gap <= config.gap_tol) {
            result.policy = theta;
            result.converged = true;
            result.steps = k;
            return result;
        }
        if (k >= config.max_iters) break;
        theta = project_simplex_rows(theta.probs() + eta * g);
    }
    result.policy = best;
    result.steps = config.max_iters;
    return result;
}

} // namespace rrmdp
