#pragma once

#include "rrmdp/errors.hpp"
#include "rrmdp/mdp.hpp"
#include "rrmdp/risk.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace rrmdp {

/**
 * Selects between the optimal backup (max over actions) and the backup of a
 * fixed action-weight matrix. Policy weights are not required to be
 * row-stochastic here so that the value map can be differentiated off the
 * simplex; use BackupMode::policy for validated policies.
 */
class BackupMode {
public:
    static BackupMode star() { return BackupMode(std::nullopt); }
    static BackupMode policy(const StochasticPolicy& pi) { return BackupMode(pi.probs()); }
    static BackupMode weights(Matrix w) { return BackupMode(std::move(w)); }

    bool is_star() const noexcept { return !weights_.has_value(); }
    const Matrix& weights() const { return *weights_; }

private:
    explicit BackupMode(std::optional<Matrix> w) : weights_(std::move(w)) {}
    std::optional<Matrix> weights_;
};

/// Q(s,a) = r(s,a) - gamma * sigma(P_{s,a}, v).
inline Matrix q_from_v(const TabularMDP& mdp, const RiskMeasure& measure, const Vector& v) {
    if (v.size() != mdp.n_states()) throw DomainError("value vector length differs from n_states");
    Matrix q(mdp.n_states(), mdp.n_actions());
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a)
            q(s, a) = mdp.rewards()(s, a) - mdp.gamma() * risk_value(measure, mdp.next(s, a), v);
    return q;
}

/// Collapses Q to V under the mode: max_a for star, weighted sum for a policy.
inline Vector v_from_q(const Matrix& q, const BackupMode& mode) {
    if (mode.is_star()) return q.rowwise().maxCoeff();
    const Matrix& w = mode.weights();
    if (w.rows() != q.rows() || w.cols() != q.cols())
        throw InvalidModel("policy shape does not match the MDP");
    return w.cwiseProduct(q).rowwise().sum();
}

inline Vector apply_bellman(const TabularMDP& mdp, const RiskMeasure& measure,
                            const BackupMode& mode, const Vector& v) {
    return v_from_q(q_from_v(mdp, measure, v), mode);
}

struct FixedPointResult {
    Vector values;
    int iterations = 0;
    double residual = 0.0;
};

using ResidualCallback = std::function<void(int iteration, double residual)>;

/**
 * Value iteration from V = 0 until ||T V - V||_inf <= tol.
 *
 * T is a gamma-contraction in the sup norm for every convex risk measure, so
 * the loop terminates for any tol > 0 given enough iterations.
 */
inline FixedPointResult solve_fixed_point(const TabularMDP& mdp, const RiskMeasure& measure,
                                          const BackupMode& mode, double tol = 1e-10,
                                          int max_iters = 100000,
                                          const ResidualCallback& on_iteration = {}) {
    if (!(tol > 0.0)) throw DomainError("solve_fixed_point: tol must be positive");
    Vector v = Vector::Zero(mdp.n_states());
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= max_iters; ++it) {
        Vector next = apply_bellman(mdp, measure, mode, v);
        residual = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        if (on_iteration) on_iteration(it, residual);
        if (residual <= tol) return {std::move(v), it, residual};
    }
    throw NonConvergence("value iteration did not reach tolerance", residual);
}

/// P-hat(.|s,a) = worst_case_distribution(P(.|s,a), v), in the (S*A) x S layout.
inline Matrix worst_case_kernel(const TabularMDP& mdp, const RiskMeasure& measure, const Vector& v) {
    Matrix out(mdp.n_states() * mdp.n_actions(), mdp.n_states());
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a)
            out.row(s * mdp.n_actions() + a) =
                worst_case_distribution(measure, mdp.next(s, a), v).transpose();
    return out;
}

/**
 * Exact evaluation of a fixed action-weight matrix.
 *
 * Newton's method on F(V) = T V - V: with the adversary's response q*(V)
 * frozen, the backup is affine in V and the Newton step is a linear solve,
 *   (I - gamma sum_a w(a|s) q*_{s,a}) V' = sum_a w(a|s) (r - gamma sigma(P, V) - gamma q*.V).
 * For entropy this converges quadratically; for CVaR it stops once the
 * adversary's response is stable. Always starts from V = 0, so identical
 * inputs give bit-identical outputs.
 */
inline FixedPointResult evaluate_policy_exact(const TabularMDP& mdp, const RiskMeasure& measure,
                                              const Matrix& weights, int max_newton = 100) {
    check_compatible(mdp, weights);
    const int n_s = mdp.n_states();
    const int n_a = mdp.n_actions();
    const double gamma = mdp.gamma();
    Vector v = Vector::Zero(n_s);
    double step = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= max_newton; ++it) {
        Matrix chain = Matrix::Zero(n_s, n_s);
        Vector rhs = Vector::Zero(n_s);
        for (int s = 0; s < n_s; ++s)
            for (int a = 0; a < n_a; ++a) {
                const double w = weights(s, a);
                if (w == 0.0) continue;
                const auto p = mdp.next(s, a);
                const Vector q = worst_case_distribution(measure, p, v);
                chain.row(s) += w * q.transpose();
                rhs(s) += w * (mdp.rewards()(s, a) - gamma * risk_value(measure, p, v) -
                               gamma * q.dot(v));
            }
        const Matrix system = Matrix::Identity(n_s, n_s) - gamma * chain;
        const Eigen::PartialPivLU<Matrix> lu(system);
        if (!std::isfinite(lu.rcond()) || lu.rcond() < 1e-14)
            throw NumericError("policy evaluation system is singular");
        Vector next = lu.solve(rhs);
        if (!next.allFinite()) throw NumericError("policy evaluation produced non-finite values");
        const double prev_step = step;
        step = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        const double scale = 1.0 + v.lpNorm<Eigen::Infinity>();
        // converged, or stalled at rounding level
        if (step <= 4e-16 * scale || (step <= 1e-12 * scale && step >= prev_step)) break;
    }
    const double residual =
        (apply_bellman(mdp, measure, BackupMode::weights(weights), v) - v).lpNorm<Eigen::Infinity>();
    if (!(residual <= 1e-8 * (1.0 + v.lpNorm<Eigen::Infinity>())))
        throw NonConvergence("Newton policy evaluation did not converge", residual);
    return {std::move(v), 0, residual};
}

inline FixedPointResult evaluate_policy_exact(const TabularMDP& mdp, const RiskMeasure& measure,
                                              const StochasticPolicy& policy) {
    return evaluate_policy_exact(mdp, measure, policy.probs());
}

struct OptimalSolution {
    Vector values;
    Matrix q;
    StochasticPolicy policy;
    double residual;
};

/**
 * Optimal values to rounding precision: value iteration to a coarse
 * tolerance, then policy iteration with exact (Newton) evaluation until the
 * greedy policy is stable. Policy improvement is monotone because T* is a
 * monotone contraction.
 */
inline OptimalSolution solve_optimal_exact(const TabularMDP& mdp, const RiskMeasure& measure) {
    Vector v = solve_fixed_point(mdp, measure, BackupMode::star(), 1e-6).values;
    StochasticPolicy pi = greedy_policy(q_from_v(mdp, measure, v));
    for (int it = 0; it < 200; ++it) {
        v = evaluate_policy_exact(mdp, measure, pi).values;
        StochasticPolicy next = greedy_policy(q_from_v(mdp, measure, v));
        if (next.probs() == pi.probs()) break;
        // switch only on strict improvement so ties at rounding level cannot cycle
        const Vector v_next = evaluate_policy_exact(mdp, measure, next).values;
        if ((v_next - v).maxCoeff() <= 1e-13 * (1.0 + v.lpNorm<Eigen::Infinity>())) break;
        pi = std::move(next);
    }
    Matrix q = q_from_v(mdp, measure, v);
    const double residual = (q.rowwise().maxCoeff() - v).lpNorm<Eigen::Infinity>();
    return {std::move(v), std::move(q), std::move(pi), residual};
}

/// [V_{0:0}, ..., V_{0:h}] with V_{0:t+1} = T V_{0:t} and V_{0:-1} = 0.
inline std::vector<Vector> finite_horizon_values(const TabularMDP& mdp, const RiskMeasure& measure,
                                                 const BackupMode& mode, int h) {
    if (h < 0) throw DomainError("finite_horizon_values: h must be non-negative");
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(h) + 1);
    Vector v = Vector::Zero(mdp.n_states());
    for (int t = 0; t <= h; ++t) {
        v = apply_bellman(mdp, measure, mode, v);
        out.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Brute-force sup-inf oracle
// ---------------------------------------------------------------------------

struct GridInfResult {
    double value;      ///< min over the grid of D(q, p) + E_q v
    Vector argmin;     ///< minimizing grid point
    double tolerance;  ///< bound on value - (exact infimum)
    std::size_t points;
};

namespace detail {

inline std::size_t grid_size(int units, int dims) {
    // C(units + dims - 1, dims - 1)
    double c = 1.0;
    for (int i = 1; i < dims; ++i) c = c * (units + i) / i;
    return static_cast<std::size_t>(c + 0.5);
}

template <class F>
void for_each_composition(int units, std::vector<int>& parts, std::size_t pos, F&& visit) {
    if (pos + 1 == parts.size()) {
        parts[pos] = units;
        visit(parts);
        return;
    }
    for (int k = 0; k <= units; ++k) {
        parts[pos] = k;
        for_each_composition(units - k, parts, pos + 1, visit);
    }
}

} // namespace detail

inline constexpr std::size_t kOracleGridBudget = 5'000'000;

/**
 * min over the simplex lattice {k * grid_step} restricted to supp(p) of
 * f(q) = D(q, p) + E_q v, by exhaustive enumeration.
 *
 * The tolerance bounds (grid value - true infimum) through a dual lower bound
 * on inf f, valid whatever point it is evaluated at:
 *  - entropy: f convex, so inf f >= f(x) + min_i df_i(x) - <df(x), x> for any
 *    x in the relative interior; x is the closed-form minimizer, mixed with p
 *    if it underflows.
 *  - CVaR: inf f = max_c c - E_p (c - v)_+ / alpha, maximized over c in v.
 */
template <class P, class V>
GridInfResult grid_inner_inf(const RiskMeasure& measure, const P& p, const V& v, double grid_step) {
    if (!(grid_step > 0.0 && grid_step <= 1.0)) throw DomainError("grid_step must lie in (0, 1]");
    const double units_real = 1.0 / grid_step;
    const int units = static_cast<int>(std::lround(units_real));
    if (std::abs(units_real - units) > 1e-9 * units_real)
        throw DomainError("grid_step must divide 1");
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p(i) > 0.0) support.push_back(i);
    const int dims = static_cast<int>(support.size());
    const std::size_t count = detail::grid_size(units, dims);
    if (count > kOracleGridBudget) throw DomainError("oracle grid too large for exhaustive search");

    GridInfResult best{std::numeric_limits<double>::infinity(), Vector::Zero(p.size()), 0.0, count};
    Vector q = Vector::Zero(p.size());
    std::vector<int> parts(static_cast<std::size_t>(dims));
    detail::for_each_composition(units, parts, 0, [&](const std::vector<int>& c) {
        for (int j = 0; j < dims; ++j) q(support[static_cast<std::size_t>(j)]) = c[static_cast<std::size_t>(j)] * grid_step;
        const double pen = penalty_value(measure, q, p);
        if (!std::isfinite(pen)) return;
        const double obj = pen + q.dot(v);
        if (obj < best.value) {
            best.value = obj;
            best.argmin = q;
        }
    });

    double vmax = 0.0;
    for (const auto i : support) vmax = std::max(vmax, std::abs(v(i)));
    double lower = -std::numeric_limits<double>::infinity();
    if (measure.kind() == RiskKind::entropy) {
        const double beta = measure.beta();
        Vector x = worst_case_distribution(measure, p, v);
        bool interior = true;
        for (const auto i : support) interior &= x(i) > 0.0;
        if (!interior) x = 0.5 * (x + Vector(p));
        double fx = penalty_value(measure, x, p);
        double inner = 0.0, gmin = std::numeric_limits<double>::infinity();
        for (const auto i : support) {
            const double g = v(i) + (std::log(x(i) / p(i)) + 1.0) / beta;
            fx += x(i) * v(i);
            inner += x(i) * g;
            gmin = std::min(gmin, g);
        }
        lower = fx + gmin - inner;
    } else if (measure.kind() == RiskKind::cvar) {
        for (const auto j : support) {
            const double c = v(j);
            double excess = 0.0;
            for (const auto i : support) excess += p(i) * std::max(c - v(i), 0.0);
            lower = std::max(lower, c - excess / measure.alpha());
        }
    } else {
        lower = 0.0;
        for (const auto i : support) lower += p(i) * v(i);
    }
    best.tolerance = std::max(0.0, best.value - lower) + 1e-12 * (1.0 + vmax);
    return best;
}

struct OracleResult {
    Vector values;
    double tolerance; ///< sup-norm bound on |oracle - exact recursion|
};

/**
 * Regularized-RMDP sup-inf value over h+1 backups by backward dynamic
 * programming, with the adversary's inner infimum over P-hat_{s,a} found by
 * exhaustive lattice search. Test oracle for the risk-sensitive recursion;
 * refuses instances beyond 4 states, 3 actions, h = 5 or grid_step < 0.01.
 */
inline OracleResult brute_force_value_oracle(const TabularMDP& mdp, const RiskMeasure& measure,
                                             const BackupMode& mode, int h, double grid_step) {
    if (mdp.n_states() > 4 || mdp.n_actions() > 3 || h > 5 || h < 0 || grid_step < 0.01 - 1e-12)
        throw DomainError("brute_force_value_oracle: instance too large for exhaustive search");
    const double gamma = mdp.gamma();
    // weights off the simplex scale the propagated error
    const double mass =
        mode.is_star() ? 1.0 : std::max(1.0, mode.weights().cwiseAbs().rowwise().sum().maxCoeff());
    Vector v = Vector::Zero(mdp.n_states());
    double err = 0.0;
    for (int t = 0; t <= h; ++t) {
        Matrix q(mdp.n_states(), mdp.n_actions());
        double step_tol = 0.0;
        for (int s = 0; s < mdp.n_states(); ++s)
            for (int a = 0; a < mdp.n_actions(); ++a) {
                const auto inner = grid_inner_inf(measure, mdp.next(s, a), v, grid_step);
                q(s, a) = mdp.rewards()(s, a) + gamma * inner.value;
                step_tol = std::max(step_tol, inner.tolerance);
            }
        v = v_from_q(q, mode);
        err = gamma * mass * (step_tol + err);
    }
    return {std::move(v), err};
}

} // namespace rrmdp
