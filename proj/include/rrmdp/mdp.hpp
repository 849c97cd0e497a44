#pragma once

#include "rrmdp/errors.hpp"
#include "rrmdp/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace rrmdp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Row-sum / simplex tolerance shared by every model invariant.
inline constexpr double kSimplexTol = 1e-12;

namespace detail {

template <class Derived>
void check_distribution(const Eigen::MatrixBase<Derived>& p, double tol, const std::string& what) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (!std::isfinite(p(i)) || p(i) < 0.0)
            throw InvalidModel(what + ": entry " + std::to_string(i) + " is negative or not finite");
    }
    const double total = p.sum();
    if (std::abs(total - 1.0) > tol)
        throw InvalidModel(what + ": sums to " + std::to_string(total) + ", not 1");
}

} // namespace detail

/**
 * @brief Finite discounted MDP: the nominal model.
 *
 * The transition tensor is passed as an (S*A) x S matrix whose row s*A + a
 * is the next-state distribution P(.|s,a). Internally it is stored
 * transposed so that every P(.|s,a) is a contiguous column.
 *
 * Instances are immutable after construction; the constructor enforces all
 * invariants and throws InvalidModel otherwise.
 */
class TabularMDP {
public:
    TabularMDP(int n_states, int n_actions, const Matrix& transitions, Matrix rewards, double gamma,
               Vector rho)
        : n_states_(n_states), n_actions_(n_actions), rewards_(std::move(rewards)), gamma_(gamma),
          rho_(std::move(rho)) {
        if (n_states < 1 || n_actions < 1) throw InvalidModel("MDP needs at least one state and action");
        if (transitions.rows() != n_states * n_actions || transitions.cols() != n_states)
            throw InvalidModel("transition matrix must have shape (S*A) x S");
        if (rewards_.rows() != n_states || rewards_.cols() != n_actions)
            throw InvalidModel("reward matrix must have shape S x A");
        if (rho_.size() != n_states) throw InvalidModel("initial distribution must have length S");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidModel("discount must lie in [0, 1)");
        if (!rewards_.allFinite()) throw InvalidModel("rewards must be finite");
        for (int s = 0; s < n_states; ++s)
            for (int a = 0; a < n_actions; ++a)
                detail::check_distribution(transitions.row(s * n_actions + a), kSimplexTol,
                                           "kernel row (" + std::to_string(s) + "," +
                                               std::to_string(a) + ")");
        detail::check_distribution(rho_, kSimplexTol, "initial distribution");
        kernel_ = transitions.transpose();
    }

    int n_states() const noexcept { return n_states_; }
    int n_actions() const noexcept { return n_actions_; }
    double gamma() const noexcept { return gamma_; }
    const Matrix& rewards() const noexcept { return rewards_; }
    const Vector& rho() const noexcept { return rho_; }

    /// P(.|s,a) as a column view.
    auto next(int s, int a) const { return kernel_.col(s * n_actions_ + a); }

    /// The kernel in the (S*A) x S layout accepted by the constructor.
    Matrix transitions() const { return kernel_.transpose(); }

    double reward_min() const { return rewards_.minCoeff(); }
    double reward_max() const { return rewards_.maxCoeff(); }

    /// Bounds [r_min/(1-gamma), r_max/(1-gamma)] on every fixed-point value.
    double value_min() const { return reward_min() / (1.0 - gamma_); }
    double value_max() const { return reward_max() / (1.0 - gamma_); }

    /// Same model with a different discount factor.
    TabularMDP with_gamma(double gamma) const {
        return TabularMDP(n_states_, n_actions_, transitions(), rewards_, gamma, rho_);
    }

private:
    int n_states_;
    int n_actions_;
    Matrix kernel_; // S x (S*A)
    Matrix rewards_;
    double gamma_;
    Vector rho_;
};

/// Row-stochastic S x A action distribution; also the direct-parameterization point.
class StochasticPolicy {
public:
    explicit StochasticPolicy(Matrix probs) : probs_(std::move(probs)) {
        for (Eigen::Index s = 0; s < probs_.rows(); ++s)
            detail::check_distribution(probs_.row(s), kSimplexTol,
                                       "policy row " + std::to_string(s));
    }

    static StochasticPolicy uniform(int n_states, int n_actions) {
        return StochasticPolicy(Matrix::Constant(n_states, n_actions, 1.0 / n_actions));
    }

    /// One-hot policy taking actions[s] in state s.
    static StochasticPolicy deterministic(const std::vector<int>& actions, int n_actions) {
        Matrix probs = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
        for (std::size_t s = 0; s < actions.size(); ++s) {
            if (actions[s] < 0 || actions[s] >= n_actions)
                throw InvalidModel("action index out of range in deterministic policy");
            probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
        }
        return StochasticPolicy(std::move(probs));
    }

    int n_states() const noexcept { return static_cast<int>(probs_.rows()); }
    int n_actions() const noexcept { return static_cast<int>(probs_.cols()); }
    const Matrix& probs() const noexcept { return probs_; }
    double operator()(int s, int a) const { return probs_(s, a); }

    /// Index of the most likely action in each state (lowest index on ties).
    std::vector<int> argmax_actions() const {
        std::vector<int> out(static_cast<std::size_t>(probs_.rows()));
        for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
            Eigen::Index best = 0;
            for (Eigen::Index a = 1; a < probs_.cols(); ++a)
                if (probs_(s, a) > probs_(s, best)) best = a;
            out[static_cast<std::size_t>(s)] = static_cast<int>(best);
        }
        return out;
    }

    bool is_deterministic() const {
        return ((probs_.array() == 0.0) || (probs_.array() == 1.0)).all();
    }

private:
    Matrix probs_;
};

inline void check_compatible(const TabularMDP& mdp, const Matrix& weights) {
    if (weights.rows() != mdp.n_states() || weights.cols() != mdp.n_actions())
        throw InvalidModel("policy shape does not match the MDP");
}

/// State-to-state matrix M(s,s') = sum_a w(a|s) P(s'|s,a) for arbitrary action weights.
inline Matrix state_transition_matrix(const TabularMDP& mdp, const Matrix& weights) {
    check_compatible(mdp, weights);
    Matrix m = Matrix::Zero(mdp.n_states(), mdp.n_states());
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a)
            if (weights(s, a) != 0.0) m.row(s) += weights(s, a) * mdp.next(s, a).transpose();
    return m;
}

/**
 * Discounted visitation distribution of a state chain with transition
 * matrix `chain`: d = (1-gamma) rho^T (I - gamma M)^{-1}.
 */
inline Vector visitation_from_chain(const Matrix& chain, const Vector& rho, double gamma) {
    const auto n = chain.rows();
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidModel("discount must lie in [0, 1)");
    if (rho.size() != n) throw InvalidModel("initial distribution size mismatch");
    const Matrix system = Matrix::Identity(n, n) - gamma * chain.transpose();
    const Eigen::PartialPivLU<Matrix> lu(system);
    if (!std::isfinite(lu.rcond()) || lu.rcond() < 1e-14)
        throw NumericError("visitation system is singular");
    Vector d = lu.solve((1.0 - gamma) * rho);
    if (!d.allFinite()) throw NumericError("visitation solve produced non-finite values");
    return d;
}

/**
 * Discounted state visitation distribution d^{pi,P}(s) = (1-gamma) sum_t gamma^t Pr(s_t = s)
 * for the policy `policy` run on the transition model `transitions`
 * ((S*A) x S, same layout as TabularMDP). Solved as a linear system.
 */
inline Vector visitation_distribution(const Matrix& transitions, const StochasticPolicy& policy,
                                      const Vector& rho, double gamma) {
    const int n_states = policy.n_states();
    const int n_actions = policy.n_actions();
    if (transitions.rows() != n_states * n_actions || transitions.cols() != n_states)
        throw InvalidModel("transition matrix shape does not match the policy");
    detail::check_distribution(rho, 1e-10, "initial distribution");
    Matrix chain = Matrix::Zero(n_states, n_states);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
            const auto row = transitions.row(s * n_actions + a);
            detail::check_distribution(row, kSimplexTol,
                                       "kernel row (" + std::to_string(s) + "," +
                                           std::to_string(a) + ")");
            chain.row(s) += policy(s, a) * row;
        }
    return visitation_from_chain(chain, rho, gamma);
}

inline Vector visitation_distribution(const TabularMDP& mdp, const StochasticPolicy& policy) {
    check_compatible(mdp, policy.probs());
    return visitation_from_chain(state_transition_matrix(mdp, policy.probs()), mdp.rho(), mdp.gamma());
}

struct Step {
    int state;
    int action;
    double reward;
};

struct Rollout {
    std::vector<Step> trajectory;
    double discounted_return = 0.0;
};

/// Samples one episode of `horizon` steps under the nominal model.
inline Rollout rollout(const TabularMDP& mdp, const StochasticPolicy& policy, int horizon,
                       std::uint64_t seed) {
    check_compatible(mdp, policy.probs());
    if (horizon < 1) throw DomainError("rollout horizon must be at least 1");
    CounterRng rng(seed);
    Rollout out;
    out.trajectory.reserve(static_cast<std::size_t>(horizon));
    int s = static_cast<int>(rng.categorical(mdp.rho()));
    double discount = 1.0;
    for (int t = 0; t < horizon; ++t) {
        const int a = static_cast<int>(rng.categorical(policy.probs().row(s)));
        const double r = mdp.rewards()(s, a);
        out.trajectory.push_back({s, a, r});
        out.discounted_return += discount * r;
        discount *= mdp.gamma();
        s = static_cast<int>(rng.categorical(mdp.next(s, a)));
    }
    return out;
}

/// Deterministic policy choosing argmax_a q(s,a), lowest index on ties.
inline StochasticPolicy greedy_policy(const Matrix& q) {
    if (!q.allFinite()) throw NumericError("greedy_policy: Q has non-finite entries");
    std::vector<int> actions(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        Eigen::Index best = 0;
        for (Eigen::Index a = 1; a < q.cols(); ++a)
            if (q(s, a) > q(s, best)) best = a;
        actions[static_cast<std::size_t>(s)] = static_cast<int>(best);
    }
    return StochasticPolicy::deterministic(actions, static_cast<int>(q.cols()));
}

} // namespace rrmdp
