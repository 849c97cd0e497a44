#pragma once

#include "rrmdp/bellman.hpp"
#include "rrmdp/dataset.hpp"
#include "rrmdp/errors.hpp"
#include "rrmdp/eval.hpp"
#include "rrmdp/mdp.hpp"
#include "rrmdp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

namespace rrmdp {

/// Ridge added to the normal equations of linear least-squares fits.
inline constexpr double kRidgeFloor = 1e-8;

/**
 * Sinusoidal state embedding
 *   [sin(2 pi j s / n)]_{j=1..m} ++ [cos(2 pi j s / n)]_{j=1..m}.
 */
inline Vector sinusoidal_embedding(int s, int n, int m) {
    if (n < 1 || m < 1) throw DomainError("sinusoidal_embedding: n and m must be positive");
    Vector phi(2 * m);
    const int r = ((s % n) + n) % n; // periodic in s
    for (int j = 1; j <= m; ++j) {
        const double angle = 2.0 * std::numbers::pi * j * r / n;
        phi(j - 1) = std::sin(angle);
        phi(m + j - 1) = std::cos(angle);
    }
    return phi;
}

/// One-hot (s, a) features: (S*A) x (S*A) identity.
inline Matrix one_hot_features(int n_states, int n_actions) {
    return Matrix::Identity(n_states * n_actions, n_states * n_actions);
}

/// Per-action blocks [1, phi(s)] of width 2m + 1; row s*A + a.
inline Matrix sinusoidal_features(int n_states, int n_actions, int m) {
    const int block = 2 * m + 1;
    Matrix f = Matrix::Zero(n_states * n_actions, n_actions * block);
    for (int s = 0; s < n_states; ++s) {
        const Vector phi = sinusoidal_embedding(s, n_states, m);
        for (int a = 0; a < n_actions; ++a) {
            auto row = f.row(s * n_actions + a);
            row(a * block) = 1.0;
            row.segment(a * block + 1, 2 * m) = phi.transpose();
        }
    }
    return f;
}

/// Z-function bounds [exp(-beta V_max), exp(-beta V_min)] with V in [r_min, r_max] / (1 - gamma).
inline std::pair<double, double> positivity_bounds(const Matrix& rewards, double gamma, double beta) {
    const double v_min = rewards.minCoeff() / (1.0 - gamma);
    const double v_max = rewards.maxCoeff() / (1.0 - gamma);
    if (beta * std::max(std::abs(v_min), std::abs(v_max)) > kExpGuard)
        throw NumericError("Z bounds exp(-beta V) overflow; rescale beta");
    return {std::exp(-beta * v_max), std::exp(-beta * v_min)};
}

enum class ZKind { tabular, linear };

/**
 * Parameterized Z-function class over a finite state-action space. Every
 * evaluation is clamped to [clamp_lo, clamp_hi], clamp_lo > 0.
 *
 * Tabular: one parameter per (s, a). Linear: Z(s, a) = features.row(s*A + a) . w.
 */
class ZFamily {
public:
    static ZFamily tabular(int n_states, int n_actions, double lo, double hi) {
        return ZFamily(ZKind::tabular, n_states, n_actions, Matrix(), lo, hi);
    }
    static ZFamily linear(Matrix features, int n_states, int n_actions, double lo, double hi) {
        if (features.rows() != n_states * n_actions || features.cols() < 1)
            throw ConfigError("linear Z family needs an (S*A) x d feature matrix");
        return ZFamily(ZKind::linear, n_states, n_actions, std::move(features), lo, hi);
    }

    ZKind kind() const noexcept { return kind_; }
    int n_states() const noexcept { return n_states_; }
    int n_actions() const noexcept { return n_actions_; }
    double clamp_lo() const noexcept { return lo_; }
    double clamp_hi() const noexcept { return hi_; }
    const Matrix& features() const noexcept { return features_; }

    Eigen::Index n_params() const {
        return kind_ == ZKind::tabular ? n_states_ * n_actions_ : features_.cols();
    }

    double clamp(double z) const { return std::clamp(z, lo_, hi_); }

    double raw(const Vector& params, int s, int a) const {
        const int idx = s * n_actions_ + a;
        return kind_ == ZKind::tabular ? params(idx) : features_.row(idx).dot(params);
    }

    double evaluate(const Vector& params, int s, int a) const { return clamp(raw(params, s, a)); }

    /// S x A table of clamped values.
    Matrix evaluate_all(const Vector& params) const {
        check_params(params);
        Matrix z(n_states_, n_actions_);
        for (int s = 0; s < n_states_; ++s)
            for (int a = 0; a < n_actions_; ++a) z(s, a) = evaluate(params, s, a);
        return z;
    }

    void check_params(const Vector& params) const {
        if (params.size() != n_params()) throw ConfigError("Z parameter vector has the wrong length");
    }

private:
    ZFamily(ZKind kind, int n_states, int n_actions, Matrix features, double lo, double hi)
        : kind_(kind), n_states_(n_states), n_actions_(n_actions), features_(std::move(features)),
          lo_(lo), hi_(hi) {
        if (n_states < 1 || n_actions < 1) throw ConfigError("Z family needs positive sizes");
        if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi))
            throw ConfigError("Z family clamp bounds must satisfy 0 < lo <= hi < inf");
    }

    ZKind kind_;
    int n_states_;
    int n_actions_;
    Matrix features_;
    double lo_;
    double hi_;
};

/// Q = r - (gamma / beta) log Z.
inline Matrix z_to_q(const Matrix& z, const Matrix& rewards, double gamma, double beta) {
    if (z.rows() != rewards.rows() || z.cols() != rewards.cols())
        throw DomainError("z_to_q: Z and reward shapes differ");
    if (!(z.array() > 0.0).all()) throw DomainError("z_to_q: Z must be strictly positive");
    return rewards - (gamma / beta) * z.array().log().matrix();
}

namespace detail {

/// exp(-beta max_a' Q_z(s', a')) for every s'.
inline Vector next_state_targets(const Matrix& z, const Matrix& rewards, double gamma, double beta) {
    const Vector best = z_to_q(z, rewards, gamma, beta).rowwise().maxCoeff();
    Vector out(best.size());
    for (Eigen::Index s = 0; s < best.size(); ++s) {
        const double exponent = -beta * best(s);
        if (exponent > kExpGuard) throw NumericError("Z target exp(-beta max Q) overflows");
        out(s) = std::exp(exponent);
    }
    return out;
}

} // namespace detail

/// (T_Z z)(s,a) = E_{s'~P(.|s,a)} exp(-beta max_a' (r(s',a') - gamma/beta log z(s',a'))).
inline Matrix apply_TZ_exact(const TabularMDP& mdp, double beta, const Matrix& z) {
    const Vector targets = detail::next_state_targets(z, mdp.rewards(), mdp.gamma(), beta);
    Matrix out(mdp.n_states(), mdp.n_actions());
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a) out(s, a) = mdp.next(s, a).dot(targets);
    return out;
}

/// (1/N) sum_i (z_new(s_i, a_i) - exp(-beta max_a' (r(s_i', a') - gamma/beta log z_old(s_i', a'))))^2.
inline double empirical_loss(const Matrix& z_new, const Matrix& z_old, const Dataset& data,
                             const Matrix& rewards, double gamma, double beta) {
    if (data.records.empty()) throw ConfigError("empirical_loss: dataset is empty");
    if (rewards.rows() != z_old.rows() || rewards.cols() != z_old.cols())
        throw ConfigError("empirical_loss: reward table is missing or has the wrong shape");
    const Vector targets = detail::next_state_targets(z_old, rewards, gamma, beta);
    double acc = 0.0;
    for (const auto& t : data.records) {
        const double r = z_new(t.s, t.a) - targets(t.sp);
        acc += r * r;
    }
    return acc / static_cast<double>(data.records.size());
}

enum class RFZIVariant { exact_fit, practical };

struct RFZIConfig {
    double beta = 0.1;
    double gamma = 0.95;
    int K = 50;
    RFZIVariant variant = RFZIVariant::exact_fit;
    // practical variant
    double learning_rate = 0.1;
    double tau = 1.0;
    int T_batch = 100;
    int N_batch = 256;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(beta > 0.0)) throw ConfigError("rfzi beta must be positive");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("rfzi gamma must lie in [0, 1)");
        if (K < 0) throw ConfigError("rfzi K must be non-negative");
        if (variant == RFZIVariant::practical) {
            if (!(learning_rate > 0.0)) throw ConfigError("rfzi learning_rate must be positive");
            if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("rfzi tau must lie in (0, 1]");
            if (T_batch < 1 || N_batch < 1) throw ConfigError("rfzi T_batch and N_batch must be positive");
        }
    }
};

namespace detail {

inline void check_rfzi_inputs(const ZFamily& family, const Vector& params, const Dataset& data,
                              const Matrix& rewards) {
    family.check_params(params);
    data.validate();
    if (data.n_states != family.n_states() || data.n_actions != family.n_actions())
        throw ConfigError("dataset and Z family disagree on the state-action space");
    if (rewards.rows() != family.n_states() || rewards.cols() != family.n_actions())
        throw ConfigError("reward table is missing or has the wrong shape");
}

/// Ridge-floored ordinary least squares on the rows of `design`.
inline Vector least_squares(const Matrix& design, const Vector& y) {
    Matrix normal = design.transpose() * design;
    normal.diagonal().array() += kRidgeFloor;
    const Eigen::LDLT<Matrix> ldlt(normal);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw NumericError("least-squares normal equations are singular");
    Vector w = ldlt.solve(design.transpose() * y);
    if (!w.allFinite()) throw NumericError("least-squares solution is not finite");
    return w;
}

inline Matrix record_design(const ZFamily& family, const Dataset& data) {
    Matrix design(static_cast<Eigen::Index>(data.records.size()), family.n_params());
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        const auto& t = data.records[i];
        design.row(static_cast<Eigen::Index>(i)) = family.features().row(t.s * family.n_actions() + t.a);
    }
    return design;
}

} // namespace detail

/**
 * One RFZI update Z_{k+1} from Z_k = family(params).
 *
 * exact_fit: argmin over the family of the empirical loss. Tabular entries
 * become the mean target of the records hitting (s, a); unvisited entries
 * keep their value. Linear parameters solve ridge-floored least squares.
 *
 * practical: T_batch SGD steps on batches of N_batch records sampled
 * uniformly with replacement (targets from the frozen input parameters), then
 * the target blend (1 - tau) params + tau current. `iteration` selects the
 * RNG stream.
 */
inline Vector rfzi_iterate(const ZFamily& family, const Vector& params, const Dataset& data,
                           const Matrix& rewards, const RFZIConfig& config,
                           std::uint64_t iteration = 0) {
    config.validate();
    detail::check_rfzi_inputs(family, params, data, rewards);
    const Vector targets =
        detail::next_state_targets(family.evaluate_all(params), rewards, config.gamma, config.beta);
    const int n_a = family.n_actions();

    if (config.variant == RFZIVariant::exact_fit) {
        if (family.kind() == ZKind::tabular) {
            Vector sums = Vector::Zero(family.n_params());
            Vector counts = Vector::Zero(family.n_params());
            for (const auto& t : data.records) {
                sums(t.s * n_a + t.a) += targets(t.sp);
                counts(t.s * n_a + t.a) += 1.0;
            }
            Vector out = params;
            for (Eigen::Index i = 0; i < out.size(); ++i)
                if (counts(i) > 0.0) out(i) = family.clamp(sums(i) / counts(i));
            return out;
        }
        Vector y(static_cast<Eigen::Index>(data.records.size()));
        for (std::size_t i = 0; i < data.records.size(); ++i) y(static_cast<Eigen::Index>(i)) = targets(data.records[i].sp);
        return detail::least_squares(detail::record_design(family, data), y);
    }

    CounterRng rng(derive_seed(config.seed, iteration));
    Vector current = params;
    const double scale = 2.0 / config.N_batch;
    for (int step = 0; step < config.T_batch; ++step) {
        Vector grad = Vector::Zero(family.n_params());
        for (int b = 0; b < config.N_batch; ++b) {
            const auto& t = data.records[rng.index(data.records.size())];
            const int idx = t.s * n_a + t.a;
            const double residual = family.evaluate(current, t.s, t.a) - targets(t.sp);
            if (family.kind() == ZKind::tabular)
                grad(idx) += scale * residual;
            else
                grad += scale * residual * family.features().row(idx).transpose();
        }
        current -= config.learning_rate * grad;
        if (family.kind() == ZKind::tabular)
            current = current.unaryExpr([&](double z) { return family.clamp(z); });
    }
    return (1.0 - config.tau) * params + config.tau * current;
}

/// Initial parameters for Z_0 = 1: exact for tabular, least-squares fit of 1 over the records for linear.
struct InitialZ {
    Vector params;
    double residual; ///< RMS misfit of the constant 1 over the dataset
};

inline InitialZ initial_z(const ZFamily& family, const Dataset& data) {
    if (family.kind() == ZKind::tabular) {
        Vector p = Vector::Ones(family.n_params()).unaryExpr([&](double z) { return family.clamp(z); });
        double sq = 0.0;
        for (const auto& t : data.records) sq += std::pow(p(t.s * family.n_actions() + t.a) - 1.0, 2);
        return {std::move(p), std::sqrt(sq / static_cast<double>(std::max<std::size_t>(1, data.records.size())))};
    }
    const Matrix design = detail::record_design(family, data);
    const Vector ones = Vector::Ones(design.rows());
    Vector w = detail::least_squares(design, ones);
    double sq = 0.0;
    for (Eigen::Index i = 0; i < design.rows(); ++i) sq += std::pow(family.clamp(design.row(i).dot(w)) - 1.0, 2);
    return {std::move(w), std::sqrt(sq / static_cast<double>(design.rows()))};
}

struct RFZIRecord {
    int iter;
    double empirical_loss;
    std::optional<double> optimality_gap;
};

struct RFZIResult {
    StochasticPolicy policy;
    Vector params;
    Matrix z;
    std::vector<RFZIRecord> trace;
    double z0_residual = 0.0;
};

/**
 * Robust fitted-Z iteration: K updates from Z_0 = 1, then the greedy policy
 * of Q_K = r - gamma/beta log Z_K. The reward table is taken as known. When
 * `diagnostics` holds the true model, each trace row carries the optimality
 * gap of the current greedy policy under the entropy risk measure.
 */
inline RFZIResult rfzi_run(const ZFamily& family, const Dataset& data, const Matrix& rewards,
                           const RFZIConfig& config, const TabularMDP* diagnostics = nullptr) {
    config.validate();
    data.validate();
    InitialZ init = initial_z(family, data);
    detail::check_rfzi_inputs(family, init.params, data, rewards);

    std::optional<double> optimal;
    const RiskMeasure measure = RiskMeasure::entropy(config.beta);
    if (diagnostics) {
        if (std::abs(diagnostics->gamma() - config.gamma) > 1e-15)
            throw ConfigError("diagnostic MDP discount differs from the rfzi config gamma");
        optimal = diagnostics->rho().dot(solve_optimal_exact(*diagnostics, measure).values);
    }

    RFZIResult result{StochasticPolicy::uniform(family.n_states(), family.n_actions()), init.params,
                      Matrix(), {}, init.residual};
    Vector params = std::move(init.params);
    Matrix z = family.evaluate_all(params);
    for (int k = 0; k < config.K; ++k) {
        Vector next = rfzi_iterate(family, params, data, rewards, config, static_cast<std::uint64_t>(k));
        Matrix z_next = family.evaluate_all(next);
        RFZIRecord rec{k + 1, empirical_loss(z_next, z, data, rewards, config.gamma, config.beta), std::nullopt};
        if (optimal) {
            const StochasticPolicy pi = greedy_policy(z_to_q(z_next, rewards, config.gamma, config.beta));
            rec.optimality_gap =
                *optimal - diagnostics->rho().dot(evaluate_policy_exact(*diagnostics, measure, pi).values);
        }
        result.trace.push_back(rec);
        params = std::move(next);
        z = std::move(z_next);
    }
    result.policy = greedy_policy(z_to_q(z, rewards, config.gamma, config.beta));
    result.params = std::move(params);
    result.z = std::move(z);
    return result;
}

} // namespace rrmdp
