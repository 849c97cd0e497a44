#pragma once

#include "rrmdp/errors.hpp"
#include "rrmdp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace rrmdp {

/// Largest admissible beta * range(V) before the entropy measure refuses to evaluate.
inline constexpr double kExpGuard = 700.0;

enum class RiskKind { entropy, cvar, neutral };

/**
 * @brief Convex risk measure sigma(mu, .) paired with its dual penalty D(., mu).
 *
 * - entropy(beta): sigma = beta^{-1} log E_mu exp(-beta V), penalty beta^{-1} KL.
 * - cvar(alpha):   sigma = max { E_q[-V] : q(s) <= mu(s)/alpha }, penalty is the
 *                  indicator of that density-ratio cap.
 * - neutral:       sigma = -E_mu V, penalty is the indicator of {mu}. Used for
 *                  risk-neutral baselines.
 */
class RiskMeasure {
public:
    static RiskMeasure entropy(double beta) {
        if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("entropy risk needs beta > 0");
        return RiskMeasure(RiskKind::entropy, beta);
    }
    static RiskMeasure cvar(double alpha) {
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("cvar risk needs 0 < alpha < 1");
        return RiskMeasure(RiskKind::cvar, alpha);
    }
    static RiskMeasure neutral() { return RiskMeasure(RiskKind::neutral, 0.0); }

    RiskKind kind() const noexcept { return kind_; }
    double beta() const { return kind_ == RiskKind::entropy ? param_ : 0.0; }
    double alpha() const { return kind_ == RiskKind::cvar ? param_ : 0.0; }

    friend bool operator==(const RiskMeasure&, const RiskMeasure&) = default;

private:
    RiskMeasure(RiskKind kind, double param) : kind_(kind), param_(param) {}

    RiskKind kind_;
    double param_;
};

namespace detail {

template <class Mu, class V>
void check_risk_args(const Mu& mu, const V& v) {
    if (mu.size() != v.size()) throw DomainError("risk measure: distribution and value sizes differ");
    if (!v.allFinite()) throw NumericError("risk measure: value vector has non-finite entries");
}

/// min and max of v over the support of mu.
template <class Mu, class V>
std::pair<double, double> support_range(const Mu& mu, const V& v) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        if (mu(i) <= 0.0) continue;
        lo = std::min(lo, v(i));
        hi = std::max(hi, v(i));
    }
    return {lo, hi};
}

template <class Mu, class V>
void entropy_guard(double beta, const Mu& mu, const V& v) {
    const auto [lo, hi] = support_range(mu, v);
    if (beta * (hi - lo) > kExpGuard)
        throw NumericError("entropy risk: beta * range(V) = " + std::to_string(beta * (hi - lo)) +
                           " exceeds the overflow guard; rescale beta");
}

/// Tilted weights w(s) = mu(s) exp(-beta (V(s) - min V)) and their log-normalizer shift.
template <class Mu, class V>
Vector entropy_weights(double beta, const Mu& mu, const V& v, double& shift) {
    shift = support_range(mu, v).first;
    Vector w = Vector::Zero(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i)
        if (mu(i) > 0.0) w(i) = mu(i) * std::exp(-beta * (v(i) - shift));
    return w;
}

/// Greedy capacity fill: caps mu(s)/alpha assigned in ascending-V order.
template <class Mu, class V>
Vector cvar_fill(double alpha, const Mu& mu, const V& v) {
    const auto n = mu.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return v(i) < v(j); });
    Vector q = Vector::Zero(n);
    double remaining = 1.0;
    for (const auto i : order) {
        if (remaining <= 0.0) break;
        if (mu(i) <= 0.0) continue;
        const double take = std::min(remaining, mu(i) / alpha);
        q(i) = take;
        remaining -= take;
    }
    return q;
}

} // namespace detail

/// sigma(mu, V).
template <class Mu, class V>
double risk_value(const RiskMeasure& measure, const Mu& mu, const V& v) {
    detail::check_risk_args(mu, v);
    switch (measure.kind()) {
    case RiskKind::entropy: {
        const double beta = measure.beta();
        detail::entropy_guard(beta, mu, v);
        double shift = 0.0;
        const Vector w = detail::entropy_weights(beta, mu, v, shift);
        return std::log(w.sum()) / beta - shift;
    }
    case RiskKind::cvar: {
        const Vector q = detail::cvar_fill(measure.alpha(), mu, v);
        return -q.dot(v);
    }
    case RiskKind::neutral: {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < mu.size(); ++i)
            if (mu(i) > 0.0) acc += mu(i) * v(i);
        return -acc;
    }
    }
    return 0.0;
}

/// The adversary's best response q* = argmin_q D(q, mu) + E_q V.
template <class Mu, class V>
Vector worst_case_distribution(const RiskMeasure& measure, const Mu& mu, const V& v) {
    detail::check_risk_args(mu, v);
    switch (measure.kind()) {
    case RiskKind::entropy: {
        detail::entropy_guard(measure.beta(), mu, v);
        double shift = 0.0;
        Vector w = detail::entropy_weights(measure.beta(), mu, v, shift);
        return w / w.sum();
    }
    case RiskKind::cvar:
        return detail::cvar_fill(measure.alpha(), mu, v);
    case RiskKind::neutral:
        return Vector(mu);
    }
    return Vector(mu);
}

/// D(q, mu); +infinity outside the penalty's domain.
template <class Q, class Mu>
double penalty_value(const RiskMeasure& measure, const Q& q, const Mu& mu) {
    if (q.size() != mu.size()) throw DomainError("penalty: distribution sizes differ");
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (measure.kind()) {
    case RiskKind::entropy: {
        double kl = 0.0;
        for (Eigen::Index i = 0; i < q.size(); ++i) {
            if (q(i) <= 0.0) continue;
            if (mu(i) <= 0.0) return inf;
            kl += q(i) * std::log(q(i) / mu(i));
        }
        return kl / measure.beta();
    }
    case RiskKind::cvar: {
        const double cap = 1.0 / measure.alpha();
        for (Eigen::Index i = 0; i < q.size(); ++i) {
            if (q(i) <= 0.0) continue;
            if (mu(i) <= 0.0) return inf;
            if (q(i) > mu(i) * cap * (1.0 + 1e-12)) return inf;
        }
        return 0.0;
    }
    case RiskKind::neutral: {
        for (Eigen::Index i = 0; i < q.size(); ++i)
            if (std::abs(q(i) - mu(i)) > 1e-12) return inf;
        return 0.0;
    }
    }
    return inf;
}

inline std::string to_string(RiskKind kind) {
    switch (kind) {
    case RiskKind::entropy: return "entropy";
    case RiskKind::cvar: return "cvar";
    case RiskKind::neutral: return "neutral";
    }
    return "unknown";
}

} // namespace rrmdp
