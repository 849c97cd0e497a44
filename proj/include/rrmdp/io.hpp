#pragma once

#include "rrmdp/dataset.hpp"
#include "rrmdp/envs.hpp"
#include "rrmdp/errors.hpp"
#include "rrmdp/mdp.hpp"
#include "rrmdp/policy_gradient.hpp"
#include "rrmdp/rfzi.hpp"
#include "rrmdp/risk.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

// JSON documents and CSV/JSON-lines files exchanged by the command-line tool.
namespace rrmdp::io {

using nlohmann::json;

/// 17 significant digits, the precision of every float written to CSV.
inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

template <class T>
T get(const json& j, const char* key, const char* context) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigError(std::string(context) + ": missing field \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(context) + ": field \"" + key + "\" has the wrong type");
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const char* context) {
    if (!j.contains(key)) return fallback;
    return get<T>(j, key, context);
}

inline json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index k = 0; k < m.cols(); ++k) row[static_cast<std::size_t>(k)] = m(i, k);
        rows.push_back(row);
    }
    return rows;
}

inline Vector vector_from(const json& j, const char* context) {
    if (!j.is_array()) throw ConfigError(std::string(context) + ": expected an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(std::string(context) + ": expected numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline Matrix matrix_from(const json& j, const char* context) {
    if (!j.is_array() || j.empty()) throw ConfigError(std::string(context) + ": expected a non-empty 2-D array");
    const auto cols = j[0].size();
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < j.size(); ++i) {
        const Vector row = vector_from(j[i], context);
        if (static_cast<std::size_t>(row.size()) != cols)
            throw ConfigError(std::string(context) + ": ragged 2-D array");
        m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return m;
}

} // namespace detail

// ---- files ---------------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": invalid JSON (" + e.what() + ")");
    }
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---- MDP -----------------------------------------------------------------

inline json to_json(const TabularMDP& mdp) {
    json kernel = json::array();
    for (int s = 0; s < mdp.n_states(); ++s) {
        json per_action = json::array();
        for (int a = 0; a < mdp.n_actions(); ++a) per_action.push_back(detail::vector_json(mdp.next(s, a)));
        kernel.push_back(per_action);
    }
    return {{"n_states", mdp.n_states()},
            {"n_actions", mdp.n_actions()},
            {"gamma", mdp.gamma()},
            {"rho", detail::vector_json(mdp.rho())},
            {"rewards", detail::matrix_json(mdp.rewards())},
            {"kernel", kernel}};
}

inline TabularMDP mdp_from_json(const json& j) {
    constexpr const char* ctx = "mdp";
    const int n_s = detail::get<int>(j, "n_states", ctx);
    const int n_a = detail::get<int>(j, "n_actions", ctx);
    if (n_s < 1 || n_a < 1) throw InvalidModel("mdp: n_states and n_actions must be positive");
    const double gamma = detail::get<double>(j, "gamma", ctx);
    const Vector rho = detail::vector_from(j.at("rho"), "mdp.rho");
    const Matrix rewards = detail::matrix_from(j.at("rewards"), "mdp.rewards");
    const json& kernel = j.at("kernel");
    if (!kernel.is_array() || kernel.size() != static_cast<std::size_t>(n_s))
        throw InvalidModel("mdp.kernel must have n_states entries");
    Matrix transitions(n_s * n_a, n_s);
    for (int s = 0; s < n_s; ++s) {
        const json& per_action = kernel[static_cast<std::size_t>(s)];
        if (!per_action.is_array() || per_action.size() != static_cast<std::size_t>(n_a))
            throw InvalidModel("mdp.kernel[s] must have n_actions entries");
        for (int a = 0; a < n_a; ++a) {
            const Vector row = detail::vector_from(per_action[static_cast<std::size_t>(a)], "mdp.kernel");
            if (row.size() != n_s) throw InvalidModel("mdp.kernel[s][a] must have n_states entries");
            transitions.row(s * n_a + a) = row.transpose();
        }
    }
    return TabularMDP(n_s, n_a, transitions, rewards, gamma, rho);
}

// ---- risk measure ----------------------------------------------------------

inline json to_json(const RiskMeasure& m) {
    switch (m.kind()) {
    case RiskKind::entropy: return {{"kind", "entropy"}, {"beta", m.beta()}};
    case RiskKind::cvar: return {{"kind", "cvar"}, {"alpha", m.alpha()}};
    case RiskKind::neutral: return {{"kind", "neutral"}};
    }
    return {};
}

inline RiskMeasure risk_from_json(const json& j) {
    const auto kind = detail::get<std::string>(j, "kind", "risk");
    if (kind == "entropy") return RiskMeasure::entropy(detail::get<double>(j, "beta", "risk"));
    if (kind == "cvar") return RiskMeasure::cvar(detail::get<double>(j, "alpha", "risk"));
    if (kind == "neutral") return RiskMeasure::neutral();
    throw ConfigError("risk: unknown kind \"" + kind + "\"");
}

// ---- policy --------------------------------------------------------------

inline json to_json(const StochasticPolicy& pi) {
    return {{"n_states", pi.n_states()},
            {"n_actions", pi.n_actions()},
            {"probs", detail::matrix_json(pi.probs())},
            {"greedy_actions", pi.argmax_actions()}};
}

inline StochasticPolicy policy_from_json(const json& j) {
    if (j.contains("probs")) return StochasticPolicy(detail::matrix_from(j.at("probs"), "policy.probs"));
    if (j.contains("actions")) {
        const auto actions = detail::get<std::vector<int>>(j, "actions", "policy");
        return StochasticPolicy::deterministic(actions, detail::get<int>(j, "n_actions", "policy"));
    }
    throw ConfigError("policy: needs \"probs\" or \"actions\"");
}

// ---- environment and data-generation specs --------------------------------

/**
 * {"n", "alpha", "hitting_rewards", "gamma", "rho": "uniform" | [...]}, or
 * {"preset": "exemplar14", "alpha", "gamma"}.
 */
inline CycleEnvSpec cycle_spec_from_json(const json& j) {
    constexpr const char* ctx = "env spec";
    CycleEnvSpec spec;
    spec.gamma = detail::get_or<double>(j, "gamma", 0.95, ctx);
    spec.alpha = detail::get<double>(j, "alpha", ctx);
    if (j.contains("preset")) {
        const auto preset = detail::get<std::string>(j, "preset", ctx);
        if (preset != "exemplar14") throw ConfigError("env spec: unknown preset \"" + preset + "\"");
        spec.n = 14;
        spec.hitting_rewards = kExemplar14Rewards;
    } else {
        spec.n = detail::get<int>(j, "n", ctx);
        spec.hitting_rewards = detail::get<std::vector<double>>(j, "hitting_rewards", ctx);
    }
    if (j.contains("rho") && !(j.at("rho").is_string() && j.at("rho") == "uniform"))
        spec.rho = detail::vector_from(j.at("rho"), "env spec.rho");
    return spec;
}

/// {"mu": "uniform" | [[...]], "N", "seed"}.
inline DataGenSpec datagen_from_json(const json& j) {
    constexpr const char* ctx = "data spec";
    DataGenSpec spec;
    spec.N = detail::get<int>(j, "N", ctx);
    spec.seed = detail::get_or<std::uint64_t>(j, "seed", 0, ctx);
    if (j.contains("mu") && !(j.at("mu").is_string() && j.at("mu") == "uniform"))
        spec.mu = detail::matrix_from(j.at("mu"), "data spec.mu");
    return spec;
}

// ---- solver configs ------------------------------------------------------

inline PGConfig pg_config_from_json(const json& j) {
    constexpr const char* ctx = "pg config";
    PGConfig c;
    c.eta = detail::get_or<double>(j, "eta", c.eta, ctx);
    c.max_iters = detail::get_or<int>(j, "max_iters", c.max_iters, ctx);
    c.gap_tol = detail::get_or<double>(j, "gap_tol", c.gap_tol, ctx);
    const auto rule = detail::get_or<std::string>(j, "stepsize_rule", "fixed", ctx);
    if (rule == "fixed")
        c.stepsize_rule = StepsizeRule::fixed;
    else if (rule == "theorem4")
        c.stepsize_rule = StepsizeRule::theorem4;
    else
        throw ConfigError("pg config: unknown stepsize_rule \"" + rule + "\"");
    if (j.contains("M_bound") && !j.at("M_bound").is_null()) c.M_bound = detail::get<double>(j, "M_bound", ctx);
    if (!(c.eta > 0.0)) throw ConfigError("pg config: eta must be positive");
    if (!(c.gap_tol >= 0.0)) throw ConfigError("pg config: gap_tol must be non-negative");
    return c;
}

/// RFZI config plus the CLI-level choices of function family and reward source.
struct RFZIJob {
    RFZIConfig config;
    std::string family = "tabular"; ///< tabular | linear_onehot | linear_sinusoidal
    int frequencies = 4;
    std::optional<Matrix> rewards;
};

inline RFZIJob rfzi_job_from_json(const json& j) {
    constexpr const char* ctx = "rfzi config";
    RFZIJob job;
    auto& c = job.config;
    c.beta = detail::get<double>(j, "beta", ctx);
    c.gamma = detail::get_or<double>(j, "gamma", c.gamma, ctx);
    c.K = detail::get_or<int>(j, "K", c.K, ctx);
    const auto variant = detail::get_or<std::string>(j, "variant", "exact_fit", ctx);
    if (variant == "exact_fit")
        c.variant = RFZIVariant::exact_fit;
    else if (variant == "practical")
        c.variant = RFZIVariant::practical;
    else
        throw ConfigError("rfzi config: unknown variant \"" + variant + "\"");
    c.learning_rate = detail::get_or<double>(j, "learning_rate", c.learning_rate, ctx);
    c.tau = detail::get_or<double>(j, "tau", c.tau, ctx);
    c.T_batch = detail::get_or<int>(j, "T_batch", c.T_batch, ctx);
    c.N_batch = detail::get_or<int>(j, "N_batch", c.N_batch, ctx);
    c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed, ctx);
    job.family = detail::get_or<std::string>(j, "family", job.family, ctx);
    job.frequencies = detail::get_or<int>(j, "frequencies", job.frequencies, ctx);
    if (j.contains("rewards")) job.rewards = detail::matrix_from(j.at("rewards"), "rfzi config.rewards");
    c.validate();
    return job;
}

// ---- datasets --------------------------------------------------------------

/// One JSON object per line: {"s","a","r","sp"}.
inline std::string dataset_jsonl(const Dataset& data) {
    std::string out;
    out.reserve(data.records.size() * 48);
    for (const auto& t : data.records) {
        out += "{\"s\":" + std::to_string(t.s) + ",\"a\":" + std::to_string(t.a) +
               ",\"r\":" + fmt_double(t.r) + ",\"sp\":" + std::to_string(t.sp) + "}\n";
    }
    return out;
}

inline json dataset_metadata(const Dataset& data) {
    return {{"n_states", data.n_states},
            {"n_actions", data.n_actions},
            {"mu_spec", data.mu_spec},
            {"seed", data.seed},
            {"N", data.records.size()}};
}

/// Sidecar path holding the metadata of a JSON-lines dataset.
inline std::string metadata_path(const std::string& dataset_path) { return dataset_path + ".meta.json"; }

inline void write_dataset(const std::string& path, const Dataset& data) {
    write_text(path, dataset_jsonl(data));
    write_json(metadata_path(path), dataset_metadata(data));
}

inline Dataset parse_dataset(const std::string& jsonl, const json& meta) {
    constexpr const char* ctx = "dataset metadata";
    Dataset data;
    data.n_states = detail::get<int>(meta, "n_states", ctx);
    data.n_actions = detail::get<int>(meta, "n_actions", ctx);
    data.mu_spec = detail::get_or<std::string>(meta, "mu_spec", "unknown", ctx);
    data.seed = detail::get_or<std::uint64_t>(meta, "seed", 0, ctx);
    std::istringstream lines(jsonl);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json rec = json::parse(line);
            data.records.push_back({rec.at("s").get<int>(), rec.at("a").get<int>(), rec.at("r").get<double>(),
                                    rec.at("sp").get<int>()});
        } catch (const json::exception& e) {
            throw ConfigError("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    const auto expected = detail::get_or<std::size_t>(meta, "N", data.records.size(), ctx);
    if (expected != data.records.size())
        throw ConfigError("dataset has " + std::to_string(data.records.size()) + " records, metadata says " +
                          std::to_string(expected));
    data.validate();
    return data;
}

inline Dataset read_dataset(const std::string& path) {
    return parse_dataset(read_file(path), read_json(metadata_path(path)));
}

// ---- CSV -----------------------------------------------------------------

inline std::string pg_trace_csv(const std::vector<PGRecord>& trace) {
    std::string out = "iter,expected_value,optimality_gap,grad_norm\n";
    for (const auto& r : trace)
        out += std::to_string(r.iter) + "," + fmt_double(r.expected_value) + "," + fmt_double(r.optimality_gap) +
               "," + fmt_double(r.grad_norm) + "\n";
    return out;
}

inline std::string rfzi_trace_csv(const std::vector<RFZIRecord>& trace) {
    const bool with_gap = !trace.empty() && trace.front().optimality_gap.has_value();
    std::string out = with_gap ? "iter,empirical_loss,optimality_gap\n" : "iter,empirical_loss\n";
    for (const auto& r : trace) {
        out += std::to_string(r.iter) + "," + fmt_double(r.empirical_loss);
        if (with_gap) out += "," + fmt_double(*r.optimality_gap);
        out += "\n";
    }
    return out;
}

inline std::string residual_trace_csv(const std::vector<std::pair<int, double>>& trace) {
    std::string out = "iter,residual\n";
    for (const auto& [it, res] : trace) out += std::to_string(it) + "," + fmt_double(res) + "\n";
    return out;
}

} // namespace rrmdp::io
