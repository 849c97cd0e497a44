// rrmdp: command-line front end for the regularized robust MDP toolkit.
//
//   rrmdp env make   --spec spec.json --out mdp.json
//   rrmdp solve vi   --mdp mdp.json --risk risk.json [--policy pi.json] --out v.json [--trace res.csv]
//   rrmdp solve pg   --mdp mdp.json --risk risk.json --config pg.json --trace trace.csv --out pi.json
//   rrmdp data gen   --mdp mdp.json --spec gen.json --out data.jsonl
//   rrmdp solve rfzi --data data.jsonl --config rfzi.json [--mdp mdp.json] --trace trace.csv --out pi.json
//   rrmdp eval gap|reward|robust --mdp mdp.json --risk risk.json --policy pi.json [--delta-grid 0:1:0.05]
//                    --out metrics.csv
//
// Exit codes: 0 success, 2 config error, 3 numeric error, 4 non-convergence.

#include "rrmdp/io.hpp"
#include "rrmdp/rrmdp.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace rrmdp;
using rrmdp::io::json;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitNonConvergence = 4;

struct Paths {
    std::string spec, mdp, risk, policy, config, trace, out, data, delta_grid = "0:1:0.05";
    double tol = 1e-10;
    int max_iters = 100000;
    int episodes = kDefaultTestEpisodes;
    int horizon = 0; // 0: derive from the model
    std::uint64_t seed = 0;
};

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> parts;
    std::size_t start = 0;
    while (true) {
        const auto colon = text.find(':', start);
        const std::string piece = text.substr(start, colon == std::string::npos ? std::string::npos : colon - start);
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(piece, &used));
            if (used != piece.size()) throw std::invalid_argument(piece);
        } catch (const std::exception&) {
            throw ConfigError("delta grid must look like start:stop:step, got \"" + text + "\"");
        }
        if (colon == std::string::npos) break;
        start = colon + 1;
    }
    if (parts.size() != 3) throw ConfigError("delta grid must look like start:stop:step");
    const double lo = parts[0], hi = parts[1], step = parts[2];
    if (!(step > 0.0) || hi < lo || lo < 0.0) throw ConfigError("delta grid needs 0 <= start <= stop and step > 0");
    const auto count = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> grid;
    for (int i = 0; i < count; ++i) grid.push_back(lo + i * step);
    return grid;
}

int env_make(const Paths& p) {
    const TabularMDP mdp = make_cycle_env(io::cycle_spec_from_json(io::read_json(p.spec)));
    io::write_json(p.out, io::to_json(mdp));
    return 0;
}

int solve_vi(const Paths& p) {
    const TabularMDP mdp = io::mdp_from_json(io::read_json(p.mdp));
    const RiskMeasure measure = io::risk_from_json(io::read_json(p.risk));
    std::optional<StochasticPolicy> policy;
    if (!p.policy.empty()) policy = io::policy_from_json(io::read_json(p.policy));
    const BackupMode mode = policy ? BackupMode::policy(*policy) : BackupMode::star();
    if (policy) check_compatible(mdp, policy->probs());

    std::vector<std::pair<int, double>> residuals;
    int status = 0;
    FixedPointResult result;
    try {
        result = solve_fixed_point(mdp, measure, mode, p.tol, p.max_iters,
                                   [&](int it, double r) { residuals.emplace_back(it, r); });
    } catch (const NonConvergence&) {
        if (!p.trace.empty()) io::write_text(p.trace, io::residual_trace_csv(residuals));
        throw;
    }
    const Matrix q = q_from_v(mdp, measure, result.values);
    json out = {{"mode", policy ? "policy" : "star"},
                {"risk", io::to_json(measure)},
                {"values", std::vector<double>(result.values.data(), result.values.data() + result.values.size())},
                {"q", io::detail::matrix_json(q)},
                {"greedy_actions", greedy_policy(q).argmax_actions()},
                {"iterations", result.iterations},
                {"residual", result.residual}};
    io::write_json(p.out, out);
    if (!p.trace.empty()) io::write_text(p.trace, io::residual_trace_csv(residuals));
    return status;
}

int solve_pg(const Paths& p) {
    const TabularMDP mdp = io::mdp_from_json(io::read_json(p.mdp));
    const RiskMeasure measure = io::risk_from_json(io::read_json(p.risk));
    const json config_json = io::read_json(p.config);
    const PGConfig config = io::pg_config_from_json(config_json);
    StochasticPolicy theta0 = StochasticPolicy::uniform(mdp.n_states(), mdp.n_actions());
    if (config_json.contains("theta0") && !config_json.at("theta0").is_string())
        theta0 = io::policy_from_json(config_json.at("theta0"));
    const PGResult result = pg_ascent(mdp, measure, theta0, config);
    json out = io::to_json(result.policy);
    out["converged"] = result.converged;
    out["steps"] = result.steps;
    io::write_json(p.out, out);
    if (!p.trace.empty()) io::write_text(p.trace, io::pg_trace_csv(result.trace));
    if (!result.converged) {
        std::cerr << "rrmdp: policy gradient did not reach gap_tol in " << config.max_iters
                  << " iterations; wrote the best iterate\n";
        return kExitNonConvergence;
    }
    return 0;
}

int data_gen(const Paths& p) {
    const TabularMDP mdp = io::mdp_from_json(io::read_json(p.mdp));
    const Dataset data = generate_dataset(mdp, io::datagen_from_json(io::read_json(p.spec)));
    io::write_dataset(p.out, data);
    return 0;
}

/// Reward table for RFZI targets: config, then the diagnostic MDP, then full dataset coverage.
Matrix rfzi_rewards(const io::RFZIJob& job, const std::optional<TabularMDP>& mdp, const Dataset& data) {
    if (job.rewards) return *job.rewards;
    if (mdp) return mdp->rewards();
    Matrix r = Matrix::Constant(data.n_states, data.n_actions, std::nan(""));
    for (const auto& t : data.records) r(t.s, t.a) = t.r;
    if (!r.allFinite())
        throw ConfigError("rfzi needs r(s,a) for every pair: supply \"rewards\" in the config or --mdp");
    return r;
}

int solve_rfzi(const Paths& p) {
    const io::RFZIJob job = io::rfzi_job_from_json(io::read_json(p.config));
    const Dataset data = io::read_dataset(p.data);
    std::optional<TabularMDP> mdp;
    if (!p.mdp.empty()) mdp = io::mdp_from_json(io::read_json(p.mdp));
    const Matrix rewards = rfzi_rewards(job, mdp, data);
    const auto [lo, hi] = positivity_bounds(rewards, job.config.gamma, job.config.beta);
    const auto family = [&] {
        if (job.family == "tabular") return ZFamily::tabular(data.n_states, data.n_actions, lo, hi);
        if (job.family == "linear_onehot")
            return ZFamily::linear(one_hot_features(data.n_states, data.n_actions), data.n_states, data.n_actions,
                                   lo, hi);
        if (job.family == "linear_sinusoidal")
            return ZFamily::linear(sinusoidal_features(data.n_states, data.n_actions, job.frequencies),
                                   data.n_states, data.n_actions, lo, hi);
        throw ConfigError("rfzi config: unknown family \"" + job.family + "\"");
    }();
    const RFZIResult result = rfzi_run(family, data, rewards, job.config, mdp ? &*mdp : nullptr);
    json out = io::to_json(result.policy);
    out["z0_residual"] = result.z0_residual;
    out["z"] = io::detail::matrix_json(result.z);
    io::write_json(p.out, out);
    if (!p.trace.empty()) io::write_text(p.trace, io::rfzi_trace_csv(result.trace));
    return 0;
}

int eval_metric(const std::string& metric, const Paths& p) {
    const TabularMDP mdp = io::mdp_from_json(io::read_json(p.mdp));
    const StochasticPolicy policy = io::policy_from_json(io::read_json(p.policy));
    check_compatible(mdp, policy.probs());
    const int horizon = p.horizon > 0 ? p.horizon : default_horizon(mdp);
    std::string csv;
    if (metric == "gap") {
        if (p.risk.empty()) throw ConfigError("eval gap needs --risk");
        const RiskMeasure measure = io::risk_from_json(io::read_json(p.risk));
        csv = "metric,value\noptimality_gap," + io::fmt_double(optimality_gap(mdp, measure, policy)) + "\n";
    } else if (metric == "reward") {
        csv = "metric,value\naverage_test_reward," +
              io::fmt_double(average_test_reward(mdp, policy, p.episodes, horizon, p.seed)) + "\n";
    } else {
        csv = "delta,value\n";
        for (const double delta : parse_grid(p.delta_grid))
            csv += io::fmt_double(delta) + "," + io::fmt_double(robustness_value(mdp, policy, delta, horizon)) + "\n";
    }
    io::write_text(p.out, csv);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regularized robust MDP toolkit: planning, policy gradient, RFZI and metrics"};
    app.require_subcommand(1);
    Paths p;
    int status = 0;
    std::string eval_kind;

    auto* env = app.add_subcommand("env", "Environment construction")->require_subcommand(1);
    auto* env_make_cmd = env->add_subcommand("make", "Build a cycle-graph MDP from a spec");
    env_make_cmd->add_option("--spec", p.spec, "CycleEnvSpec JSON")->required();
    env_make_cmd->add_option("--out", p.out, "MDP JSON output")->required();

    auto* solve = app.add_subcommand("solve", "Planning and learning")->require_subcommand(1);
    auto* vi = solve->add_subcommand("vi", "Risk-sensitive value iteration");
    vi->add_option("--mdp", p.mdp)->required();
    vi->add_option("--risk", p.risk)->required();
    vi->add_option("--policy", p.policy, "Evaluate this policy instead of optimizing");
    vi->add_option("--out", p.out)->required();
    vi->add_option("--trace", p.trace, "CSV of (iter, residual)");
    vi->add_option("--tol", p.tol, "Sup-norm residual tolerance");
    vi->add_option("--max-iters", p.max_iters);

    auto* pg = solve->add_subcommand("pg", "Exact projected policy gradient");
    pg->add_option("--mdp", p.mdp)->required();
    pg->add_option("--risk", p.risk)->required();
    pg->add_option("--config", p.config)->required();
    pg->add_option("--trace", p.trace);
    pg->add_option("--out", p.out)->required();

    auto* rfzi = solve->add_subcommand("rfzi", "Robust fitted-Z iteration on an offline dataset");
    rfzi->add_option("--data", p.data)->required();
    rfzi->add_option("--config", p.config)->required();
    rfzi->add_option("--mdp", p.mdp, "True model, for rewards and optimality-gap diagnostics");
    rfzi->add_option("--trace", p.trace);
    rfzi->add_option("--out", p.out)->required();

    auto* data = app.add_subcommand("data", "Offline datasets")->require_subcommand(1);
    auto* gen = data->add_subcommand("gen", "Sample transitions under the nominal model");
    gen->add_option("--mdp", p.mdp)->required();
    gen->add_option("--spec", p.spec)->required();
    gen->add_option("--out", p.out)->required();

    auto* eval = app.add_subcommand("eval", "Policy metrics");
    eval->add_option("metric", eval_kind, "gap | reward | robust")
        ->required()
        ->check(CLI::IsMember({"gap", "reward", "robust"}));
    eval->add_option("--mdp", p.mdp)->required();
    eval->add_option("--risk", p.risk);
    eval->add_option("--policy", p.policy)->required();
    eval->add_option("--delta-grid", p.delta_grid, "start:stop:step");
    eval->add_option("--episodes", p.episodes);
    eval->add_option("--horizon", p.horizon);
    eval->add_option("--seed", p.seed);
    eval->add_option("--out", p.out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (env_make_cmd->parsed()) status = env_make(p);
        else if (vi->parsed()) status = solve_vi(p);
        else if (pg->parsed()) status = solve_pg(p);
        else if (rfzi->parsed()) status = solve_rfzi(p);
        else if (gen->parsed()) status = data_gen(p);
        else if (eval->parsed()) status = eval_metric(eval_kind, p);
    } catch (const NonConvergence& e) {
        std::cerr << "rrmdp: " << e.what() << "\n";
        return kExitNonConvergence;
    } catch (const NumericError& e) {
        std::cerr << "rrmdp: numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "rrmdp: " << e.what() << "\n";
        return kExitConfig;
    }
    return status;
}
