#include "pdd/cli/commands.hpp"

#include "pdd/unroll.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

#ifndef PDD_VERSION
#define PDD_VERSION "0.0.0"
#endif

namespace pdd::cli {

using nlohmann::json;

std::string version() { return PDD_VERSION; }

namespace {

std::string number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0.0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string hex(std::uint64_t h) {
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << h;
    return out.str();
}

json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json kkt_json(const KktReport& k) {
    return json{{"stationarity_short", k.stationarity_short}, {"feasibility_short", k.feasibility_short},
                {"slackness_short", k.slackness_short},       {"stationarity_long", k.stationarity_long},
                {"feasibility_long", to_json(k.feasibility_long)}, {"slackness_long", k.slackness_long}};
}

json provenance(const RunConfig& config) {
    return json{{"version", version()},
                {"experiment", to_string(config.experiment)},
                {"seed", config.solver.seed},
                {"config_hash", hex(config.hash())}};
}

double tracker_movement(const std::vector<TraceRecord>& trace, std::size_t window) {
    if (trace.empty()) return 0.0;
    const std::size_t from = trace.size() > window ? trace.size() - window : 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t k = from; k < trace.size(); ++k) {
        lo = std::min(lo, trace[k].objective);
        hi = std::max(hi, trace[k].objective);
    }
    return hi - lo;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << contents;
    if (!out) throw ConfigError("cannot write " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

std::vector<State> evaluation_set(const RunConfig& config) {
    Rng rng = iteration_rng(config.solver.seed, kEvaluationStream);
    std::vector<State> out;
    out.reserve(static_cast<std::size_t>(config.baseline_samples));
    for (int k = 0; k < config.baseline_samples; ++k) {
        switch (config.experiment) {
            case Experiment::cmac: out.push_back(cmac::sample(config.cmac, rng)); break;
            case Experiment::thp: out.push_back(thp::sample(config.thp, rng)); break;
            case Experiment::toy: out.push_back(toy::problem(config.toy).sampler(rng)); break;
        }
    }
    return out;
}

ExperimentSetup build_experiment(const RunConfig& config) {
    ExperimentSetup e;
    switch (config.experiment) {
        case Experiment::cmac:
            e.problem = cmac::problem(config.cmac);
            e.short_term = cmac::solver(config.cmac);
            e.start = LongTermIterate{Vector(0), Vector::Constant(e.problem.m, config.start_lambda), 0};
            break;
        case Experiment::thp: {
            e.problem = thp::problem(config.thp);
            e.short_term = thp::solver(config.thp);
            Rng rng = iteration_rng(config.solver.seed, kStartStream);
            e.start = thp::initial(config.thp, rng);
            e.start.lambda.setConstant(config.start_lambda);
            break;
        }
        case Experiment::toy:
            e.problem = toy::problem(config.toy);
            e.short_term = toy::solver(config.toy);
            e.start = LongTermIterate{Vector::Zero(e.problem.n_x), Vector(0), 0};
            break;
    }
    e.problem.lambda_cap = config.lambda_cap;
    return e;
}

namespace {

SolverConfig solver_config(const RunConfig& config, const ProblemDefinition& problem) {
    SolverConfig s = config.solver;
    s.tau = Vector::Constant(problem.m + 1, config.tau);
    s.record_timing = config.timing;
    return s;
}

}  // namespace

RunOutput run_experiment(const RunConfig& config) {
    const ExperimentSetup setup = build_experiment(config);
    const LongTermSolver solver(setup.problem, setup.short_term, solver_config(config, setup.problem));
    RunOutput out;
    out.result = solver.run(setup.start);
    const RunResult& r = out.result;

    json s = provenance(config);
    s["iterations"] = r.trace.size();
    s["converged"] = r.converged;
    s["infeasible_trajectory"] = r.infeasible_trajectory;
    s["lambda_clamp_active"] = r.lambda_clamp_active;
    s["flagged_solves"] = r.flagged_solves;
    s["iterate"] = json{{"x", to_json(r.iterate.x)}, {"lambda", to_json(r.iterate.lambda)}, {"t", r.iterate.t}};
    s["saa_values"] = to_json(r.saa_values);
    s["slater_margin"] = r.slater_margin;
    s["kkt"] = kkt_json(r.kkt);
    s["tracker_movement_final_20"] = tracker_movement(r.trace, 20);

    const std::vector<State> samples = evaluation_set(config);
    switch (config.experiment) {
        case Experiment::cmac: {
            const cmac::PolicyValue v = cmac::evaluate_policy(config.cmac, r.iterate.lambda, samples);
            s["evaluation"] = json{{"samples", samples.size()},
                                   {"capacity", v.capacity},
                                   {"residuals", to_json(v.residuals)},
                                   {"max_violation", v.max_violation()}};
            break;
        }
        case Experiment::thp: {
            const thp::PolicyValue v = thp::evaluate_policy(config.thp, r.iterate.x, r.iterate.lambda, samples);
            const Vector gap = config.thp.targets() - v.rates;
            s["evaluation"] = json{{"samples", samples.size()},
                                   {"rates", to_json(v.rates)},
                                   {"power", v.power},
                                   {"max_rate_shortfall", gap.maxCoeff()}};
            break;
        }
        case Experiment::toy: {
            s["evaluation"] = json{{"optimum", to_json(toy::optimum(config.toy))},
                                   {"max_error", (r.iterate.x - toy::optimum(config.toy)).cwiseAbs().maxCoeff()}};
            break;
        }
    }
    out.summary = std::move(s);
    return out;
}

std::string trace_csv(const RunConfig& config, const std::vector<TraceRecord>& trace) {
    const double sign = config.experiment == Experiment::cmac ? -1.0 : 1.0;
    std::ostringstream out;
    out << "# pdd-ssca " << version() << '\n';
    out << "# experiment " << to_string(config.experiment) << '\n';
    out << "# seed " << config.solver.seed << '\n';
    out << "# config_hash " << hex(config.hash()) << '\n';
    if (config.experiment == Experiment::cmac) out << "# objective column: capacity tracker (-f_0)\n";
    out << "iter,rho,gamma,objective,max_constraint,mode,millis\n";
    for (const TraceRecord& t : trace) {
        out << t.iter << ',' << number(t.rho) << ',' << number(t.gamma) << ',' << number(sign * t.objective) << ','
            << number(t.max_constraint) << ',' << to_string(t.mode) << ',' << number(config.timing ? t.millis : 0.0)
            << '\n';
    }
    return out.str();
}

json run_baselines(const RunConfig& config) {
    if (config.experiment != Experiment::cmac) throw ConfigError("baseline: only the cmac experiment has baselines");
    const std::vector<State> samples = evaluation_set(config);
    json out = provenance(config);
    out["samples"] = samples.size();
    if (config.baseline_ellipsoid) {
        const cmac::EllipsoidResult e = cmac::dual_ellipsoid_baseline(config.cmac, samples);
        out["dual_ellipsoid"] = json{{"multipliers", to_json(e.multipliers)},
                                     {"capacity", e.policy.capacity},
                                     {"residuals", to_json(e.policy.residuals)},
                                     {"max_violation", e.policy.max_violation()},
                                     {"dual_value", e.dual_value},
                                     {"iterations", e.iterations},
                                     {"restarts", e.restarts},
                                     {"slackness", e.slackness}};
    }
    if (config.baseline_short_term) {
        out["short_term_constraint"] = json{{"capacity", cmac::short_term_constraint_capacity(config.cmac, samples)}};
    }
    return out;
}

json recompute_report(const RunConfig& config, const json& final_summary) {
    if (final_summary.value("experiment", "") != to_string(config.experiment)) {
        throw ConfigError("report: final.json was written by a different experiment");
    }
    const ExperimentSetup setup = build_experiment(config);
    LongTermIterate it;
    try {
        it.x = from_json(final_summary.at("iterate").at("x"));
        it.lambda = from_json(final_summary.at("iterate").at("lambda"));
        it.t = final_summary.at("iterate").at("t").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("report: malformed final.json: ") + e.what());
    }
    if (it.x.size() != setup.problem.n_x || it.lambda.size() != setup.problem.m) {
        throw ConfigError("report: saved iterate does not match the configured problem dimensions");
    }
    const LongTermSolver solver(setup.problem, setup.short_term, solver_config(config, setup.problem));
    const RunResult r = solver.evaluate(it, kReportStream);
    json out = provenance(config);
    out["eval_batch"] = config.solver.eval_batch;
    out["saa_values"] = to_json(r.saa_values);
    out["slater_margin"] = r.slater_margin;
    out["kkt"] = kkt_json(r.kkt);
    out["flagged_solves"] = r.flagged_solves;
    return out;
}

GradientCheck check_gradients(std::uint64_t seed, double rel_step) {
    GradientCheck out;
    {
        thp::Instance inst;
        inst.dims = WmmseDims{8, 2, 2};
        inst.J = 5;
        const ProblemDefinition p = thp::problem(inst);
        const SolverPtr s = thp::solver(inst);
        for (int k = 0; k < out.wmmse_instances; ++k) {
            Rng rng = iteration_rng(seed, static_cast<std::uint64_t>(k));
            const LongTermIterate it = thp::initial(inst, rng);
            std::uniform_real_distribution<double> u(0.5, 2.0);
            Vector lambda(p.m);
            for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda[i] = u(rng);
            const State xi = p.sampler(rng);
            const auto [res, tape] = run_short_term(p, s, it.x, lambda, xi);
            for (int i = 0; i <= p.m; ++i) {
                const ThroughGradient g = grad_through(p, i, res, tape);
                const FiniteDifferenceGradient fd = fd_oracle(p, i, s, it.x, lambda, xi, rel_step);
                out.wmmse_worst = std::max({out.wmmse_worst, max_relative_error(g.total_x(), fd.x),
                                            max_relative_error(g.lambda, fd.lambda)});
            }
        }
    }
    {
        const cmac::Instance inst;
        const ProblemDefinition p = cmac::problem(inst);
        const SolverPtr s = cmac::solver(inst);
        for (int k = 0; k < out.cmac_instances; ++k) {
            Rng rng = iteration_rng(seed, static_cast<std::uint64_t>(1000 + k));
            std::uniform_real_distribution<double> u(0.05, 2.0);
            Vector mu(p.m);
            for (Eigen::Index i = 0; i < mu.size(); ++i) mu[i] = u(rng);
            const State xi = p.sampler(rng);
            const auto [res, tape] = run_short_term(p, s, Vector(0), mu, xi);
            for (int i = 0; i <= p.m; ++i) {
                const ThroughGradient g = grad_through(p, i, res, tape);
                const FiniteDifferenceGradient fd = fd_oracle(p, i, s, Vector(0), mu, xi, rel_step);
                out.cmac_worst = std::max(out.cmac_worst, max_relative_error(g.lambda, fd.lambda));
            }
        }
    }
    return out;
}

int main_entry(int argc, char** argv) {
    CLI::App app{"Two-timescale stochastic optimization by primal-dual decomposition and deep unrolling"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::string final_path;
    Overrides overrides;
    std::string experiment;
    std::uint64_t seed = 0;
    int workers = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
    int max_iters = 0;

    auto* run = app.add_subcommand("run", "Run the long-term loop and write trace.csv and final.json");
    auto* grad = app.add_subcommand("check-gradients", "Compare unrolled gradients with central differences");
    auto* base = app.add_subcommand("baseline", "Run the dual-ellipsoid and short-term-constraint baselines");
    auto* report = app.add_subcommand("report", "Recompute the KKT report of a saved final iterate");
    for (CLI::App* sub : {run, grad, base, report}) {
        sub->add_option("--experiment", experiment, "cmac, thp or toy");
        sub->add_option("--config", config_path, "Flat key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Run seed");
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--workers", workers, "Worker threads for the per-sample solves")->check(CLI::PositiveNumber);
        sub->add_option("--max-iters", max_iters, "Outer iteration cap")->check(CLI::PositiveNumber);
    }
    report->add_option("--final", final_path, "Saved final.json (default: <out>/final.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        if (sub->count("--experiment") > 0) overrides.experiment = experiment;
        if (sub->count("--seed") > 0) overrides.seed = seed;
        if (sub->count("--max-iters") > 0) overrides.max_iters = max_iters;
        overrides.workers = workers;
        const auto keys = config_path.empty() ? std::map<std::string, std::string>{}
                                              : parse_key_values(read_file(config_path));
        const RunConfig config = resolve_config(keys, overrides);
        const std::filesystem::path out(out_dir);

        if (sub == run) {
            std::filesystem::create_directories(out);
            const RunOutput result = run_experiment(config);
            if (config.plot_data) write_file(out / "trace.csv", trace_csv(config, result.result.trace));
            write_file(out / "final.json", result.summary.dump(2) + "\n");
            std::cout << "iterations " << result.result.trace.size() << ", converged "
                      << (result.result.converged ? "yes" : "no") << ", wrote " << out.string() << '\n';
            if (result.result.lambda_clamp_active) std::cerr << "warning: multiplier clamp active at termination\n";
            if (result.result.infeasible_trajectory) std::cerr << "warning: run ended with a feasibility update\n";
        } else if (sub == grad) {
            const GradientCheck g = check_gradients(config.solver.seed);
            std::cout << "wmmse (" << g.wmmse_instances << " instances) max relative error " << g.wmmse_worst << '\n';
            std::cout << "cmac (" << g.cmac_instances << " instances) max relative error " << g.cmac_worst << '\n';
            return std::max(g.wmmse_worst, g.cmac_worst) <= 1e-5 ? 0 : 2;
        } else if (sub == base) {
            std::filesystem::create_directories(out);
            const json b = run_baselines(config);
            write_file(out / "baseline.json", b.dump(2) + "\n");
            std::cout << b.dump(2) << '\n';
        } else {
            const std::filesystem::path saved = final_path.empty() ? out / "final.json" : std::filesystem::path(final_path);
            json summary;
            try {
                summary = json::parse(read_file(saved));
            } catch (const json::parse_error& e) {
                throw ConfigError(std::string("report: cannot parse ") + saved.string() + ": " + e.what());
            }
            const json r = recompute_report(config, summary);
            std::filesystem::create_directories(out);
            write_file(out / "report.json", r.dump(2) + "\n");
            std::cout << r.dump(2) << '\n';
        }
        return 0;
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace pdd::cli
