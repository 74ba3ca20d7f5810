#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "anarchy.hpp"
#include "config.hpp"
#include "contract.hpp"
#include "epidemic.hpp"
#include "fbode.hpp"
#include "io.hpp"

namespace mfc {

enum ExitCode : int {
    kExitOk = 0,
    kExitIo = 1,
    kExitConfig = 2,
    kExitNoConvergence = 3,
    kExitVerifyFailed = 4,
};

struct RunConfig {
    std::string config_path;  // empty: built-in defaults
    std::string out_dir = ".";
    std::string solution_path;  // verify: reuse a solution.csv instead of solving
    std::optional<std::size_t> n_steps;
    std::optional<double> damping;
    std::optional<double> tol;
    std::optional<std::size_t> paths;
    std::optional<std::uint64_t> seed;
    std::optional<double> kappa;
    std::optional<double> sigma_p;
};

namespace cli_detail {

inline Scenario load_scenario(const RunConfig& rc) {
    Scenario sc;
    if (!rc.config_path.empty()) {
        sc = scenario_from_config(Config::load(rc.config_path));
    } else {
        std::istringstream in(default_config_text());
        sc = scenario_from_config(Config::parse(in, "<defaults>"));
    }
    if (rc.n_steps) sc.sweep.n_steps = *rc.n_steps;
    if (rc.damping) sc.sweep.damping = *rc.damping;
    if (rc.tol) sc.sweep.tol = *rc.tol;
    if (rc.paths) sc.mc.paths = *rc.paths;
    if (rc.seed) sc.mc.seed = *rc.seed;
    if (rc.kappa) sc.contract.kappa = *rc.kappa;
    if (rc.sigma_p) sc.compare.sigma_p_planning = *rc.sigma_p;
    if (sc.sweep.n_steps < 1) throw ConfigError("--n-steps must be positive");
    if (!(sc.sweep.damping > 0.0 && sc.sweep.damping <= 1.0))
        throw ConfigError("--damping must lie in (0, 1]");
    if (!(sc.sweep.tol > 0.0)) throw ConfigError("--tol must be positive");
    if (sc.mc.paths < 1) throw ConfigError("--paths must be positive");
    if (!(sc.compare.sigma_p_planning >= 0.0)) throw ConfigError("--sigma-p must be >= 0");
    return sc;
}

inline std::string out_path(const RunConfig& rc, const std::string& file) {
    return (std::filesystem::path(rc.out_dir) / file).string();
}

inline void ensure_out_dir(const RunConfig& rc) {
    std::error_code ec;
    std::filesystem::create_directories(rc.out_dir, ec);
    if (!std::filesystem::is_directory(rc.out_dir))
        throw IoError("output directory " + rc.out_dir + " cannot be created");
}

struct Summary {
    std::vector<std::pair<std::string, std::string>> lines;
    void add(const std::string& k, const std::string& v) { lines.emplace_back(k, v); }
    void add(const std::string& k, double v) { lines.emplace_back(k, fmt(v)); }
    std::string text() const {
        std::string s;
        for (const auto& [k, v] : lines) s += k + " = " + v + "\n";
        return s;
    }
};

/// Maps library exceptions to exit codes with a one-line diagnostic.
template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ConvergenceError& e) {
        err << "solver did not converge: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const DiagnosticError& e) {
        err << "solver diagnostic: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const StructuralError& e) {
        err << "invalid model: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
}

inline Summary pmp_summary(const FBODESolution& s) {
    Summary sum;
    sum.add("objective", s.objective);
    sum.add("iterations", std::to_string(s.iterations));
    sum.add("converged", s.converged ? "true" : "false");
    sum.add("residual", s.residual);
    sum.add("last_update", s.last_update);
    sum.add("damping", s.damping_used);
    sum.add("n_steps", std::to_string(s.grid.n_steps()));
    for (const auto& w : s.warnings) sum.add("warning", w);
    return sum;
}

}  // namespace cli_detail

inline int cmd_defaults(std::ostream& out) {
    out << default_config_text();
    return kExitOk;
}

inline int cmd_solve(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    using namespace cli_detail;
    return guarded(err, [&] {
        const Scenario sc = load_scenario(rc);
        const LQModelSpec spec = build_epidemic_model(sc.epidemic);
        ensure_out_dir(rc);
        const FBODESolution sol = solve_pmp(spec, sc.sweep.params(spec.T));
        write_file(out_path(rc, "solution.csv"), solution_csv(sol));
        const Summary sum = pmp_summary(sol);
        write_file(out_path(rc, "summary.txt"), sum.text());
        out << sum.text();
        for (const auto& w : sol.warnings) err << "warning: " << w << "\n";
        return int(kExitOk);
    });
}

inline int cmd_anarchy(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    using namespace cli_detail;
    return guarded(err, [&] {
        const Scenario sc = load_scenario(rc);
        const LQModelSpec spec = build_epidemic_model(sc.epidemic);
        ensure_out_dir(rc);
        const AnarchySolution sol = solve_anarchy(spec, sc.sweep.params(spec.T));
        write_file(out_path(rc, "anarchy.csv"), anarchy_csv(sol));
        Summary sum;
        sum.add("iterations", std::to_string(sol.iterations));
        sum.add("converged", sol.converged ? "true" : "false");
        sum.add("residual", sol.residual);
        sum.add("last_update", sol.last_update);
        sum.add("exploitability", exploitability(sol, spec));
        sum.add("n_steps", std::to_string(sol.grid.n_steps()));
        write_file(out_path(rc, "anarchy_summary.txt"), sum.text());
        out << sum.text();
        return int(kExitOk);
    });
}

inline std::string verification_text(const VerificationReport& r, const ContractSpec& c) {
    cli_detail::Summary s;
    auto block = [&](const std::string& name, const MeanEstimate& e) {
        s.add(name + ".mean", e.mean);
        s.add(name + ".std_error", e.std_error);
        s.add(name + ".target", e.target);
        s.add(name + ".z", e.z_score());
        s.add(name + ".pass", e.pass ? "true" : "false");
    };
    s.add("n_paths", std::to_string(r.n_paths));
    s.add("seed", std::to_string(r.seed));
    s.add("r_hat", c.r_hat);
    s.add("kappa", c.kappa);
    block("agent_cost", r.agent);
    block("principal_cost", r.principal);
    block("markov_objective", r.objective);
    s.add("occupancy.sup_gap", r.occupancy_gap);
    s.add("occupancy.bound", r.occupancy_bound);
    s.add("occupancy.within_bound", r.occupancy_pass ? "true" : "false");
    s.add("pass", r.pass() ? "true" : "false");
    return s.text();
}

inline int cmd_verify(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    using namespace cli_detail;
    return guarded(err, [&] {
        const Scenario sc = load_scenario(rc);
        if (!sc.contract.kappa)
            throw ConfigError("kappa is required: set [contract] kappa or pass --kappa");
        const LQModelSpec spec = build_epidemic_model(sc.epidemic);
        std::optional<FBODESolution> sol;
        if (!rc.solution_path.empty()) {
            if (!std::filesystem::exists(rc.solution_path))
                throw IoError("solution file " + rc.solution_path +
                              " not found; run 'mfcontract solve --out <dir>' first or omit "
                              "--solution to solve inline");
            sol = parse_solution_csv(read_csv_file(rc.solution_path), rc.solution_path);
            if (sol->pi_flow.front().size() != spec.m ||
                std::abs(sol->grid.t1() - sol->grid.t0() - spec.T) > 1e-9 * spec.T)
                throw IoError(rc.solution_path + " does not match the scenario (m or T differ)");
            for (std::size_t k = 0; k < sol->y_flow.size(); ++k)
                if (sol->control_flow[k] != principal_minimizer(sol->y_flow[k], spec))
                    throw IoError(rc.solution_path +
                                  ": effort columns are not the minimizer of the y columns");
            rebuild_rates(*sol, spec);
            sol->objective =
                evaluate_objective(feedback_controls(sol->y_dense(), spec, sol->grid), spec, sol->grid);
        } else {
            sol = solve_pmp(spec, sc.sweep.params(spec.T));
        }
        ensure_out_dir(rc);
        const ContractSpec contract =
            make_contract(*sol, spec, sc.contract.utility.spec(), *sc.contract.kappa);
        const VerificationReport rep = verify_contract(contract, *sol, spec, sc.mc.paths, sc.mc.seed);
        const std::string text = verification_text(rep, contract);
        write_file(out_path(rc, "verification.txt"), text);
        write_file(out_path(rc, "contract.csv"), contract_csv(contract, *sol));
        write_file(out_path(rc, "realizations.csv"), realizations_csv(rep.realizations));
        out << text;
        if (!rep.pass()) {
            err << "verification failed: a 3-standard-error identity check did not hold\n";
            return int(kExitVerifyFailed);
        }
        return int(kExitOk);
    });
}

inline std::string plot_script() {
    return R"PY(#!/usr/bin/env python3
# Renders the comparison figures from comparison.csv and planning.csv.
import sys
import pandas as pd
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

d = sys.argv[1] if len(sys.argv) > 1 else "."
cmp = pd.read_csv(f"{d}/comparison.csv")
plan = pd.read_csv(f"{d}/planning.csv")
states = ["AI", "AH", "BI", "BH"]

fig, ax = plt.subplots(3, 1, figsize=(7, 9), sharex=True)
ax[0].plot(cmp.t, cmp.total_infection_intervention, label="intervention")
ax[0].plot(cmp.t, cmp.total_infection_anarchy, label="anarchy")
ax[0].set_ylabel("total infection")
ax[0].legend()
for i, city in enumerate("AB"):
    ax[i + 1].plot(cmp.t, cmp[f"infection_{city}_intervention"], label="intervention")
    ax[i + 1].plot(cmp.t, cmp[f"infection_{city}_anarchy"], label="anarchy")
    ax[i + 1].set_ylabel(f"infection rate in {city}")
ax[-1].set_xlabel("t")
fig.savefig(f"{d}/infection.png", dpi=120)

fig, ax = plt.subplots(2, 2, figsize=(9, 7), sharex=True)
for s, a in zip(states, ax.flat):
    a.plot(cmp.t, cmp[f"effort_{s}_intervention"], label="intervention")
    a.plot(cmp.t, cmp[f"effort_{s}_anarchy"], label="anarchy")
    a.set_title(s)
ax[0, 0].legend()
fig.savefig(f"{d}/effort.png", dpi=120)

fig, ax = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
for col, colour in (("blue", "tab:blue"), ("black", "black"), ("red", "tab:red")):
    ax[0].plot(plan.t, plan[f"population_A_{col}"], color=colour, label=col)
    ax[1].plot(plan.t, plan[f"total_infection_{col}"], color=colour)
ax[0].set_ylabel("population of A")
ax[1].set_ylabel("total infection")
ax[0].legend()
fig.savefig(f"{d}/planning.png", dpi=120)

fig, ax = plt.subplots(2, 2, figsize=(9, 7), sharex=True)
for s, a in zip(states, ax.flat):
    a.plot(plan.t, plan[f"effort_{s}_blue"], color="tab:blue", label="without planning")
    a.plot(plan.t, plan[f"effort_{s}_black"], color="black", label="with planning")
    a.set_title(s)
ax[0, 0].legend()
fig.savefig(f"{d}/planning_effort.png", dpi=120)
)PY";
}

inline int cmd_compare(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    using namespace cli_detail;
    return guarded(err, [&] {
        const Scenario sc = load_scenario(rc);
        const SweepParams sweep = sc.sweep.params(sc.epidemic.T);
        ensure_out_dir(rc);
        const ExperimentResult interv = run_experiment(sc.epidemic, sweep, Mode::Intervention);
        const ExperimentResult anarchy = run_experiment(sc.epidemic, sweep, Mode::Anarchy);
        EpidemicParams unplanned_p = sc.epidemic, planned_p = sc.epidemic;
        unplanned_p.sigma_P = 0.0;
        planned_p.sigma_P = sc.compare.sigma_p_planning;
        const ExperimentResult unplanned =
            sc.epidemic.sigma_P == 0.0 ? interv : run_experiment(unplanned_p, sweep, Mode::Intervention);
        const ExperimentResult planned = run_experiment(planned_p, sweep, Mode::Intervention);

        const char* states[] = {"AI", "AH", "BI", "BH"};
        auto effort = [](const ReportSeries& s, std::size_t i) {
            std::vector<double> e;
            for (const auto& a : s.efforts) e.push_back(a[i]);
            return e;
        };
        std::vector<std::string> names = {"t"};
        std::vector<std::vector<double>> cols = {interv.series.t};
        auto pair = [&](const std::string& base, const std::vector<double>& a,
                        const std::vector<double>& b) {
            names.push_back(base + "_intervention");
            cols.push_back(a);
            names.push_back(base + "_anarchy");
            cols.push_back(b);
        };
        pair("total_infection", interv.series.total_infection, anarchy.series.total_infection);
        pair("infection_A", interv.series.infection_A, anarchy.series.infection_A);
        pair("infection_B", interv.series.infection_B, anarchy.series.infection_B);
        pair("population_A", interv.series.population_A, anarchy.series.population_A);
        for (std::size_t i = 0; i < 4; ++i)
            pair(std::string("effort_") + states[i], effort(interv.series, i), effort(anarchy.series, i));
        write_file(out_path(rc, "comparison.csv"), series_csv(names, cols));

        names = {"t"};
        cols = {interv.series.t};
        auto triple = [&](const std::string& base, const std::vector<double>& blue,
                          const std::vector<double>& black, const std::vector<double>& red) {
            names.push_back(base + "_blue");
            cols.push_back(blue);
            names.push_back(base + "_black");
            cols.push_back(black);
            names.push_back(base + "_red");
            cols.push_back(red);
        };
        triple("population_A", unplanned.series.population_A, planned.series.population_A,
               anarchy.series.population_A);
        triple("total_infection", unplanned.series.total_infection, planned.series.total_infection,
               anarchy.series.total_infection);
        for (std::size_t i = 0; i < 4; ++i)
            triple(std::string("effort_") + states[i], effort(unplanned.series, i),
                   effort(planned.series, i), effort(anarchy.series, i));
        write_file(out_path(rc, "planning.csv"), series_csv(names, cols));
        write_file(out_path(rc, "plot_figures.py"), plot_script());

        const double pA0 = sc.epidemic.p0[AI] + sc.epidemic.p0[AH];
        const auto checks = directional_checks(interv.series, anarchy.series, unplanned.series,
                                               planned.series, pA0);
        Summary sum;
        sum.add("sigma_P_blue", 0.0);
        sum.add("sigma_P_black", sc.compare.sigma_p_planning);
        sum.add("objective_intervention", interv.intervention->objective);
        for (std::size_t i = 0; i < checks.size(); ++i) {
            const std::string key = std::string("check_") + char('a' + i);
            sum.add(key + ".behavior", checks[i].name);
            sum.add(key + ".held", checks[i].held ? "true" : "false");
            sum.add(key + ".margin", checks[i].margin);
            sum.add(key + ".detail", checks[i].detail);
        }
        write_file(out_path(rc, "directional.txt"), sum.text());
        out << sum.text();
        return int(kExitOk);
    });
}

}  // namespace mfc
