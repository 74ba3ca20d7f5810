#include <iostream>

#include <CLI11.hpp>

#include "mfcontract/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Finite-state mean-field contract solver (epidemic scenario)"};
    app.require_subcommand(1);
    mfc::RunConfig rc;

    auto common = [&rc](CLI::App* sub) {
        sub->add_option("--config", rc.config_path, "scenario file (defaults if omitted)")
            ->check(CLI::ExistingFile);
        sub->add_option("--out", rc.out_dir, "output directory");
        sub->add_option("--n-steps", rc.n_steps, "time steps on [0, T]");
        sub->add_option("--damping", rc.damping, "Picard damping in (0, 1]");
        sub->add_option("--tol", rc.tol, "sweep stopping tolerance");
    };

    auto* solve = app.add_subcommand("solve", "optimal intervention via the forward-backward system");
    common(solve);
    auto* anarchy = app.add_subcommand("anarchy", "mean-field equilibrium without a principal");
    common(anarchy);
    auto* verify = app.add_subcommand("verify", "build the contract and check it by simulation");
    common(verify);
    verify->add_option("--solution", rc.solution_path, "solution.csv from a previous solve");
    verify->add_option("--paths", rc.paths, "Monte Carlo paths");
    verify->add_option("--seed", rc.seed, "base seed");
    verify->add_option("--kappa", rc.kappa, "agent reservation level");
    auto* compare = app.add_subcommand("compare", "intervention vs anarchy, with and without planning");
    common(compare);
    compare->add_option("--sigma-p", rc.sigma_p, "planning weight for the second intervention run");
    auto* defaults = app.add_subcommand("defaults", "print the default scenario file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mfc::kExitConfig;
    }

    if (*solve) return mfc::cmd_solve(rc, std::cout, std::cerr);
    if (*anarchy) return mfc::cmd_anarchy(rc, std::cout, std::cerr);
    if (*verify) return mfc::cmd_verify(rc, std::cout, std::cerr);
    if (*compare) return mfc::cmd_compare(rc, std::cout, std::cerr);
    if (*defaults) return mfc::cmd_defaults(std::cout);
    return mfc::kExitConfig;
}
