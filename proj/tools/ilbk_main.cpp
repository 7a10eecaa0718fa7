// ilbk: command-line front end for the linear collision operator toolkit.

#include "ilb/commands.hpp"
#include "ilb/config.hpp"
#include "ilb/parallel.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

int main(int argc, char** argv)
{
    CLI::App app{"ilbk - linear Boltzmann operator for dissipative hard spheres"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--set", sets, "override a configuration key, e.g. --set grid.N=16 (repeatable)");
    app.add_option("--out", out_dir, "output directory (default $ILBK_OUT or ./ilbk_out)");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--threads", threads, "worker threads (0 = all cores)");

    const char* help[] = {
        "analytic identity suite: detailed balance, kernel symmetry, collision law",
        "resolve the normalization constants and write calibration.json",
        "collision frequency table and checks against the defining integral",
        "integral bounds of the kernel (Carleman scans, tail mass)",
        "discrete spectrum of the symmetrized operator",
        "space-homogeneous relaxation with entropy monitors",
        "periodic-slab transport with collisions (mass conservation)",
        "aggregate the JSON summaries of the output directory",
    };
    const auto& names = ilb::command_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        app.add_subcommand(names[i], help[i]);

    CLI11_PARSE(app, argc, argv);
    const std::string cmd = app.get_subcommands().front()->get_name();

    try {
        ilb::RunConfig cfg = config_path.empty() ? ilb::parse_config("", sets) : ilb::load_config(config_path, sets);
        if (!out_dir.empty())
            cfg.out = out_dir;
        else if (const char* env = std::getenv("ILBK_OUT"); env && *env && cfg.out == "ilbk_out")
            cfg.out = env;
        if (seed)
            cfg.seed = *seed;
        if (threads)
            cfg.threads = *threads;
        ilb::set_thread_count(cfg.threads);

        const ilb::CommandResult res = ilb::run_command(cmd, cfg, std::cout);
        for (const auto& p : res.artifacts)
            std::cout << "  wrote " << p.string() << '\n';
        const int code = res.exit_code();
        std::cout << (code == 0 ? "all checks passed" : "check failed") << '\n';
        return code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ilb::exit_code_for(e);
    }
}
