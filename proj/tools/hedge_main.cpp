#include "hedge/runner.hpp"

#include <CLI11.hpp>

#include <exception>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Optimal hedging with transaction costs: closed form, asymptotics, deep FBSDE, deep hedging"};
    app.require_subcommand(1);

    hedge::RunOptions options;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
    std::string out;

    const char* commands[][2] = {
        {"solve-ode", "Solve the ergodic ODE and write the solution table"},
        {"train-fbsde", "Train the deep FBSDE solver"},
        {"train-deephedge", "Train the deep hedging policy"},
        {"train-pasting", "Train the terminal phase of the pasted strategy"},
        {"evaluate", "Monte Carlo evaluation of the configured engine"},
        {"compare", "Evaluate several engines on common paths"},
        {"export-paths", "Write per-step rate and position quantiles"},
        {"validate", "Check a configuration file"},
    };
    for (const auto& cmd : commands) {
        CLI::App* sub = app.add_subcommand(cmd[0], cmd[1]);
        sub->add_option("--config", options.config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Override evaluation and training seeds");
        sub->add_option("--workers", workers, "Evaluation threads (default: all cores)")->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "Output directory (overrides output.dir)");
        sub->add_flag("--paper-scale", options.paper_scale, "Apply the config's paper_scale overrides");
    }
    CLI11_PARSE(app, argc, argv);

    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed") > 0) options.seed = seed;
    if (sub->count("--workers") > 0) options.workers = workers;
    if (sub->count("--out") > 0) options.out_dir = out;
    std::cout << std::unitbuf;
    try {
        return hedge::run(sub->get_name(), options, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
