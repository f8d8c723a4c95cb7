#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
    using namespace tspread::app;
    CLI::App app{"tspread: traffic spreading among cellular users"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);

    CommandOptions o;
    std::string seed_text;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "scenario config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", o.seed, "RNG seed");
        sub->add_option("--trunc", o.trunc, "queue truncation per user for DP solves");
        sub->add_option("--states", o.states, "channel states K");
        sub->add_option("--weight", o.weight, "rerouting weight w for every pair");
        sub->add_option("--weights", o.weights, "comma-separated weight list")->delimiter(',');
        sub->add_option("--dispatcher", o.dispatcher, "none, jsq, optimal, heuristic or lower-bound")
            ->check(CLI::IsMember({"none", "jsq", "optimal", "heuristic", "lower-bound", "lower_bound"}));
    };
    for (const auto& [name, help] : {std::pair{"solve", "solve the two-user dispatching MDP"},
                                     std::pair{"simulate", "simulate one scenario"},
                                     std::pair{"sweep", "simulate one run per rerouting weight"},
                                     std::pair{"curves", "switching curves for a list of weights"},
                                     std::pair{"verify", "structural checks of the solved MDP"}}) {
        auto* sub = app.add_subcommand(name, help);
        common(sub);
        if (std::string(name) == "verify") {
            sub->add_option("--inject-fault", o.inject_fault, "test mode: corrupt the problem (negative-rate)");
        }
        sub->callback([&o, sub] { o.command = sub->get_name(); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }
    return run_command(o, std::cout, std::cerr);
}
