// fdjb <command> --config <file> [--out <dir>] [--seed <int>]

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fdjb/fdjb.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Frequency-domain Jacobian toolkit for grid-connected converters"};
    app.require_subcommand(1, 1);
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    for (const auto& name : fdjb::known_commands()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (default: [output] dir)");
        sub->add_option("--seed", seed, "seed for randomized initial states");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : fdjb::kExitError;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        std::ifstream f(config_path, std::ios::binary);
        std::ostringstream text;
        text << f.rdbuf();
        const fdjb::RunConfig rc = fdjb::parse_config(text.str());
        if (rc.command != command) {
            throw fdjb::Error("config-bad-value", "command line says '" + command + "' but the config says '" +
                                                      rc.command + "'");
        }
        const fdjb::RunResult rr = fdjb::run(rc, out_dir, seed);
        for (const auto& file : rr.files) std::cout << file << "\n";
        if (!rr.message.empty()) std::cerr << "fdjb: " << rr.message << "\n";
        if (rr.exit_code == fdjb::kExitUnstable) std::cerr << "fdjb: unstable verdict\n";
        return rr.exit_code;
    } catch (const fdjb::Error& e) {
        std::cerr << "fdjb: " << e.what() << "\n";
        return fdjb::kExitError;
    } catch (const std::exception& e) {
        std::cerr << "fdjb: internal-error: " << e.what() << "\n";
        return fdjb::kExitError;
    }
}
