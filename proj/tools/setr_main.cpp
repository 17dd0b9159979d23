#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "setr/commands.hpp"
#include "setr/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Self-attention activity recognition: preprocessing, training and evaluation"};
    app.set_help_flag("-h,--help", "Print this help message and exit");

    std::string command;
    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("command", command, "preprocess | synth | train | evaluate | gradcheck | keys")
        ->required()
        ->check(CLI::IsMember({"preprocess", "synth", "train", "evaluate", "gradcheck", "keys"}));
    app.add_option("-c,--config", config_path, "Configuration file (key = value lines)");
    app.add_option("overrides", overrides, "key=value overrides, applied after the file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return setr::kExitUsage;
    }

    setr::RunConfig config;
    try {
        std::optional<std::filesystem::path> file;
        if (!config_path.empty()) file = config_path;
        config = setr::load_config(file, overrides);
    } catch (const setr::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return setr::kExitUsage;
    }

    if (command == "keys") {
        for (const auto& [key, value] : config.entries()) {
            std::cout << key << " = " << value << "\n";
        }
        return setr::kExitOk;
    }
    return setr::run_command(command, config, std::cout, std::cerr);
}
