// spectra-lab <mode> [--config path] [--out dir] [--seed u64] [--d 4,8,16] [--width 0.1] [--full-2d]

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "spectra_lab/cli.hpp"

using namespace spectra_lab;

int main(int argc, char** argv) {
    CLI::App app{"Predicted and actual energy spectra of compressed states"};
    std::string mode, config_path, out, d_list;
    std::uint64_t seed = 0;
    double width = 0.0;
    int sweeps = -1;
    bool full_2d = false;
    std::string m_text;

    std::string modes;
    for (const auto& [_, name] : cli::mode_names()) modes += (modes.empty() ? "" : " | ") + name;
    app.add_option("mode", mode, modes)->required();
    app.add_option("--config", config_path, "JSON run config; flags below override its fields");
    auto* out_opt = app.add_option("--out", out, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "64-bit seed");
    auto* d_opt = app.add_option("--d", d_list, "bond dimensions, comma separated");
    auto* width_opt = app.add_option("--width", width, "Gaussian broadening width");
    auto* sweeps_opt = app.add_option("--sweeps", sweeps, "variational sweeps after truncation");
    auto* m_opt = app.add_option("--m", m_text, "stable rank budget, or from-compression");
    app.add_flag("--full-2d", full_2d, "allow streaming the full 2^16 eigensystem");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kInvalidConfig;
    }

    cli::RunConfig config;
    try {
        nlohmann::json doc = nlohmann::json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw cli::ConfigError("cannot read config " + config_path);
            doc = nlohmann::json::parse(in, nullptr, true, true);
        }
        doc["mode"] = mode;
        config = cli::RunConfig::from_json(doc);
        if (*out_opt) config.out = out;
        if (*seed_opt) config.seed = seed;
        if (*d_opt) config.D = cli::parse_d_list(d_list);
        if (*width_opt) config.width = width;
        if (*sweeps_opt) config.sweeps = sweeps;
        if (*m_opt) {
            if (m_text == "from-compression")
                config.m.reset();
            else
                config.m = std::stod(m_text);
        }
        if (full_2d) config.full_2d = true;
    } catch (const std::exception& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return cli::kInvalidConfig;
    }

    const auto result = cli::run(config);
    (result.exit_code == 0 ? std::cout : std::cerr) << result.message << "\n";
    return result.exit_code;
}
