#include <iostream>

#include "CLI11.hpp"
#include "stages.hpp"

namespace cli = vtopo::cli;

int main(int argc, char** argv) {
    CLI::App app{"vesseltopo: vessel topology extraction, artery/vein refinement and evaluation"};
    app.require_subcommand(1, 1);

    std::string config_path, workdir, strategy, probabilities;
    std::int64_t seed = -1;
    const std::pair<cli::Stage, const char*> stages[] = {
        {cli::Stage::Synth, "generate a synthetic artery/vein case"},
        {cli::Stage::Topo, "extract and repair the topology forest"},
        {cli::Stage::Export, "write the classifier dataset"},
        {cli::Stage::Refine, "threshold probabilities and refine labels"},
        {cli::Stage::Reconstruct, "label voxels from refined particles"},
        {cli::Stage::Eval, "score labels against synthetic truth"},
        {cli::Stage::Pipeline, "topo, export, probabilities, refine, reconstruct, eval"},
    };
    for (const auto& [stage, help] : stages) {
        auto* sub = app.add_subcommand(cli::to_string(stage), help);
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--workdir", workdir, "artifact directory (overrides workdir)");
        sub->add_option("--strategy", strategy, "particle | branch | subtree | combined");
        sub->add_option("--seed", seed, "seed for generation and the oracle classifier");
        sub->add_option("--probabilities", probabilities, "probability TSV (overrides paths.probabilities)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        cli::PipelineConfig config = config_path.empty() ? cli::parse_config("{}") : cli::load_config(config_path);
        if (!workdir.empty()) config.workdir = workdir;
        if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
        config.synth.seed = config.seed;
        if (!probabilities.empty()) config.probabilities = probabilities;
        if (!strategy.empty()) {
            try {
                config.strategy = vtopo::strategy_from_string(strategy);
            } catch (const vtopo::InvalidArgument& e) {
                throw cli::ConfigError(std::string("--strategy: ") + e.what());
            }
        }
        const auto stage = cli::stage_from_string(app.get_subcommands().front()->get_name());
        cli::run_stage(stage, config, std::cerr);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::exit_code_for(e);
    }
}
