#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vesseltopo/error.hpp"
#include "vesseltopo/msfm.hpp"
#include "vesseltopo/optimizer.hpp"
#include "vesseltopo/synth.hpp"
#include "vesseltopo/topology.hpp"

namespace vtopo::cli {

/// Bad config document, key or value. Exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An input file or earlier stage output is missing. Exit code 3.
class MissingPrerequisite : public Error {
public:
    using Error::Error;
};

enum class Stage { Topo, Export, Refine, Reconstruct, Synth, Eval, Pipeline };
[[nodiscard]] std::string to_string(Stage s);
[[nodiscard]] Stage stage_from_string(const std::string& s);

enum class ClassifierSource { Oracle, File };

struct PipelineConfig {
    std::filesystem::path workdir = "work";
    std::uint64_t seed = 1;

    std::optional<std::filesystem::path> mask, intensity, hilum_artery, hilum_vein;
    std::optional<std::filesystem::path> probabilities, terminal_probabilities;

    /// Echoed in manifests; the staged pipeline repairs through local solves
    /// and does not run the confidence-gated skeleton trace.
    double accept_threshold = 0.5;
    /// Also carries the solver order (repair.order) and the speed exponent.
    TopologyParams topology;
    std::vector<Vec3> root_hints;

    ClassifierSource classifier = ClassifierSource::Oracle;
    double flip_rate = 0.1;
    Strategy strategy = Strategy::Combined;

    SynthSpec synth;
};

/// Parses a JSON config. Unknown keys, wrong types and invalid values raise
/// ConfigError naming the key; syntax errors name line and column.
[[nodiscard]] PipelineConfig parse_config(const std::string& text, const std::string& origin = "config");
[[nodiscard]] PipelineConfig load_config(const std::filesystem::path& path);
/// Every setting as a JSON document (the form parse_config accepts).
[[nodiscard]] std::string config_to_json(const PipelineConfig& config);

/// Runs one stage, writing artifacts and `<stage>/manifest.json` under the
/// workdir. Progress lines go to `log`.
void run_stage(Stage stage, const PipelineConfig& config, std::ostream& log);

/// Maps an exception thrown by run_stage or the config loaders to the exit
/// status: 2 config, 3 missing prerequisite, 4 numerical failure, 1 other.
[[nodiscard]] int exit_code_for(const std::exception& e);

[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

}  // namespace vtopo::cli
