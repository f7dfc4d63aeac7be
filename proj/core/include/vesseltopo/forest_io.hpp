#pragma once

#include <filesystem>
#include <string>

#include "vesseltopo/topology.hpp"

namespace vtopo {

/// {"nodes":[{"id","pos","scale","dir","intensity","kind"}],"edges":[[i,j]],"roots":[r]}
[[nodiscard]] std::string forest_to_json(const TopologyForest& forest);
/// Parses and validates; a forest with roots is re-rooted so `parent` is filled.
[[nodiscard]] TopologyForest forest_from_json(const std::string& text);

void save_forest(const TopologyForest& forest, const std::filesystem::path& path);
[[nodiscard]] TopologyForest load_forest(const std::filesystem::path& path);

}  // namespace vtopo
