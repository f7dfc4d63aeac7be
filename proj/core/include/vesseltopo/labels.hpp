#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vtopo {

enum class VesselLabel : std::uint8_t { Artery = 1, Vein = 2 };

[[nodiscard]] std::string to_string(VesselLabel label);
[[nodiscard]] VesselLabel vessel_label_from_string(const std::string& s);

enum class LabelStage { Raw, Refined };
[[nodiscard]] std::string to_string(LabelStage stage);

/// One label per forest id (index = id).
struct LabelTable {
    std::vector<VesselLabel> labels;
    LabelStage stage = LabelStage::Raw;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    friend bool operator==(const LabelTable&, const LabelTable&) = default;
};

/// `#stage=<raw|refined>` header, then `id<TAB>artery|vein` rows in id order.
void save_labels(const LabelTable& table, const std::filesystem::path& path);
/// Requires ids 0..n-1 exactly once each, in any order.
[[nodiscard]] LabelTable load_labels(const std::filesystem::path& path);

enum class Provenance { FullPipe, TerminalPipe, Merged, Oracle };
[[nodiscard]] std::string to_string(Provenance p);
[[nodiscard]] Provenance provenance_from_string(const std::string& s);

/// Artery probability per particle id.
struct ProbabilityTable {
    std::map<int, double> p;
    Provenance provenance = Provenance::FullPipe;

    friend bool operator==(const ProbabilityTable&, const ProbabilityTable&) = default;
};

}  // namespace vtopo
