#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "vesseltopo/labels.hpp"
#include "vesseltopo/topology.hpp"
#include "vesseltopo/volume.hpp"

namespace vtopo {

inline constexpr int kPatchU = 32;
inline constexpr int kPatchV = 32;
inline constexpr int kPatchW = 3;
inline constexpr int kPatchValues = kPatchU * kPatchV * kPatchW;

/// Right-handed orthonormal frame (u, v, w = dir). u is the projection of the
/// global z axis onto the plane orthogonal to dir, or of the x axis when dir
/// is (nearly) parallel to z; v = dir x u.
struct PatchBasis {
    Vec3 u, v, w;
};
[[nodiscard]] PatchBasis patch_basis(const Vec3& dir);

/// Cross-section samples around one particle. values[(k * 32 + j) * 32 + i]
/// is taken at pos + (i - 15.5) s u + (j - 15.5) s v + (k - 1) s w.
struct OrientedPatch {
    int id = 0;
    PatchBasis basis;
    std::vector<float> values;
    /// Particle outside the volume extent; values are all zero.
    bool out_of_bounds = false;
};

/// One patch per node in id order, trilinear with border clamping.
/// spacing_mm <= 0 selects the smallest volume spacing.
[[nodiscard]] std::vector<OrientedPatch> extract_patches(const FloatVolume& volume, const TopologyForest& forest,
                                                         double spacing_mm = 0.0);

/// Writes manifest.json, patches_orig.bin, patches_enh.bin (float32 little
/// endian, id order), neighbors.json (list of neighbour lists indexed by id),
/// terminal_ids.json and, when labels are given, labels.tsv. The forest must
/// be rooted (terminal ids come from its branches).
void export_dataset(const std::filesystem::path& dir, const TopologyForest& forest,
                    const std::vector<OrientedPatch>& original, const std::vector<OrientedPatch>& enhanced,
                    const LabelTable* labels, double spacing_mm);

/// Reads one channel ("orig" or "enh") back as flat float32 values.
[[nodiscard]] std::vector<float> load_patch_channel(const std::filesystem::path& dir, const std::string& channel);

/// `#provenance=<tag>` header then `id<TAB>p` rows in id order.
void save_probabilities(const ProbabilityTable& table, const std::filesystem::path& path);

/// Parses and validates a probability TSV against `forest` (rooted when a
/// terminal-pipe table is expected). FormatError names the offending line for
/// bad rows, unknown or duplicate ids and p outside [0,1]; coverage errors
/// name the first missing or extra id.
[[nodiscard]] ProbabilityTable ingest_probabilities(const std::filesystem::path& path, const TopologyForest& forest,
                                                    Provenance expected);

/// Coverage rule: full/merged/oracle tables hold every id 0..n-1, terminal
/// tables exactly `terminal_ids`. Throws InvalidArgument.
void check_coverage(const ProbabilityTable& table, std::size_t forest_size, const std::vector<int>& terminal_ids);

/// Mean of both pipes on terminal-branch ids, full pipe elsewhere.
[[nodiscard]] ProbabilityTable mutual_correct(const ProbabilityTable& full, const ProbabilityTable& terminal,
                                              const std::vector<int>& terminal_ids);

/// p = 0.9 for arteries and 0.1 for veins, then each id in order is flipped to
/// 1 - p with probability flip_rate (one draw per id from Rng(seed)).
[[nodiscard]] ProbabilityTable oracle_classifier(const LabelTable& truth, double flip_rate, std::uint64_t seed);

}  // namespace vtopo
