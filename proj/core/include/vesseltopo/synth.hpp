#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vesseltopo/labels.hpp"
#include "vesseltopo/topology.hpp"
#include "vesseltopo/volume.hpp"

namespace vtopo {

/// Parameters of a synthetic artery/vein pair. Each tree has `depth` levels
/// of segments (1 trunk, then 2, 4, ... per level); a segment of level l tapers
/// linearly from trunk_radius * decay^l to trunk_radius * decay^(l+1).
struct SynthSpec {
    std::uint64_t seed = 1;
    int depth = 4;
    double trunk_radius = 5.2;
    double radius_decay = std::pow(2.0, -1.0 / 3.0);
    double trunk_length = 22.0;
    double length_decay = 0.8;
    double min_angle_deg = 25.0;
    double max_angle_deg = 45.0;
    Dims dims{96, 80, 84};
    Vec3 spacing{1.0, 1.0, 1.0};
    /// Lateral distance between the two roots (mm).
    double intertwine_offset = 26.0;
    /// Minimum surface gap between segments that do not share an end (mm).
    double clearance = 2.0;
    int max_attempts = 400;
};

/// Throws InvalidArgument naming the first invalid field.
void validate(const SynthSpec& spec);

struct TubeSegment {
    Vec3 start, end;
    double start_radius = 0.0, end_radius = 0.0;
    VesselLabel label = VesselLabel::Artery;
    int level = 0;
    int parent = -1;  ///< index into SynthCase::segments, -1 for a trunk

    /// Distance from `p` to the centerline and the interpolated radius there.
    [[nodiscard]] std::pair<double, double> distance_and_radius(const Vec3& p) const;
};

struct SynthCase {
    SynthSpec spec;
    VesselMask mask;
    /// 0 background, 1 artery, 2 vein.
    MaskVolume truth;
    std::vector<TubeSegment> segments;
    Vec3 artery_root, vein_root;

    /// Degree-1 nodes of the generator trees (leaves plus the two trunk starts).
    [[nodiscard]] std::size_t terminal_count() const;
    /// Branch points of the generator trees.
    [[nodiscard]] std::size_t bifurcation_count() const;
};

/// Grows the artery and the vein breadth-first, alternating between the two
/// trees, and rasterizes them (foreground where the distance to a centerline
/// is at most the local radius). Children split from the parent direction by
/// angles drawn from [min_angle, max_angle] at opposite azimuths; placements
/// that leave the volume or violate the clearance are redrawn. Throws
/// InvalidArgument if a placement fails max_attempts times.
[[nodiscard]] SynthCase generate(const SynthSpec& spec);

struct TruthMatch {
    LabelTable labels;              ///< nearest generator label, meaningful where matched
    std::vector<std::uint8_t> matched;
    std::size_t unmatched = 0;
    [[nodiscard]] double unmatched_fraction() const {
        return matched.empty() ? 0.0 : double(unmatched) / double(matched.size());
    }
};

/// Labels each particle by the nearest generator centerline; a particle
/// farther than twice the local radius is unmatched. Throws NumericalError
/// when more than 10% are unmatched.
[[nodiscard]] TruthMatch match_truth(const TopologyForest& forest, const SynthCase& c);

/// Voxel labels (0 background, 1 artery, 2 vein) from particle labels: a voxel
/// closer than scale(i) - 1e-4 mm to particle i can take its label; among
/// candidates the nearest particle wins, ties to the smaller id.
[[nodiscard]] MaskVolume reconstruct_labels(const TopologyForest& forest, const LabelTable& labels, const Grid& grid);

/// Hilum masks fill background voxels only. Throws InvalidArgument on grid
/// mismatch or when the two hilum masks overlap.
[[nodiscard]] MaskVolume fuse_hilum(const MaskVolume& labels, const VesselMask& hilum_artery,
                                    const VesselMask& hilum_vein);

/// Particle-level confusion counts with arteries as positives.
struct Metrics {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    double accuracy = 1.0, sensitivity = 1.0, specificity = 1.0;

    [[nodiscard]] std::size_t total() const { return tp + tn + fp + fn; }
};

/// Compares ids where `include` is non-zero (all ids when empty). Rates with
/// an empty denominator are reported as 1.0.
[[nodiscard]] Metrics evaluate(const LabelTable& pred, const LabelTable& truth,
                               const std::vector<std::uint8_t>& include = {});

}  // namespace vtopo
