#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vesseltopo/msfm.hpp"
#include "vesseltopo/volume.hpp"

namespace vtopo {

/// Node kind from the number of graph neighbours: 1 (or 0) terminal,
/// 2 branching, 3 or more bifurcation.
enum class NodeKind { Terminal, Branching, Bifurcation };

[[nodiscard]] std::string to_string(NodeKind kind);
[[nodiscard]] NodeKind node_kind_from_string(const std::string& s);
[[nodiscard]] NodeKind kind_for_degree(std::size_t degree);

/// Attributed centerline sample.
struct Particle {
    int id = 0;
    Vec3 pos = Vec3::Zero();  ///< mm, a voxel center
    double scale = 0.0;       ///< local radius in mm
    Vec3 dir = Vec3::UnitX(); ///< unit tangent, canonical sign
    double intensity = 0.0;
    NodeKind kind = NodeKind::Terminal;
};

/// Particle graph. Node ids are dense and equal to their index in `nodes`;
/// edges are (i, j) with i < j, sorted. `parent` is filled by root_forest
/// (-1 for roots) and is empty for an unrooted forest.
struct TopologyForest {
    std::vector<Particle> nodes;
    std::vector<std::pair<int, int>> edges;
    std::vector<int> roots;
    std::vector<int> parent;

    [[nodiscard]] std::size_t size() const noexcept { return nodes.size(); }
    [[nodiscard]] bool rooted() const noexcept { return !parent.empty(); }
    /// Neighbour lists sorted by id.
    [[nodiscard]] std::vector<std::vector<int>> adjacency() const;
    [[nodiscard]] std::vector<std::size_t> degrees() const;
    /// Connected component label per node: 0, 1, ... in order of smallest member id.
    [[nodiscard]] std::vector<int> components() const;
    [[nodiscard]] std::vector<std::vector<int>> children() const;
};

/// Flips `dir` so that its largest-magnitude component is positive.
[[nodiscard]] Vec3 canonical_direction(const Vec3& dir);

struct SamplerParams {
    /// Gaussian sigma (mm) applied to the distance map before the Hessian.
    double smoothing_sigma = 1.0;
    /// Largest |grad dt| of the smoothed map accepted on a ridge.
    double max_gradient = 0.5;
    /// A 26-neighbour offset counts as lying in the cross-section plane when
    /// |offset_unit . tangent| is below this value.
    double plane_tolerance = 0.5;
};

/// Deterministic distance-ridge sampler. A foreground voxel becomes a particle
/// when the Hessian of the smoothed distance map has two negative eigenvalues
/// of largest magnitude, its smoothed gradient is small, and its smoothed
/// distance is a strict maximum over the 26-neighbours lying in the plane
/// orthogonal to the tangent (ties broken by voxel index). Ids follow voxel
/// order; kinds are left as Terminal until build_graph.
[[nodiscard]] std::vector<Particle> sample_particles(const VesselMask& mask, const DistanceMap& dt,
                                                     const FloatVolume& enhanced, const SamplerParams& params = {});

/// Connects particles on 26-adjacent voxels of `grid`, reduces the adjacency
/// graph to its minimum spanning forest (edge length, ties by id pair), then
/// caps every degree at 3 keeping the neighbours most collinear with `dir`.
/// Kinds follow the resulting degrees.
[[nodiscard]] TopologyForest build_graph(std::vector<Particle> particles, const Grid& grid);

/// Removes terminal chains (terminal node up to, excluding, a bifurcation)
/// whose length is at most `length_factor` times the bifurcation scale, then
/// components with fewer than `min_component` nodes. Repeats until stable and
/// renumbers ids densely in their previous order.
[[nodiscard]] TopologyForest prune_spurs(const TopologyForest& forest, double length_factor = 1.5,
                                         std::size_t min_component = 3);

/// Terminals whose outward ray is still on the mask between 1 and 2 scales
/// (sampled every 0.25 scale, nearest voxel, out of bounds is background).
/// Outward is the sign of dir pointing away from the sole neighbour; isolated
/// nodes test both signs. Returns ids in ascending order.
[[nodiscard]] std::vector<int> detect_false_terminals(const TopologyForest& forest, const VesselMask& mask);

struct RepairParams {
    EikonalOrder order = EikonalOrder::MultiStencilSecond;
    /// A gap is searched within max(min_reach_mm, reach_scale_factor * scale).
    double min_reach_mm = 6.0;
    double reach_scale_factor = 4.0;
    double backtrace_step = 0.5;
};

struct RepairOutcome {
    TopologyForest forest;
    std::vector<int> repaired;                            ///< flagged ids that were reconnected
    std::vector<std::pair<int, std::string>> unrepaired;  ///< flagged id and reason
    std::size_t added_particles = 0;
};

/// Reconnects flagged terminals to another component. For each flagged node
/// (ascending id, still of degree <= 1) the eikonal equation is solved from it
/// inside a local box until a particle of a different component with free
/// degree is reached; the geodesic back to the terminal becomes a chain of new
/// particles (scale = dt, dir = path tangent, intensity from `enhanced` when
/// given). Only foreign components are joined, so the forest stays acyclic.
/// The input must be unrooted; the output is unrooted.
[[nodiscard]] RepairOutcome repair(const TopologyForest& forest, const std::vector<int>& flagged,
                                   const SpeedMap& speed, const DistanceMap& dt, const FloatVolume* enhanced = nullptr,
                                   const RepairParams& params = {});

/// Orients every component by breadth-first search (neighbours by ascending
/// id). Each explicit root must be a node id and at most one per component;
/// components without an explicit root get the node of maximal scale (ties to
/// the smaller id). Roots are stored in ascending id order.
[[nodiscard]] TopologyForest root_forest(TopologyForest forest, const std::vector<int>& roots = {});

/// All descendants of one child of a root.
struct Subtree {
    int anchor = 0;
    int root = 0;
    std::vector<int> members;  ///< ascending, includes the anchor
};

[[nodiscard]] std::vector<Subtree> extract_subtrees(const TopologyForest& forest);

enum class EndpointKind { Root, Terminal, Bifurcation };
[[nodiscard]] std::string to_string(EndpointKind kind);

/// Maximal chain of degree-2 nodes between endpoints, ordered from the
/// root side. `owned()` drops the root-side endpoint so that the branches of a
/// rooted forest partition its non-root nodes.
struct Branch {
    std::vector<int> ids;
    EndpointKind start_kind = EndpointKind::Root;
    EndpointKind end_kind = EndpointKind::Terminal;

    [[nodiscard]] std::vector<int> owned() const { return {ids.begin() + 1, ids.end()}; }
    [[nodiscard]] bool terminal() const {
        return start_kind == EndpointKind::Terminal || end_kind == EndpointKind::Terminal;
    }
};

/// Branches sorted by their first two ids.
[[nodiscard]] std::vector<Branch> extract_branches(const TopologyForest& forest);
[[nodiscard]] std::vector<Branch> extract_terminal_branches(const std::vector<Branch>& branches);
/// Ascending ids owned by terminal branches.
[[nodiscard]] std::vector<int> terminal_branch_ids(const std::vector<Branch>& branches);

/// Validates the structural invariants (dense ids, sorted unique edges,
/// degree <= 3, kinds match degrees, acyclic, unit dirs, positive scales,
/// one root per component when rooted). Throws InvalidArgument naming the
/// first violation.
void validate_forest(const TopologyForest& forest);

struct TopologyParams {
    SamplerParams sampler;
    std::vector<double> vesselness_scales{1.0, 2.0, 3.0};
    double speed_exponent = 4.0;
    double spur_length_factor = 1.5;
    std::size_t min_component = 3;
    RepairParams repair;
};

struct TopologyResult {
    TopologyForest forest;  ///< rooted
    DistanceMap dt;
    FloatVolume enhanced;
    std::vector<int> flagged;  ///< flagged ids before repair
    std::vector<int> repaired;
    std::vector<std::pair<int, std::string>> unrepaired;
};

/// Node nearest to `pos` (ties to the smaller id); throws on an empty forest.
[[nodiscard]] int nearest_node(const TopologyForest& forest, const Vec3& pos);

/// Full extraction: distance map, enhancement of `intensity` (the mask itself
/// when null), sampling, graph, spur pruning, false-terminal repair and
/// rooting. Each root hint selects its nearest node as an explicit
/// root; remaining components are rooted automatically.
[[nodiscard]] TopologyResult extract_topology(const VesselMask& mask, const FloatVolume* intensity,
                                              const std::vector<Vec3>& root_hints = {},
                                              const TopologyParams& params = {});

}  // namespace vtopo
