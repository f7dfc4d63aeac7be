#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vesseltopo/volume.hpp"

namespace vtopo {

/// Non-negative propagation speed F per voxel; zero means impassable.
using SpeedMap = FloatVolume;
/// Arrival time T per voxel; +inf for voxels never reached.
using TimeMap = FloatVolume;

enum class EikonalOrder {
    First,               ///< first-order upwind differences on every stencil
    MultiStencilSecond,  ///< second-order axis differences where two upwind values are accepted
};

struct EikonalOptions {
    EikonalOrder order = EikonalOrder::MultiStencilSecond;
    /// Stop before accepting any voxel with arrival time above this value.
    double max_time = std::numeric_limits<double>::infinity();
    /// Stop as soon as every voxel listed here is accepted (ignored when empty).
    std::vector<Voxel> stop_after;
    /// With stop_after: stop at the first listed voxel accepted instead of the last.
    bool stop_at_first = false;
    /// Voxels within this many mm of a seed take the straight-line travel
    /// time as fixed boundary data instead of being marched. 0 treats seeds
    /// as points.
    double source_radius = 0.0;
};

/// Full solver output: double-precision times and the acceptance order.
struct EikonalTrace {
    std::vector<double> time;               ///< +inf where not accepted
    std::vector<std::size_t> accepted;      ///< linear indices in acceptance order, seeds first
    std::vector<std::size_t> prescribed;    ///< seeds and source-ball voxels, ascending; never marched
};

/// Fast-marching solution of |grad T| F = 1 with T = 0 on the seeds.
///
/// The multi-stencil scheme evaluates eight stencils of three independent
/// directions each (the axes; one axis with the two face diagonals of the
/// orthogonal plane; triples of space diagonals), solves the upwind quadratic
/// on each, and keeps the smallest causal root. Non-orthogonal direction sets
/// (anisotropic spacing) are handled through the metric (D D^T)^-1.
[[nodiscard]] EikonalTrace solve_eikonal_traced(const SpeedMap& speed, const std::vector<Voxel>& seeds,
                                                const EikonalOptions& options = {});

[[nodiscard]] TimeMap solve_eikonal(const SpeedMap& speed, const std::vector<Voxel>& seeds,
                                    EikonalOrder order = EikonalOrder::MultiStencilSecond);
[[nodiscard]] TimeMap solve_eikonal(const SpeedMap& speed, const std::vector<Voxel>& seeds,
                                    const EikonalOptions& options);

/// Arrival time at voxel `idx` computed only from voxels flagged in `accepted`.
/// This is the update the solver applies; it is exposed so the causality of a
/// finished solve can be checked independently.
[[nodiscard]] double local_arrival(const SpeedMap& speed, std::span<const double> time,
                                   std::span<const std::uint8_t> accepted, std::size_t idx, EikonalOrder order);

/// F = (dt / max dt)^exponent on the foreground (dt > 0), 0 on the background.
[[nodiscard]] SpeedMap speed_from_distance(const DistanceMap& dt, double exponent = 4.0);

struct GeodesicPath {
    std::vector<Vec3> points;  ///< world positions, start first

    [[nodiscard]] bool empty() const noexcept { return points.empty(); }
    [[nodiscard]] const Vec3& start() const { return points.front(); }
    [[nodiscard]] const Vec3& end() const { return points.back(); }
    [[nodiscard]] double length() const;
};

/// Steepest descent on the trilinearly interpolated time map from `start`
/// (world mm) with a fixed step (mm). Stops once T <= step or the current
/// position falls in a seed voxel (T == 0), which is then appended as the last
/// point. Arrival times along the returned path are strictly decreasing.
///
/// Throws NumericalError when the start is unreachable or the descent stalls.
[[nodiscard]] GeodesicPath backtrace(const TimeMap& time, const Vec3& start, double step);

enum class TraceRejection { Unreachable, Stagnated, LowConfidence, AtSeed, Covered };

[[nodiscard]] std::string to_string(TraceRejection r);

struct RejectedEndpoint {
    std::size_t endpoint = 0;  ///< index into the endpoint list
    TraceRejection reason = TraceRejection::Unreachable;
    double score = 0.0;
};

struct AcceptedTrace {
    std::size_t endpoint = 0;
    GeodesicPath path;  ///< new segment only, ending on the seed basin or on an earlier path
    double score = 0.0;
};

struct SkeletonTrace {
    std::vector<AcceptedTrace> accepted;
    std::vector<RejectedEndpoint> rejected;
};

/// Traces every endpoint back to the seed basin, farthest (largest T) first.
/// Each new path is cut at its first contact with an already accepted path, so
/// the union forms a tree. A path is kept when its confidence score, the mean
/// distance-map value along the new segment divided by the largest value on
/// it, reaches `accept_threshold`.
[[nodiscard]] SkeletonTrace trace_skeleton_tree(const TimeMap& time, const DistanceMap& dt,
                                                const std::vector<Vec3>& endpoints, double accept_threshold = 0.5,
                                                double step = 0.5);

}  // namespace vtopo
