#include "vesseltopo/distance.hpp"
#include "vesseltopo/filters.hpp"
#include "vesseltopo/topology.hpp"

namespace vtopo {

TopologyResult extract_topology(const VesselMask& mask, const FloatVolume* intensity,
                                const std::vector<Vec3>& root_hints, const TopologyParams& params) {
    require_binary(mask);
    if (intensity && !intensity->grid().same_geometry(mask.grid())) {
        throw InvalidArgument("extract_topology: intensity volume grid differs from the mask");
    }
    TopologyResult out;
    out.dt = distance_transform(mask);
    out.enhanced = vesselness_enhance(intensity ? *intensity : to_float(mask), params.vesselness_scales);

    auto forest = build_graph(sample_particles(mask, out.dt, out.enhanced, params.sampler), mask.grid());
    forest = prune_spurs(forest, params.spur_length_factor, params.min_component);
    if (forest.nodes.empty()) throw NumericalError("extract_topology: no centerline particles found");

    out.flagged = detect_false_terminals(forest, mask);
    const auto speed = speed_from_distance(out.dt, params.speed_exponent);
    auto repaired = repair(forest, out.flagged, speed, out.dt, &out.enhanced, params.repair);
    out.repaired = std::move(repaired.repaired);
    out.unrepaired = std::move(repaired.unrepaired);

    std::vector<int> roots;
    for (const auto& hint : root_hints) roots.push_back(nearest_node(repaired.forest, hint));
    out.forest = root_forest(std::move(repaired.forest), roots);
    return out;
}

}  // namespace vtopo
