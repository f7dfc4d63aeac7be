#pragma once

#include <vector>

#include "vesseltopo/volume.hpp"

namespace vtopo {

/// Exact squared Euclidean distance (mm^2) from every voxel center to the
/// nearest background voxel center, honoring anisotropic spacing. Computed with
/// the separable lower-envelope-of-parabolas scheme, one axis at a time.
/// Background voxels get 0.
///
/// Throws NumericalError when the mask has no foreground or no background voxel.
[[nodiscard]] std::vector<double> squared_distance_transform(const VesselMask& mask);

/// sqrt of squared_distance_transform, stored as float32 on the mask grid.
[[nodiscard]] DistanceMap distance_transform(const VesselMask& mask);

}  // namespace vtopo
