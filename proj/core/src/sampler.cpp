#include <algorithm>

#include "vesseltopo/filters.hpp"
#include "vesseltopo/parallel.hpp"
#include "vesseltopo/topology.hpp"

namespace vtopo {

std::vector<Particle> sample_particles(const VesselMask& mask, const DistanceMap& dt, const FloatVolume& enhanced,
                                       const SamplerParams& params) {
    if (!mask.grid().same_geometry(dt.grid()) || !mask.grid().same_geometry(enhanced.grid())) {
        throw InvalidArgument("sample_particles: mask, distance map and enhanced volume grids differ");
    }
    if (count_foreground(mask) == 0) throw InvalidArgument("sample_particles: empty mask");

    const auto smooth = gaussian_smooth(dt, params.smoothing_sigma);
    const auto& grid = mask.grid();
    const auto& d = grid.dims;

    std::vector<std::vector<Particle>> slices(d.nz);
    parallel_for(static_cast<std::size_t>(d.nz), [&](std::size_t zi) {
        const int z = static_cast<int>(zi);
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x) {
                const Voxel p{x, y, z};
                if (!mask.at(p)) continue;
                if (gradient_at(smooth, p).norm() > params.max_gradient) continue;
                const auto eig = sorted_eigen(hessian_at(smooth, p));
                if (!(eig.values[1] < 0.0 && eig.values[2] < 0.0)) continue;
                const Vec3 tangent = eig.vectors.col(0).normalized();

                const auto self = grid.index(p);
                const float here = smooth[self];
                bool is_max = true;
                for (int dz = -1; dz <= 1 && is_max; ++dz) {
                    for (int dy = -1; dy <= 1 && is_max; ++dy) {
                        for (int dx = -1; dx <= 1 && is_max; ++dx) {
                            if (!dx && !dy && !dz) continue;
                            const Voxel q{x + dx, y + dy, z + dz};
                            if (!d.contains(q) || !mask.at(q)) continue;
                            const Vec3 off = grid.spacing.cwiseProduct(Vec3(dx, dy, dz)).normalized();
                            if (std::abs(off.dot(tangent)) >= params.plane_tolerance) continue;
                            const auto qi = grid.index(q);
                            const float other = smooth[qi];
                            if (other > here || (other == here && qi < self)) is_max = false;
                        }
                    }
                }
                if (!is_max) continue;

                Particle part;
                part.pos = grid.to_world(p);
                part.scale = dt.at(p);
                part.dir = canonical_direction(tangent);
                part.intensity = enhanced.at(p);
                slices[zi].push_back(part);
            }
        }
    });

    std::vector<Particle> out;
    for (auto& s : slices) {
        for (auto& part : s) {
            part.id = static_cast<int>(out.size());
            out.push_back(part);
        }
    }
    return out;
}

}  // namespace vtopo
