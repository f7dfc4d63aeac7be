#include "vesseltopo/volume.hpp"

#include <algorithm>

namespace vtopo {

void require_binary(const MaskVolume& mask) {
    const auto data = mask.data();
    const auto bad = std::find_if(data.begin(), data.end(), [](std::uint8_t v) { return v > 1; });
    if (bad != data.end()) {
        const auto v = mask.grid().voxel(static_cast<std::size_t>(bad - data.begin()));
        throw InvalidArgument("mask value " + std::to_string(*bad) + " at voxel (" + std::to_string(v[0]) + "," +
                              std::to_string(v[1]) + "," + std::to_string(v[2]) + ") is not binary");
    }
}

std::size_t count_foreground(const MaskVolume& mask) {
    const auto data = mask.data();
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

FloatVolume to_float(const MaskVolume& mask) {
    FloatVolume out(mask.grid());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        out[i] = static_cast<float>(mask[i]);
    }
    return out;
}

double sample_trilinear(const FloatVolume& v, const Vec3& world) {
    const auto& d = v.dims();
    Vec3 c = v.grid().to_continuous(world);
    c.x() = std::clamp(c.x(), 0.0, static_cast<double>(d.nx - 1));
    c.y() = std::clamp(c.y(), 0.0, static_cast<double>(d.ny - 1));
    c.z() = std::clamp(c.z(), 0.0, static_cast<double>(d.nz - 1));
    const int x0 = static_cast<int>(std::floor(c.x()));
    const int y0 = static_cast<int>(std::floor(c.y()));
    const int z0 = static_cast<int>(std::floor(c.z()));
    const double fx = c.x() - x0;
    const double fy = c.y() - y0;
    const double fz = c.z() - z0;
    double acc = 0.0;
    for (int dz = 0; dz <= 1; ++dz) {
        const double wz = dz ? fz : 1.0 - fz;
        if (wz == 0.0) continue;
        for (int dy = 0; dy <= 1; ++dy) {
            const double wy = dy ? fy : 1.0 - fy;
            if (wy == 0.0) continue;
            for (int dx = 0; dx <= 1; ++dx) {
                const double wx = dx ? fx : 1.0 - fx;
                if (wx == 0.0) continue;
                acc += wx * wy * wz * v.clamped(x0 + dx, y0 + dy, z0 + dz);
            }
        }
    }
    return acc;
}

}  // namespace vtopo
