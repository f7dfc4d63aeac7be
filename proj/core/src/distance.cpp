#include "vesseltopo/distance.hpp"

#include <cmath>
#include <limits>

#include "vesseltopo/parallel.hpp"

namespace vtopo {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared distance transform of a sampled function f with sample spacing w:
//   d(p) = min_q f(q) + w^2 (p - q)^2
// Sites with f = inf are skipped. Scratch buffers are passed in to avoid reallocations.
void transform_line(const double* f, double* d, int n, double w2, std::vector<int>& v, std::vector<double>& z) {
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        const double fq = f[q] + w2 * q * q;
        while (k >= 0) {
            const int r = v[k];
            const double s = (fq - (f[r] + w2 * r * r)) / (2.0 * w2 * (q - r));
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = k == 0 ? -kInf : (fq - (f[v[k - 1]] + w2 * v[k - 1] * v[k - 1])) / (2.0 * w2 * (q - v[k - 1]));
        z[k + 1] = kInf;
    }
    if (k < 0) {
        for (int p = 0; p < n; ++p) d[p] = kInf;
        return;
    }
    int j = 0;
    for (int p = 0; p < n; ++p) {
        while (z[j + 1] < p) ++j;
        const double dq = p - v[j];
        d[p] = f[v[j]] + w2 * dq * dq;
    }
}

void transform_axis(std::vector<double>& field, const Grid& grid, int axis) {
    const auto& dims = grid.dims;
    const int n = axis == 0 ? dims.nx : (axis == 1 ? dims.ny : dims.nz);
    const double w = grid.spacing[axis];
    const double w2 = w * w;
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(dims.nx)
                                                          : static_cast<std::size_t>(dims.nx) * dims.ny);
    // Lines are enumerated by the two remaining coordinates.
    const int a = axis == 0 ? dims.ny : dims.nx;
    const int b = axis == 2 ? dims.ny : dims.nz;
    parallel_for(static_cast<std::size_t>(b), [&](std::size_t bi) {
        std::vector<double> f(n), d(n), z(n + 1);
        std::vector<int> v(n);
        for (int ai = 0; ai < a; ++ai) {
            std::size_t base = 0;
            switch (axis) {
                case 0: base = grid.index(0, ai, static_cast<int>(bi)); break;
                case 1: base = grid.index(ai, 0, static_cast<int>(bi)); break;
                default: base = grid.index(ai, static_cast<int>(bi), 0); break;
            }
            for (int p = 0; p < n; ++p) f[p] = field[base + p * stride];
            transform_line(f.data(), d.data(), n, w2, v, z);
            for (int p = 0; p < n; ++p) field[base + p * stride] = d[p];
        }
    });
}

}  // namespace

std::vector<double> squared_distance_transform(const VesselMask& mask) {
    require_binary(mask);
    const std::size_t fg = count_foreground(mask);
    if (fg == 0) {
        throw NumericalError("distance transform: mask has no foreground voxel");
    }
    if (fg == mask.size()) {
        throw NumericalError("distance transform: mask has no background voxel");
    }
    std::vector<double> field(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        field[i] = mask[i] ? kInf : 0.0;
    }
    for (int axis = 0; axis < 3; ++axis) {
        transform_axis(field, mask.grid(), axis);
    }
    return field;
}

DistanceMap distance_transform(const VesselMask& mask) {
    const auto sq = squared_distance_transform(mask);
    DistanceMap out(mask.grid());
    for (std::size_t i = 0; i < sq.size(); ++i) {
        out[i] = static_cast<float>(std::sqrt(sq[i]));
    }
    return out;
}

}  // namespace vtopo
