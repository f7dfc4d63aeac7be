#include "vesseltopo/filters.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "vesseltopo/parallel.hpp"

namespace vtopo {
namespace {

std::vector<double> gaussian_kernel(double sigma_vox) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma_vox));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma_vox * sigma_vox));
        k[i + radius] = w;
        sum += w;
    }
    for (auto& w : k) w /= sum;
    return k;
}

void convolve_axis(const std::vector<double>& src, std::vector<double>& dst, const Grid& grid, int axis,
                   const std::vector<double>& kernel) {
    const auto& dims = grid.dims;
    const int n = axis == 0 ? dims.nx : (axis == 1 ? dims.ny : dims.nz);
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(dims.nx)
                                                          : static_cast<std::size_t>(dims.nx) * dims.ny);
    const int a = axis == 0 ? dims.ny : dims.nx;
    const int b = axis == 2 ? dims.ny : dims.nz;
    const int radius = static_cast<int>(kernel.size() / 2);
    parallel_for(static_cast<std::size_t>(b), [&](std::size_t bi) {
        std::vector<double> line(n);
        for (int ai = 0; ai < a; ++ai) {
            std::size_t base = 0;
            switch (axis) {
                case 0: base = grid.index(0, ai, static_cast<int>(bi)); break;
                case 1: base = grid.index(ai, 0, static_cast<int>(bi)); break;
                default: base = grid.index(ai, static_cast<int>(bi), 0); break;
            }
            for (int p = 0; p < n; ++p) line[p] = src[base + p * stride];
            for (int p = 0; p < n; ++p) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int q = std::clamp(p + k, 0, n - 1);
                    acc += kernel[k + radius] * line[q];
                }
                dst[base + p * stride] = acc;
            }
        }
    });
}

}  // namespace

FloatVolume gaussian_smooth(const FloatVolume& v, double sigma_mm) {
    if (!(sigma_mm >= 0.0) || !std::isfinite(sigma_mm)) {
        throw InvalidArgument("gaussian_smooth: sigma must be a finite non-negative value");
    }
    if (sigma_mm == 0.0) {
        return v;
    }
    std::vector<double> a(v.data().begin(), v.data().end());
    std::vector<double> b(a.size());
    for (int axis = 0; axis < 3; ++axis) {
        const double sigma_vox = sigma_mm / v.spacing()[axis];
        convolve_axis(a, b, v.grid(), axis, gaussian_kernel(sigma_vox));
        std::swap(a, b);
    }
    FloatVolume out(v.grid());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<float>(a[i]);
    return out;
}

Vec3 gradient_at(const FloatVolume& v, const Voxel& p) {
    Vec3 g;
    for (int axis = 0; axis < 3; ++axis) {
        Voxel lo = p, hi = p;
        const int n = axis == 0 ? v.dims().nx : (axis == 1 ? v.dims().ny : v.dims().nz);
        lo[axis] = std::max(0, p[axis] - 1);
        hi[axis] = std::min(n - 1, p[axis] + 1);
        const int span = hi[axis] - lo[axis];
        g[axis] = span == 0 ? 0.0 : (double(v.at(hi)) - double(v.at(lo))) / (span * v.spacing()[axis]);
    }
    return g;
}

Eigen::Matrix3d hessian_at(const FloatVolume& v, const Voxel& p) {
    auto val = [&](int dx, int dy, int dz) { return double(v.clamped(p[0] + dx, p[1] + dy, p[2] + dz)); };
    const Vec3& s = v.spacing();
    const double c = val(0, 0, 0);
    Eigen::Matrix3d h;
    h(0, 0) = (val(1, 0, 0) - 2 * c + val(-1, 0, 0)) / (s.x() * s.x());
    h(1, 1) = (val(0, 1, 0) - 2 * c + val(0, -1, 0)) / (s.y() * s.y());
    h(2, 2) = (val(0, 0, 1) - 2 * c + val(0, 0, -1)) / (s.z() * s.z());
    h(0, 1) = h(1, 0) = (val(1, 1, 0) - val(1, -1, 0) - val(-1, 1, 0) + val(-1, -1, 0)) / (4 * s.x() * s.y());
    h(0, 2) = h(2, 0) = (val(1, 0, 1) - val(1, 0, -1) - val(-1, 0, 1) + val(-1, 0, -1)) / (4 * s.x() * s.z());
    h(1, 2) = h(2, 1) = (val(0, 1, 1) - val(0, 1, -1) - val(0, -1, 1) + val(0, -1, -1)) / (4 * s.y() * s.z());
    return h;
}

SortedEigen sorted_eigen(const Eigen::Matrix3d& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
    solver.computeDirect(m);
    std::array<int, 3> order{0, 1, 2};
    const Vec3 ev = solver.eigenvalues();
    std::sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(ev[a]) < std::abs(ev[b]); });
    SortedEigen out;
    for (int i = 0; i < 3; ++i) {
        out.values[i] = ev[order[i]];
        out.vectors.col(i) = solver.eigenvectors().col(order[i]);
    }
    return out;
}

FloatVolume vesselness_enhance(const FloatVolume& v, const std::vector<double>& scales_mm,
                               const VesselnessParams& params) {
    if (scales_mm.empty()) {
        throw InvalidArgument("vesselness_enhance: at least one scale is required");
    }
    for (double s : scales_mm) {
        if (!(s > 0.0)) throw InvalidArgument("vesselness_enhance: scales must be positive");
    }
    const auto& grid = v.grid();
    const auto nz = static_cast<std::size_t>(grid.dims.nz);
    std::vector<double> best(v.size(), 0.0);
    std::vector<Vec3> eigenvalues(v.size());
    std::vector<double> frob(v.size());

    for (double sigma : scales_mm) {
        const FloatVolume smoothed = gaussian_smooth(v, sigma);
        const double norm = sigma * sigma;
        parallel_for(nz, [&](std::size_t z) {
            for (int y = 0; y < grid.dims.ny; ++y) {
                for (int x = 0; x < grid.dims.nx; ++x) {
                    const Voxel p{x, y, static_cast<int>(z)};
                    const auto idx = grid.index(p);
                    const Vec3 ev = sorted_eigen(norm * hessian_at(smoothed, p)).values;
                    eigenvalues[idx] = ev;
                    frob[idx] = ev.norm();
                }
            }
        });
        const double max_frob = *std::max_element(frob.begin(), frob.end());
        const double gamma = params.gamma_fraction * max_frob;
        if (!(gamma > 0.0)) continue;
        const double a2 = 2 * params.alpha * params.alpha;
        const double b2 = 2 * params.beta * params.beta;
        const double c2 = 2 * gamma * gamma;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const Vec3& ev = eigenvalues[i];
            if (ev[1] >= 0.0 || ev[2] >= 0.0) continue;
            const double l1 = std::abs(ev[0]), l2 = std::abs(ev[1]), l3 = std::abs(ev[2]);
            const double ra = l2 / l3;
            const double rb = l1 / std::sqrt(l2 * l3);
            const double s = frob[i];
            const double response =
                (1.0 - std::exp(-ra * ra / a2)) * std::exp(-rb * rb / b2) * (1.0 - std::exp(-s * s / c2));
            best[i] = std::max(best[i], response);
        }
    }

    const auto [lo, hi] = std::minmax_element(best.begin(), best.end());
    FloatVolume out(grid, 0.0f);
    const double range = *hi - *lo;
    if (range > 0.0) {
        for (std::size_t i = 0; i < best.size(); ++i) {
            out[i] = static_cast<float>(std::clamp((best[i] - *lo) / range, 0.0, 1.0));
        }
    }
    return out;
}

}  // namespace vtopo
