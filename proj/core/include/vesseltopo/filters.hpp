#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "vesseltopo/volume.hpp"

namespace vtopo {

/// Separable Gaussian convolution with sigma in mm (converted per axis using
/// the voxel spacing). The kernel is truncated at 3 sigma and renormalized;
/// borders use edge clamping. sigma == 0 returns a copy.
[[nodiscard]] FloatVolume gaussian_smooth(const FloatVolume& v, double sigma_mm);

/// Central-difference gradient (per mm) at a voxel, one-sided at the grid border.
[[nodiscard]] Vec3 gradient_at(const FloatVolume& v, const Voxel& p);

/// Central-difference Hessian (per mm^2) at a voxel, with edge clamping.
[[nodiscard]] Eigen::Matrix3d hessian_at(const FloatVolume& v, const Voxel& p);

/// Eigen decomposition of a symmetric 3x3 matrix with eigenvalues ordered by
/// increasing magnitude, |l1| <= |l2| <= |l3|. Columns of `vectors` match.
struct SortedEigen {
    Vec3 values;
    Eigen::Matrix3d vectors;
};
[[nodiscard]] SortedEigen sorted_eigen(const Eigen::Matrix3d& m);

struct VesselnessParams {
    double alpha = 0.5;
    double beta = 0.5;
    /// Fraction of the largest Hessian Frobenius norm used as the structure
    /// normalizer gamma (computed per scale).
    double gamma_fraction = 0.5;
};

/// Multi-scale Hessian tubularity for bright tubes on a dark background. The
/// per-voxel response is the maximum over scales; the result is min-max
/// normalized to [0,1] (a volume with no response is all zeros).
[[nodiscard]] FloatVolume vesselness_enhance(const FloatVolume& v, const std::vector<double>& scales_mm,
                                             const VesselnessParams& params = {});

}  // namespace vtopo
