#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "vesseltopo/error.hpp"

namespace vtopo {

using Vec3 = Eigen::Vector3d;

/// Integer voxel coordinate (x, y, z).
using Voxel = std::array<int, 3>;

/// Grid extent in voxels.
struct Dims {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    [[nodiscard]] std::size_t count() const noexcept {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    [[nodiscard]] bool contains(int x, int y, int z) const noexcept {
        return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
    }
    [[nodiscard]] bool contains(const Voxel& v) const noexcept { return contains(v[0], v[1], v[2]); }

    friend bool operator==(const Dims&, const Dims&) = default;
};

enum class ElementKind { UInt8, Float32 };

template <typename T>
constexpr ElementKind element_kind_of() {
    static_assert(std::is_same_v<T, std::uint8_t> || std::is_same_v<T, float>,
                  "Volume supports uint8 and float32 elements only");
    if constexpr (std::is_same_v<T, std::uint8_t>) {
        return ElementKind::UInt8;
    } else {
        return ElementKind::Float32;
    }
}

/// Geometry shared by every volume: extent, voxel spacing (mm) and origin (mm).
/// Voxel (i,j,k) has its center at origin + spacing .* (i,j,k).
struct Grid {
    Dims dims;
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    [[nodiscard]] std::size_t index(int x, int y, int z) const noexcept {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims.nx) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims.ny) * static_cast<std::size_t>(z));
    }
    [[nodiscard]] std::size_t index(const Voxel& v) const noexcept { return index(v[0], v[1], v[2]); }

    [[nodiscard]] Voxel voxel(std::size_t idx) const noexcept {
        const auto nx = static_cast<std::size_t>(dims.nx);
        const auto ny = static_cast<std::size_t>(dims.ny);
        return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
    }

    [[nodiscard]] Vec3 to_world(const Voxel& v) const noexcept {
        return origin + spacing.cwiseProduct(Vec3(v[0], v[1], v[2]));
    }
    /// Continuous voxel coordinates of a world position.
    [[nodiscard]] Vec3 to_continuous(const Vec3& p) const noexcept {
        return (p - origin).cwiseQuotient(spacing);
    }
    /// Nearest voxel to a world position (may lie outside the grid).
    [[nodiscard]] Voxel nearest_voxel(const Vec3& p) const noexcept {
        const Vec3 c = to_continuous(p);
        return {static_cast<int>(std::lround(c.x())), static_cast<int>(std::lround(c.y())),
                static_cast<int>(std::lround(c.z()))};
    }

    [[nodiscard]] bool same_geometry(const Grid& other) const noexcept {
        return dims == other.dims && spacing == other.spacing && origin == other.origin;
    }
};

/// Dense scalar 3D grid, x-fastest storage.
template <typename T>
class Volume {
public:
    using value_type = T;

    Volume() = default;

    Volume(Dims dims, Vec3 spacing = Vec3(1, 1, 1), Vec3 origin = Vec3::Zero(), T fill = T{})
        : grid_{dims, spacing, origin} {
        validate();
        data_.assign(dims.count(), fill);
    }

    Volume(Grid grid, T fill = T{}) : grid_(std::move(grid)) {
        validate();
        data_.assign(grid_.dims.count(), fill);
    }

    Volume(Grid grid, std::vector<T> data) : grid_(std::move(grid)), data_(std::move(data)) {
        validate();
        if (data_.size() != grid_.dims.count()) {
            throw InvalidArgument("volume data length " + std::to_string(data_.size()) + " does not match dims (" +
                                  std::to_string(grid_.dims.count()) + " expected)");
        }
    }

    static constexpr ElementKind kind() { return element_kind_of<T>(); }

    [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
    [[nodiscard]] const Dims& dims() const noexcept { return grid_.dims; }
    [[nodiscard]] const Vec3& spacing() const noexcept { return grid_.spacing; }
    [[nodiscard]] const Vec3& origin() const noexcept { return grid_.origin; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] std::span<const T> data() const noexcept { return data_; }
    [[nodiscard]] std::span<T> data() noexcept { return data_; }

    [[nodiscard]] T& operator[](std::size_t i) noexcept { return data_[i]; }
    [[nodiscard]] const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    [[nodiscard]] T& at(int x, int y, int z) noexcept { return data_[grid_.index(x, y, z)]; }
    [[nodiscard]] const T& at(int x, int y, int z) const noexcept { return data_[grid_.index(x, y, z)]; }
    [[nodiscard]] T& at(const Voxel& v) noexcept { return data_[grid_.index(v)]; }
    [[nodiscard]] const T& at(const Voxel& v) const noexcept { return data_[grid_.index(v)]; }

    /// Value at the voxel with coordinates clamped into the grid.
    [[nodiscard]] T clamped(int x, int y, int z) const noexcept {
        const auto& d = grid_.dims;
        x = x < 0 ? 0 : (x >= d.nx ? d.nx - 1 : x);
        y = y < 0 ? 0 : (y >= d.ny ? d.ny - 1 : y);
        z = z < 0 ? 0 : (z >= d.nz ? d.nz - 1 : z);
        return at(x, y, z);
    }

    friend bool operator==(const Volume& a, const Volume& b) {
        return a.grid_.same_geometry(b.grid_) && a.data_ == b.data_;
    }

private:
    void validate() const {
        const auto& d = grid_.dims;
        if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0) {
            throw InvalidArgument("volume dims must be positive");
        }
        if (!(grid_.spacing.array() > 0.0).all() || !grid_.spacing.allFinite()) {
            throw InvalidArgument("volume spacing must be strictly positive");
        }
    }

    Grid grid_;
    std::vector<T> data_;
};

using MaskVolume = Volume<std::uint8_t>;
using FloatVolume = Volume<float>;

/// Binary vessel mask: values in {0,1}.
using VesselMask = MaskVolume;
/// Euclidean distance (mm) to the nearest background voxel center.
using DistanceMap = FloatVolume;

using AnyVolume = std::variant<MaskVolume, FloatVolume>;

/// Throws InvalidArgument unless every voxel is 0 or 1.
void require_binary(const MaskVolume& mask);

[[nodiscard]] std::size_t count_foreground(const MaskVolume& mask);

[[nodiscard]] FloatVolume to_float(const MaskVolume& mask);

/// Trilinear interpolation at a world position; coordinates are clamped into the grid.
[[nodiscard]] double sample_trilinear(const FloatVolume& v, const Vec3& world);

}  // namespace vtopo
