#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmpct/grid.hpp"

namespace dmpct {

/// The three orthogonal slicing planes. Enumerator order is the fixed priority
/// order used to break ties: Sagittal first, then Coronal, then Axial.
///
/// Axis convention (x fastest storage):
///   Sagittal slices index x, in-plane (width, height) = (H, D)
///   Coronal  slices index y, in-plane (width, height) = (W, D)
///   Axial    slices index z, in-plane (width, height) = (W, H)
enum class Plane : std::uint8_t { Sagittal = 0, Coronal = 1, Axial = 2 };

inline constexpr std::array<Plane, 3> kPlanes = {Plane::Sagittal, Plane::Coronal, Plane::Axial};

constexpr std::size_t plane_index(Plane p) noexcept { return static_cast<std::size_t>(p); }

constexpr std::string_view plane_name(Plane p) noexcept {
    switch (p) {
    case Plane::Sagittal: return "sagittal";
    case Plane::Coronal: return "coronal";
    case Plane::Axial: return "axial";
    }
    return "?";
}

inline std::optional<Plane> parse_plane(std::string_view s) {
    for (Plane p : kPlanes)
        if (plane_name(p) == s) return p;
    return std::nullopt;
}

/// Number of slices a volume of `dims` yields along `p`.
constexpr std::uint32_t plane_extent(const Dims& dims, Plane p) noexcept {
    switch (p) {
    case Plane::Sagittal: return dims.w;
    case Plane::Coronal: return dims.h;
    case Plane::Axial: return dims.d;
    }
    return 0;
}

struct SliceShape {
    std::uint32_t width;
    std::uint32_t height;
};

constexpr SliceShape slice_shape(const Dims& dims, Plane p) noexcept {
    switch (p) {
    case Plane::Sagittal: return {dims.h, dims.d};
    case Plane::Coronal: return {dims.w, dims.d};
    case Plane::Axial: return {dims.w, dims.h};
    }
    return {0, 0};
}

/// Voxel coordinates of in-plane pixel (row, col) on slice `index` of plane `p`.
struct VoxelCoord {
    std::uint32_t x, y, z;
};

constexpr VoxelCoord voxel_of(Plane p, std::uint32_t index, std::uint32_t row, std::uint32_t col) noexcept {
    switch (p) {
    case Plane::Sagittal: return {index, col, row};
    case Plane::Coronal: return {col, index, row};
    case Plane::Axial: return {col, row, index};
    }
    return {0, 0, 0};
}

template <typename T>
struct SliceStack {
    Plane plane = Plane::Axial;
    std::vector<Slice2<T>> slices;

    std::size_t count() const noexcept { return slices.size(); }
};

/// Copies slice `index` of `field` along `p`.
template <typename T>
Slice2<T> extract_slice(const Grid3<T>& field, Plane p, std::uint32_t index) {
    const Dims& dims = field.dims();
    const std::uint32_t extent = plane_extent(dims, p);
    if (index >= extent)
        throw IndexError("slice index " + std::to_string(index) + " out of range for " +
                         std::string(plane_name(p)) + " plane (extent " + std::to_string(extent) + ")");
    const SliceShape shape = slice_shape(dims, p);
    Slice2<T> out(shape.width, shape.height);
    for (std::uint32_t row = 0; row < shape.height; ++row)
        for (std::uint32_t col = 0; col < shape.width; ++col) {
            const VoxelCoord v = voxel_of(p, index, row, col);
            out.at(row, col) = field(v.x, v.y, v.z);
        }
    return out;
}

/// Splits a 3D field into its full stack of 2D slices along `p`.
template <typename T>
SliceStack<T> slice(const Grid3<T>& field, Plane p) {
    SliceStack<T> stack{p, {}};
    const std::uint32_t extent = plane_extent(field.dims(), p);
    stack.slices.reserve(extent);
    for (std::uint32_t i = 0; i < extent; ++i) stack.slices.push_back(extract_slice(field, p, i));
    return stack;
}

/// Reassembles a 3D field from per-slice results; inverse of slice().
template <typename T>
Grid3<T> stack(const SliceStack<T>& slices, const Dims& target) {
    const Plane p = slices.plane;
    const std::uint32_t extent = plane_extent(target, p);
    const SliceShape shape = slice_shape(target, p);
    auto mismatch = [&](const std::string& detail) {
        return DimsMismatch("cannot stack " + std::string(plane_name(p)) + " slices into " +
                            to_string(target) + ": expected " + std::to_string(extent) + " slices of " +
                            std::to_string(shape.width) + "x" + std::to_string(shape.height) + ", " +
                            detail);
    };
    if (slices.count() != extent) throw mismatch("got " + std::to_string(slices.count()) + " slices");
    Grid3<T> out(target);
    for (std::uint32_t i = 0; i < extent; ++i) {
        const Slice2<T>& s = slices.slices[i];
        if (s.width != shape.width || s.height != shape.height || s.size() != std::size_t(s.width) * s.height)
            throw mismatch("slice " + std::to_string(i) + " is " + std::to_string(s.width) + "x" +
                           std::to_string(s.height));
        for (std::uint32_t row = 0; row < shape.height; ++row)
            for (std::uint32_t col = 0; col < shape.width; ++col) {
                const VoxelCoord v = voxel_of(p, i, row, col);
                out(v.x, v.y, v.z) = s.at(row, col);
            }
    }
    return out;
}

} // namespace dmpct
