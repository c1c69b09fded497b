#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dmpct/error.hpp"

namespace dmpct {

/// Voxel counts along x (width), y (height) and z (depth).
struct Dims {
    std::uint32_t w = 0;
    std::uint32_t h = 0;
    std::uint32_t d = 0;

    std::size_t count() const noexcept {
        return std::size_t(w) * std::size_t(h) * std::size_t(d);
    }
    bool valid() const noexcept { return w >= 1 && h >= 1 && d >= 1; }

    friend bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d) {
    return std::to_string(d.w) + "x" + std::to_string(d.h) + "x" + std::to_string(d.d);
}

/// Dense 3D field, x fastest, then y, then z.
template <typename T>
class Grid3 {
public:
    using value_type = T;

    Grid3() = default;
    explicit Grid3(Dims dims, T fill = T{}) : dims_(dims) {
        check_dims(dims);
        data_.assign(dims.count(), fill);
    }
    Grid3(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
        check_dims(dims);
        if (data_.size() != dims.count())
            throw DimsMismatch("grid payload has " + std::to_string(data_.size()) +
                               " values, dims " + to_string(dims) + " need " +
                               std::to_string(dims.count()));
    }

    const Dims& dims() const noexcept { return dims_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::size_t index(std::uint32_t x, std::uint32_t y, std::uint32_t z) const noexcept {
        return (std::size_t(z) * dims_.h + y) * dims_.w + x;
    }
    T& operator()(std::uint32_t x, std::uint32_t y, std::uint32_t z) noexcept {
        return data_[index(x, y, z)];
    }
    const T& operator()(std::uint32_t x, std::uint32_t y, std::uint32_t z) const noexcept {
        return data_[index(x, y, z)];
    }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    friend bool operator==(const Grid3&, const Grid3&) = default;

private:
    static void check_dims(const Dims& dims) {
        if (!dims.valid())
            throw InvalidArgument("grid dims must be >= 1 on every axis, got " + to_string(dims));
        constexpr auto max = std::numeric_limits<std::size_t>::max();
        if (std::size_t(dims.w) * dims.h > max / dims.d)
            throw InvalidArgument("grid dims overflow: " + to_string(dims));
    }

    Dims dims_{};
    std::vector<T> data_;
};

/// Dense 2D field with `width` fastest.
template <typename T>
struct Slice2 {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<T> data;

    Slice2() = default;
    Slice2(std::uint32_t w, std::uint32_t h, T fill = T{})
        : width(w), height(h), data(std::size_t(w) * h, fill) {}

    std::size_t size() const noexcept { return data.size(); }
    T& at(std::uint32_t row, std::uint32_t col) noexcept { return data[std::size_t(row) * width + col]; }
    const T& at(std::uint32_t row, std::uint32_t col) const noexcept {
        return data[std::size_t(row) * width + col];
    }

    friend bool operator==(const Slice2&, const Slice2&) = default;
};

} // namespace dmpct
