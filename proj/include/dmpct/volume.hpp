#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmpct/grid.hpp"
#include "dmpct/planar.hpp"

namespace dmpct {

/// Millimetres per voxel. Carried as metadata only.
struct Spacing {
    float x = 1.0f;
    float y = 1.0f;
    float z = 1.0f;

    friend bool operator==(const Spacing&, const Spacing&) = default;
};

/// Raw intensities in HU-like units.
class Volume {
public:
    Volume() = default;
    Volume(Grid3<float> voxels, Spacing spacing = {}) : voxels_(std::move(voxels)), spacing_(spacing) {
        for (float v : voxels_.data())
            if (!std::isfinite(v)) throw InvalidArgument("volume contains a non-finite intensity");
    }
    Volume(Dims dims, std::vector<float> voxels, Spacing spacing = {})
        : Volume(Grid3<float>(dims, std::move(voxels)), spacing) {}

    const Dims& dims() const noexcept { return voxels_.dims(); }
    const Spacing& spacing() const noexcept { return spacing_; }
    const Grid3<float>& voxels() const noexcept { return voxels_; }
    float operator()(std::uint32_t x, std::uint32_t y, std::uint32_t z) const noexcept { return voxels_(x, y, z); }

    friend bool operator==(const Volume&, const Volume&) = default;

private:
    Grid3<float> voxels_;
    Spacing spacing_;
};

/// Organ labels 0..K, 0 = background.
class LabelMask {
public:
    LabelMask() = default;
    LabelMask(Grid3<std::uint8_t> labels, std::uint16_t num_classes)
        : labels_(std::move(labels)), num_classes_(num_classes) {
        if (num_classes_ > 255) throw InvalidArgument("num_classes must fit in a label byte (<= 255)");
        for (std::uint8_t v : labels_.data())
            if (v > num_classes_)
                throw InvalidArgument("label " + std::to_string(v) + " exceeds K=" + std::to_string(num_classes_));
    }
    LabelMask(Dims dims, std::vector<std::uint8_t> labels, std::uint16_t num_classes)
        : LabelMask(Grid3<std::uint8_t>(dims, std::move(labels)), num_classes) {}

    const Dims& dims() const noexcept { return labels_.dims(); }
    std::uint16_t num_classes() const noexcept { return num_classes_; }
    const Grid3<std::uint8_t>& labels() const noexcept { return labels_; }
    std::uint8_t operator()(std::uint32_t x, std::uint32_t y, std::uint32_t z) const noexcept {
        return labels_(x, y, z);
    }

    friend bool operator==(const LabelMask&, const LabelMask&) = default;

private:
    Grid3<std::uint8_t> labels_;
    std::uint16_t num_classes_ = 0;
};

struct WindowSpec {
    float lo = 0.0f;
    float hi = 1.0f;

    bool valid() const noexcept { return std::isfinite(lo) && std::isfinite(hi) && hi - lo > 0.0f; }
    friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

/// Abdominal soft tissue, liver-ish, and wide windows.
inline std::vector<WindowSpec> default_windows() {
    return {{-125.0f, 275.0f}, {-160.0f, 240.0f}, {-1000.0f, 1000.0f}};
}

/// Clamps `raw` into the window and maps it affinely so lo -> 0 and hi -> 1.
inline float window_rescale(float raw, const WindowSpec& w) noexcept {
    const double lo = w.lo, hi = w.hi;
    const double v = std::clamp(double(raw), lo, hi);
    return static_cast<float>((v - lo) / (hi - lo));
}

/// One 2D slice expressed as one [0,1] channel per window.
struct ChannelizedSlice {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<Slice2<float>> channels;

    std::size_t pixels() const noexcept { return std::size_t(width) * height; }
    std::size_t num_channels() const noexcept { return channels.size(); }
};

/// Applies every window to an already-extracted intensity slice.
inline ChannelizedSlice channelize(const Slice2<float>& raw, std::span<const WindowSpec> windows) {
    if (windows.empty()) throw InvalidArgument("channelize needs at least one window");
    ChannelizedSlice out{raw.width, raw.height, {}};
    out.channels.reserve(windows.size());
    for (const WindowSpec& w : windows) {
        if (!w.valid()) throw InvalidArgument("window hi must exceed lo");
        Slice2<float> ch(raw.width, raw.height);
        for (std::size_t i = 0; i < raw.size(); ++i) ch.data[i] = window_rescale(raw.data[i], w);
        out.channels.push_back(std::move(ch));
    }
    return out;
}

inline ChannelizedSlice channelize(const Volume& volume, std::span<const WindowSpec> windows, Plane plane,
                                   std::uint32_t index) {
    if (windows.empty()) throw InvalidArgument("channelize needs at least one window");
    return channelize(extract_slice(volume.voxels(), plane, index), windows);
}

/// Channelizes every slice of `volume` along `plane`.
inline std::vector<ChannelizedSlice> channelize_all(const Volume& volume, std::span<const WindowSpec> windows,
                                                    Plane plane) {
    std::vector<ChannelizedSlice> out;
    const SliceStack<float> raw = slice(volume.voxels(), plane);
    out.reserve(raw.count());
    for (const auto& s : raw.slices) out.push_back(channelize(s, windows));
    return out;
}

} // namespace dmpct
