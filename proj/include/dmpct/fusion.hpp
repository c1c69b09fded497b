#pragma once

// Multi-planar fusion of per-plane hard predictions.
//
// For each voxel: if any two planes agree, the agreed label wins. Otherwise the
// label of the plane with the highest confidence (max class probability) wins,
// with ties resolved by plane priority Sagittal > Coronal > Axial.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "dmpct/parallel.hpp"
#include "dmpct/planar.hpp"
#include "dmpct/segmenter.hpp"
#include "dmpct/volume.hpp"

namespace dmpct {

/// Provenance byte: bit 2 set when the confidence fallback fired; the low two bits
/// hold the plane whose label was taken (for agreement, the highest-priority
/// plane among those that agree).
namespace provenance {
inline constexpr std::uint8_t kFallbackBit = 4;
inline constexpr std::uint8_t kMaxValue = kFallbackBit | 2;

constexpr bool is_fallback(std::uint8_t p) noexcept { return (p & kFallbackBit) != 0; }
constexpr Plane winner(std::uint8_t p) noexcept { return static_cast<Plane>(p & 3); }
constexpr std::uint8_t agreement(Plane p) noexcept { return static_cast<std::uint8_t>(p); }
constexpr std::uint8_t fallback(Plane p) noexcept { return kFallbackBit | static_cast<std::uint8_t>(p); }
} // namespace provenance

struct VoxelDecision {
    std::uint8_t label;
    std::uint8_t provenance;

    friend bool operator==(const VoxelDecision&, const VoxelDecision&) = default;
};

/// Labels and confidences are indexed by plane: [Sagittal, Coronal, Axial].
constexpr VoxelDecision fuse_voxel(std::array<std::uint8_t, 3> labels, std::array<float, 3> conf) noexcept {
    if (labels[0] == labels[1] || labels[0] == labels[2]) return {labels[0], provenance::agreement(Plane::Sagittal)};
    if (labels[1] == labels[2]) return {labels[1], provenance::agreement(Plane::Coronal)};
    std::size_t best = 0;
    for (std::size_t v = 1; v < 3; ++v)
        if (conf[v] > conf[best]) best = v;
    return {labels[best], provenance::fallback(static_cast<Plane>(best))};
}

/// One plane's hard labels and confidences, reassembled into the volume frame.
struct PlanePrediction {
    Plane plane = Plane::Axial;
    Grid3<std::uint8_t> labels;
    Grid3<float> confidence;
};

struct FusedMask {
    LabelMask labels;
    std::optional<Grid3<std::uint8_t>> provenance;

    /// Voxel counts per provenance value (index = provenance byte).
    std::array<std::size_t, provenance::kMaxValue + 1> branch_counts() const {
        std::array<std::size_t, provenance::kMaxValue + 1> counts{};
        if (provenance)
            for (std::uint8_t p : provenance->data()) ++counts[p];
        return counts;
    }
};

struct FusionOptions {
    bool record_provenance = true;
    unsigned workers = 1;
};

/// Voxelwise fusion. `predictions[i]` must be the prediction of plane i.
inline FusedMask fuse_volume(std::span<const PlanePrediction, 3> predictions, std::uint16_t num_classes,
                             const FusionOptions& opts = {}) {
    const Dims dims = predictions[0].labels.dims();
    for (Plane p : kPlanes) {
        const PlanePrediction& pred = predictions[plane_index(p)];
        if (pred.plane != p)
            throw InvalidArgument("prediction slot " + std::to_string(plane_index(p)) + " holds the " +
                                  std::string(plane_name(pred.plane)) + " plane, expected " +
                                  std::string(plane_name(p)));
        if (pred.labels.dims() != dims || pred.confidence.dims() != dims)
            throw DimsMismatch(std::string(plane_name(p)) + " prediction dims " + to_string(pred.labels.dims()) +
                               " / " + to_string(pred.confidence.dims()) + " differ from " + to_string(dims));
    }
    const std::size_t n = dims.count();
    std::vector<std::uint8_t> out(n);
    std::optional<Grid3<std::uint8_t>> prov;
    if (opts.record_provenance) prov.emplace(dims);

    constexpr std::size_t kChunk = 1 << 14;
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    parallel_for(chunks, opts.workers, [&](std::size_t c) {
        const std::size_t end = std::min(n, (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) {
            const VoxelDecision d =
                fuse_voxel({predictions[0].labels[i], predictions[1].labels[i], predictions[2].labels[i]},
                           {predictions[0].confidence[i], predictions[1].confidence[i], predictions[2].confidence[i]});
            out[i] = d.label;
            if (prov) (*prov)[i] = d.provenance;
        }
    });
    return FusedMask{LabelMask(dims, std::move(out), num_classes), std::move(prov)};
}

inline FusedMask fuse_volume(const std::array<PlanePrediction, 3>& predictions, std::uint16_t num_classes,
                             const FusionOptions& opts = {}) {
    return fuse_volume(std::span<const PlanePrediction, 3>(predictions), num_classes, opts);
}

/// Three per-plane models, indexed by plane.
template <typename Model>
struct PlaneModelBundle {
    std::array<Model, 3> models;

    const Model& operator[](Plane p) const noexcept { return models[plane_index(p)]; }
    Model& operator[](Plane p) noexcept { return models[plane_index(p)]; }
};

/// Runs one plane's model over every slice of `volume` and stacks the hard labels
/// and confidences back into 3D.
template <SliceSegmenter Model>
PlanePrediction predict_plane(const Model& model, const Volume& volume, std::span<const WindowSpec> windows, Plane p) {
    const std::uint32_t extent = plane_extent(volume.dims(), p);
    SliceStack<std::uint8_t> labels{p, {}};
    SliceStack<float> conf{p, {}};
    labels.slices.reserve(extent);
    conf.slices.reserve(extent);
    for (std::uint32_t i = 0; i < extent; ++i) {
        HardPrediction hp = model.predict_hard(channelize(volume, windows, p, i));
        labels.slices.push_back(std::move(hp.labels));
        conf.slices.push_back(std::move(hp.confidence));
    }
    return PlanePrediction{p, stack(labels, volume.dims()), stack(conf, volume.dims())};
}

struct VolumePrediction {
    FusedMask fused;
    std::array<PlanePrediction, 3> planes;
};

/// channelize -> per-plane slice inference -> stack -> fuse.
template <SliceSegmenter Model>
VolumePrediction predict_volume(const PlaneModelBundle<Model>& bundle, const Volume& volume,
                                std::span<const WindowSpec> windows, std::uint16_t num_classes,
                                const FusionOptions& opts = {}) {
    std::array<PlanePrediction, 3> planes;
    for (Plane p : kPlanes) {
        planes[plane_index(p)] = predict_plane(bundle[p], volume, windows, p);
        for (std::uint8_t v : planes[plane_index(p)].labels.data())
            if (v > num_classes)
                throw InvalidArgument(std::string(plane_name(p)) + " model predicted label " + std::to_string(v) +
                                      " above K=" + std::to_string(num_classes));
    }
    FusedMask fused = fuse_volume(planes, num_classes, opts);
    return VolumePrediction{std::move(fused), std::move(planes)};
}

} // namespace dmpct
