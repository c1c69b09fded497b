#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include "dmpct/planar.hpp"
#include "dmpct/volume.hpp"

namespace dmpct {

/// Per-pixel class probabilities for one slice, pixel-major: probs[pixel * classes + k].
struct ProbMap {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t classes = 0;
    std::vector<float> probs;

    std::size_t pixels() const noexcept { return std::size_t(width) * height; }
    float at(std::size_t pixel, std::uint32_t k) const noexcept { return probs[pixel * classes + k]; }
    std::span<const float> row(std::size_t pixel) const noexcept {
        return std::span<const float>(probs).subspan(pixel * classes, classes);
    }
};

/// Argmax label and its probability per pixel.
struct HardPrediction {
    Slice2<std::uint8_t> labels;
    Slice2<float> confidence;
};

/// argmax with ties going to the lowest class index.
inline HardPrediction hard_from_probs(const ProbMap& pm) {
    HardPrediction out{Slice2<std::uint8_t>(pm.width, pm.height), Slice2<float>(pm.width, pm.height)};
    for (std::size_t i = 0; i < pm.pixels(); ++i) {
        std::uint32_t best = 0;
        float best_p = pm.at(i, 0);
        for (std::uint32_t k = 1; k < pm.classes; ++k) {
            const float p = pm.at(i, k);
            if (p > best_p) {
                best_p = p;
                best = k;
            }
        }
        out.labels.data[i] = static_cast<std::uint8_t>(best);
        out.confidence.data[i] = best_p;
    }
    return out;
}

/// Pooled-intensity and coordinate features computed per pixel.
struct PatchFeatureSpec {
    std::uint32_t channels = 3;
    std::vector<std::uint32_t> pooling_radii = {1, 2, 4};
    bool include_coords = true;

    std::size_t feature_dim() const noexcept {
        return std::size_t(channels) * (1 + pooling_radii.size()) + (include_coords ? 2 : 0);
    }
    std::uint32_t max_radius() const noexcept {
        std::uint32_t r = 0;
        for (auto v : pooling_radii) r = std::max(r, v);
        return r;
    }
    friend bool operator==(const PatchFeatureSpec&, const PatchFeatureSpec&) = default;
};

/// Slices and labels of one plane, ready for a 2D segmenter.
struct TrainingSet {
    Plane plane = Plane::Axial;
    std::uint16_t num_classes = 0;
    std::vector<ChannelizedSlice> slices;
    std::vector<Slice2<std::uint8_t>> labels;

    std::size_t size() const noexcept { return slices.size(); }
    bool empty() const noexcept { return slices.empty(); }

    void add(ChannelizedSlice s, Slice2<std::uint8_t> y) {
        slices.push_back(std::move(s));
        labels.push_back(std::move(y));
    }
};

enum class Optimizer : std::uint8_t { Sgd, Adam };

struct TrainOptions {
    Plane plane = Plane::Axial;
    std::uint16_t num_classes = 4;
    std::uint64_t iterations = 600;
    double learning_rate = 0.1;
    Optimizer optimizer = Optimizer::Sgd;
    double momentum = 0.9; // heavy-ball coefficient for Sgd, beta1 for Adam
    bool cosine_decay = true; // anneal the step size to 0 over `iterations`
    std::uint32_t batch_slices = 4;
    std::uint32_t batch_pixels = 512; // 0 = every pixel of the slice
    std::uint32_t hidden_width = 0;   // 0 = linear softmax
    PatchFeatureSpec features{};
    std::uint64_t seed = 0;
};

template <typename Model>
struct TrainResult {
    Model model;
    std::vector<double> epoch_loss; // mean mini-batch loss per pass over the set
};

template <typename M>
concept SliceSegmenter = std::copy_constructible<M> && requires(const M& m, const ChannelizedSlice& s) {
    { m.forward(s) } -> std::same_as<ProbMap>;
    { m.predict_hard(s) } -> std::same_as<HardPrediction>;
};

/// Anything that can fit a per-plane segmenter. `warm` is the previous state when
/// warm starting, otherwise null.
template <typename T>
concept SegmenterTrainer = requires(const T& t, const TrainingSet& set, const TrainOptions& opts,
                                    const typename T::model_type* warm) {
    requires SliceSegmenter<typename T::model_type>;
    { t.train(set, opts, warm) } -> std::same_as<TrainResult<typename T::model_type>>;
};

} // namespace dmpct
