#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "dmpct/dmpct.hpp"

namespace testutil {

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("dmpct_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline dmpct::Dims random_dims(std::mt19937_64& rng, std::uint32_t max_extent) {
    std::uniform_int_distribution<std::uint32_t> e(1, max_extent);
    return {e(rng), e(rng), e(rng)};
}

inline dmpct::Volume random_volume(std::mt19937_64& rng, dmpct::Dims dims) {
    std::uniform_real_distribution<float> hu(-1200.0f, 1200.0f);
    std::vector<float> v(dims.count());
    for (auto& x : v) x = hu(rng);
    return dmpct::Volume(dims, std::move(v), {0.7f, 0.8f, 2.5f});
}

inline dmpct::LabelMask random_mask(std::mt19937_64& rng, dmpct::Dims dims, std::uint16_t k) {
    std::uniform_int_distribution<int> lab(0, k);
    std::vector<std::uint8_t> v(dims.count());
    for (auto& x : v) x = static_cast<std::uint8_t>(lab(rng));
    return dmpct::LabelMask(dims, std::move(v), k);
}

/// Channelized slice with uniform random values per channel.
inline dmpct::ChannelizedSlice random_slice(std::mt19937_64& rng, std::uint32_t w, std::uint32_t h,
                                            std::uint32_t channels = 3) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    dmpct::ChannelizedSlice s{w, h, {}};
    for (std::uint32_t c = 0; c < channels; ++c) {
        dmpct::Slice2<float> ch(w, h);
        for (auto& x : ch.data) x = u(rng);
        s.channels.push_back(std::move(ch));
    }
    return s;
}

} // namespace testutil

namespace testutil {

/// Segmenter driven by lookup tables: the volume's intensity at a voxel is its linear
/// index, read back through a [0, n] window, and the tables give label and confidence.
struct TableModel {
    std::shared_ptr<const std::vector<std::uint8_t>> labels;
    std::shared_ptr<const std::vector<float>> confidence;
    std::uint32_t classes = 2; // K + 1
    float n = 1.0f;

    std::size_t voxel(float channel) const { return static_cast<std::size_t>(std::lround(double(channel) * n)); }

    dmpct::ProbMap forward(const dmpct::ChannelizedSlice& s) const {
        dmpct::ProbMap pm{s.width, s.height, classes, std::vector<float>(s.pixels() * classes)};
        for (std::size_t i = 0; i < s.pixels(); ++i) {
            const std::size_t v = voxel(s.channels[0].data[i]);
            const float c = (*confidence)[v];
            for (std::uint32_t k = 0; k < classes; ++k) pm.probs[i * classes + k] = (1.0f - c) / float(classes - 1);
            pm.probs[i * classes + (*labels)[v]] = c;
        }
        return pm;
    }
    dmpct::HardPrediction predict_hard(const dmpct::ChannelizedSlice& s) const {
        dmpct::HardPrediction hp{dmpct::Slice2<std::uint8_t>(s.width, s.height), dmpct::Slice2<float>(s.width, s.height)};
        for (std::size_t i = 0; i < s.pixels(); ++i) {
            const std::size_t v = voxel(s.channels[0].data[i]);
            hp.labels.data[i] = (*labels)[v];
            hp.confidence.data[i] = (*confidence)[v];
        }
        return hp;
    }
};

/// Volume whose voxel i holds intensity i, and the single window that exposes it.
inline std::pair<dmpct::Volume, std::vector<dmpct::WindowSpec>> index_volume(dmpct::Dims dims) {
    std::vector<float> v(dims.count());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(i);
    return {dmpct::Volume(dims, std::move(v)), {{0.0f, float(dims.count())}}};
}

/// Model that predicts one constant label with a fixed confidence.
struct ConstantModel {
    std::uint8_t label = 0;
    std::uint32_t classes = 2;
    float confidence = 0.9f;

    dmpct::ProbMap forward(const dmpct::ChannelizedSlice& s) const {
        dmpct::ProbMap pm{s.width, s.height, classes, std::vector<float>(s.pixels() * classes)};
        for (std::size_t i = 0; i < s.pixels(); ++i)
            for (std::uint32_t k = 0; k < classes; ++k)
                pm.probs[i * classes + k] = k == label ? confidence : (1.0f - confidence) / float(classes - 1);
        return pm;
    }
    dmpct::HardPrediction predict_hard(const dmpct::ChannelizedSlice& s) const {
        return {dmpct::Slice2<std::uint8_t>(s.width, s.height, label), dmpct::Slice2<float>(s.width, s.height, confidence)};
    }
};

} // namespace testutil
