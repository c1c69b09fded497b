#pragma once

// DMPW segmenter checkpoint, little-endian:
//
//   "DMPW" | u16 version=1 | u8 plane | u16 K
//   | u8 channels | u8 n_radii | u32 radii[n_radii] | u8 include_coords
//   | f32 norm_shift[feature_dim] | f32 norm_matrix[feature_dim * feature_dim]
//   | u32 inputs | u32 hidden | u32 classes | u64 rng_seed | u64 step_count
//   | f32 hidden_weights[hidden*inputs] | f32 hidden_bias[hidden]
//   | f32 weights[classes*(hidden ? hidden : inputs)] | f32 bias[classes]

#include <filesystem>

#include "dmpct/backbone.hpp"
#include "dmpct/binary.hpp"
#include "dmpct/volume_io.hpp"

namespace dmpct {

inline std::vector<std::uint8_t> encode_segmenter(const SegmenterState& s) {
    binary::Writer w;
    w.magic("DMPW");
    w.put(kFormatVersion);
    w.put(static_cast<std::uint8_t>(s.plane));
    w.put(s.num_classes);
    w.put(static_cast<std::uint8_t>(s.features.channels));
    w.put(static_cast<std::uint8_t>(s.features.pooling_radii.size()));
    for (std::uint32_t r : s.features.pooling_radii) w.put(r);
    w.put(static_cast<std::uint8_t>(s.features.include_coords ? 1 : 0));
    if (s.norm.size() != s.features.feature_dim() || !s.norm.valid())
        throw InvalidArgument("input normalisation width differs from feature width");
    w.put_array(std::span<const float>(s.norm.shift));
    w.put_array(std::span<const float>(s.norm.matrix));
    w.put(s.params.inputs);
    w.put(s.params.hidden);
    w.put(s.params.classes);
    w.put(s.rng_seed);
    w.put(s.step_count);
    w.put_array(std::span<const float>(s.params.hidden_weights));
    w.put_array(std::span<const float>(s.params.hidden_bias));
    w.put_array(std::span<const float>(s.params.weights));
    w.put_array(std::span<const float>(s.params.bias));
    return w.bytes();
}

inline SegmenterState decode_segmenter(std::span<const std::uint8_t> bytes, std::string what = "DMPW") {
    binary::Reader r(bytes, std::move(what));
    auto bad = [&](const std::string& m) { return ParseError(ParseError::Kind::BadField, r.what() + ": " + m); };
    r.expect_magic("DMPW");
    const auto version = r.get<std::uint16_t>("version");
    if (version != kFormatVersion)
        throw ParseError(ParseError::Kind::BadVersion, r.what() + ": unsupported version " + std::to_string(version));
    SegmenterState s;
    const auto plane = r.get<std::uint8_t>("plane");
    if (plane > 2) throw bad("plane tag " + std::to_string(plane));
    s.plane = static_cast<Plane>(plane);
    s.num_classes = r.get<std::uint16_t>("K");
    if (s.num_classes == 0 || s.num_classes > 255) throw bad("K=" + std::to_string(s.num_classes));
    s.features.channels = r.get<std::uint8_t>("channels");
    const auto n_radii = r.get<std::uint8_t>("n_radii");
    s.features.pooling_radii.clear();
    for (std::uint8_t i = 0; i < n_radii; ++i) s.features.pooling_radii.push_back(r.get<std::uint32_t>("radius"));
    for (std::uint32_t rad : s.features.pooling_radii)
        if (rad > 1024) throw bad("pooling radius " + std::to_string(rad));
    const auto coords = r.get<std::uint8_t>("include_coords");
    if (coords > 1) throw bad("include_coords flag " + std::to_string(coords));
    s.features.include_coords = coords == 1;
    if (s.features.channels == 0 || s.features.feature_dim() > 1024) throw bad("feature spec out of range");
    s.norm.shift = r.get_array<float>(s.features.feature_dim(), "norm shift");
    s.norm.matrix = r.get_array<float>(s.features.feature_dim() * s.features.feature_dim(), "norm matrix");
    const auto inputs = r.get<std::uint32_t>("inputs");
    const auto hidden = r.get<std::uint32_t>("hidden");
    const auto classes = r.get<std::uint32_t>("classes");
    if (inputs != s.features.feature_dim()) throw bad("input width disagrees with feature spec");
    if (classes != std::uint32_t(s.num_classes) + 1) throw bad("class count must be K+1");
    if (hidden > (1u << 16)) throw bad("hidden width " + std::to_string(hidden));
    s.rng_seed = r.get<std::uint64_t>("rng_seed");
    s.step_count = r.get<std::uint64_t>("step_count");
    s.params = Parameters<float>(inputs, hidden, classes);
    s.params.hidden_weights = r.get_array<float>(s.params.hidden_weights.size(), "hidden weights");
    s.params.hidden_bias = r.get_array<float>(s.params.hidden_bias.size(), "hidden bias");
    s.params.weights = r.get_array<float>(s.params.weights.size(), "weights");
    s.params.bias = r.get_array<float>(s.params.bias.size(), "bias");
    r.expect_end();
    if (!s.finite()) throw bad("non-finite parameter");
    return s;
}

inline void save_segmenter(const SegmenterState& s, const std::filesystem::path& path) {
    binary::write_file(path, encode_segmenter(s));
}
inline SegmenterState load_segmenter(const std::filesystem::path& path) {
    return decode_segmenter(binary::read_file(path), path.string());
}

} // namespace dmpct
