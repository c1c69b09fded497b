#pragma once

// DMPV / DMPL codecs. All fields little-endian.
//
//   DMPV: "DMPV" | u16 version=1 | u32 W,H,D | f32 sx,sy,sz | f32 payload[W*H*D]
//   DMPL: "DMPL" | u16 version=1 | u32 W,H,D | u16 K        | u8  payload[W*H*D]

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dmpct/binary.hpp"
#include "dmpct/volume.hpp"

namespace dmpct {

inline constexpr std::uint16_t kFormatVersion = 1;

// Largest voxel count a file may declare (2^31).
inline constexpr std::uint64_t kMaxFileVoxels = std::uint64_t(1) << 31;

namespace detail {

inline Dims read_dims(binary::Reader& r) {
    Dims d;
    d.w = r.get<std::uint32_t>("W");
    d.h = r.get<std::uint32_t>("H");
    d.d = r.get<std::uint32_t>("D");
    const std::uint64_t plane = std::uint64_t(d.w) * d.h;
    if (d.w == 0 || d.h == 0 || d.d == 0 || plane > kMaxFileVoxels / d.d)
        throw ParseError(ParseError::Kind::DimsOverflow, r.what() + ": invalid dims " + to_string(d));
    return d;
}

inline void read_version(binary::Reader& r) {
    const auto v = r.get<std::uint16_t>("version");
    if (v != kFormatVersion)
        throw ParseError(ParseError::Kind::BadVersion, r.what() + ": unsupported version " + std::to_string(v));
}

} // namespace detail

inline std::vector<std::uint8_t> encode_volume(const Volume& v) {
    binary::Writer w;
    w.magic("DMPV");
    w.put(kFormatVersion);
    w.put(v.dims().w);
    w.put(v.dims().h);
    w.put(v.dims().d);
    w.put(v.spacing().x);
    w.put(v.spacing().y);
    w.put(v.spacing().z);
    w.put_array(v.voxels().data());
    return w.bytes();
}

inline Volume decode_volume(std::span<const std::uint8_t> bytes, std::string what = "DMPV") {
    binary::Reader r(bytes, std::move(what));
    r.expect_magic("DMPV");
    detail::read_version(r);
    const Dims dims = detail::read_dims(r);
    Spacing sp;
    sp.x = r.get<float>("sx");
    sp.y = r.get<float>("sy");
    sp.z = r.get<float>("sz");
    auto payload = r.get_array<float>(dims.count(), "voxel payload");
    r.expect_end();
    for (float f : payload)
        if (!std::isfinite(f)) throw ParseError(ParseError::Kind::BadField, r.what() + ": non-finite voxel");
    return Volume(dims, std::move(payload), sp);
}

inline std::vector<std::uint8_t> encode_mask(const LabelMask& m) {
    binary::Writer w;
    w.magic("DMPL");
    w.put(kFormatVersion);
    w.put(m.dims().w);
    w.put(m.dims().h);
    w.put(m.dims().d);
    w.put(m.num_classes());
    w.put_array(m.labels().data());
    return w.bytes();
}

inline LabelMask decode_mask(std::span<const std::uint8_t> bytes, std::string what = "DMPL") {
    binary::Reader r(bytes, std::move(what));
    r.expect_magic("DMPL");
    detail::read_version(r);
    const Dims dims = detail::read_dims(r);
    const auto k = r.get<std::uint16_t>("K");
    if (k > 255) throw ParseError(ParseError::Kind::BadField, r.what() + ": K=" + std::to_string(k) + " exceeds 255");
    auto payload = r.get_array<std::uint8_t>(dims.count(), "label payload");
    r.expect_end();
    for (std::uint8_t v : payload)
        if (v > k)
            throw ParseError(ParseError::Kind::LabelRange,
                             r.what() + ": label " + std::to_string(v) + " exceeds K=" + std::to_string(k));
    return LabelMask(dims, std::move(payload), k);
}

inline void save_volume(const Volume& v, const std::filesystem::path& path) {
    binary::write_file(path, encode_volume(v));
}
inline Volume load_volume(const std::filesystem::path& path) {
    return decode_volume(binary::read_file(path), path.string());
}
inline void save_mask(const LabelMask& m, const std::filesystem::path& path) {
    binary::write_file(path, encode_mask(m));
}
inline LabelMask load_mask(const std::filesystem::path& path) {
    return decode_mask(binary::read_file(path), path.string());
}

} // namespace dmpct
