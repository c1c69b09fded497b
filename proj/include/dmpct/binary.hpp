#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "dmpct/error.hpp"

namespace dmpct::binary {

static_assert(std::endian::native == std::endian::little, "file codecs assume a little-endian host");

/// Appends little-endian scalars to a byte buffer.
class Writer {
public:
    void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put_array(std::span<const T> values) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
        bytes_.insert(bytes_.end(), p, p + values.size_bytes());
    }

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader. `what` names the format in errors.
class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    void expect_magic(std::string_view m) {
        if (bytes_.size() < m.size() || std::memcmp(bytes_.data(), m.data(), m.size()) != 0)
            throw ParseError(ParseError::Kind::BadMagic, what_ + ": bad magic, expected \"" + std::string(m) + "\"");
        pos_ = m.size();
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get(std::string_view field) {
        need(sizeof(T), field);
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    std::vector<T> get_array(std::size_t count, std::string_view field) {
        if (count > remaining() / sizeof(T))
            throw ParseError(ParseError::Kind::Truncated,
                             what_ + ": truncated " + std::string(field) + " (need " + std::to_string(count) +
                                 " values, " + std::to_string(remaining()) + " bytes left)");
        std::vector<T> out(count);
        std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(T));
        pos_ += count * sizeof(T);
        return out;
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void expect_end() const {
        if (remaining() != 0)
            throw ParseError(ParseError::Kind::BadField,
                             what_ + ": " + std::to_string(remaining()) + " trailing bytes after payload");
    }

    const std::string& what() const noexcept { return what_; }

private:
    void need(std::size_t n, std::string_view field) const {
        if (remaining() < n)
            throw ParseError(ParseError::Kind::Truncated, what_ + ": truncated while reading " + std::string(field));
    }

    std::span<const std::uint8_t> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(ParseError::Kind::Io, "cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size))
        throw ParseError(ParseError::Kind::Io, "failed reading " + path.string());
    return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

} // namespace dmpct::binary
