#pragma once

#include <stdexcept>
#include <string>

namespace dmpct {

/// Base for every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition (bad dims, empty sets, K mismatch).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Slice index outside the extent of a plane.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Shape disagreement between fields that must line up.
class DimsMismatch : public Error {
public:
    using Error::Error;
};

/// Malformed DMPV / DMPL / DMPW payload. `kind` distinguishes the failure.
class ParseError : public Error {
public:
    enum class Kind { BadMagic, BadVersion, Truncated, LabelRange, DimsOverflow, Io, BadField };

    ParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Numerical failure during SGD (non-finite loss or gradient).
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Line-numbered configuration error.
class ConfigError : public Error {
public:
    ConfigError(int line, const std::string& what)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line), message_(what) {}
    int line() const noexcept { return line_; }
    /// The message without the line prefix.
    const std::string& message() const noexcept { return message_; }

private:
    int line_;
    std::string message_;
};

} // namespace dmpct
