#pragma once

#include <stdexcept>
#include <string>

namespace wdrn {

/// Raised when tensor extents violate an operation's shape contract.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for malformed or inconsistent dataset contents.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for invalid configuration values or keys.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, const std::string& what)
        : std::invalid_argument(what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Raised by the training loop (non-finite loss, empty split, ...).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class CheckpointErrorKind { io, bad_magic, truncated, version_mismatch, shape_mismatch, corrupt };

class CheckpointError : public std::runtime_error {
public:
    CheckpointError(CheckpointErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    CheckpointErrorKind kind() const noexcept { return kind_; }

private:
    CheckpointErrorKind kind_;
};

}  // namespace wdrn
