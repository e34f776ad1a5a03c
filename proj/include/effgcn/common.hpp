#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace effgcn {

/// Malformed on-disk data. Carries the byte offset at which parsing failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& msg, std::uint64_t offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

/// An operation was called in a state that cannot serve it (e.g. a second
/// backward pass over an already-consumed graph).
class StateError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A configuration violates its declared constraints.
class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dataset contents disagree with the model (e.g. label out of range).
class DataError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A graph or network violates a structural requirement.
class StructureError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace effgcn
