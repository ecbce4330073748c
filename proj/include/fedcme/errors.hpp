#pragma once

#include <stdexcept>
#include <string>

namespace fedcme {

// Shape/width disagreement between tensors or layers.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Semantic rejection of otherwise well-formed input (bad label, layout mismatch, ...).
struct ValidationError : std::invalid_argument {
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed binary or text input.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Bad run configuration; message names the offending key.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Round-level coordination failure (barrier timeout, aborted exchange).
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedcme
