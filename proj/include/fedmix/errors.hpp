#pragma once

#include <stdexcept>
#include <string>

namespace fedmix {

// Shape disagreement between grids or parameter vectors.
class DimensionError : public std::invalid_argument {
public:
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Input violates a documented value constraint (range, binarity, weight sum).
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Operation called in a state it does not support (empty input, unlabeled supervision).
class UsageError : public std::logic_error {
public:
    explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

// Experiment configuration is missing, malformed, or out of range.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedmix
