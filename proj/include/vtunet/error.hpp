#pragma once

#include <stdexcept>
#include <string>

namespace vtunet {

/// Base of every error the library throws. `category()` is a short,
/// machine-parseable tag the CLI prints on failure.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class TapeError : public Error {
public:
    explicit TapeError(const std::string& what) : Error("tape", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io", what) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format", what) {}
};

class MetricError : public Error {
public:
    explicit MetricError(const std::string& what) : Error("metric", what) {}
};

}  // namespace vtunet
