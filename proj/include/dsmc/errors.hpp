#pragma once

#include <stdexcept>
#include <string>

namespace dsmc {

// Invalid gains or scenario settings, detected at construction/load time.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& msg)
        : std::runtime_error("dimension mismatch: " + msg) {}
};

class SingularGainError : public std::runtime_error {
public:
    explicit SingularGainError(const std::string& msg)
        : std::runtime_error("singular gain: " + msg) {}
};

class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& msg) : std::runtime_error("domain error: " + msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

}  // namespace dsmc
