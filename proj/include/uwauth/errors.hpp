#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uwauth {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// GG parameters outside their domain (sigma <= 0, beta out of bounds, ...).
struct ParameterDomainError : Error {
    using Error::Error;
};

/// Sample set too small or with zero spread.
struct DegenerateSampleError : Error {
    using Error::Error;
};

/// One EM component lost (almost) all responsibility mass.
struct ComponentCollapseError : Error {
    ComponentCollapseError(int component, double mass)
        : Error("mixture component " + std::to_string(component) +
                " collapsed (responsibility mass " + std::to_string(mass) + ")"),
          component(component), mass(mass) {}
    int component;
    double mass;
};

struct NumericError : Error {
    using Error::Error;
};

/// Invalid configuration. `key` names the offending entry when known.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg, std::string key = {})
        : Error(key.empty() ? msg : key + ": " + msg), key(std::move(key)) {}
    std::string key;
};

struct ParseError : Error {
    ParseError(std::size_t line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line(line) {}
    std::size_t line;
};

}  // namespace uwauth
