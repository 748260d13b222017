#pragma once

#include <stdexcept>
#include <string>

namespace cvxq {

// Error categories surfaced by the CLI as one-line machine-parseable
// messages ("error: <category>: <detail>").

struct ActionOutOfBounds : std::runtime_error {
    using std::runtime_error::runtime_error;
    static constexpr const char* category = "action-out-of-bounds";
};

struct StateDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
    static constexpr const char* category = "state-diverged";
};

struct DimensionMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
    static constexpr const char* category = "dimension-mismatch";
};

struct ConfigError : std::runtime_error {
    // `field` is the dotted path of the offending config key.
    ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_name(field) {}
    std::string field_name;
    static constexpr const char* category = "config-parse";
};

struct MalformedFile : std::runtime_error {
    using std::runtime_error::runtime_error;
    static constexpr const char* category = "malformed-file";
};

struct VersionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
    static constexpr const char* category = "version-mismatch";
};

struct EmptyFError : std::runtime_error {
    using std::runtime_error::runtime_error;
    static constexpr const char* category = "empty-F";
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
    static constexpr const char* category = "io";
};

}  // namespace cvxq
