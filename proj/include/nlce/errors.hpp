#pragma once

#include <stdexcept>
#include <string>

namespace nlce {

// Exit-code contract: 0 success, 2 config, 3 data, 4 internal consistency.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InternalError : std::runtime_error {
    explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape / dimension mismatches between numeric objects.
struct ShapeError : DataError {
    explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

// Zero vectors, empty spectra and other degenerate numeric inputs.
struct DegenerateInputError : DataError {
    explicit DegenerateInputError(const std::string& msg) : DataError(msg) {}
};

struct LookupError : DataError {
    explicit LookupError(const std::string& msg) : DataError(msg) {}
};

struct ParseError : DataError {
    explicit ParseError(const std::string& msg) : DataError(msg) {}
};

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const InternalError*>(&e)) return 4;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    return 1;
}

}  // namespace nlce
