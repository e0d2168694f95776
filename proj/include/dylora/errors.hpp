#pragma once

#include <stdexcept>
#include <string>

namespace dylora {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BoundsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RankError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace dylora
