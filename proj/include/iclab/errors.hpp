#pragma once

#include <stdexcept>
#include <string>

namespace iclab {

// Bad configs, bad shapes, missing files. CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values, diverged training, rejection caps. CLI exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace iclab
