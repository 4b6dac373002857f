#pragma once

#include <stdexcept>
#include <string>

namespace feddhad {

// Shape/index mismatches between tensors, masks, and specs.
struct structural_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite values, failed decompositions, degenerate estimates.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad experiment configuration (files, fields, impossible splits).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Requests exceeding hard resource caps (e.g. Hessian block dimension).
struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace feddhad
