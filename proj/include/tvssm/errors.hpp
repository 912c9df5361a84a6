#pragma once

#include <stdexcept>
#include <string>

namespace tvssm {

// Bad shapes, out-of-range arguments, malformed configs.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf encountered in a forward pass or in gradients.
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Missing, unreadable or corrupt files.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tvssm
