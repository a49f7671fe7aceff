#pragma once

#include <stdexcept>
#include <string>

namespace detfuse {

// Error categories map one-to-one onto the C API status codes and CLI exit codes.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input files, invariant violations, cross-fold leakage.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Optimizer breakdown, non-finite values, degenerate fits.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace detfuse
