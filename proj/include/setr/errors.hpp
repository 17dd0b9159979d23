#pragma once

#include <stdexcept>
#include <string>

namespace setr {

// Error taxonomy shared by every module. The CLI maps these onto exit codes:
// ConfigError -> 1, DataError -> 2, NumericError -> 3.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or out-of-range axes.
struct DimensionError : Error {
    using Error::Error;
};

// Violated API precondition (double backward, label out of range, ...).
struct ContractError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Malformed, empty or degenerate input data, and I/O failures on data files.
struct DataError : Error {
    using Error::Error;
};

// Non-finite values or a failed numerical verification.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace setr
