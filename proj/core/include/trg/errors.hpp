#pragma once

#include <stdexcept>
#include <string>

namespace trg {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between operands (message names both shapes).
struct DimensionError : Error {
    using Error::Error;
};

// An operation was asked to run in a configuration it does not support
// (e.g. a conv kernel geometry outside the fixed set), or a run
// configuration failed validation.
struct ConfigError : Error {
    using Error::Error;
};

// API contract violation, e.g. backward() on a non-scalar.
struct ContractError : Error {
    using Error::Error;
};

// NaN/Inf showed up where finite values are required.
struct NumericError : Error {
    using Error::Error;
};

// Batch statistics cannot be formed (single-element normalization batch).
struct DegenerateStatsError : Error {
    using Error::Error;
};

// Event grammar inconsistencies and frame-sampling violations.
struct DataError : Error {
    using Error::Error;
};

// Binary file problems, one distinct type per failure mode.
struct IoError : Error {
    using Error::Error;
};
struct BadMagicError : IoError {
    using IoError::IoError;
};
struct VersionError : IoError {
    using IoError::IoError;
};
struct TruncatedFileError : IoError {
    using IoError::IoError;
};

// CSV parse failures (message carries the line number).
struct CsvError : Error {
    using Error::Error;
};

// A metric is undefined on the given input (e.g. mAP with no positives).
struct MetricError : Error {
    using Error::Error;
};

// Training produced a non-finite loss; message names the offending step.
struct DivergenceError : Error {
    using Error::Error;
};

}  // namespace trg
