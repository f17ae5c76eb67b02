#pragma once

#include <stdexcept>
#include <string>

namespace metainit {

// Base class for every error the toolkit throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or size disagreement between operands.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid argument, configuration value, or malformed in-memory data.
struct ValidationError : Error {
    using Error::Error;
};

// Malformed or truncated on-disk data.
struct FormatError : Error {
    using Error::Error;
};

// A pool cannot supply the requested episode.
struct CapacityError : Error {
    using Error::Error;
};

// A tensor was used with a tape it does not belong to.
struct LineageError : Error {
    using Error::Error;
};

// API contract violation, e.g. a non-scalar loss passed to backward.
struct ContractError : Error {
    using Error::Error;
};

// The architecture cannot serve the request (static head, mismatched N).
struct CapabilityError : Error {
    using Error::Error;
};

// Non-finite value produced while the tape runs in checked mode.
struct NumericError : Error {
    using Error::Error;
};

// Filesystem failure.
struct IoError : Error {
    using Error::Error;
};

} // namespace metainit
