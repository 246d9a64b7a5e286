#pragma once

#include <stdexcept>

namespace eegdec {

// Shape or extent mismatch between tensors/layers.
struct DimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller violated an API precondition.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Invalid configuration value or combination.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or truncated on-disk data.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Subject id outside the configured range.
struct SubjectError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Signal shorter than the requested segment or chunk.
struct TooShortError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace eegdec
