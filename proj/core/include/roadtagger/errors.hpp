#pragma once

#include <stdexcept>
#include <string>

namespace roadtagger {

// Malformed input documents (bad JSON, bad XML, bad config keys).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid input that violates a data contract
// (missing node references, vertex-set mismatches, empty loss sets).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape mismatches and misuse of the tape.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values produced by a forward pass, or training divergence.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace roadtagger
