#pragma once

#include <stdexcept>
#include <string>

namespace certiformer {

// Base class for everything this library throws on purpose.
struct VerifyError : std::runtime_error {
    explicit VerifyError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/vector dimensions do not line up.
struct ShapeError : VerifyError {
    explicit ShapeError(const std::string& msg) : VerifyError("shape error: " + msg) {}
};

// An operand left the domain of the function being bounded (e.g. reciprocal
// of an interval touching zero, sqrt of a negative interval).
struct DomainViolation : VerifyError {
    explicit DomainViolation(const std::string& msg) : VerifyError("domain violation: " + msg) {}
};

// A bound escaped the representable range (exp overflow and friends).
struct RangeOverflow : VerifyError {
    explicit RangeOverflow(const std::string& msg) : VerifyError("range overflow: " + msg) {}
};

// Malformed model files.
struct FormatError : VerifyError {
    explicit FormatError(const std::string& msg) : VerifyError("format error: " + msg) {}
};

struct VersionError : VerifyError {
    explicit VersionError(const std::string& msg) : VerifyError("version error: " + msg) {}
};

// Bad run configuration (CLI flags, perturbation spec).
struct ConfigError : VerifyError {
    explicit ConfigError(const std::string& msg) : VerifyError("config error: " + msg) {}
};

// Empty input after tokenization.
struct EmptyInput : VerifyError {
    explicit EmptyInput(const std::string& msg) : VerifyError("empty input: " + msg) {}
};

// The clean input is already misclassified; there is nothing to certify.
struct CleanMisclassified : VerifyError {
    explicit CleanMisclassified(const std::string& msg) : VerifyError("misclassified: " + msg) {}
};

}  // namespace certiformer
