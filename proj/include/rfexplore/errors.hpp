#pragma once

#include <stdexcept>
#include <string>

namespace rfe {

// Base of all library errors. Subclasses map to distinct CLI exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (bad argument, reward out of
// declared range, malformed policy, ...).
struct ContractError : Error {
    using Error::Error;
};

// The model itself is invalid (validation report non-empty).
struct ModelError : Error {
    using Error::Error;
};

// An estimator cannot run (typically: a layer has no data).
struct EstimationError : Error {
    using Error::Error;
};

// A matrix that must be invertible is numerically singular.
struct SingularityError : Error {
    using Error::Error;
};

// A requested enumeration or grid exceeds its configured cap.
struct SizeError : Error {
    using Error::Error;
};

// File / serialization problems.
struct IoError : Error {
    using Error::Error;
};

// The exploration objective has no feasible mixture at the configured
// threshold. Carries the best constraint value any candidate achieved.
struct InfeasibleError : Error {
    InfeasibleError(const std::string& what, double best_lambda_min)
        : Error(what), best_lambda_min(best_lambda_min) {}
    double best_lambda_min;
};

}  // namespace rfe
