#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace koopman {

/// Base of all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: dimensions, ranges, malformed files, unknown tags.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: divergence, ill-conditioning, undefined logarithm.
class NumericalError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public NumericalError {
public:
    DivergenceError(std::size_t step, const std::string& what)
        : NumericalError(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class NoPrincipalLogError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class IllConditionedError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SamplingError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace koopman
