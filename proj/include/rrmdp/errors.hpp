#pragma once

#include <stdexcept>
#include <string>

namespace rrmdp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A model (kernel, rewards, discount, initial distribution) violates its invariants.
class InvalidModel : public Error {
public:
    using Error::Error;
};

/// A configuration value or file is malformed or inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An argument lies outside the domain of the operation (negative radius, non-positive Z, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Overflow guard tripped, singular linear system, or a non-finite intermediate.
class NumericError : public Error {
public:
    using Error::Error;
};

/// An iterative solver exhausted its iteration budget.
class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

} // namespace rrmdp
