// SPDX-License-Identifier: MIT
#pragma once

#include <stdexcept>
#include <string>

namespace fbsde {

/// Argument outside the mathematical domain of an operation
/// (Hurst index, negative time, negative variance, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Two inputs that must share a grid do not.
class GridMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed (factorization, embedding, implicit solve).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration or model file.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fbsde
