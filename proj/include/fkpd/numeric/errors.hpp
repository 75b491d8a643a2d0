// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fkpd {

/// Raised when array shapes or dimensions do not line up.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN/Inf shows up where a finite value is required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for out-of-range arguments and inconsistent configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised by file readers and writers.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace fkpd
