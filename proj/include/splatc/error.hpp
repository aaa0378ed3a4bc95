// Copyright Contributors to the splatc project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace splatc {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A covariance that is not positive definite, or a linear solve against one failed.
class DegenerateCovariance : public Error {
public:
    using Error::Error;
};

/// Malformed file content (missing PLY property, wrong PNG bit depth, ...).
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    IoError(const std::string &what, std::int64_t byte_offset = -1)
        : Error(what), byte_offset_(byte_offset) {}

    /// Offset into the file where reading stopped, or -1 when not applicable.
    std::int64_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::int64_t byte_offset_;
};

class ParseError : public Error {
public:
    ParseError(const std::string &what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Non-finite objective or gradient met during minimization. Carries the
/// last iterate whose objective was finite.
class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string &what, Eigen::VectorXd last_good, double last_value)
        : Error(what), last_good_(std::move(last_good)), last_value_(last_value) {}

    const Eigen::VectorXd &last_good() const noexcept { return last_good_; }
    double last_value() const noexcept { return last_value_; }

private:
    Eigen::VectorXd last_good_;
    double last_value_;
};

} // namespace splatc
