// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mcle {

// Root of every error the library throws. Callers that only care about
// "something in mcle failed" catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or schema-violating input file.
class ParseError : public Error {
public:
    using Error::Error;
};

// Dataset records reference features that cannot be found.
class IngestionError : public Error {
public:
    using Error::Error;
};

// Shape, capacity or hyperparameter inconsistency.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A precondition on an operation's arguments was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// A value that must be finite was not.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace mcle
