#pragma once

#include <stdexcept>
#include <string>

namespace postdae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad PGM header, bad JSON index, bad checkpoint).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Data that parses but violates a type invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Caller broke an operation precondition (shape mismatch, wrong class count).
class ContractError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Scene generation could not place the anatomy inside the canvas.
class GenerationError : public Error {
public:
    using Error::Error;
};

class FittingError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class TrainingError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

} // namespace postdae
