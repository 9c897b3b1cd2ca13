#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgxp {

/// Invalid network or experiment configuration (shape mismatch, bad depth, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A function argument violates its precondition.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An API was used out of order (e.g. a tape replayed twice).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Numerical failure during training (NaN gradients and the like).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A collaborator (model, black box) does not honour the contract it was given.
class IntegrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed binary file; carries the byte offset where parsing stopped.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Malformed text file; carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace sgxp
