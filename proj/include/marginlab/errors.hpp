#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace marginlab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument, dimension mismatch, or violated precondition.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the 1-based line and the offending field.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line, std::string field = {})
        : Error(what), line_(line), field_(std::move(field)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

/// A randomized generator could not meet its postcondition within its retry budget.
class GenerationError : public Error {
public:
    using Error::Error;
};

/// An analysis was asked to run on input that violates its hypotheses
/// (tainted trajectory, no stabilization, wrong schedule, ...).
class AnalysisRefused : public Error {
public:
    using Error::Error;
};

}  // namespace marginlab
