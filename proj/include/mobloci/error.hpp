#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mobloci {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based; 0 when the error is not tied to a line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string &what)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A graph violated a structural precondition (self-loop, dangling vertex, reducibility...).
class GraphError : public Error {
public:
    using Error::Error;
};

/// Linear solve failed or did not meet its tolerance.
class SolverError : public Error {
public:
    using Error::Error;
};

} // namespace mobloci
