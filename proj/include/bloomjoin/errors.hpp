#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bloomjoin {

// Argument outside an operation's documented domain.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Two filters with different hash geometry cannot be merged.
class IncompatibleFilter : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class DeserializeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed CSV/JSON input. line() is 1-based; 0 when not line-oriented.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Predicate or column referenced on a table schema that lacks it.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Broadcast hash join build side exceeds its memory cap.
class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Model evaluated where log(A*eps + B) is undefined.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Not enough distinct observations to fit a model.
class Underdetermined : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace bloomjoin
