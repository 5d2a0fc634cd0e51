#pragma once

#include <stdexcept>
#include <string>

namespace skcd {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Referenced file does not exist or cannot be opened.
class FileError : public Error {
public:
    explicit FileError(const std::string& msg) : Error(msg) {}
};

/// A referenced column is missing or the schema is inconsistent.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error(msg) {}
};

/// A cell could not be parsed; message carries row/column location.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

/// Input values violate a domain constraint (e.g. treatment not in {0,1}).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

/// A numerical routine failed (singular solve, diverging iteration, ...).
class NumericsError : public Error {
public:
    explicit NumericsError(const std::string& msg) : Error(msg) {}
};

} // namespace skcd
