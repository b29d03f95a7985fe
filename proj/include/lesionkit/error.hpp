#pragma once

#include <stdexcept>
#include <string>

namespace lesionkit {

// Base for every failure raised by the toolkit on bad input data. The CLI
// maps these to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed serialized input (CSV, PNM, model files).
class ParseError : public Error {
public:
    using Error::Error;
};

// Well-formed input that violates an operation's preconditions.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace lesionkit
