#pragma once

#include <stdexcept>
#include <string>

namespace cvpm {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or out-of-contract input (dimension mismatch, degenerate box,
// non-PD matrix where PD is required, ...).
class InvalidInputError : public Error {
public:
    using Error::Error;
};

// Operation asked of an empty set that requires a nonempty one.
class EmptySetError : public Error {
public:
    using Error::Error;
};

// Set is unbounded in a direction where boundedness is required.
class UnboundedSetError : public Error {
public:
    using Error::Error;
};

// Requested operation is outside the supported regime (e.g. explicit
// vertex algebra above dimension 3).
class UnsupportedOperationError : public Error {
public:
    using Error::Error;
};

// A configured iteration or row budget was exhausted.
class ResourceLimitError : public Error {
public:
    using Error::Error;
};

// An LP/QP backend failed to produce a certified result.
class SolverFailureError : public Error {
public:
    using Error::Error;
};

// One of the problem assumptions failed hard during construction.
class AssumptionError : public Error {
public:
    using Error::Error;
};

// Two redundant internal tests disagreed (e.g. case dispatch vs. set
// membership); surfaced instead of silently picking a side.
class InternalConsistencyError : public Error {
public:
    using Error::Error;
};

// Scenario file could not be parsed at all.
class ParseError : public Error {
public:
    using Error::Error;
};

// Scenario file parsed but violates the schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

}  // namespace cvpm
