#pragma once

#include <stdexcept>
#include <string>

namespace csskit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes of operands do not agree.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A precondition on an argument value is violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Mixing matrix (or any matrix that must be inverted) is not full column rank.
class RankDeficient : public Error {
public:
    using Error::Error;
};

/// The operator does not satisfy L L* = nu Id.
class NotTightFrame : public Error {
public:
    using Error::Error;
};

/// A measurement bound was requested where its log term is non-positive.
class InvalidRegime : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what)
{
    if (!cond) throw InvalidArgument(what);
}

inline void require_dims(bool cond, const std::string& what)
{
    if (!cond) throw DimensionMismatch(what);
}

} // namespace detail
} // namespace csskit
