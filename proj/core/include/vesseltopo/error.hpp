#pragma once

#include <stdexcept>
#include <string>

namespace vtopo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// A file exists but its contents do not follow the expected layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// An algorithm could not produce a result (no foreground, unreachable seed, ...).
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace vtopo
