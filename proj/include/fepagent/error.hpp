#pragma once

#include <stdexcept>
#include <string>

namespace fep {

// Every failure raised by the library derives from Error so callers can
// catch one type; the subclasses name the contract that was violated.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class InvalidDataset : public Error {
public:
    using Error::Error;
};

class InvalidConfiguration : public Error {
public:
    using Error::Error;
};

// A coordinate whose every sample was rejected as an outlier.
class UnrecoverableChannel : public Error {
public:
    using Error::Error;
};

// A roadmap walk reached a node it cannot leave.
class DeadEnd : public Error {
public:
    using Error::Error;
};

// Belief update whose observation has zero probability under every state.
class DegenerateEvidence : public Error {
public:
    using Error::Error;
};

}  // namespace fep
