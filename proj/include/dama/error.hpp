#pragma once

#include <stdexcept>
#include <string>

namespace dama {

/// Bad user input: malformed files, invalid configuration, violated preconditions.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An internal invariant broke (non-finite loss, inconsistent state).
class InvariantError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dama
