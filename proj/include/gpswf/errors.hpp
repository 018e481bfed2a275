#pragma once

#include <stdexcept>
#include <string>

namespace gpswf {

// Violation of a mathematical precondition of the method itself, e.g. an
// expansion requested with c > pi*L. The CLI maps this to exit code 2.
class constraint_error : public std::runtime_error {
public:
    explicit constraint_error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input: volume payload/sidecar, manifest, coefficient CSV, or a
// radial cache file that does not match its header. Exit code 3.
class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem-level failure (unreadable/unwritable path). Exit code 4.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

// Quadrature size rejected by the solver's built-in resolution check.
class resolution_error : public std::runtime_error {
public:
    explicit resolution_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace gpswf
