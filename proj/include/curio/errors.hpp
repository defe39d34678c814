#ifndef CURIO_ERRORS_HPP
#define CURIO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace curio {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input line; carries the 1-based line number.
struct ParseError : Error {
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_number(line) {}
    std::size_t line_number;
};

// Input violated a documented precondition or data invariant.
struct ValidationError : Error {
    using Error::Error;
};

// Caller passed an out-of-range or otherwise unusable argument.
struct ArgumentError : Error {
    using Error::Error;
};

// File system problem: missing path, unreadable or unwritable file.
struct IoError : Error {
    using Error::Error;
};

// A pipeline stage needs a snapshot that has not been produced yet.
struct MissingSnapshotError : Error {
    MissingSnapshotError(const std::string& stage_name)
        : Error("missing snapshot: " + stage_name), stage(stage_name) {}
    std::string stage;
};

// Non-finite value where a finite one is required (diverged training etc).
struct NumericError : Error {
    using Error::Error;
};

}  // namespace curio

#endif
