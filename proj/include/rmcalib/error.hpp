#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace rmcalib {

// Failure classes; the enum values double as CLI exit codes.
enum class ErrorKind {
    usage = 2,  // bad arguments or inconsistent request
    ingest = 3, // unreadable, malformed, or invalid input data
    solver = 4, // optimization failed or did not converge
    oracle = 5, // a simulation self-check failed
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace rmcalib
