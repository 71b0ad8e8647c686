#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace replayroi {

enum class ErrorKind {
    // history
    RepositoryUnreadable,
    BranchMissing,
    EmptyRange,
    NoVersions,
    DirtyWorkspace,
    CheckoutFailure,
    CommandNotFound,
    Timeout,
    // session
    Precondition,
    Duplicate,
    IncompleteBaseline,
    Blocked,
    TimerActive,
    NoActiveTimer,
    NotClassifiable,
    // ledger
    OutOfOrder,
    SchemaViolation,
    Storage,
    // estimator
    MissingImplementation,
    Degenerate,
    // config / cli
    InvalidConfig,
    InvalidArgument,
    PortInUse,
    Unauthorized,
    Internal,
};

std::string_view to_string(ErrorKind kind);

// All domain failures surface as this exception; the kind drives CLI exit codes
// and HTTP status mapping.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace replayroi
