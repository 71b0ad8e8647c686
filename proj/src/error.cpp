#include "replayroi/error.hpp"

namespace replayroi {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::RepositoryUnreadable: return "repository-unreadable";
    case ErrorKind::BranchMissing: return "branch-missing";
    case ErrorKind::EmptyRange: return "empty-range";
    case ErrorKind::NoVersions: return "no-versions";
    case ErrorKind::DirtyWorkspace: return "dirty-workspace";
    case ErrorKind::CheckoutFailure: return "checkout-failure";
    case ErrorKind::CommandNotFound: return "command-not-found";
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::Duplicate: return "duplicate";
    case ErrorKind::IncompleteBaseline: return "incomplete-baseline";
    case ErrorKind::Blocked: return "blocked";
    case ErrorKind::TimerActive: return "timer-active";
    case ErrorKind::NoActiveTimer: return "no-active-timer";
    case ErrorKind::NotClassifiable: return "not-classifiable";
    case ErrorKind::OutOfOrder: return "out-of-order";
    case ErrorKind::SchemaViolation: return "schema-violation";
    case ErrorKind::Storage: return "storage-failure";
    case ErrorKind::MissingImplementation: return "missing-implementation";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::PortInUse: return "port-in-use";
    case ErrorKind::Unauthorized: return "unauthorized";
    case ErrorKind::Internal: return "internal";
    }
    return "unknown";
}

} // namespace replayroi
