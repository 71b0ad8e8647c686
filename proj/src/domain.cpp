#include "replayroi/domain.hpp"

#include "replayroi/error.hpp"

#include <array>
#include <utility>

#include <fmt/format.h>

namespace replayroi {

namespace {

constexpr std::array<std::pair<ActivityCategory, std::string_view>, 7> kCategoryNames{{
    {ActivityCategory::AnalysisBrokenTest, "analysis"},
    {ActivityCategory::RepairBrokenTest, "repair"},
    {ActivityCategory::HandleBug, "bug"},
    {ActivityCategory::HandleFalseNegative, "false-negative"},
    {ActivityCategory::HandleCrash, "crash"},
    {ActivityCategory::Implementation, "implementation"},
    {ActivityCategory::ManualBaseline, "manual-baseline"},
}};

} // namespace

std::string_view to_string(ActivityCategory c) {
    for (const auto& [cat, name] : kCategoryNames) {
        if (cat == c) return name;
    }
    return "unknown";
}

ActivityCategory parse_category(std::string_view text) {
    for (const auto& [cat, name] : kCategoryNames) {
        if (name == text) return cat;
    }
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown activity category '{}'", text));
}

std::string_view display_name(ActivityCategory c) {
    switch (c) {
    case ActivityCategory::AnalysisBrokenTest: return "Analysis broken tests";
    case ActivityCategory::RepairBrokenTest: return "Repairing broken tests";
    case ActivityCategory::HandleBug: return "Handling found bugs";
    case ActivityCategory::HandleFalseNegative: return "Handling false negatives";
    case ActivityCategory::HandleCrash: return "Handling crashes";
    case ActivityCategory::Implementation: return "Implementation";
    case ActivityCategory::ManualBaseline: return "Manual baseline";
    }
    return "unknown";
}

std::string_view to_string(TestOutcome o) { return o == TestOutcome::Pass ? "pass" : "fail"; }

TestOutcome parse_outcome(std::string_view text) {
    if (text == "pass") return TestOutcome::Pass;
    if (text == "fail") return TestOutcome::Fail;
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown outcome '{}'", text));
}

std::string_view to_string(FailureKind k) {
    switch (k) {
    case FailureKind::Bug: return "bug";
    case FailureKind::BrokenTest: return "broken_test";
    case FailureKind::FalseNegative: return "false_negative";
    case FailureKind::Crash: return "crash";
    }
    return "unknown";
}

FailureKind parse_failure_kind(std::string_view text) {
    if (text == "bug") return FailureKind::Bug;
    if (text == "broken_test" || text == "broken-test") return FailureKind::BrokenTest;
    if (text == "false_negative" || text == "false-negative") return FailureKind::FalseNegative;
    if (text == "crash") return FailureKind::Crash;
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown failure kind '{}'", text));
}

std::string_view to_string(Resolution r) { return r == Resolution::Fix ? "fix" : "workaround"; }

Resolution parse_resolution(std::string_view text) {
    if (text == "fix") return Resolution::Fix;
    if (text == "workaround") return Resolution::Workaround;
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown resolution '{}'", text));
}

} // namespace replayroi
