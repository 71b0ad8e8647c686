#pragma once

#include "replayroi/process.hpp"

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace replayroi {

struct TestProtocol {
    std::string id;
    std::string title;
    std::string description;
    bool selected = true;
};

struct FrameworkId {
    std::string id;
    std::string display_name;
};

// One automated test t_alpha: protocol t implemented with framework alpha.
struct AutomatedTestRef {
    std::string protocol;
    std::string framework;
    CommandSpec run_command;
    std::string script_locator;
};

struct TestKey {
    std::string protocol;
    std::string framework;

    friend auto operator<=>(const TestKey&, const TestKey&) = default;
    friend bool operator==(const TestKey&, const TestKey&) = default;
};

inline TestKey key_of(const AutomatedTestRef& t) { return {t.protocol, t.framework}; }

enum class ActivityCategory {
    AnalysisBrokenTest,
    RepairBrokenTest,
    HandleBug,
    HandleFalseNegative,
    HandleCrash,
    Implementation,
    ManualBaseline,
};

inline constexpr ActivityCategory kMaintenanceCategories[] = {
    ActivityCategory::AnalysisBrokenTest, ActivityCategory::RepairBrokenTest,
    ActivityCategory::HandleBug, ActivityCategory::HandleFalseNegative,
    ActivityCategory::HandleCrash,
};

constexpr bool is_maintenance(ActivityCategory c) {
    return c != ActivityCategory::Implementation && c != ActivityCategory::ManualBaseline;
}

std::string_view to_string(ActivityCategory c);
ActivityCategory parse_category(std::string_view text);
// Row captions used in maintenance tables.
std::string_view display_name(ActivityCategory c);

enum class TestOutcome { Pass, Fail };
std::string_view to_string(TestOutcome o);
TestOutcome parse_outcome(std::string_view text);

enum class FailureKind { Bug, BrokenTest, FalseNegative, Crash };
std::string_view to_string(FailureKind k);
FailureKind parse_failure_kind(std::string_view text);

enum class Resolution { Fix, Workaround };
std::string_view to_string(Resolution r);
Resolution parse_resolution(std::string_view text);

} // namespace replayroi
