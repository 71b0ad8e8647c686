#pragma once

#include "replayroi/domain.hpp"
#include "replayroi/history.hpp"
#include "replayroi/ledger.hpp"
#include "replayroi/time.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace replayroi {

enum class Phase { Baseline, Replay, Completed };
std::string_view to_string(Phase p);

// Per-test status at the current replay version.
struct TestStatus {
    std::uint32_t attempts = 0;
    std::optional<TestOutcome> latest;
    bool awaiting_classification = false;
    std::optional<FailureKind> classification;
    bool bug_record_pending = false;
    bool script_update_pending = false;
    bool crash_rerun_pending = false;

    friend bool operator==(const TestStatus&, const TestStatus&) = default;
};

struct ActiveTimer {
    std::uint64_t id = 0; // sequence number of ActivityStarted
    ActivityCategory category = ActivityCategory::AnalysisBrokenTest;
    std::string protocol;
    std::string framework;
    std::size_t version = 0;
    Instant started_at;
    std::int64_t monotonic_ns = 0;

    friend bool operator==(const ActiveTimer&, const ActiveTimer&) = default;
};

// Pure projection of the ledger; Session mutates it only through apply().
struct SessionState {
    Phase phase = Phase::Baseline;
    std::string session_id;
    std::optional<VersionSequence> versions;
    std::vector<events::TestInfo> tests; // T_X in run order
    std::size_t version = 0;             // current replay index (1-based)
    bool checked_out = false;
    std::optional<bool> build_ok;
    std::map<TestKey, TestStatus> status;
    std::optional<ActiveTimer> timer;
    std::set<std::string> manual_baselines;
    std::set<TestKey> implementations;
    std::uint64_t last_sequence = 0;
    Instant last_instant{};

    void apply(const Event& e);
    // Index into `tests` of the first test whose latest attempt is not a pass.
    std::size_t cursor() const;
    // Reasons the current version cannot be completed; empty when it can.
    std::vector<std::string> blocking_reasons() const;

    friend bool operator==(const SessionState&, const SessionState&) = default;
};

SessionState reconstruct_state(const std::vector<Event>& events);

struct RequiredActions {
    std::vector<ActivityCategory> activities;
    bool bug_record = false;
    bool script_update = false;
    bool rerun = true;
    bool automatic_rerun = false; // crash: re-run fires when the HandleCrash activity stops
};

struct BugDetails {
    std::string description;
    Resolution resolution = Resolution::Workaround;
};

struct StopResult {
    ActivityRecord record;
    std::optional<BugRecord> bug;
    bool script_updated = false;
    std::optional<TestRunRecord> rerun;
};

struct SessionContext {
    std::vector<TestProtocol> protocols;
    std::vector<FrameworkId> frameworks;
    std::vector<AutomatedTestRef> tests;
    std::filesystem::path workspace;
    CommandSpec build_command; // empty command: build always verified ok
    VcsAdapter* vcs = nullptr;
    CommandRunner* runner = nullptr;
    const Clock* clock = nullptr;
};

// Drives baseline recording and the step-wise replay loop. Every mutation is an
// appended ledger event; state is the fold of those events.
class Session {
public:
    Session(Ledger& ledger, SessionContext context);

    const SessionState& state() const { return state_; }
    const SessionContext& context() const { return context_; }

    // Appends ProjectConfigured when the config hash differs from the last one.
    void configure(const std::string& project, const std::string& config_hash);

    ActivityRecord record_manual_baseline(const std::string& protocol, std::int64_t duration_s,
                                          bool overwrite = false, std::string note = {});
    ActivityRecord record_implementation(const TestKey& test, std::int64_t duration_s, bool overwrite = false,
                                         std::string note = {});

    // Lists what is still missing before replay can start.
    std::vector<std::string> missing_baseline() const;

    void start_replay(const VersionSequence& versions, bool force_checkout = false);
    // Retries the checkout of the current version (e.g. after a dirty-workspace refusal).
    void checkout_current(bool force_checkout);
    BuildResult reverify_build();
    TestRunRecord run_test(const TestKey& test);
    RequiredActions classify_failure(const TestKey& test, FailureKind kind);

    std::uint64_t start_activity(ActivityCategory category, const TestKey& test);
    StopResult stop_activity(std::uint64_t handle, std::string note = {},
                             std::optional<std::int64_t> override_duration_s = std::nullopt,
                             std::optional<BugDetails> bug = std::nullopt);

    // Returns the new phase. Throws Error(Blocked) listing the blocking tests.
    Phase advance_version(bool force_checkout = false);

private:
    std::uint64_t append(Payload payload);
    const AutomatedTestRef& find_test(const TestKey& key) const;
    void require_phase(Phase phase, std::string_view op) const;
    void checkout_and_build(std::size_t index, bool force);
    BuildResult build_current();

    Ledger& ledger_;
    SessionContext context_;
    SessionState state_;
};

} // namespace replayroi
