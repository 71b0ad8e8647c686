#include "replayroi/session.hpp"

#include "replayroi/error.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace replayroi {

std::string_view to_string(Phase p) {
    switch (p) {
    case Phase::Baseline: return "baseline";
    case Phase::Replay: return "replay";
    case Phase::Completed: return "completed";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// SessionState

void SessionState::apply(const Event& e) {
    using namespace events;
    last_sequence = e.sequence;
    last_instant = e.at;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, BaselineRecorded>) {
                if (p.category == ActivityCategory::ManualBaseline) {
                    manual_baselines.insert(p.protocol);
                } else {
                    implementations.insert({p.protocol, p.framework});
                }
            } else if constexpr (std::is_same_v<T, SessionStarted>) {
                phase = Phase::Replay;
                session_id = p.session_id;
                versions = p.versions;
                tests = p.tests;
                version = 1;
                checked_out = false;
                build_ok.reset();
                status.clear();
                for (const auto& t : tests) status[{t.protocol, t.framework}] = {};
            } else if constexpr (std::is_same_v<T, VersionCheckedOut>) {
                version = p.index;
                checked_out = true;
                build_ok.reset();
            } else if constexpr (std::is_same_v<T, BuildVerified>) {
                build_ok = p.ok;
            } else if constexpr (std::is_same_v<T, TestRun>) {
                auto& st = status[{p.protocol, p.framework}];
                st.attempts = p.attempt;
                st.latest = p.outcome;
                st.crash_rerun_pending = false;
                if (p.outcome == TestOutcome::Fail) {
                    st.awaiting_classification = true;
                    st.classification.reset();
                } else {
                    st.awaiting_classification = false;
                }
            } else if constexpr (std::is_same_v<T, FailureClassified>) {
                auto& st = status[{p.protocol, p.framework}];
                st.awaiting_classification = false;
                st.classification = p.kind;
                switch (p.kind) {
                case FailureKind::Bug: st.bug_record_pending = true; break;
                case FailureKind::BrokenTest: st.script_update_pending = true; break;
                case FailureKind::Crash: st.crash_rerun_pending = true; break;
                case FailureKind::FalseNegative: break;
                }
            } else if constexpr (std::is_same_v<T, ActivityStarted>) {
                timer = ActiveTimer{e.sequence, p.category, p.protocol, p.framework, p.index, e.at, p.monotonic_ns};
            } else if constexpr (std::is_same_v<T, ActivityStopped>) {
                timer.reset();
                if (p.category == ActivityCategory::ManualBaseline) {
                    manual_baselines.insert(p.protocol);
                } else if (p.category == ActivityCategory::Implementation) {
                    implementations.insert({p.protocol, p.framework});
                }
            } else if constexpr (std::is_same_v<T, BugRecorded>) {
                status[{p.protocol, p.framework}].bug_record_pending = false;
            } else if constexpr (std::is_same_v<T, TestScriptUpdated>) {
                status[{p.protocol, p.framework}].script_update_pending = false;
            } else if constexpr (std::is_same_v<T, VersionCompleted>) {
                if (versions && p.index < versions->size()) {
                    version = p.index + 1;
                    checked_out = false;
                    build_ok.reset();
                    for (auto& [key, st] : status) st = {};
                }
            } else if constexpr (std::is_same_v<T, SessionCompleted>) {
                phase = Phase::Completed;
            }
        },
        e.payload);
}

std::size_t SessionState::cursor() const {
    for (std::size_t k = 0; k < tests.size(); ++k) {
        const auto it = status.find({tests[k].protocol, tests[k].framework});
        if (it == status.end() || it->second.latest != TestOutcome::Pass) return k;
    }
    return tests.size();
}

std::vector<std::string> SessionState::blocking_reasons() const {
    std::vector<std::string> reasons;
    if (phase != Phase::Replay) return reasons;
    if (timer) reasons.push_back(fmt::format("activity {} is still running", timer->id));
    if (!checked_out) reasons.push_back(fmt::format("version {} is not checked out", version));
    if (build_ok != true) reasons.push_back(fmt::format("build of version {} is not verified", version));
    for (const auto& t : tests) {
        const auto it = status.find({t.protocol, t.framework});
        const std::string name = t.protocol + "/" + t.framework;
        if (it == status.end() || !it->second.latest) {
            reasons.push_back(name + " has not run");
            continue;
        }
        const auto& st = it->second;
        if (st.awaiting_classification) {
            reasons.push_back(name + " failed and awaits classification");
        } else if (*st.latest == TestOutcome::Fail) {
            reasons.push_back(name + " failed");
        }
        if (st.bug_record_pending) reasons.push_back(name + " has an unrecorded bug");
        if (st.script_update_pending) reasons.push_back(name + " awaits a test script repair");
        if (st.crash_rerun_pending) reasons.push_back(name + " awaits a re-run after a crash");
    }
    return reasons;
}

SessionState reconstruct_state(const std::vector<Event>& events) {
    SessionState state;
    for (const auto& e : events) state.apply(e);
    return state;
}

// ---------------------------------------------------------------------------
// Session

Session::Session(Ledger& ledger, SessionContext context)
    : ledger_(ledger), context_(std::move(context)), state_(reconstruct_state(ledger.events())) {
    if (context_.clock == nullptr) throw Error(ErrorKind::Internal, "session needs a clock");
}

std::uint64_t Session::append(Payload payload) {
    Instant now = context_.clock->wall();
    if (!ledger_.events().empty() && now < ledger_.events().back().at) now = ledger_.events().back().at;
    const auto seq = ledger_.append(now, std::move(payload));
    state_.apply(ledger_.events().back());
    return seq;
}

const AutomatedTestRef& Session::find_test(const TestKey& key) const {
    for (const auto& t : context_.tests) {
        if (key_of(t) == key) return t;
    }
    throw Error(ErrorKind::Precondition, fmt::format("no automated test {}/{}", key.protocol, key.framework));
}

void Session::require_phase(Phase phase, std::string_view op) const {
    if (state_.phase != phase) {
        throw Error(ErrorKind::Precondition, fmt::format("{} requires phase {} (current phase: {})", op,
                                                         to_string(phase), to_string(state_.phase)));
    }
}

void Session::configure(const std::string& project, const std::string& config_hash) {
    for (auto it = ledger_.events().rbegin(); it != ledger_.events().rend(); ++it) {
        if (const auto* pc = it->as<events::ProjectConfigured>()) {
            if (pc->config_hash == config_hash) return;
            break;
        }
    }
    events::ProjectConfigured pc;
    pc.project = project;
    pc.config_hash = config_hash;
    for (const auto& p : context_.protocols) pc.protocols.push_back({p.id, p.title, p.selected});
    for (const auto& f : context_.frameworks) pc.frameworks.push_back({f.id, f.display_name});
    for (const auto& t : context_.tests) {
        pc.tests.push_back({t.protocol, t.framework, t.run_command.command, t.run_command.timeout.count(),
                            t.script_locator});
    }
    append(std::move(pc));
}

ActivityRecord Session::record_manual_baseline(const std::string& protocol, std::int64_t duration_s,
                                               bool overwrite, std::string note) {
    require_phase(Phase::Baseline, "record_manual_baseline");
    const auto it = std::find_if(context_.protocols.begin(), context_.protocols.end(),
                                 [&](const TestProtocol& p) { return p.id == protocol; });
    if (it == context_.protocols.end() || !it->selected) {
        throw Error(ErrorKind::Precondition, fmt::format("protocol {} is not in the shortlist", protocol));
    }
    if (duration_s < 0) throw Error(ErrorKind::InvalidArgument, "duration must be >= 0");
    if (!overwrite && state_.manual_baselines.count(protocol)) {
        throw Error(ErrorKind::Duplicate, fmt::format("manual baseline for {} already recorded", protocol));
    }
    if (duration_s == 0) note = note.empty() ? "warning: zero duration" : "warning: zero duration; " + note;
    const auto seq = append(events::BaselineRecorded{ActivityCategory::ManualBaseline, protocol, {}, duration_s,
                                                     overwrite, note});
    const auto& e = ledger_.events().back();
    return ActivityRecord{seq, 0, protocol, {}, ActivityCategory::ManualBaseline, e.at, e.at, duration_s, false, note};
}

ActivityRecord Session::record_implementation(const TestKey& test, std::int64_t duration_s, bool overwrite,
                                              std::string note) {
    require_phase(Phase::Baseline, "record_implementation");
    find_test(test);
    if (duration_s < 0) throw Error(ErrorKind::InvalidArgument, "duration must be >= 0");
    if (!overwrite && state_.implementations.count(test)) {
        throw Error(ErrorKind::Duplicate,
                    fmt::format("implementation time for {}/{} already recorded", test.protocol, test.framework));
    }
    if (duration_s == 0) note = note.empty() ? "warning: zero duration" : "warning: zero duration; " + note;
    const auto seq = append(events::BaselineRecorded{ActivityCategory::Implementation, test.protocol,
                                                     test.framework, duration_s, overwrite, note});
    const auto& e = ledger_.events().back();
    return ActivityRecord{seq,   0,    test.protocol, test.framework, ActivityCategory::Implementation,
                          e.at,  e.at, duration_s,    false,          note};
}

std::vector<std::string> Session::missing_baseline() const {
    std::vector<std::string> missing;
    for (const auto& p : context_.protocols) {
        if (p.selected && !state_.manual_baselines.count(p.id)) missing.push_back("manual baseline " + p.id);
    }
    for (const auto& t : context_.tests) {
        if (!state_.implementations.count(key_of(t))) {
            missing.push_back("implementation " + t.protocol + "/" + t.framework);
        }
    }
    return missing;
}

void Session::start_replay(const VersionSequence& versions, bool force_checkout) {
    require_phase(Phase::Baseline, "start_replay");
    if (state_.timer) throw Error(ErrorKind::TimerActive, "stop the running activity first");
    if (context_.tests.empty()) throw Error(ErrorKind::Precondition, "no automated tests configured");
    if (versions.entries.empty()) throw Error(ErrorKind::Precondition, "version sequence is empty");
    if (const auto missing = missing_baseline(); !missing.empty()) {
        throw Error(ErrorKind::IncompleteBaseline, fmt::format("baseline incomplete: {}", fmt::join(missing, ", ")));
    }
    events::SessionStarted started;
    started.session_id = fmt::format("S{}", state_.last_sequence + 1);
    started.versions = versions;
    for (const auto& t : context_.tests) {
        started.tests.push_back({t.protocol, t.framework, t.run_command.command, t.run_command.timeout.count(),
                                 t.script_locator});
    }
    append(std::move(started));
    checkout_and_build(1, force_checkout);
}

void Session::checkout_and_build(std::size_t index, bool force) {
    if (context_.vcs == nullptr) throw Error(ErrorKind::Internal, "session has no version-control adapter");
    const auto ws = checkout_version(*context_.vcs, *state_.versions, index, context_.workspace,
                                     CheckoutOptions{force}, *context_.clock);
    append(events::VersionCheckedOut{index, ws.commit_id, context_.workspace.string(), force});
    build_current();
}

BuildResult Session::build_current() {
    const std::size_t index = state_.version;
    if (context_.build_command.command.empty()) {
        append(events::BuildVerified{index, true, 0, false, "no build command configured"});
        return BuildResult{true, 0, false, {}};
    }
    if (context_.runner == nullptr) throw Error(ErrorKind::Internal, "session has no command runner");
    const WorkspaceState ws{index, state_.versions->at(index).commit.id, context_.clock->wall(), context_.workspace};
    try {
        auto result = verify_build(*context_.runner, ws, context_.build_command);
        append(events::BuildVerified{index, result.ok, result.exit_code, false, result.log_excerpt});
        return result;
    } catch (const Error& ex) {
        if (ex.kind() == ErrorKind::Timeout) {
            append(events::BuildVerified{index, false, -1, true, ex.what()});
            return BuildResult{false, -1, true, ex.what()};
        }
        if (ex.kind() == ErrorKind::CommandNotFound) {
            append(events::BuildVerified{index, false, kShellNotFound, false, ex.what()});
        }
        throw;
    }
}

void Session::checkout_current(bool force_checkout) {
    require_phase(Phase::Replay, "checkout");
    if (state_.timer) throw Error(ErrorKind::TimerActive, "stop the running activity first");
    checkout_and_build(state_.version, force_checkout);
}

BuildResult Session::reverify_build() {
    require_phase(Phase::Replay, "verify_build");
    if (!state_.checked_out) throw Error(ErrorKind::Precondition, "current version is not checked out");
    return build_current();
}

TestRunRecord Session::run_test(const TestKey& key) {
    require_phase(Phase::Replay, "run_test");
    const auto& test = find_test(key);
    if (!state_.status.count(key)) {
        throw Error(ErrorKind::Precondition, fmt::format("{}/{} is not part of this replay", key.protocol, key.framework));
    }
    if (state_.build_ok != true) {
        throw Error(ErrorKind::Precondition, fmt::format("build of version {} is not verified ok", state_.version));
    }
    const auto& st = state_.status.at(key);
    if (st.awaiting_classification) {
        throw Error(ErrorKind::Precondition,
                    fmt::format("{}/{} failed; classify the failure before re-running", key.protocol, key.framework));
    }
    if (context_.runner == nullptr) throw Error(ErrorKind::Internal, "session has no command runner");
    const auto res = context_.runner->run(test.run_command, context_.workspace);
    if (!res.timed_out && res.exit_code == kShellNotFound) {
        throw Error(ErrorKind::CommandNotFound,
                    fmt::format("test command for {}/{} not found: {}", key.protocol, key.framework,
                                tail_excerpt(res.output, 512)));
    }
    events::TestRun run;
    run.index = state_.version;
    run.protocol = key.protocol;
    run.framework = key.framework;
    run.outcome = res.ok() ? TestOutcome::Pass : TestOutcome::Fail;
    run.attempt = st.attempts + 1;
    run.elapsed_ms = res.elapsed.count();
    run.timed_out = res.timed_out;
    if (res.timed_out) {
        run.note = fmt::format("timed out after {} s", test.run_command.timeout.count());
    } else if (!res.ok()) {
        run.note = tail_excerpt(res.output, 1024);
    }
    append(run);
    return TestRunRecord{run.index, run.protocol, run.framework, run.outcome, run.attempt, run.elapsed_ms};
}

RequiredActions Session::classify_failure(const TestKey& key, FailureKind kind) {
    require_phase(Phase::Replay, "classify_failure");
    find_test(key);
    const auto it = state_.status.find(key);
    if (it == state_.status.end() || !it->second.latest) {
        throw Error(ErrorKind::NotClassifiable,
                    fmt::format("{}/{} has not run at version {}", key.protocol, key.framework, state_.version));
    }
    const auto& st = it->second;
    const bool needs_failure = kind == FailureKind::Bug || kind == FailureKind::BrokenTest;
    if (needs_failure && !st.awaiting_classification) {
        throw Error(ErrorKind::NotClassifiable,
                    fmt::format("{}/{} has no unclassified failing attempt", key.protocol, key.framework));
    }
    append(events::FailureClassified{state_.version, key.protocol, key.framework, kind, st.attempts});

    RequiredActions actions;
    switch (kind) {
    case FailureKind::Bug:
        actions.activities = {ActivityCategory::HandleBug};
        actions.bug_record = true;
        break;
    case FailureKind::BrokenTest:
        actions.activities = {ActivityCategory::AnalysisBrokenTest, ActivityCategory::RepairBrokenTest};
        actions.script_update = true;
        break;
    case FailureKind::FalseNegative:
        actions.activities = {ActivityCategory::HandleFalseNegative};
        break;
    case FailureKind::Crash:
        actions.activities = {ActivityCategory::HandleCrash};
        actions.automatic_rerun = true;
        break;
    }
    return actions;
}

std::uint64_t Session::start_activity(ActivityCategory category, const TestKey& key) {
    if (state_.timer) {
        throw Error(ErrorKind::TimerActive,
                    fmt::format("activity {} ({}) is already running", state_.timer->id, to_string(state_.timer->category)));
    }
    std::size_t index = 0;
    if (is_maintenance(category)) {
        require_phase(Phase::Replay, "maintenance activity");
        find_test(key);
        index = state_.version;
    } else {
        require_phase(Phase::Baseline, "baseline activity");
        if (category == ActivityCategory::ManualBaseline) {
            const auto it = std::find_if(context_.protocols.begin(), context_.protocols.end(),
                                         [&](const TestProtocol& p) { return p.id == key.protocol; });
            if (it == context_.protocols.end() || !it->selected) {
                throw Error(ErrorKind::Precondition, fmt::format("protocol {} is not in the shortlist", key.protocol));
            }
            if (state_.manual_baselines.count(key.protocol)) {
                throw Error(ErrorKind::Duplicate, fmt::format("manual baseline for {} already recorded", key.protocol));
            }
        } else {
            find_test(key);
            if (state_.implementations.count(key)) {
                throw Error(ErrorKind::Duplicate,
                            fmt::format("implementation time for {}/{} already recorded", key.protocol, key.framework));
            }
        }
    }
    const std::string framework = category == ActivityCategory::ManualBaseline ? std::string{} : key.framework;
    return append(events::ActivityStarted{index, category, key.protocol, framework, context_.clock->monotonic()});
}

StopResult Session::stop_activity(std::uint64_t handle, std::string note, std::optional<std::int64_t> override_duration_s,
                                  std::optional<BugDetails> bug) {
    if (!state_.timer) throw Error(ErrorKind::NoActiveTimer, "no activity is running");
    const ActiveTimer timer = *state_.timer;
    if (handle != 0 && handle != timer.id) {
        throw Error(ErrorKind::NoActiveTimer, fmt::format("activity {} is not running (running: {})", handle, timer.id));
    }
    const Instant stopped_at = std::max(context_.clock->wall(), timer.started_at);
    std::int64_t duration_s = 0;
    const std::int64_t mono_delta = context_.clock->monotonic() - timer.monotonic_ns;
    if (mono_delta >= 0) {
        duration_s = static_cast<std::int64_t>(std::llround(static_cast<double>(mono_delta) / 1e9));
    } else {
        // Monotonic readings from different boots are not comparable.
        duration_s = std::chrono::duration_cast<std::chrono::seconds>(stopped_at - timer.started_at).count();
        note = note.empty() ? "wall-clock duration (monotonic clock reset)" : note + "; wall-clock duration";
    }
    bool overridden = false;
    if (override_duration_s) {
        if (*override_duration_s < 0) throw Error(ErrorKind::InvalidArgument, "duration must be >= 0");
        duration_s = *override_duration_s;
        overridden = true;
    }
    if (!is_maintenance(timer.category) && duration_s == 0) {
        note = note.empty() ? "warning: zero duration" : "warning: zero duration; " + note;
    }
    append(events::ActivityStopped{timer.id, timer.version, timer.category, timer.protocol, timer.framework,
                                   timer.started_at, stopped_at, duration_s, overridden, note});

    StopResult result;
    result.record = ActivityRecord{timer.id, timer.version, timer.protocol, timer.framework, timer.category,
                                   timer.started_at, stopped_at, duration_s, overridden, note};
    if (!is_maintenance(timer.category)) return result;

    const TestKey key{timer.protocol, timer.framework};
    const auto st_it = state_.status.find(key);
    const TestStatus st = st_it == state_.status.end() ? TestStatus{} : st_it->second;
    if (timer.category == ActivityCategory::HandleBug && (st.bug_record_pending || bug)) {
        BugDetails details = bug.value_or(BugDetails{note, Resolution::Workaround});
        append(events::BugRecorded{timer.version, key.protocol, key.framework, details.description, details.resolution,
                                   timer.id});
        result.bug = BugRecord{timer.version, key.protocol, key.framework, details.description, details.resolution,
                               timer.id};
    }
    if (timer.category == ActivityCategory::RepairBrokenTest && st.script_update_pending) {
        append(events::TestScriptUpdated{timer.version, key.protocol, key.framework, note});
        result.script_updated = true;
    }
    if (timer.category == ActivityCategory::HandleCrash && st.crash_rerun_pending && state_.build_ok == true) {
        result.rerun = run_test(key);
    }
    return result;
}

Phase Session::advance_version(bool force_checkout) {
    require_phase(Phase::Replay, "advance_version");
    if (const auto reasons = state_.blocking_reasons(); !reasons.empty()) {
        throw Error(ErrorKind::Blocked,
                    fmt::format("version {} cannot be completed: {}", state_.version, fmt::join(reasons, "; ")));
    }
    const std::size_t index = state_.version;
    if (index < state_.versions->size() && !force_checkout && context_.vcs != nullptr &&
        context_.vcs->is_dirty(context_.workspace)) {
        throw Error(ErrorKind::DirtyWorkspace,
                    fmt::format("workspace {} has local modifications; advance with force to discard them",
                                context_.workspace.string()));
    }
    append(events::VersionCompleted{index});
    if (index == state_.versions->size()) {
        append(events::SessionCompleted{index});
        return state_.phase;
    }
    checkout_and_build(index + 1, force_checkout);
    return state_.phase;
}

} // namespace replayroi
