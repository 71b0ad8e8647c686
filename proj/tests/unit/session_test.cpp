#include <doctest.h>

#include "replayroi/error.hpp"
#include "replayroi/session.hpp"

#include "support.hpp"

#include <set>

using namespace replayroi;
using namespace std::chrono_literals;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Internal;
}

const TestKey kP1{"P1", "fw"};
const TestKey kP2{"P2", "fw"};

// Two protocols, one framework, three versions; commands fail while listed in `failing`.
struct Rig {
    Ledger ledger;
    testing::FakeClock clock;
    testing::FakeVcs vcs;
    testing::ScriptedRunner runner;
    std::set<std::string> failing;
    int build_exit = 0;
    Session session;

    Rig() : session(ledger, context()) {
        runner.behaviour = [this](const CommandSpec& spec) {
            if (spec.command == "make") return testing::exited(build_exit);
            return testing::exited(failing.count(spec.command) ? 1 : 0, 2000);
        };
        session.configure("demo", "h1");
    }

    SessionContext context() {
        SessionContext c;
        c.protocols = {{"P1", "Login", "", true}, {"P2", "Search", "", true}};
        c.frameworks = {{"fw", "Framework"}};
        c.tests = {{"P1", "fw", {"run-p1", 60s}, ""}, {"P2", "fw", {"run-p2", 60s}, ""}};
        c.workspace = "/ws";
        c.build_command = {"make", 60s};
        c.vcs = &vcs;
        c.runner = &runner;
        c.clock = &clock;
        return c;
    }

    void baselines() {
        session.record_manual_baseline("P1", 600);
        session.record_manual_baseline("P2", 900);
        session.record_implementation(kP1, 3600);
        session.record_implementation(kP2, 1800);
    }

    void start() {
        baselines();
        session.start_replay(testing::synthetic_versions(3));
    }

    std::uint64_t timed(ActivityCategory c, const TestKey& k, std::chrono::seconds d,
                        std::optional<BugDetails> bug = std::nullopt, StopResult* out = nullptr) {
        const auto id = session.start_activity(c, k);
        clock.advance(d);
        auto r = session.stop_activity(id, "", std::nullopt, std::move(bug));
        if (out) *out = r;
        return id;
    }

    std::size_t count(std::string_view kind) const {
        std::size_t n = 0;
        for (const auto& e : ledger.events()) n += kind_name(e.payload) == kind;
        return n;
    }
};

} // namespace

TEST_SUITE("session") {
    TEST_CASE("replay cannot start before every baseline is in") {
        Rig rig;
        rig.session.record_manual_baseline("P1", 600);
        const auto missing = rig.session.missing_baseline();
        CHECK(missing.size() == 3);
        CHECK(kind_of([&] { rig.session.start_replay(testing::synthetic_versions(3)); }) ==
              ErrorKind::IncompleteBaseline);
        CHECK(kind_of([&] { rig.session.record_manual_baseline("P1", 60); }) == ErrorKind::Duplicate);
        rig.session.record_manual_baseline("P1", 60, true);
        CHECK(kind_of([&] { rig.session.record_manual_baseline("P9", 60); }) == ErrorKind::Precondition);
        CHECK(kind_of([&] { rig.session.record_manual_baseline("P2", -1); }) == ErrorKind::InvalidArgument);
    }

    TEST_CASE("a clean pass through every version") {
        Rig rig;
        rig.start();
        CHECK(rig.session.state().phase == Phase::Replay);
        CHECK(rig.vcs.checkouts.size() == 1);
        for (std::size_t v = 1; v <= 3; ++v) {
            CHECK(rig.session.state().version == v);
            CHECK(rig.session.state().cursor() == 0);
            rig.session.run_test(kP1);
            CHECK(rig.session.state().cursor() == 1);
            CHECK(kind_of([&] { rig.session.advance_version(); }) == ErrorKind::Blocked);
            rig.session.run_test(kP2);
            rig.session.advance_version();
        }
        CHECK(rig.session.state().phase == Phase::Completed);
        CHECK(rig.count("VersionCompleted") == 3);
        CHECK(rig.count("SessionCompleted") == 1);
        CHECK(rig.vcs.checkouts == std::vector<std::string>{rig.session.state().versions->at(1).commit.id,
                                                              rig.session.state().versions->at(2).commit.id,
                                                              rig.session.state().versions->at(3).commit.id});
        CHECK(kind_of([&] { rig.session.run_test(kP1); }) == ErrorKind::Precondition);
    }

    TEST_CASE("a broken test needs analysis, repair and a passing re-run") {
        Rig rig;
        rig.failing.insert("run-p1");
        rig.start();
        const auto run = rig.session.run_test(kP1);
        CHECK(run.outcome == TestOutcome::Fail);
        CHECK(kind_of([&] { rig.session.run_test(kP1); }) == ErrorKind::Precondition); // classify first

        const auto actions = rig.session.classify_failure(kP1, FailureKind::BrokenTest);
        CHECK(actions.activities ==
              std::vector{ActivityCategory::AnalysisBrokenTest, ActivityCategory::RepairBrokenTest});
        CHECK(actions.script_update);

        rig.timed(ActivityCategory::AnalysisBrokenTest, kP1, 95s);
        StopResult repair;
        rig.timed(ActivityCategory::RepairBrokenTest, kP1, 300s, std::nullopt, &repair);
        CHECK(repair.script_updated);
        CHECK(repair.record.duration_s == 300);
        CHECK(rig.count("TestScriptUpdated") == 1);

        rig.failing.clear();
        CHECK(rig.session.run_test(kP1).attempt == 2);
        rig.session.run_test(kP2);
        rig.session.advance_version();
        CHECK(rig.session.state().version == 2);
        CHECK(rig.session.state().status.at(kP1).attempts == 0);
    }

    TEST_CASE("a bug activity records the bug on stop") {
        Rig rig;
        rig.failing.insert("run-p2");
        rig.start();
        rig.session.run_test(kP1);
        rig.session.run_test(kP2);
        const auto actions = rig.session.classify_failure(kP2, FailureKind::Bug);
        CHECK(actions.bug_record);
        StopResult stop;
        rig.timed(ActivityCategory::HandleBug, kP2, 120s, BugDetails{"search returns nothing", Resolution::Fix}, &stop);
        REQUIRE(stop.bug);
        CHECK(stop.bug->resolution == Resolution::Fix);
        CHECK(stop.bug->description == "search returns nothing");
        CHECK(stop.bug->activity_id == stop.record.id);
        CHECK_FALSE(rig.session.state().status.at(kP2).bug_record_pending);
        // Still failing: blocked until the re-run passes.
        CHECK(kind_of([&] { rig.session.advance_version(); }) == ErrorKind::Blocked);
        rig.failing.clear();
        rig.session.run_test(kP2);
        rig.session.advance_version();
    }

    TEST_CASE("stopping crash handling re-runs the test") {
        Rig rig;
        rig.failing.insert("run-p1");
        rig.start();
        rig.session.run_test(kP1);
        CHECK(rig.session.classify_failure(kP1, FailureKind::Crash).automatic_rerun);
        rig.failing.clear();
        StopResult stop;
        rig.timed(ActivityCategory::HandleCrash, kP1, 30s, std::nullopt, &stop);
        REQUIRE(stop.rerun);
        CHECK(stop.rerun->outcome == TestOutcome::Pass);
        CHECK(stop.rerun->attempt == 2);
        CHECK_FALSE(rig.session.state().status.at(kP1).crash_rerun_pending);
    }

    TEST_CASE("false negatives may be classified on a passing test") {
        Rig rig;
        rig.start();
        rig.session.run_test(kP1);
        CHECK(kind_of([&] { rig.session.classify_failure(kP1, FailureKind::BrokenTest); }) ==
              ErrorKind::NotClassifiable);
        CHECK(kind_of([&] { rig.session.classify_failure(kP2, FailureKind::FalseNegative); }) ==
              ErrorKind::NotClassifiable);
        rig.session.classify_failure(kP1, FailureKind::FalseNegative);
        rig.timed(ActivityCategory::HandleFalseNegative, kP1, 60s);
        rig.session.run_test(kP2);
        rig.session.advance_version();
    }

    TEST_CASE("one timer at a time") {
        Rig rig;
        rig.start();
        const auto id = rig.session.start_activity(ActivityCategory::AnalysisBrokenTest, kP1);
        CHECK(kind_of([&] { rig.session.start_activity(ActivityCategory::HandleBug, kP2); }) == ErrorKind::TimerActive);
        CHECK(kind_of([&] { rig.session.checkout_current(false); }) == ErrorKind::TimerActive);
        CHECK(kind_of([&] { rig.session.stop_activity(id + 100); }) == ErrorKind::NoActiveTimer);
        const auto reasons = rig.session.state().blocking_reasons();
        CHECK(std::any_of(reasons.begin(), reasons.end(),
                          [](const std::string& r) { return r.find("still running") != std::string::npos; }));
        rig.clock.advance(1500ms);
        CHECK(rig.session.stop_activity(0).record.duration_s == 2); // 1.5 s rounds half up
        CHECK(kind_of([&] { rig.session.stop_activity(0); }) == ErrorKind::NoActiveTimer);
    }

    TEST_CASE("durations come from the monotonic clock and can be overridden") {
        Rig rig;
        rig.start();
        const auto id = rig.session.start_activity(ActivityCategory::AnalysisBrokenTest, kP1);
        rig.clock.advance(61s);
        const auto r = rig.session.stop_activity(id, "fixed", 45);
        CHECK(r.record.duration_s == 45);
        CHECK(r.record.overridden);
        CHECK(r.record.stopped_at - r.record.started_at == 61s);
        CHECK(kind_of([&] {
                  rig.session.start_activity(ActivityCategory::AnalysisBrokenTest, kP1);
                  rig.session.stop_activity(0, "", -5);
              }) == ErrorKind::InvalidArgument);
    }

    TEST_CASE("baseline timers record the baseline") {
        Rig rig;
        const auto id = rig.session.start_activity(ActivityCategory::ManualBaseline, {"P1", ""});
        rig.clock.advance(540s);
        rig.session.stop_activity(id);
        CHECK(rig.session.state().manual_baselines.count("P1") == 1);
        CHECK(kind_of([&] { rig.session.start_activity(ActivityCategory::ManualBaseline, {"P1", ""}); }) ==
              ErrorKind::Duplicate);
        CHECK(kind_of([&] { rig.session.start_activity(ActivityCategory::HandleBug, kP1); }) ==
              ErrorKind::Precondition);
    }

    TEST_CASE("a failed build blocks the version until it verifies") {
        Rig rig;
        rig.build_exit = 2;
        rig.start();
        CHECK(rig.session.state().build_ok == false);
        CHECK(kind_of([&] { rig.session.run_test(kP1); }) == ErrorKind::Precondition);
        rig.build_exit = 0;
        CHECK(rig.session.reverify_build().ok);
        rig.session.run_test(kP1);
    }

    TEST_CASE("missing commands surface as CommandNotFound") {
        Rig rig;
        rig.start();
        rig.runner.behaviour = [](const CommandSpec&) { return testing::exited(127); };
        CHECK(kind_of([&] { rig.session.run_test(kP1); }) == ErrorKind::CommandNotFound);
        CHECK(rig.count("TestRun") == 0);
    }

    TEST_CASE("a dirty workspace stops the advance unless forced") {
        Rig rig;
        rig.start();
        rig.session.run_test(kP1);
        rig.session.run_test(kP2);
        rig.vcs.dirty = true;
        CHECK(kind_of([&] { rig.session.advance_version(); }) == ErrorKind::DirtyWorkspace);
        CHECK(rig.session.state().version == 1);
        rig.session.advance_version(true);
        CHECK(rig.session.state().version == 2);
    }

    TEST_CASE("the state is a fold of the ledger at every step") {
        Rig rig;
        rig.failing = {"run-p1", "run-p2"};
        rig.start();
        const auto check = [&] { CHECK(reconstruct_state(rig.ledger.events()) == rig.session.state()); };
        rig.session.run_test(kP1);
        check();
        rig.session.classify_failure(kP1, FailureKind::Bug);
        const auto id = rig.session.start_activity(ActivityCategory::HandleBug, kP1);
        check();
        rig.clock.advance(10s);
        rig.session.stop_activity(id);
        check();
        rig.session.run_test(kP2);
        rig.session.classify_failure(kP2, FailureKind::Crash);
        rig.failing.clear();
        rig.timed(ActivityCategory::HandleCrash, kP2, 5s);
        rig.session.run_test(kP1);
        rig.session.advance_version();
        check();

        // A fresh session over the same ledger picks up where this one stopped.
        Session again(rig.ledger, rig.context());
        CHECK(again.state() == rig.session.state());
    }
}
