#pragma once

#include "replayroi/error.hpp"
#include "replayroi/history.hpp"
#include "replayroi/ledger.hpp"
#include "replayroi/process.hpp"
#include "replayroi/session.hpp"
#include "replayroi/time.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <thread>

#include <fmt/format.h>
#include <vector>

namespace testing {

using namespace replayroi;

class FakeClock final : public Clock {
public:
    explicit FakeClock(Instant start = parse_instant("2021-03-01T09:00:00Z")) : now_(start) {}
    Instant wall() const override { return now_; }
    std::int64_t monotonic() const override { return mono_; }
    void advance(Millis d) {
        now_ += d;
        mono_ += std::chrono::duration_cast<std::chrono::nanoseconds>(d).count();
    }

private:
    Instant now_;
    std::int64_t mono_ = 1'000'000'000;
};

struct TempDir {
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    std::filesystem::path path;
    std::filesystem::path operator/(const std::string& p) const { return path / p; }
};

// Shell helper for fixtures; throws on a non-zero exit.
std::string sh(const std::string& command, const std::filesystem::path& cwd = {});

void write_file(const std::filesystem::path& p, const std::string& content);
std::string read_file(const std::filesystem::path& p);

// A throwaway Git repository with controlled commit dates.
class GitFixture {
public:
    explicit GitFixture(std::filesystem::path dir, std::string branch = "main");
    // Writes the files and commits them at `when`; returns the commit id.
    std::string commit(Instant when, const std::map<std::string, std::string>& files, const std::string& message = "c");
    const std::filesystem::path& dir() const { return dir_; }
    const std::vector<std::string>& ids() const { return ids_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> ids_;
};

// In-memory VCS for session tests.
class FakeVcs final : public VcsAdapter {
public:
    std::vector<CommitRef> commits;
    bool dirty = false;
    std::vector<std::string> checkouts;

    std::vector<CommitRef> list_commits(const std::string&, bool) override { return commits; }
    bool is_dirty(const std::filesystem::path&) override { return dirty; }
    void checkout(const std::filesystem::path&, const std::string& id, bool force) override {
        if (dirty && !force) throw Error(ErrorKind::DirtyWorkspace, "dirty");
        if (force) dirty = false;
        checkouts.push_back(id);
    }
    std::string head(const std::filesystem::path&) override { return checkouts.empty() ? "" : checkouts.back(); }
};

// Runs nothing; answers from a table keyed by command text.
class ScriptedRunner final : public CommandRunner {
public:
    std::function<ProcessResult(const CommandSpec&)> behaviour = [](const CommandSpec&) {
        ProcessResult r;
        r.exit_code = 0;
        return r;
    };
    std::vector<std::string> calls;

    ProcessResult run(const CommandSpec& spec, const std::filesystem::path&) override {
        calls.push_back(spec.command);
        return behaviour(spec);
    }
};

ProcessResult exited(int code, std::int64_t elapsed_ms = 100);

VersionSequence synthetic_versions(std::size_t m, Instant first = parse_instant("2019-01-07"),
                                   Millis gap = std::chrono::weeks{1});

// A random but schema-valid event log (configuration, baselines, a session,
// runs, activities, bugs), timestamps non-decreasing.
std::vector<std::pair<Instant, Payload>> random_event_log(std::uint64_t seed, std::size_t approx_events);

// Reference measurements for two frameworks over six protocols and 65 versions.
namespace fixture {

inline const std::vector<std::string> kProtocols{"T1", "T2", "T3", "T4", "T5", "T6"};
inline const std::vector<double> kSeleniumImpl{695.8, 53.35, 419.37, 398.33, 512.72, 205.33};
inline const std::vector<double> kEyeAutomateImpl{346.3, 19.82, 127.68, 296.15, 183.9, 220.52};

struct CategoryRow {
    ActivityCategory category;
    double total_min;
    std::size_t occurrences;
};
// analysis, repair, bug, false negative, crash
inline const std::vector<CategoryRow> kSeleniumMaintenance{
    {ActivityCategory::AnalysisBrokenTest, 91.25, 19}, {ActivityCategory::RepairBrokenTest, 247.18, 19},
    {ActivityCategory::HandleBug, 36.35, 24},          {ActivityCategory::HandleFalseNegative, 56.65, 2},
    {ActivityCategory::HandleCrash, 36.1, 4}};
inline const std::vector<CategoryRow> kEyeAutomateMaintenance{
    {ActivityCategory::AnalysisBrokenTest, 67.35, 22}, {ActivityCategory::RepairBrokenTest, 570.72, 22},
    {ActivityCategory::HandleBug, 30.45, 30},          {ActivityCategory::HandleFalseNegative, 10.23, 2},
    {ActivityCategory::HandleCrash, 4.05, 2}};

inline constexpr std::size_t kVersions = 65;
inline constexpr std::size_t kSeleniumMaintainedVersions = 28;
inline constexpr std::size_t kEyeAutomateMaintainedVersions = 26;

// Manual protocol times summing to the published 75 min total; per-test run
// times giving the published 7.5 and 30 min totals.
inline const std::vector<double> kManualMin{9.0, 14.0, 12.5, 16.0, 11.5, 12.0};
inline constexpr std::int64_t kSeleniumRunMs = 75'000;
inline constexpr std::int64_t kEyeAutomateRunMs = 300'000;

struct FixtureOptions {
    bool implementation = true;
    bool manual = true;
    bool maintenance = true;
    bool runs = true;
};

// Ledger with the reference totals. Maintenance lands on 28/26
// versions with bursts at 7-15 and 31.
void append_fixture_events(Ledger& ledger, FixtureOptions options = {});

// Versions that receive maintenance in the fixture, per framework.
std::vector<std::size_t> maintained_versions(const std::string& framework);

} // namespace fixture

} // namespace testing
