#pragma once

#include "replayroi/domain.hpp"
#include "replayroi/history.hpp"
#include "replayroi/time.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace replayroi {

inline constexpr int kLedgerSchemaVersion = 1;

namespace events {

struct ProtocolInfo {
    std::string id;
    std::string title;
    bool selected = true;
    friend bool operator==(const ProtocolInfo&, const ProtocolInfo&) = default;
};

struct FrameworkInfo {
    std::string id;
    std::string name;
    friend bool operator==(const FrameworkInfo&, const FrameworkInfo&) = default;
};

struct TestInfo {
    std::string protocol;
    std::string framework;
    std::string command;
    std::int64_t timeout_s = 600;
    std::string script;
    friend bool operator==(const TestInfo&, const TestInfo&) = default;
};

struct ProjectConfigured {
    std::string project;
    std::string config_hash;
    std::vector<ProtocolInfo> protocols;
    std::vector<FrameworkInfo> frameworks;
    std::vector<TestInfo> tests;
};

// A baseline measurement entered as a duration (no live timer).
struct BaselineRecorded {
    ActivityCategory category = ActivityCategory::ManualBaseline;
    std::string protocol;
    std::string framework; // empty for ManualBaseline
    std::int64_t duration_s = 0;
    bool overwrite = false;
    std::string note;
};

struct SessionStarted {
    std::string session_id;
    VersionSequence versions;
    std::vector<TestInfo> tests;
};

struct VersionCheckedOut {
    std::size_t index = 0;
    std::string commit;
    std::string workspace;
    bool forced = false;
};

struct BuildVerified {
    std::size_t index = 0;
    bool ok = false;
    int exit_code = 0;
    bool timed_out = false;
    std::string excerpt;
};

struct TestRun {
    std::size_t index = 0;
    std::string protocol;
    std::string framework;
    TestOutcome outcome = TestOutcome::Pass;
    std::uint32_t attempt = 1;
    std::int64_t elapsed_ms = 0;
    bool timed_out = false;
    std::string note;
};

struct FailureClassified {
    std::size_t index = 0;
    std::string protocol;
    std::string framework;
    FailureKind kind = FailureKind::BrokenTest;
    std::uint32_t attempt = 0; // attempt the classification refers to
};

struct ActivityStarted {
    std::size_t index = 0;
    ActivityCategory category = ActivityCategory::AnalysisBrokenTest;
    std::string protocol;
    std::string framework;
    std::int64_t monotonic_ns = 0;
};

struct ActivityStopped {
    std::uint64_t activity_id = 0; // sequence number of the ActivityStarted event
    std::size_t index = 0;
    ActivityCategory category = ActivityCategory::AnalysisBrokenTest;
    std::string protocol;
    std::string framework;
    Instant started_at;
    Instant stopped_at;
    std::int64_t duration_s = 0;
    bool overridden = false;
    std::string note;
};

struct BugRecorded {
    std::size_t index = 0;
    std::string protocol;
    std::string framework;
    std::string description;
    Resolution resolution = Resolution::Workaround;
    std::uint64_t activity_id = 0;
};

struct TestScriptUpdated {
    std::size_t index = 0;
    std::string protocol;
    std::string framework;
    std::string note;
};

struct VersionCompleted {
    std::size_t index = 0;
};

struct SessionCompleted {
    std::size_t versions = 0;
};

} // namespace events

using Payload = std::variant<events::ProjectConfigured, events::BaselineRecorded, events::SessionStarted,
                             events::VersionCheckedOut, events::BuildVerified, events::TestRun,
                             events::FailureClassified, events::ActivityStarted, events::ActivityStopped,
                             events::BugRecorded, events::TestScriptUpdated, events::VersionCompleted,
                             events::SessionCompleted>;

std::string_view kind_name(const Payload& p);

struct Event {
    std::uint64_t sequence = 0;
    Instant at;
    Payload payload;

    template <class T>
    const T* as() const {
        return std::get_if<T>(&payload);
    }
};

nlohmann::json event_to_json(const Event& e);
// Throws Error(SchemaViolation) on unknown kinds, versions or missing fields.
Event event_from_json(const nlohmann::json& j);
std::string serialize_event(const Event& e); // one line, no trailing newline

// Kind-specific field checks shared by append and load.
void validate_payload(const Payload& p);

// Append-only, newline-delimited JSON event log. One writer; readers take
// snapshots. A torn final line (crash mid-write) is discarded on open.
class Ledger {
public:
    Ledger() = default; // in-memory
    static Ledger open(const std::filesystem::path& path);
    // Read-only load; never modifies the file.
    static std::vector<Event> read(const std::filesystem::path& path);

    Ledger(Ledger&& other) noexcept;
    Ledger& operator=(Ledger&& other) noexcept;
    Ledger(const Ledger&) = delete;
    Ledger& operator=(const Ledger&) = delete;
    ~Ledger();

    // Durable (fdatasync) before returning. Throws OutOfOrder, SchemaViolation, Storage.
    std::uint64_t append(Instant at, Payload payload);

    const std::vector<Event>& events() const { return events_; }
    std::vector<Event> snapshot(std::uint64_t up_to_sequence) const;
    std::uint64_t last_sequence() const { return events_.empty() ? 0 : events_.back().sequence; }
    const std::optional<std::filesystem::path>& path() const { return path_; }
    std::size_t discarded_bytes() const { return discarded_bytes_; }

private:
    std::optional<std::filesystem::path> path_;
    int fd_ = -1;
    std::vector<Event> events_;
    std::size_t discarded_bytes_ = 0;
};

// ---------------------------------------------------------------------------
// Measurement tables

struct ActivityRecord {
    std::uint64_t id = 0;
    std::size_t version = 0;
    std::string protocol;
    std::string framework;
    ActivityCategory category = ActivityCategory::AnalysisBrokenTest;
    Instant started_at;
    Instant stopped_at;
    std::int64_t duration_s = 0;
    bool overridden = false;
    std::string note;

    friend bool operator==(const ActivityRecord&, const ActivityRecord&) = default;
};

struct TestRunRecord {
    std::size_t version = 0;
    std::string protocol;
    std::string framework;
    TestOutcome outcome = TestOutcome::Pass;
    std::uint32_t attempt = 1;
    std::int64_t elapsed_ms = 0;

    friend bool operator==(const TestRunRecord&, const TestRunRecord&) = default;
};

struct BugRecord {
    std::size_t version = 0;
    std::string protocol;
    std::string framework;
    std::string description;
    Resolution resolution = Resolution::Workaround;
    std::uint64_t activity_id = 0;

    friend bool operator==(const BugRecord&, const BugRecord&) = default;
};

struct MaintenanceCell {
    std::vector<std::int64_t> durations_s;

    std::int64_t total_s() const;
    std::size_t occurrences() const { return durations_s.size(); }
    friend bool operator==(const MaintenanceCell&, const MaintenanceCell&) = default;
};

struct OpenActivity {
    std::uint64_t id = 0;
    std::size_t version = 0;
    ActivityCategory category = ActivityCategory::AnalysisBrokenTest;
    std::string protocol;
    std::string framework;
    Instant started_at;
    friend bool operator==(const OpenActivity&, const OpenActivity&) = default;
};

using MaintenanceKey = std::pair<std::string, std::size_t>; // (framework, version)

struct MeasurementTables {
    std::vector<events::ProtocolInfo> protocols;
    std::vector<events::FrameworkInfo> frameworks;
    std::vector<events::TestInfo> tests;
    std::optional<VersionSequence> versions;

    std::map<std::string, std::int64_t> baseline_manual;   // protocol -> seconds
    std::map<TestKey, std::int64_t> implementation;        // (protocol, framework) -> seconds
    std::map<MaintenanceKey, std::map<ActivityCategory, MaintenanceCell>> maintenance;
    std::vector<ActivityRecord> activities;
    std::vector<TestRunRecord> runs;
    std::vector<BugRecord> bugs;
    std::vector<OpenActivity> open_activities;
    std::size_t excluded_overrides = 0;
    std::uint64_t last_sequence = 0;

    // m: size of the replayed version sequence (highest maintained index if unknown).
    std::size_t version_count() const;
    std::vector<std::string> framework_ids() const;

    friend bool operator==(const MeasurementTables&, const MeasurementTables&) = default;
};

struct FoldOptions {
    bool exclude_overrides = false;
    friend bool operator==(const FoldOptions&, const FoldOptions&) = default;
};

// Incremental fold; copying a Folder mid-stream is a snapshot.
class Folder {
public:
    explicit Folder(FoldOptions options = {}) : options_(options) {}

    void apply(const Event& e);
    MeasurementTables tables() const;

    friend bool operator==(const Folder&, const Folder&) = default;

private:
    FoldOptions options_;
    MeasurementTables tables_;
    std::map<std::uint64_t, OpenActivity> open_;
};

MeasurementTables fold_events(const std::vector<Event>& events, FoldOptions options = {});

// ---------------------------------------------------------------------------
// Summary statistics

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0; // sample (n-1) standard deviation
    std::size_t n = 0;
    bool degenerate = false; // n < 2: sd reported as 0
};

MeanSd mean_sd(const std::vector<double>& values);

struct CategoryStats {
    ActivityCategory category = ActivityCategory::AnalysisBrokenTest;
    double total_min = 0.0;
    std::size_t occurrences = 0;
    MeanSd per_occurrence;
};

struct FrameworkMaintenanceStats {
    std::string framework;
    std::vector<CategoryStats> categories; // one per maintenance category, fixed order
    double total_min = 0.0;
    std::size_t occurrences = 0;
    std::size_t versions_with_maintenance = 0;
    std::size_t versions = 0;
    MeanSd per_version; // over all m versions, zero-maintenance versions included
};

struct ImplementationStats {
    std::string framework;
    std::vector<std::pair<std::string, double>> per_protocol_min;
    double total_min = 0.0;
    MeanSd per_protocol;
};

struct ExecutionStats {
    std::string column; // "Manual" or framework id
    double total_min = 0.0;
    double average_min = 0.0;
    std::size_t protocols = 0;
};

struct SummaryStats {
    std::vector<ImplementationStats> implementation;
    std::vector<FrameworkMaintenanceStats> maintenance;
    std::vector<ExecutionStats> execution;
};

struct MaintenanceOptions {
    bool include_bug_time = true;
};

SummaryStats summary_stats(const MeasurementTables& tables, MaintenanceOptions options = {});

struct SeriesPoint {
    std::size_t version = 0;
    double minutes = 0.0;
    friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

// One entry per version 1..m, zeros included.
std::vector<SeriesPoint> maintenance_series(const MeasurementTables& tables, const std::string& framework,
                                            MaintenanceOptions options = {});

inline double to_minutes(std::int64_t seconds) { return static_cast<double>(seconds) / 60.0; }

} // namespace replayroi
