#pragma once

#include "replayroi/process.hpp"
#include "replayroi/time.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace replayroi {

class Clock;

struct CommitRef {
    std::string id;
    Instant timestamp;
    std::optional<std::int64_t> churn; // added + deleted lines vs. first parent

    friend bool operator==(const CommitRef&, const CommitRef&) = default;
};

// Closed interval [from, to].
struct TimeRange {
    Instant from;
    Instant to;

    bool contains(Instant t) const { return t >= from && t <= to; }
};

// Half-open [start, end), re-sampled at `period`.
struct SentinelWindow {
    Instant start;
    Instant end;
    Millis period;

    bool contains(Instant t) const { return t >= start && t < end; }
    friend bool operator==(const SentinelWindow&, const SentinelWindow&) = default;
};

struct SelectionStrategy {
    enum class Kind { Interval, Churn, Explicit };

    Kind kind = Kind::Interval;
    Millis period{0};
    std::int64_t threshold_lines = 0;
    std::vector<std::string> commit_ids;
    // Interval buckets anchor here; defaults to the first commit's instant.
    std::optional<Instant> anchor;
    std::vector<SentinelWindow> sentinels;

    static SelectionStrategy interval(Millis period, std::optional<Instant> anchor = std::nullopt);
    static SelectionStrategy churn(std::int64_t threshold_lines);
    static SelectionStrategy explicit_ids(std::vector<std::string> ids);
    // "interval:7d", "churn:250", "explicit:abc,def"
    static SelectionStrategy parse(std::string_view text);
    // "2021-01-01..2021-01-07:1d"; a date-only END covers that whole day.
    static SentinelWindow parse_sentinel(std::string_view text);

    std::string describe() const;
    void validate() const;

    friend bool operator==(const SelectionStrategy&, const SelectionStrategy&) = default;
};

struct VersionEntry {
    std::size_t index = 0; // 1-based
    CommitRef commit;
    std::string label;
    Instant calendar_time;

    friend bool operator==(const VersionEntry&, const VersionEntry&) = default;
};

struct VersionSequence {
    std::vector<VersionEntry> entries;
    SelectionStrategy strategy;

    std::size_t size() const { return entries.size(); }
    // 1-based access; throws Error(Precondition) when out of bounds.
    const VersionEntry& at(std::size_t index) const;

    friend bool operator==(const VersionSequence&, const VersionSequence&) = default;
};

void to_json(nlohmann::json& j, const VersionSequence& seq);
void from_json(const nlohmann::json& j, VersionSequence& seq);
void to_json(nlohmann::json& j, const VersionEntry& entry);
void from_json(const nlohmann::json& j, VersionEntry& entry);

// Version-control backend. Only local Git working copies are provided.
class VcsAdapter {
public:
    virtual ~VcsAdapter() = default;

    // First-parent history of `branch`, any order. Churn filled when requested.
    virtual std::vector<CommitRef> list_commits(const std::string& branch, bool with_churn) = 0;
    virtual bool is_dirty(const std::filesystem::path& workspace) = 0;
    virtual void checkout(const std::filesystem::path& workspace, const std::string& commit_id,
                          bool force) = 0;
    virtual std::string head(const std::filesystem::path& workspace) = 0;
};

class GitAdapter final : public VcsAdapter {
public:
    explicit GitAdapter(std::filesystem::path repo,
                        std::shared_ptr<CommandRunner> runner = std::make_shared<ShellRunner>());

    std::vector<CommitRef> list_commits(const std::string& branch, bool with_churn) override;
    bool is_dirty(const std::filesystem::path& workspace) override;
    void checkout(const std::filesystem::path& workspace, const std::string& commit_id,
                  bool force) override;
    std::string head(const std::filesystem::path& workspace) override;

private:
    ProcessResult git(const std::filesystem::path& dir, const std::vector<std::string>& args);

    std::filesystem::path repo_;
    std::shared_ptr<CommandRunner> runner_;
};

std::vector<CommitRef> load_commit_history(VcsAdapter& vcs, const std::string& branch,
                                           const TimeRange& range, bool with_churn = false);

VersionSequence select_versions(const std::vector<CommitRef>& history,
                                const SelectionStrategy& strategy);

struct WorkspaceState {
    std::size_t index = 0;
    std::string commit_id;
    Instant checked_out_at;
    std::filesystem::path workspace;
};

struct CheckoutOptions {
    bool force = false;
};

WorkspaceState checkout_version(VcsAdapter& vcs, const VersionSequence& seq, std::size_t index,
                                const std::filesystem::path& workspace, CheckoutOptions options,
                                const Clock& clock);

struct BuildResult {
    bool ok = false;
    int exit_code = 0;
    bool timed_out = false;
    std::string log_excerpt;
};

// Throws Error(CommandNotFound) when the shell cannot resolve the command and
// Error(Timeout) when it exceeds its limit.
BuildResult verify_build(CommandRunner& runner, const WorkspaceState& workspace,
                         const CommandSpec& build_command);

std::string shell_quote(std::string_view arg);

} // namespace replayroi
