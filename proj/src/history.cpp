#include "replayroi/history.hpp"

#include "replayroi/error.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace replayroi {

namespace fs = std::filesystem;

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::string format_period(Millis period) {
    using namespace std::chrono;
    const auto ms = period.count();
    if (ms % duration_cast<Millis>(weeks{1}).count() == 0) return fmt::format("{}w", ms / 604800000);
    if (ms % duration_cast<Millis>(days{1}).count() == 0) return fmt::format("{}d", ms / 86400000);
    if (ms % duration_cast<Millis>(hours{1}).count() == 0) return fmt::format("{}h", ms / 3600000);
    if (ms % duration_cast<Millis>(minutes{1}).count() == 0) return fmt::format("{}m", ms / 60000);
    return fmt::format("{}s", ms / 1000);
}

std::string make_label(std::size_t index, const CommitRef& commit) {
    return fmt::format("v{} {} {}", index, commit.id.substr(0, 10), format_date(commit.timestamp));
}

} // namespace

// ---------------------------------------------------------------------------
// SelectionStrategy

SelectionStrategy SelectionStrategy::interval(Millis period, std::optional<Instant> anchor) {
    SelectionStrategy s;
    s.kind = Kind::Interval;
    s.period = period;
    s.anchor = anchor;
    return s;
}

SelectionStrategy SelectionStrategy::churn(std::int64_t threshold_lines) {
    SelectionStrategy s;
    s.kind = Kind::Churn;
    s.threshold_lines = threshold_lines;
    return s;
}

SelectionStrategy SelectionStrategy::explicit_ids(std::vector<std::string> ids) {
    SelectionStrategy s;
    s.kind = Kind::Explicit;
    s.commit_ids = std::move(ids);
    return s;
}

SelectionStrategy SelectionStrategy::parse(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw Error(ErrorKind::InvalidArgument,
                    fmt::format("strategy '{}' must be interval:PERIOD, churn:N or explicit:IDS", text));
    }
    const auto kind = text.substr(0, colon);
    const auto arg = text.substr(colon + 1);
    if (kind == "interval") return interval(parse_duration(arg));
    if (kind == "churn") {
        std::int64_t n = 0;
        auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), n);
        if (ec != std::errc{} || ptr != arg.data() + arg.size() || n <= 0) {
            throw Error(ErrorKind::InvalidArgument, fmt::format("churn threshold '{}' must be a positive integer", arg));
        }
        return churn(n);
    }
    if (kind == "explicit") {
        std::vector<std::string> ids;
        std::stringstream ss{std::string(arg)};
        for (std::string id; std::getline(ss, id, ',');) {
            id = trim(id);
            if (!id.empty()) ids.push_back(id);
        }
        return explicit_ids(std::move(ids));
    }
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown strategy kind '{}'", kind));
}

SentinelWindow SelectionStrategy::parse_sentinel(std::string_view text) {
    const auto dots = text.find("..");
    const auto colon = text.rfind(':');
    if (dots == std::string_view::npos || colon == std::string_view::npos || colon < dots) {
        throw Error(ErrorKind::InvalidArgument,
                    fmt::format("sentinel '{}' must look like START..END:PERIOD", text));
    }
    // Times may contain ':' too; the period is whatever follows the last colon.
    const auto start_text = text.substr(0, dots);
    const auto end_text = text.substr(dots + 2, colon - dots - 2);
    SentinelWindow w;
    w.start = parse_instant(start_text);
    w.end = parse_instant(end_text);
    if (is_date_only(end_text)) w.end += std::chrono::days{1};
    w.period = parse_duration(text.substr(colon + 1));
    if (w.end <= w.start) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("sentinel '{}' ends before it starts", text));
    }
    return w;
}

std::string SelectionStrategy::describe() const {
    std::string out;
    switch (kind) {
    case Kind::Interval: out = "interval:" + format_period(period); break;
    case Kind::Churn: out = fmt::format("churn:{}", threshold_lines); break;
    case Kind::Explicit: out = fmt::format("explicit:{}", fmt::join(commit_ids, ",")); break;
    }
    for (const auto& w : sentinels) {
        out += fmt::format(" sentinel:{}..{}:{}", format_instant(w.start), format_instant(w.end),
                           format_period(w.period));
    }
    return out;
}

void SelectionStrategy::validate() const {
    switch (kind) {
    case Kind::Interval:
        if (period.count() <= 0) throw Error(ErrorKind::InvalidArgument, "interval period must be > 0");
        break;
    case Kind::Churn:
        if (threshold_lines <= 0) throw Error(ErrorKind::InvalidArgument, "churn threshold must be > 0");
        break;
    case Kind::Explicit:
        if (commit_ids.empty()) throw Error(ErrorKind::InvalidArgument, "explicit strategy needs commit ids");
        if (!sentinels.empty()) {
            throw Error(ErrorKind::InvalidArgument, "sentinel windows do not apply to explicit selection");
        }
        break;
    }
    auto sorted = sentinels;
    std::sort(sorted.begin(), sorted.end(),
              [](const SentinelWindow& a, const SentinelWindow& b) { return a.start < b.start; });
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        if (sorted[k].period.count() <= 0 || sorted[k].end <= sorted[k].start) {
            throw Error(ErrorKind::InvalidArgument, "sentinel window must have positive length and period");
        }
        if (k > 0 && sorted[k].start < sorted[k - 1].end) {
            throw Error(ErrorKind::InvalidArgument, "sentinel windows overlap");
        }
    }
}

// ---------------------------------------------------------------------------
// VersionSequence

const VersionEntry& VersionSequence::at(std::size_t index) const {
    if (index < 1 || index > entries.size()) {
        throw Error(ErrorKind::Precondition,
                    fmt::format("version index {} outside 1..{}", index, entries.size()));
    }
    return entries[index - 1];
}

void to_json(nlohmann::json& j, const VersionEntry& e) {
    j = nlohmann::json{{"index", e.index},
                       {"commit", e.commit.id},
                       {"timestamp", format_instant(e.commit.timestamp)},
                       {"label", e.label}};
    if (e.commit.churn) j["churn"] = *e.commit.churn;
}

void from_json(const nlohmann::json& j, VersionEntry& e) {
    e.index = j.at("index").get<std::size_t>();
    e.commit.id = j.at("commit").get<std::string>();
    e.commit.timestamp = parse_instant(j.at("timestamp").get<std::string>());
    if (j.contains("churn")) {
        e.commit.churn = j.at("churn").get<std::int64_t>();
    } else {
        e.commit.churn.reset();
    }
    e.label = j.value("label", std::string{});
    e.calendar_time = e.commit.timestamp;
}

void to_json(nlohmann::json& j, const VersionSequence& seq) {
    j = nlohmann::json{{"strategy", seq.strategy.describe()}, {"entries", seq.entries}};
}

void from_json(const nlohmann::json& j, VersionSequence& seq) {
    seq.entries = j.at("entries").get<std::vector<VersionEntry>>();
    seq.strategy = {};
    const auto described = j.value("strategy", std::string{});
    if (!described.empty()) {
        // Sentinel suffixes are informational; the kind round-trips.
        const auto space = described.find(' ');
        const auto head = described.substr(0, space);
        seq.strategy = SelectionStrategy::parse(head);
        if (space != std::string::npos) {
            std::stringstream ss{described.substr(space + 1)};
            for (std::string token; ss >> token;) {
                if (token.rfind("sentinel:", 0) == 0) {
                    seq.strategy.sentinels.push_back(SelectionStrategy::parse_sentinel(token.substr(9)));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// GitAdapter

std::string shell_quote(std::string_view arg) {
    std::string out = "'";
    for (char c : arg) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    out += "'";
    return out;
}

GitAdapter::GitAdapter(fs::path repo, std::shared_ptr<CommandRunner> runner)
    : repo_(std::move(repo)), runner_(std::move(runner)) {}

ProcessResult GitAdapter::git(const fs::path& dir, const std::vector<std::string>& args) {
    std::string cmd = "git -C " + shell_quote(dir.string());
    for (const auto& a : args) cmd += " " + shell_quote(a);
    return runner_->run(CommandSpec{cmd, std::chrono::minutes{10}}, {});
}

std::vector<CommitRef> GitAdapter::list_commits(const std::string& branch, bool with_churn) {
    std::error_code ec;
    if (!fs::is_directory(repo_, ec)) {
        throw Error(ErrorKind::RepositoryUnreadable, fmt::format("{} is not a directory", repo_.string()));
    }
    if (!git(repo_, {"rev-parse", "--git-dir"}).ok()) {
        throw Error(ErrorKind::RepositoryUnreadable, fmt::format("{} is not a git repository", repo_.string()));
    }
    if (!git(repo_, {"rev-parse", "--verify", "--quiet", branch + "^{commit}"}).ok()) {
        throw Error(ErrorKind::BranchMissing, fmt::format("branch '{}' not found in {}", branch, repo_.string()));
    }
    std::vector<std::string> args{"log", "--first-parent", "--format=@%H %ct"};
    if (with_churn) {
        args.insert(args.end(), {"--numstat", "--diff-merges=first-parent"});
    }
    args.push_back(branch);
    args.push_back("--");
    const auto res = git(repo_, args);
    if (!res.ok()) {
        throw Error(ErrorKind::RepositoryUnreadable, fmt::format("git log failed: {}", tail_excerpt(res.output, 512)));
    }

    std::vector<CommitRef> commits;
    std::istringstream in(res.output);
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        if (line[0] == '@') {
            const auto space = line.find(' ');
            CommitRef c;
            c.id = line.substr(1, space - 1);
            c.timestamp = instant_from_seconds(std::stoll(line.substr(space + 1)));
            if (with_churn) c.churn = 0;
            commits.push_back(std::move(c));
        } else if (with_churn && !commits.empty()) {
            // numstat: added<TAB>deleted<TAB>path; binary files report '-'.
            std::istringstream fields(line);
            std::string added, deleted;
            fields >> added >> deleted;
            std::int64_t n = 0;
            if (added != "-") n += std::stoll(added);
            if (deleted != "-") n += std::stoll(deleted);
            *commits.back().churn += n;
        }
    }
    return commits;
}

bool GitAdapter::is_dirty(const fs::path& workspace) {
    const auto res = git(workspace, {"status", "--porcelain", "--untracked-files=no"});
    if (!res.ok()) {
        throw Error(ErrorKind::CheckoutFailure, fmt::format("git status failed: {}", tail_excerpt(res.output, 512)));
    }
    return !trim(res.output).empty();
}

void GitAdapter::checkout(const fs::path& workspace, const std::string& commit_id, bool force) {
    std::vector<std::string> args{"checkout", "--quiet", "--detach"};
    if (force) args.push_back("--force");
    args.push_back(commit_id);
    const auto res = git(workspace, args);
    if (!res.ok()) {
        throw Error(ErrorKind::CheckoutFailure, trim(res.output));
    }
}

std::string GitAdapter::head(const fs::path& workspace) {
    const auto res = git(workspace, {"rev-parse", "HEAD"});
    if (!res.ok()) {
        throw Error(ErrorKind::CheckoutFailure, fmt::format("git rev-parse failed: {}", trim(res.output)));
    }
    return trim(res.output);
}

// ---------------------------------------------------------------------------
// Operations

std::vector<CommitRef> load_commit_history(VcsAdapter& vcs, const std::string& branch,
                                           const TimeRange& range, bool with_churn) {
    auto all = vcs.list_commits(branch, with_churn);
    std::vector<CommitRef> out;
    std::set<std::string> seen;
    for (auto& c : all) {
        if (c.id.empty() || !range.contains(c.timestamp)) continue;
        if (!seen.insert(c.id).second) continue;
        out.push_back(std::move(c));
    }
    if (out.empty()) {
        throw Error(ErrorKind::EmptyRange,
                    fmt::format("no commits on '{}' between {} and {}", branch,
                                format_instant(range.from), format_instant(range.to)));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const CommitRef& a, const CommitRef& b) { return a.timestamp < b.timestamp; });
    return out;
}

VersionSequence select_versions(const std::vector<CommitRef>& history,
                                const SelectionStrategy& strategy) {
    strategy.validate();
    if (history.empty()) {
        throw Error(ErrorKind::Precondition, "commit history is empty");
    }
    if (!std::is_sorted(history.begin(), history.end(),
                        [](const CommitRef& a, const CommitRef& b) { return a.timestamp < b.timestamp; })) {
        throw Error(ErrorKind::Precondition, "commit history must be sorted by timestamp");
    }

    const auto window_of = [&](Instant t) -> int {
        for (std::size_t w = 0; w < strategy.sentinels.size(); ++w) {
            if (strategy.sentinels[w].contains(t)) return static_cast<int>(w);
        }
        return -1;
    };

    std::vector<std::size_t> picked; // positions in history

    // Sentinel windows: last commit per fine bucket, anchored at the window start.
    std::map<std::pair<int, std::int64_t>, std::size_t> window_buckets;
    // Main strategy over commits outside every window.
    std::map<std::int64_t, std::size_t> main_buckets;
    const Instant anchor = strategy.anchor.value_or(history.front().timestamp);
    std::int64_t accumulated = 0;
    std::set<std::string> wanted(strategy.commit_ids.begin(), strategy.commit_ids.end());

    for (std::size_t k = 0; k < history.size(); ++k) {
        const auto& c = history[k];
        if (const int w = window_of(c.timestamp); w >= 0) {
            const auto& win = strategy.sentinels[static_cast<std::size_t>(w)];
            const auto bucket = floor_div((c.timestamp - win.start).count(), win.period.count());
            window_buckets[{w, bucket}] = k;
            continue;
        }
        switch (strategy.kind) {
        case SelectionStrategy::Kind::Interval:
            main_buckets[floor_div((c.timestamp - anchor).count(), strategy.period.count())] = k;
            break;
        case SelectionStrategy::Kind::Churn:
            if (!c.churn) {
                throw Error(ErrorKind::Precondition,
                            fmt::format("commit {} has no churn; load history with churn", c.id));
            }
            accumulated += *c.churn;
            if (accumulated >= strategy.threshold_lines) {
                picked.push_back(k);
                accumulated = 0;
            }
            break;
        case SelectionStrategy::Kind::Explicit:
            if (wanted.erase(c.id) > 0) picked.push_back(k);
            break;
        }
    }
    if (!wanted.empty()) {
        throw Error(ErrorKind::InvalidArgument,
                    fmt::format("commits not in history: {}", fmt::join(wanted, ", ")));
    }
    for (const auto& [key, k] : main_buckets) picked.push_back(k);
    for (const auto& [key, k] : window_buckets) picked.push_back(k);
    std::sort(picked.begin(), picked.end());
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());

    if (picked.empty()) {
        throw Error(ErrorKind::NoVersions, fmt::format("strategy {} selected no versions", strategy.describe()));
    }

    VersionSequence seq;
    seq.strategy = strategy;
    for (std::size_t k : picked) {
        const auto& c = history[k];
        if (!seq.entries.empty() && seq.entries.back().calendar_time >= c.timestamp) {
            throw Error(ErrorKind::Precondition,
                        fmt::format("selected commits {} and {} share a timestamp",
                                    seq.entries.back().commit.id, c.id));
        }
        VersionEntry e;
        e.index = seq.entries.size() + 1;
        e.commit = c;
        e.label = make_label(e.index, c);
        e.calendar_time = c.timestamp;
        seq.entries.push_back(std::move(e));
    }
    return seq;
}

WorkspaceState checkout_version(VcsAdapter& vcs, const VersionSequence& seq, std::size_t index,
                                const fs::path& workspace, CheckoutOptions options, const Clock& clock) {
    const auto& entry = seq.at(index);
    if (!options.force && vcs.is_dirty(workspace)) {
        throw Error(ErrorKind::DirtyWorkspace,
                    fmt::format("workspace {} has local modifications; use force to discard them",
                                workspace.string()));
    }
    vcs.checkout(workspace, entry.commit.id, options.force);
    return WorkspaceState{index, entry.commit.id, clock.wall(), workspace};
}

BuildResult verify_build(CommandRunner& runner, const WorkspaceState& workspace,
                         const CommandSpec& build_command) {
    if (workspace.commit_id.empty()) {
        throw Error(ErrorKind::Precondition, "no version checked out in this workspace");
    }
    const auto res = runner.run(build_command, workspace.workspace);
    if (res.timed_out) {
        throw Error(ErrorKind::Timeout, fmt::format("build command exceeded {} s", build_command.timeout.count()));
    }
    if (res.exit_code == kShellNotFound) {
        throw Error(ErrorKind::CommandNotFound,
                    fmt::format("build command not found: {}", tail_excerpt(res.output, 512)));
    }
    return BuildResult{res.exit_code == 0, res.exit_code, false, tail_excerpt(res.output)};
}

} // namespace replayroi
