#include "replayroi/ledger.hpp"

#include "replayroi/error.hpp"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <fmt/format.h>

namespace replayroi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace events {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ProtocolInfo, id, title, selected)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FrameworkInfo, id, name)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TestInfo, protocol, framework, command, timeout_s, script)

} // namespace events

namespace {

template <class T>
T required(const json& j, const char* field) {
    if (!j.contains(field)) {
        throw Error(ErrorKind::SchemaViolation, fmt::format("missing field '{}'", field));
    }
    return j.at(field).get<T>();
}

json encode(const events::ProjectConfigured& p) {
    return {{"project", p.project}, {"config_hash", p.config_hash}, {"protocols", p.protocols},
            {"frameworks", p.frameworks}, {"tests", p.tests}};
}
json encode(const events::BaselineRecorded& p) {
    return {{"category", to_string(p.category)}, {"protocol", p.protocol}, {"framework", p.framework},
            {"duration_s", p.duration_s}, {"overwrite", p.overwrite}, {"note", p.note}};
}
json encode(const events::SessionStarted& p) {
    return {{"session_id", p.session_id}, {"versions", p.versions}, {"tests", p.tests}};
}
json encode(const events::VersionCheckedOut& p) {
    return {{"index", p.index}, {"commit", p.commit}, {"workspace", p.workspace}, {"forced", p.forced}};
}
json encode(const events::BuildVerified& p) {
    return {{"index", p.index}, {"ok", p.ok}, {"exit_code", p.exit_code}, {"timed_out", p.timed_out},
            {"excerpt", p.excerpt}};
}
json encode(const events::TestRun& p) {
    return {{"index", p.index}, {"protocol", p.protocol}, {"framework", p.framework},
            {"outcome", to_string(p.outcome)}, {"attempt", p.attempt}, {"elapsed_ms", p.elapsed_ms},
            {"timed_out", p.timed_out}, {"note", p.note}};
}
json encode(const events::FailureClassified& p) {
    return {{"index", p.index}, {"protocol", p.protocol}, {"framework", p.framework},
            {"kind", to_string(p.kind)}, {"attempt", p.attempt}};
}
json encode(const events::ActivityStarted& p) {
    return {{"index", p.index}, {"category", to_string(p.category)}, {"protocol", p.protocol},
            {"framework", p.framework}, {"monotonic_ns", p.monotonic_ns}};
}
json encode(const events::ActivityStopped& p) {
    return {{"activity_id", p.activity_id}, {"index", p.index}, {"category", to_string(p.category)},
            {"protocol", p.protocol}, {"framework", p.framework},
            {"started_at", format_instant(p.started_at)}, {"stopped_at", format_instant(p.stopped_at)},
            {"duration_s", p.duration_s}, {"overridden", p.overridden}, {"note", p.note}};
}
json encode(const events::BugRecorded& p) {
    return {{"index", p.index}, {"protocol", p.protocol}, {"framework", p.framework},
            {"description", p.description}, {"resolution", to_string(p.resolution)},
            {"activity_id", p.activity_id}};
}
json encode(const events::TestScriptUpdated& p) {
    return {{"index", p.index}, {"protocol", p.protocol}, {"framework", p.framework}, {"note", p.note}};
}
json encode(const events::VersionCompleted& p) { return {{"index", p.index}}; }
json encode(const events::SessionCompleted& p) { return {{"versions", p.versions}}; }

Payload decode(std::string_view kind, const json& d) {
    using namespace events;
    if (kind == "ProjectConfigured") {
        return ProjectConfigured{required<std::string>(d, "project"), d.value("config_hash", std::string{}),
                                 d.value("protocols", std::vector<ProtocolInfo>{}),
                                 d.value("frameworks", std::vector<FrameworkInfo>{}),
                                 d.value("tests", std::vector<TestInfo>{})};
    }
    if (kind == "BaselineRecorded") {
        return BaselineRecorded{parse_category(required<std::string>(d, "category")),
                                required<std::string>(d, "protocol"), d.value("framework", std::string{}),
                                required<std::int64_t>(d, "duration_s"), d.value("overwrite", false),
                                d.value("note", std::string{})};
    }
    if (kind == "SessionStarted") {
        return SessionStarted{required<std::string>(d, "session_id"), required<VersionSequence>(d, "versions"),
                              required<std::vector<TestInfo>>(d, "tests")};
    }
    if (kind == "VersionCheckedOut") {
        return VersionCheckedOut{required<std::size_t>(d, "index"), required<std::string>(d, "commit"),
                                 d.value("workspace", std::string{}), d.value("forced", false)};
    }
    if (kind == "BuildVerified") {
        return BuildVerified{required<std::size_t>(d, "index"), required<bool>(d, "ok"), d.value("exit_code", 0),
                             d.value("timed_out", false), d.value("excerpt", std::string{})};
    }
    if (kind == "TestRun") {
        return TestRun{required<std::size_t>(d, "index"), required<std::string>(d, "protocol"),
                       required<std::string>(d, "framework"), parse_outcome(required<std::string>(d, "outcome")),
                       required<std::uint32_t>(d, "attempt"), d.value("elapsed_ms", std::int64_t{0}),
                       d.value("timed_out", false), d.value("note", std::string{})};
    }
    if (kind == "FailureClassified") {
        return FailureClassified{required<std::size_t>(d, "index"), required<std::string>(d, "protocol"),
                                 required<std::string>(d, "framework"),
                                 parse_failure_kind(required<std::string>(d, "kind")),
                                 d.value("attempt", std::uint32_t{0})};
    }
    if (kind == "ActivityStarted") {
        return ActivityStarted{required<std::size_t>(d, "index"),
                               parse_category(required<std::string>(d, "category")),
                               required<std::string>(d, "protocol"), d.value("framework", std::string{}),
                               d.value("monotonic_ns", std::int64_t{0})};
    }
    if (kind == "ActivityStopped") {
        return ActivityStopped{required<std::uint64_t>(d, "activity_id"), required<std::size_t>(d, "index"),
                               parse_category(required<std::string>(d, "category")),
                               required<std::string>(d, "protocol"), d.value("framework", std::string{}),
                               parse_instant(required<std::string>(d, "started_at")),
                               parse_instant(required<std::string>(d, "stopped_at")),
                               required<std::int64_t>(d, "duration_s"), d.value("overridden", false),
                               d.value("note", std::string{})};
    }
    if (kind == "BugRecorded") {
        return BugRecorded{required<std::size_t>(d, "index"), required<std::string>(d, "protocol"),
                           required<std::string>(d, "framework"), d.value("description", std::string{}),
                           parse_resolution(required<std::string>(d, "resolution")),
                           required<std::uint64_t>(d, "activity_id")};
    }
    if (kind == "TestScriptUpdated") {
        return TestScriptUpdated{required<std::size_t>(d, "index"), required<std::string>(d, "protocol"),
                                 required<std::string>(d, "framework"), d.value("note", std::string{})};
    }
    if (kind == "VersionCompleted") return VersionCompleted{required<std::size_t>(d, "index")};
    if (kind == "SessionCompleted") return SessionCompleted{d.value("versions", std::size_t{0})};
    throw Error(ErrorKind::SchemaViolation, fmt::format("unknown event kind '{}'", kind));
}

void require(bool cond, std::string_view what) {
    if (!cond) throw Error(ErrorKind::SchemaViolation, std::string(what));
}

std::vector<Event> parse_lines(const std::string& content, std::size_t& valid_bytes,
                               const std::string& origin) {
    std::vector<Event> out;
    valid_bytes = 0;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < content.size()) {
        const auto nl = content.find('\n', pos);
        ++line_no;
        if (nl == std::string::npos) break; // torn tail: no terminating newline
        const std::string_view line(content.data() + pos, nl - pos);
        if (!line.empty()) {
            Event e;
            try {
                e = event_from_json(json::parse(line));
            } catch (const json::exception& ex) {
                // Only a last line can be torn; anything before it is corruption.
                if (nl + 1 >= content.size()) break;
                throw Error(ErrorKind::Storage, fmt::format("{}:{}: {}", origin, line_no, ex.what()));
            }
            const std::uint64_t expected = out.empty() ? 1 : out.back().sequence + 1;
            if (e.sequence != expected) {
                throw Error(ErrorKind::Storage, fmt::format("{}:{}: sequence {} where {} expected", origin,
                                                            line_no, e.sequence, expected));
            }
            if (!out.empty() && e.at < out.back().at) {
                throw Error(ErrorKind::Storage, fmt::format("{}:{}: instant goes backwards", origin, line_no));
            }
            out.push_back(std::move(e));
        }
        pos = nl + 1;
        valid_bytes = pos;
    }
    return out;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Storage, fmt::format("cannot read ledger {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

std::string_view kind_name(const Payload& p) {
    static constexpr std::string_view names[] = {
        "ProjectConfigured", "BaselineRecorded", "SessionStarted", "VersionCheckedOut", "BuildVerified",
        "TestRun", "FailureClassified", "ActivityStarted", "ActivityStopped", "BugRecorded",
        "TestScriptUpdated", "VersionCompleted", "SessionCompleted"};
    return names[p.index()];
}

json event_to_json(const Event& e) {
    return {{"v", kLedgerSchemaVersion},
            {"seq", e.sequence},
            {"at", format_instant(e.at)},
            {"kind", kind_name(e.payload)},
            {"data", std::visit([](const auto& p) { return encode(p); }, e.payload)}};
}

Event event_from_json(const json& j) {
    try {
        const int version = required<int>(j, "v");
        if (version != kLedgerSchemaVersion) {
            throw Error(ErrorKind::SchemaViolation, fmt::format("unsupported ledger schema v{}", version));
        }
        Event e;
        e.sequence = required<std::uint64_t>(j, "seq");
        e.at = parse_instant(required<std::string>(j, "at"));
        e.payload = decode(required<std::string>(j, "kind"), j.at("data"));
        validate_payload(e.payload);
        return e;
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::SchemaViolation, ex.what());
    } catch (const Error& ex) {
        if (ex.kind() == ErrorKind::SchemaViolation) throw;
        throw Error(ErrorKind::SchemaViolation, ex.what());
    }
}

std::string serialize_event(const Event& e) { return event_to_json(e).dump(); }

void validate_payload(const Payload& payload) {
    using namespace events;
    std::visit(
        [](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ProjectConfigured>) {
                require(!p.project.empty(), "project name is empty");
            } else if constexpr (std::is_same_v<T, BaselineRecorded>) {
                require(!is_maintenance(p.category), "baseline must be implementation or manual-baseline");
                require(!p.protocol.empty(), "baseline without protocol");
                require(p.duration_s >= 0, "negative duration");
                require((p.category == ActivityCategory::Implementation) == !p.framework.empty(),
                        "implementation needs a framework; manual baseline must not have one");
            } else if constexpr (std::is_same_v<T, SessionStarted>) {
                require(!p.session_id.empty(), "session id is empty");
                require(!p.versions.entries.empty(), "session without versions");
                require(!p.tests.empty(), "session without tests");
                for (std::size_t k = 0; k < p.versions.entries.size(); ++k) {
                    require(p.versions.entries[k].index == k + 1, "version indices must be 1..m");
                }
            } else if constexpr (std::is_same_v<T, VersionCheckedOut> || std::is_same_v<T, BuildVerified> ||
                                 std::is_same_v<T, VersionCompleted>) {
                require(p.index >= 1, "version index must be >= 1");
            } else if constexpr (std::is_same_v<T, TestRun>) {
                require(p.index >= 1 && p.attempt >= 1, "test run needs index >= 1 and attempt >= 1");
                require(!p.protocol.empty() && !p.framework.empty(), "test run without test");
            } else if constexpr (std::is_same_v<T, FailureClassified> || std::is_same_v<T, TestScriptUpdated>) {
                require(p.index >= 1, "version index must be >= 1");
                require(!p.protocol.empty() && !p.framework.empty(), "event without test");
            } else if constexpr (std::is_same_v<T, ActivityStarted>) {
                require(!p.protocol.empty(), "activity without protocol");
                require(is_maintenance(p.category) ? p.index >= 1 : p.index == 0,
                        "maintenance activities need index >= 1; baseline activities index 0");
                require(p.category == ActivityCategory::ManualBaseline || !p.framework.empty(),
                        "activity without framework");
            } else if constexpr (std::is_same_v<T, ActivityStopped>) {
                require(p.activity_id >= 1, "activity id missing");
                require(p.stopped_at >= p.started_at, "activity stops before it starts");
                require(p.duration_s >= 0, "negative duration");
                require(is_maintenance(p.category) ? p.index >= 1 : p.index == 0,
                        "maintenance activities need index >= 1; baseline activities index 0");
            } else if constexpr (std::is_same_v<T, BugRecorded>) {
                require(p.index >= 1 && p.activity_id >= 1, "bug needs index and linked activity");
            }
        },
        payload);
}

// ---------------------------------------------------------------------------
// Ledger

Ledger Ledger::open(const fs::path& path) {
    Ledger ledger;
    ledger.path_ = path;
    std::string content;
    if (fs::exists(path)) content = slurp(path);
    std::size_t valid = 0;
    ledger.events_ = parse_lines(content, valid, path.string());
    ledger.fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
    if (ledger.fd_ < 0) {
        throw Error(ErrorKind::Storage, fmt::format("cannot open ledger {}: {}", path.string(), std::strerror(errno)));
    }
    if (valid < content.size()) {
        ledger.discarded_bytes_ = content.size() - valid;
        if (::ftruncate(ledger.fd_, static_cast<off_t>(valid)) != 0) {
            throw Error(ErrorKind::Storage, fmt::format("cannot truncate torn ledger tail: {}", std::strerror(errno)));
        }
    }
    ::lseek(ledger.fd_, 0, SEEK_END);
    return ledger;
}

std::vector<Event> Ledger::read(const fs::path& path) {
    if (!fs::exists(path)) return {};
    std::size_t valid = 0;
    return parse_lines(slurp(path), valid, path.string());
}

Ledger::Ledger(Ledger&& other) noexcept
    : path_(std::move(other.path_)), fd_(other.fd_), events_(std::move(other.events_)),
      discarded_bytes_(other.discarded_bytes_) {
    other.fd_ = -1;
}

Ledger& Ledger::operator=(Ledger&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        path_ = std::move(other.path_);
        fd_ = other.fd_;
        events_ = std::move(other.events_);
        discarded_bytes_ = other.discarded_bytes_;
        other.fd_ = -1;
    }
    return *this;
}

Ledger::~Ledger() {
    if (fd_ >= 0) ::close(fd_);
}

std::uint64_t Ledger::append(Instant at, Payload payload) {
    if (!events_.empty() && at < events_.back().at) {
        throw Error(ErrorKind::OutOfOrder, fmt::format("event at {} precedes last event at {}", format_instant(at),
                                                       format_instant(events_.back().at)));
    }
    validate_payload(payload);
    Event e{last_sequence() + 1, at, std::move(payload)};
    if (fd_ >= 0) {
        const std::string line = serialize_event(e) + "\n";
        std::size_t written = 0;
        while (written < line.size()) {
            const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw Error(ErrorKind::Storage, fmt::format("ledger write failed: {}", std::strerror(errno)));
            }
            written += static_cast<std::size_t>(n);
        }
        if (::fdatasync(fd_) != 0) {
            throw Error(ErrorKind::Storage, fmt::format("ledger sync failed: {}", std::strerror(errno)));
        }
    }
    events_.push_back(std::move(e));
    return events_.back().sequence;
}

std::vector<Event> Ledger::snapshot(std::uint64_t up_to_sequence) const {
    const auto n = std::min<std::uint64_t>(up_to_sequence, events_.size());
    return {events_.begin(), events_.begin() + static_cast<std::ptrdiff_t>(n)};
}

} // namespace replayroi
