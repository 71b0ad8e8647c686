#include "support.hpp"

#include "replayroi/error.hpp"

#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace testing {

TempDir::TempDir() {
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 100; ++i) {
        auto p = base / fmt::format("replayroi-test-{:08x}", rd());
        if (std::filesystem::create_directory(p)) {
            path = p;
            return;
        }
    }
    throw std::runtime_error("cannot create a temp dir");
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
}

std::string sh(const std::string& command, const std::filesystem::path& cwd) {
    ShellRunner runner;
    CommandSpec spec{command, std::chrono::seconds{60}};
    const auto r = runner.run(spec, cwd.empty() ? std::filesystem::current_path() : cwd);
    if (!r.ok()) throw std::runtime_error(fmt::format("`{}` failed ({}): {}", command, r.exit_code, r.output));
    return r.output;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

GitFixture::GitFixture(std::filesystem::path dir, std::string branch) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    sh(fmt::format("git init -q -b {} . && git config user.email fixture@example.com && git config user.name fixture",
                   branch),
       dir_);
}

std::string GitFixture::commit(Instant when, const std::map<std::string, std::string>& files, const std::string& message) {
    for (const auto& [name, content] : files) write_file(dir_ / name, content);
    const auto stamp = fmt::format("@{} +0000", to_epoch_seconds(when));
    sh(fmt::format("git add -A && GIT_AUTHOR_DATE='{0}' GIT_COMMITTER_DATE='{0}' git commit -q --allow-empty -m {1}",
                   stamp, shell_quote(message)),
       dir_);
    auto id = sh("git rev-parse HEAD", dir_);
    while (!id.empty() && (id.back() == '\n' || id.back() == '\r')) id.pop_back();
    ids_.push_back(id);
    return id;
}

ProcessResult exited(int code, std::int64_t elapsed_ms) {
    ProcessResult r;
    r.exit_code = code;
    r.elapsed = Millis{elapsed_ms};
    r.output = code == 0 ? "ok\n" : "assertion failed\n";
    return r;
}

VersionSequence synthetic_versions(std::size_t m, Instant first, Millis gap) {
    VersionSequence seq;
    seq.strategy = SelectionStrategy::interval(gap);
    for (std::size_t i = 1; i <= m; ++i) {
        VersionEntry e;
        e.index = i;
        e.commit.id = fmt::format("{:040x}", i * 2654435761u);
        e.commit.timestamp = first + gap * static_cast<long>(i - 1);
        e.calendar_time = e.commit.timestamp;
        e.label = fmt::format("v{} {} {}", i, e.commit.id.substr(0, 10), format_date(e.commit.timestamp));
        seq.entries.push_back(e);
    }
    return seq;
}

std::vector<std::pair<Instant, Payload>> random_event_log(std::uint64_t seed, std::size_t approx_events) {
    std::mt19937_64 rng(seed);
    const auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    std::vector<std::pair<Instant, Payload>> log;
    Instant t = parse_instant("2020-01-01");
    const auto tick = [&] {
        t += Millis{static_cast<long>(pick(5'000'000))};
        return t;
    };
    const std::vector<std::string> protocols{"A", "B", "C"};
    const std::vector<std::string> frameworks{"x", "y"};
    events::ProjectConfigured pc;
    pc.project = "random";
    pc.config_hash = fmt::format("{:x}", seed);
    for (const auto& p : protocols) pc.protocols.push_back({p, p, true});
    for (const auto& f : frameworks) pc.frameworks.push_back({f, f});
    for (const auto& f : frameworks) {
        for (const auto& p : protocols) pc.tests.push_back({p, f, "true", 60, ""});
    }
    log.emplace_back(tick(), pc);
    for (const auto& p : protocols) {
        log.emplace_back(tick(), events::BaselineRecorded{ActivityCategory::ManualBaseline, p, "",
                                                          static_cast<std::int64_t>(pick(3000)), false, ""});
        for (const auto& f : frameworks) {
            log.emplace_back(tick(), events::BaselineRecorded{ActivityCategory::Implementation, p, f,
                                                              static_cast<std::int64_t>(pick(90000)), false, ""});
        }
    }
    const std::size_t m = 1 + pick(20);
    events::SessionStarted started;
    started.session_id = "S";
    started.versions = synthetic_versions(m);
    started.tests = pc.tests;
    log.emplace_back(tick(), started);

    std::uint64_t next_seq = 0; // sequence the next appended event will get
    while (log.size() < approx_events) {
        next_seq = log.size() + 1;
        const std::size_t v = 1 + pick(m);
        const auto& p = protocols[pick(protocols.size())];
        const auto& f = frameworks[pick(frameworks.size())];
        switch (pick(4)) {
        case 0: {
            events::TestRun run;
            run.index = v;
            run.protocol = p;
            run.framework = f;
            run.outcome = pick(3) == 0 ? TestOutcome::Fail : TestOutcome::Pass;
            run.attempt = 1 + static_cast<std::uint32_t>(pick(3));
            run.elapsed_ms = static_cast<std::int64_t>(pick(100000));
            log.emplace_back(tick(), run);
            break;
        }
        case 1: {
            const auto category = kMaintenanceCategories[pick(std::size(kMaintenanceCategories))];
            const auto start = tick();
            const auto start_seq = next_seq;
            log.emplace_back(start, events::ActivityStarted{v, category, p, f, 0});
            if (pick(10) == 0) break; // left open
            const auto d = static_cast<std::int64_t>(pick(4000));
            const auto stop = tick();
            log.emplace_back(stop, events::ActivityStopped{start_seq, v, category, p, f, start, stop, d, pick(6) == 0,
                                                           ""});
            if (category == ActivityCategory::HandleBug && pick(2) == 0) {
                    log.emplace_back(tick(), events::BugRecorded{v, p, f, "bug", Resolution::Fix, start_seq});
            }
            break;
        }
        case 2:
            log.emplace_back(tick(), events::FailureClassified{v, p, f, static_cast<FailureKind>(pick(4)), 1});
            break;
        default:
            log.emplace_back(tick(), events::VersionCompleted{v});
            break;
        }
    }
    return log;
}

namespace fixture {

std::vector<std::size_t> maintained_versions(const std::string& framework) {
    std::vector<std::size_t> v{7, 8, 9, 10, 11, 12, 13, 14, 15, 31};
    const std::vector<std::size_t> selenium_extra{2, 4, 5, 17, 19, 21, 23, 26, 28, 34, 37, 40, 44, 47, 51, 55, 59, 63};
    const std::vector<std::size_t> eyeautomate_extra{3, 5, 17, 18, 20, 22, 25, 29, 33, 36, 41, 45, 50, 54, 58, 62};
    const auto& extra = framework == "selenium" ? selenium_extra : eyeautomate_extra;
    v.insert(v.end(), extra.begin(), extra.end());
    std::sort(v.begin(), v.end());
    return v;
}

namespace {

double weight_of(std::size_t version) {
    if (version == 31) return 6.0;
    if (version >= 7 && version <= 15) return 4.0;
    return 1.0;
}

// Integer split of `total` proportional to weights (largest remainder).
std::vector<std::int64_t> split(std::int64_t total, const std::vector<double>& weights) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::int64_t> out;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::int64_t used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(total) * weights[i] / sum;
        out.push_back(static_cast<std::int64_t>(std::floor(exact)));
        used += out.back();
        remainders.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
    for (std::size_t k = 0; used < total; ++k, ++used) ++out[remainders[k].second];
    return out;
}

std::int64_t secs(double minutes) { return std::llround(minutes * 60.0); }

} // namespace

void append_fixture_events(Ledger& ledger, FixtureOptions options) {
    Instant t = parse_instant("2019-01-01T08:00:00Z");
    const auto next = [&] {
        t += std::chrono::minutes{1};
        return t;
    };
    const std::vector<std::pair<std::string, std::string>> frameworks{{"selenium", "Selenium"},
                                                                      {"eyeautomate", "EyeAutomate"}};
    events::ProjectConfigured pc;
    pc.project = "reference-fixture";
    pc.config_hash = "fixture";
    for (const auto& p : kProtocols) pc.protocols.push_back({p, "Protocol " + p, true});
    for (const auto& [id, name] : frameworks) pc.frameworks.push_back({id, name});
    for (const auto& [id, name] : frameworks) {
        for (const auto& p : kProtocols) pc.tests.push_back({p, id, "run " + p + " " + id, 600, ""});
    }
    ledger.append(next(), pc);

    if (options.manual) {
        for (std::size_t i = 0; i < kProtocols.size(); ++i) {
            ledger.append(next(), events::BaselineRecorded{ActivityCategory::ManualBaseline, kProtocols[i], "",
                                                           secs(kManualMin[i]), false, ""});
        }
    }
    if (options.implementation) {
        for (std::size_t i = 0; i < kProtocols.size(); ++i) {
            ledger.append(next(), events::BaselineRecorded{ActivityCategory::Implementation, kProtocols[i],
                                                           "selenium", secs(kSeleniumImpl[i]), false, ""});
            ledger.append(next(), events::BaselineRecorded{ActivityCategory::Implementation, kProtocols[i],
                                                           "eyeautomate", secs(kEyeAutomateImpl[i]), false, ""});
        }
    }

    const auto versions = synthetic_versions(kVersions);
    events::SessionStarted started;
    started.session_id = "S1";
    started.versions = versions;
    started.tests = pc.tests;
    t = std::max(next(), versions.entries.back().commit.timestamp);
    ledger.append(t, started);

    if (options.runs) {
        for (const auto& [id, name] : frameworks) {
            for (const auto& p : kProtocols) {
                events::TestRun run;
                run.index = 1;
                run.protocol = p;
                run.framework = id;
                run.outcome = TestOutcome::Pass;
                run.attempt = 1;
                run.elapsed_ms = id == "selenium" ? kSeleniumRunMs : kEyeAutomateRunMs;
                ledger.append(next(), run);
            }
        }
    }

    if (!options.maintenance) return;
    for (const auto& [id, name] : frameworks) {
        const auto& rows = id == "selenium" ? kSeleniumMaintenance : kEyeAutomateMaintenance;
        const auto placed = maintained_versions(id);
        std::size_t slot = 0;
        std::size_t protocol = 0;
        for (const auto& row : rows) {
            std::vector<std::size_t> at;
            std::vector<double> weights;
            for (std::size_t k = 0; k < row.occurrences; ++k) {
                at.push_back(placed[slot++ % placed.size()]);
                weights.push_back(weight_of(at.back()));
            }
            const auto durations = split(secs(row.total_min), weights);
            for (std::size_t k = 0; k < at.size(); ++k) {
                const auto& p = kProtocols[protocol++ % kProtocols.size()];
                const auto started_at = next();
                const auto start_seq = ledger.append(
                    started_at, events::ActivityStarted{at[k], row.category, p, id, 0});
                t += std::chrono::seconds{durations[k]};
                ledger.append(t, events::ActivityStopped{start_seq, at[k], row.category, p, id, started_at, t,
                                                         durations[k], false, ""});
            }
        }
    }
}

} // namespace fixture

} // namespace testing
