#include "replayroi/error.hpp"
#include "replayroi/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

namespace replayroi {

std::int64_t MaintenanceCell::total_s() const {
    return std::accumulate(durations_s.begin(), durations_s.end(), std::int64_t{0});
}

std::size_t MeasurementTables::version_count() const {
    if (versions) return versions->size();
    std::size_t m = 0;
    for (const auto& [key, cells] : maintenance) m = std::max(m, key.second);
    return m;
}

std::vector<std::string> MeasurementTables::framework_ids() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    const auto add = [&](const std::string& id) {
        if (!id.empty() && seen.insert(id).second) out.push_back(id);
    };
    for (const auto& f : frameworks) add(f.id);
    std::set<std::string> extra;
    for (const auto& [key, s] : implementation) extra.insert(key.framework);
    for (const auto& [key, cells] : maintenance) extra.insert(key.first);
    for (const auto& id : extra) add(id);
    return out;
}

void Folder::apply(const Event& e) {
    using namespace events;
    auto& t = tables_;
    t.last_sequence = e.sequence;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ProjectConfigured>) {
                t.protocols = p.protocols;
                t.frameworks = p.frameworks;
                if (!t.versions) t.tests = p.tests;
            } else if constexpr (std::is_same_v<T, BaselineRecorded>) {
                if (p.category == ActivityCategory::ManualBaseline) {
                    t.baseline_manual[p.protocol] = p.duration_s;
                } else {
                    t.implementation[{p.protocol, p.framework}] = p.duration_s;
                }
                t.activities.push_back(ActivityRecord{e.sequence, 0, p.protocol, p.framework, p.category, e.at,
                                                      e.at, p.duration_s, false, p.note});
            } else if constexpr (std::is_same_v<T, SessionStarted>) {
                t.versions = p.versions;
                t.tests = p.tests;
            } else if constexpr (std::is_same_v<T, TestRun>) {
                t.runs.push_back(
                    TestRunRecord{p.index, p.protocol, p.framework, p.outcome, p.attempt, p.elapsed_ms});
            } else if constexpr (std::is_same_v<T, ActivityStarted>) {
                open_[e.sequence] = OpenActivity{e.sequence, p.index, p.category, p.protocol, p.framework, e.at};
            } else if constexpr (std::is_same_v<T, ActivityStopped>) {
                open_.erase(p.activity_id);
                t.activities.push_back(ActivityRecord{p.activity_id, p.index, p.protocol, p.framework,
                                                      p.category, p.started_at, p.stopped_at, p.duration_s,
                                                      p.overridden, p.note});
                if (p.overridden && options_.exclude_overrides) {
                    ++t.excluded_overrides;
                    return;
                }
                if (p.category == ActivityCategory::ManualBaseline) {
                    t.baseline_manual[p.protocol] = p.duration_s;
                } else if (p.category == ActivityCategory::Implementation) {
                    t.implementation[{p.protocol, p.framework}] = p.duration_s;
                } else {
                    if (t.versions && p.index > t.versions->size()) {
                        throw Error(ErrorKind::SchemaViolation,
                                    fmt::format("activity at version {} outside 1..{}", p.index, t.versions->size()));
                    }
                    t.maintenance[{p.framework, p.index}][p.category].durations_s.push_back(p.duration_s);
                }
            } else if constexpr (std::is_same_v<T, BugRecorded>) {
                t.bugs.push_back(
                    BugRecord{p.index, p.protocol, p.framework, p.description, p.resolution, p.activity_id});
            }
        },
        e.payload);
}

MeasurementTables Folder::tables() const {
    MeasurementTables out = tables_;
    for (const auto& [id, open] : open_) out.open_activities.push_back(open);
    return out;
}

MeasurementTables fold_events(const std::vector<Event>& events, FoldOptions options) {
    Folder folder(options);
    for (const auto& e : events) folder.apply(e);
    return folder.tables();
}

// ---------------------------------------------------------------------------

MeanSd mean_sd(const std::vector<double>& values) {
    MeanSd r;
    r.n = values.size();
    if (values.empty()) {
        r.degenerate = true;
        return r;
    }
    r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(r.n);
    if (r.n < 2) {
        r.degenerate = true;
        return r;
    }
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(r.n - 1));
    return r;
}

namespace {

bool counts(ActivityCategory c, MaintenanceOptions options) {
    return options.include_bug_time || c != ActivityCategory::HandleBug;
}

std::vector<std::string> protocol_order(const MeasurementTables& t) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& p : t.protocols) {
        if (seen.insert(p.id).second) out.push_back(p.id);
    }
    std::set<std::string> extra;
    for (const auto& [key, s] : t.implementation) extra.insert(key.protocol);
    for (const auto& [id, s] : t.baseline_manual) extra.insert(id);
    for (const auto& id : extra) {
        if (seen.insert(id).second) out.push_back(id);
    }
    return out;
}

} // namespace

std::vector<SeriesPoint> maintenance_series(const MeasurementTables& tables, const std::string& framework,
                                            MaintenanceOptions options) {
    const std::size_t m = tables.version_count();
    std::vector<std::int64_t> seconds(m + 1, 0);
    for (const auto& [key, cells] : tables.maintenance) {
        if (key.first != framework || key.second < 1 || key.second > m) continue;
        for (const auto& [category, cell] : cells) {
            if (counts(category, options)) seconds[key.second] += cell.total_s();
        }
    }
    std::vector<SeriesPoint> out;
    out.reserve(m);
    for (std::size_t i = 1; i <= m; ++i) out.push_back({i, to_minutes(seconds[i])});
    return out;
}

SummaryStats summary_stats(const MeasurementTables& tables, MaintenanceOptions options) {
    SummaryStats s;
    const auto frameworks = tables.framework_ids();
    const auto protocols = protocol_order(tables);

    for (const auto& f : frameworks) {
        ImplementationStats impl;
        impl.framework = f;
        std::vector<double> values;
        std::int64_t total = 0;
        for (const auto& p : protocols) {
            const auto it = tables.implementation.find({p, f});
            if (it == tables.implementation.end()) continue;
            impl.per_protocol_min.emplace_back(p, to_minutes(it->second));
            values.push_back(to_minutes(it->second));
            total += it->second;
        }
        if (values.empty()) continue;
        impl.total_min = to_minutes(total);
        impl.per_protocol = mean_sd(values);
        s.implementation.push_back(std::move(impl));
    }

    const std::size_t m = tables.version_count();
    for (const auto& f : frameworks) {
        FrameworkMaintenanceStats fm;
        fm.framework = f;
        fm.versions = m;
        std::map<ActivityCategory, std::vector<std::int64_t>> by_category;
        for (const auto& [key, cells] : tables.maintenance) {
            if (key.first != f) continue;
            for (const auto& [category, cell] : cells) {
                auto& bucket = by_category[category];
                bucket.insert(bucket.end(), cell.durations_s.begin(), cell.durations_s.end());
            }
        }
        std::int64_t total = 0;
        for (ActivityCategory c : kMaintenanceCategories) {
            CategoryStats cs;
            cs.category = c;
            std::vector<double> minutes;
            std::int64_t cat_total = 0;
            for (auto d : by_category[c]) {
                minutes.push_back(to_minutes(d));
                cat_total += d;
            }
            cs.total_min = to_minutes(cat_total);
            cs.occurrences = minutes.size();
            cs.per_occurrence = mean_sd(minutes);
            if (counts(c, options)) {
                total += cat_total;
                fm.occurrences += cs.occurrences;
            }
            fm.categories.push_back(std::move(cs));
        }
        fm.total_min = to_minutes(total);
        const auto series = maintenance_series(tables, f, options);
        std::vector<double> per_version;
        for (const auto& pt : series) {
            per_version.push_back(pt.minutes);
            if (pt.minutes > 0.0) ++fm.versions_with_maintenance;
        }
        fm.per_version = mean_sd(per_version);
        s.maintenance.push_back(std::move(fm));
    }

    if (!tables.baseline_manual.empty()) {
        ExecutionStats manual{"Manual", 0.0, 0.0, tables.baseline_manual.size()};
        std::int64_t total = 0;
        for (const auto& [p, secs] : tables.baseline_manual) total += secs;
        manual.total_min = to_minutes(total);
        manual.average_min = manual.total_min / static_cast<double>(manual.protocols);
        s.execution.push_back(manual);
    }
    for (const auto& f : frameworks) {
        std::map<std::string, std::vector<std::int64_t>> elapsed;
        for (const auto& r : tables.runs) {
            if (r.framework == f && r.outcome == TestOutcome::Pass) elapsed[r.protocol].push_back(r.elapsed_ms);
        }
        if (elapsed.empty()) continue;
        ExecutionStats ex{f, 0.0, 0.0, elapsed.size()};
        for (const auto& [p, values] : elapsed) {
            const double mean_ms = static_cast<double>(std::accumulate(values.begin(), values.end(), std::int64_t{0})) /
                                   static_cast<double>(values.size());
            ex.total_min += mean_ms / 60000.0;
        }
        ex.average_min = ex.total_min / static_cast<double>(ex.protocols);
        s.execution.push_back(ex);
    }
    return s;
}

} // namespace replayroi
