#include "replayroi/report.hpp"

#include "replayroi/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

namespace replayroi {

using nlohmann::json;

std::string format_minutes(double minutes) {
    std::string s = fmt::format("{:.2f}", minutes);
    if (s == "-0.00") s = "0.00";
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
    return s;
}

std::vector<HistogramBin> histogram(const std::vector<SeriesPoint>& series, double bin_width_min) {
    if (!(bin_width_min > 0.0)) throw Error(ErrorKind::InvalidArgument, "histogram bin width must be positive");
    std::vector<HistogramBin> bins;
    if (series.empty()) return bins;
    std::vector<std::size_t> counts;
    for (const auto& p : series) {
        const auto bin = static_cast<std::size_t>(std::floor(std::max(0.0, p.minutes) / bin_width_min));
        if (bin >= counts.size()) counts.resize(bin + 1, 0);
        ++counts[bin];
    }
    for (std::size_t i = 0; i < counts.size(); ++i) {
        bins.push_back({static_cast<double>(i) * bin_width_min, counts[i]});
    }
    return bins;
}

namespace {

std::string framework_name(const MeasurementTables& tables, const std::string& id) {
    for (const auto& f : tables.frameworks) {
        if (f.id == id && !f.name.empty()) return f.name;
    }
    return id;
}

std::string mean_sd_text(const MeanSd& m) {
    if (m.n == 0) return "-";
    return fmt::format("{} ± {}", format_minutes(m.mean), format_minutes(m.sd));
}

// Rows of cells; the first row is the header.
using Grid = std::vector<std::vector<std::string>>;

std::size_t display_width(const std::string& s) {
    // Count code points; good enough for "±" and "μ".
    std::size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

std::string render_text(const std::string& title, const Grid& grid) {
    std::vector<std::size_t> widths;
    for (const auto& row : grid) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], display_width(row[c]));
    }
    std::string out = title + "\n";
    for (std::size_t r = 0; r < grid.size(); ++r) {
        std::string line;
        for (std::size_t c = 0; c < grid[r].size(); ++c) {
            const auto& cell = grid[r][c];
            const std::string pad(widths[c] - display_width(cell), ' ');
            if (c > 0) line += "  ";
            line += c == 0 ? cell + pad : pad + cell;
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
        if (r == 0) {
            std::size_t total = 0;
            for (auto w : widths) total += w;
            out += std::string(total + 2 * (widths.empty() ? 0 : widths.size() - 1), '-') + "\n";
        }
    }
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string csv_line(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i > 0) line += ',';
        line += csv_field(cells[i]);
    }
    return line + "\n";
}

std::string render_csv(const std::string& section, const Grid& grid) {
    std::string out = csv_line({"table", section});
    for (const auto& row : grid) out += csv_line(row);
    return out;
}

std::vector<std::string> protocol_ids(const MeasurementTables& tables) {
    std::vector<std::string> ids;
    for (const auto& p : tables.protocols) {
        if (p.selected) ids.push_back(p.id);
    }
    return ids;
}

Grid implementation_grid(const MeasurementTables& tables, const SummaryStats& stats, bool csv) {
    const auto protocols = protocol_ids(tables);
    Grid grid;
    std::vector<std::string> header{"Framework"};
    header.insert(header.end(), protocols.begin(), protocols.end());
    header.emplace_back("Total");
    if (csv) {
        header.emplace_back("Mean");
        header.emplace_back("SD");
    } else {
        header.emplace_back("μ ± σ");
    }
    grid.push_back(header);
    for (const auto& impl : stats.implementation) {
        std::vector<std::string> row{framework_name(tables, impl.framework)};
        for (const auto& p : protocols) {
            const auto it = std::find_if(impl.per_protocol_min.begin(), impl.per_protocol_min.end(),
                                         [&](const auto& e) { return e.first == p; });
            row.push_back(it == impl.per_protocol_min.end() ? "-" : format_minutes(it->second));
        }
        row.push_back(format_minutes(impl.total_min));
        if (csv) {
            row.push_back(format_minutes(impl.per_protocol.mean));
            row.push_back(format_minutes(impl.per_protocol.sd));
        } else {
            row.push_back(mean_sd_text(impl.per_protocol));
        }
        grid.push_back(std::move(row));
    }
    return grid;
}

Grid maintenance_grid(const MeasurementTables& tables, const SummaryStats& stats, bool csv) {
    Grid grid;
    std::vector<std::string> header{"Category"};
    for (const auto& fm : stats.maintenance) {
        const auto name = framework_name(tables, fm.framework);
        header.push_back(name + " total");
        header.push_back(name + " occurrences");
        if (csv) {
            header.push_back(name + " mean");
            header.push_back(name + " sd");
        } else {
            header.push_back(name + " μ ± σ");
        }
    }
    grid.push_back(header);
    for (std::size_t c = 0; c < std::size(kMaintenanceCategories); ++c) {
        std::vector<std::string> row{std::string(display_name(kMaintenanceCategories[c]))};
        for (const auto& fm : stats.maintenance) {
            const auto& cs = fm.categories[c];
            row.push_back(format_minutes(cs.total_min));
            row.push_back(std::to_string(cs.occurrences));
            if (csv) {
                row.push_back(cs.occurrences ? format_minutes(cs.per_occurrence.mean) : "");
                row.push_back(cs.occurrences ? format_minutes(cs.per_occurrence.sd) : "");
            } else {
                row.push_back(mean_sd_text(cs.per_occurrence));
            }
        }
        grid.push_back(std::move(row));
    }
    std::vector<std::string> total{"Total"};
    std::vector<std::string> versions{"Versions with maintenance"};
    for (const auto& fm : stats.maintenance) {
        total.push_back(format_minutes(fm.total_min));
        total.push_back(std::to_string(fm.occurrences));
        if (csv) {
            total.push_back(format_minutes(fm.per_version.mean));
            total.push_back(format_minutes(fm.per_version.sd));
        } else {
            total.push_back(mean_sd_text(fm.per_version));
        }
        versions.push_back(fmt::format("{}/{}", fm.versions_with_maintenance, fm.versions));
        versions.insert(versions.end(), csv ? 3 : 2, "");
    }
    grid.push_back(std::move(total));
    grid.push_back(std::move(versions));
    return grid;
}

Grid execution_grid(const MeasurementTables& tables, const SummaryStats& stats) {
    Grid grid;
    std::vector<std::string> header{""};
    std::vector<std::string> total{"Total"};
    std::vector<std::string> average{"Average"};
    for (const auto& ex : stats.execution) {
        header.push_back(ex.column == "Manual" ? ex.column : framework_name(tables, ex.column));
        total.push_back(format_minutes(ex.total_min));
        average.push_back(format_minutes(ex.average_min));
    }
    grid.push_back(std::move(header));
    grid.push_back(std::move(total));
    grid.push_back(std::move(average));
    return grid;
}

json mean_sd_json(const MeanSd& m) {
    return {{"mean", m.mean}, {"sd", m.sd}, {"n", m.n}, {"degenerate", m.degenerate}};
}

json optional_instant(const std::optional<Instant>& t) {
    return t ? json(format_instant(*t)) : json(nullptr);
}

template <typename T>
json optional_value(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

json calendar_at(const std::vector<Instant>& calendar, std::size_t step) {
    return step < calendar.size() ? json(format_instant(calendar[step])) : json(nullptr);
}

json curve_json(const std::vector<double>& minutes, const std::vector<Instant>& calendar) {
    json steps = json::array();
    json cal = json::array();
    for (std::size_t k = 0; k < minutes.size(); ++k) {
        steps.push_back(k);
        cal.push_back(calendar_at(calendar, k));
    }
    return {{"step", steps}, {"calendar", cal}, {"minutes", minutes}};
}

json roi_json(const RoiEstimate& roi) {
    json j{{"model", roi.model},
           {"break_even_step", optional_value(roi.break_even_step)},
           {"break_even_minutes", roi.break_even_step ? json(roi.break_even_minutes) : json(nullptr)},
           {"break_even_time", optional_instant(roi.break_even_time)},
           {"horizon_step", roi.horizon_step}};
    if (roi.has_interval) {
        j["interval"] = {{"lower", optional_value(roi.interval_lower)},
                         {"upper", optional_value(roi.interval_upper)},
                         {"fraction_beyond_horizon", roi.fraction_beyond_horizon}};
    }
    return j;
}

json diagnostics_json(const ParamDiagnostics& d) { return {{"split_rhat", d.split_rhat}, {"ess", d.ess}}; }

std::string schedule_label(const EstimateOptions& o) {
    return std::string(to_string(o.schedule.frequency));
}

} // namespace

ReportBundle build_report(const MeasurementTables& tables, const ReportOptions& options) {
    ReportBundle bundle;
    bundle.provenance.ledger_sequence = tables.last_sequence;
    bundle.provenance.config_hash = options.config_hash;
    bundle.provenance.seed = options.schedules.empty() ? 0 : options.schedules.front().mcmc.seed;
    bundle.maintenance = options.maintenance;
    bundle.bin_width_min = options.bin_width_min;
    bundle.excluded_overrides = tables.excluded_overrides;
    bundle.stats = summary_stats(tables, options.maintenance);
    for (const auto& f : tables.framework_ids()) {
        FrameworkSeries fs;
        fs.framework = f;
        fs.maintenance = maintenance_series(tables, f, options.maintenance);
        fs.histogram = histogram(fs.maintenance, options.bin_width_min);
        bundle.series.push_back(std::move(fs));
    }
    for (auto schedule : options.schedules) {
        schedule.maintenance = options.maintenance;
        for (const auto& f : tables.framework_ids()) {
            ScheduledEstimate se;
            se.schedule = schedule_label(schedule);
            se.framework = f;
            try {
                se.result = estimate(tables, f, schedule);
            } catch (const Error& e) {
                se.error = fmt::format("{}: {}", to_string(e.kind()), e.what());
            }
            bundle.estimates.push_back(std::move(se));
        }
    }
    return bundle;
}

std::string render_tables(const MeasurementTables& tables, const SummaryStats& stats, TableFormat format) {
    const bool csv = format == TableFormat::Csv;
    const auto impl = implementation_grid(tables, stats, csv);
    const auto maint = maintenance_grid(tables, stats, csv);
    const auto exec = execution_grid(tables, stats);
    if (csv) {
        return render_csv("implementation", impl) + "\n" + render_csv("maintenance", maint) + "\n" +
               render_csv("execution", exec);
    }
    return render_text("Implementation time (min)", impl) + "\n" + render_text("Maintenance time (min)", maint) +
           "\n" + render_text("Execution time (min)", exec);
}

std::string render_roi(const ReportBundle& bundle) {
    std::string out;
    for (const auto& se : bundle.estimates) {
        if (!se.result) {
            out += fmt::format("{} [{}]: no estimate ({})\n", se.framework, se.schedule, se.error);
            continue;
        }
        const auto& r = *se.result;
        const auto& roi = r.roi;
        std::string line = fmt::format("{} [{}, {}]: ", se.framework, se.schedule, roi.model);
        if (roi.break_even_step) {
            line += fmt::format("break-even at step {} ({} min", *roi.break_even_step,
                                format_minutes(roi.break_even_minutes));
            if (roi.break_even_time) line += ", " + format_date(*roi.break_even_time);
            line += ")";
        } else {
            line += fmt::format("no break-even within {} steps", roi.horizon_step);
        }
        if (roi.has_interval) {
            const auto bound = [](const std::optional<std::size_t>& b) {
                return b ? std::to_string(*b) : std::string(">horizon");
            };
            line += fmt::format("; 95% interval [{}, {}]", bound(roi.interval_lower), bound(roi.interval_upper));
        }
        if (r.posterior && !r.posterior->converged) line += "; WARNING: sampler diagnostics failed";
        if (r.bands && r.bands->saturated) line += "; WARNING: predictive mean saturated";
        out += line + "\n";
    }
    return out;
}

json stats_to_json(const SummaryStats& stats) {
    json impl = json::array();
    for (const auto& s : stats.implementation) {
        json per = json::object();
        for (const auto& [p, v] : s.per_protocol_min) per[p] = v;
        impl.push_back({{"framework", s.framework},
                        {"per_protocol_min", per},
                        {"total_min", s.total_min},
                        {"per_protocol", mean_sd_json(s.per_protocol)}});
    }
    json maint = json::array();
    for (const auto& fm : stats.maintenance) {
        json cats = json::array();
        for (const auto& c : fm.categories) {
            cats.push_back({{"category", to_string(c.category)},
                            {"total_min", c.total_min},
                            {"occurrences", c.occurrences},
                            {"per_occurrence", mean_sd_json(c.per_occurrence)}});
        }
        maint.push_back({{"framework", fm.framework},
                         {"categories", cats},
                         {"total_min", fm.total_min},
                         {"occurrences", fm.occurrences},
                         {"versions_with_maintenance", fm.versions_with_maintenance},
                         {"versions", fm.versions},
                         {"per_version", mean_sd_json(fm.per_version)}});
    }
    json exec = json::array();
    for (const auto& e : stats.execution) {
        exec.push_back({{"column", e.column},
                        {"total_min", e.total_min},
                        {"average_min", e.average_min},
                        {"protocols", e.protocols}});
    }
    return {{"implementation", impl}, {"maintenance", maint}, {"execution", exec}};
}

json render_series(const ReportBundle& bundle) {
    json frameworks = json::array();
    for (const auto& fs : bundle.series) {
        json points = json::array();
        for (const auto& p : fs.maintenance) points.push_back({{"version", p.version}, {"minutes", p.minutes}});
        json bins = json::array();
        for (const auto& b : fs.histogram) {
            bins.push_back({{"lower", b.lower}, {"upper", b.lower + bundle.bin_width_min}, {"count", b.count}});
        }
        frameworks.push_back({{"framework", fs.framework}, {"maintenance", points}, {"histogram", bins}});
    }
    json cumulative = json::array();
    for (const auto& se : bundle.estimates) {
        if (!se.result) continue;
        const auto& r = *se.result;
        json entry{{"schedule", se.schedule},
                   {"framework", se.framework},
                   {"agt", curve_json(r.agt.minutes, r.agt.calendar)},
                   {"mgt", curve_json(r.mgt.minutes, r.mgt.calendar)},
                   {"agt_projection", curve_json(r.agt_projection, r.mgt.calendar)}};
        if (r.bands) {
            json steps = json::array();
            json cal = json::array();
            for (auto s : r.bands->steps) {
                steps.push_back(s);
                cal.push_back(calendar_at(r.mgt.calendar, s));
            }
            entry["bands"] = {{"step", steps},
                              {"calendar", cal},
                              {"lower", r.bands->lower},
                              {"median", r.bands->median},
                              {"upper", r.bands->upper},
                              {"observed_steps", r.bands->observed_steps},
                              {"saturated", r.bands->saturated}};
        }
        cumulative.push_back(std::move(entry));
    }
    return {{"schema", kReportSchema},
            {"bin_width_min", bundle.bin_width_min},
            {"frameworks", frameworks},
            {"cumulative", cumulative}};
}

json estimates_to_json(const ReportBundle& bundle) {
    json out = json::array();
    for (const auto& se : bundle.estimates) {
        json j{{"schedule", se.schedule}, {"framework", se.framework}};
        if (!se.result) {
            j["error"] = se.error;
            out.push_back(std::move(j));
            continue;
        }
        const auto& r = *se.result;
        j["roi"] = roi_json(r.roi);
        j["observed_roi"] = roi_json(r.observed_roi);
        if (r.linear) j["linear_fit"] = {{"a", r.linear->a}, {"b", r.linear->b}, {"rmse", r.linear->rmse}};
        if (r.log) j["log_fit"] = {{"a", r.log->a}, {"b", r.log->b}, {"rmse", r.log->rmse}};
        if (r.posterior) {
            const auto& p = *r.posterior;
            j["posterior"] = {{"chains", p.chains},
                              {"draws_per_chain", p.draws_per_chain},
                              {"seed", p.seed},
                              {"predictor", to_string(p.predictor)},
                              {"mode", to_string(p.mode)},
                              {"converged", p.converged},
                              {"acceptance", p.acceptance},
                              {"alpha", diagnostics_json(p.alpha)},
                              {"beta", diagnostics_json(p.beta)},
                              {"phi", diagnostics_json(p.phi)}};
        }
        out.push_back(std::move(j));
    }
    return out;
}

json bundle_to_json(const ReportBundle& bundle) {
    return {{"schema", kReportSchema},
            {"provenance",
             {{"ledger_sequence", bundle.provenance.ledger_sequence},
              {"config_hash", bundle.provenance.config_hash},
              {"seed", bundle.provenance.seed}}},
            {"include_bug_time", bundle.maintenance.include_bug_time},
            {"excluded_overrides", bundle.excluded_overrides},
            {"tables", stats_to_json(bundle.stats)},
            {"series", render_series(bundle)},
            {"estimates", estimates_to_json(bundle)}};
}

std::string export_csv(const MeasurementTables& tables) {
    std::string out = csv_line({"kind", "version", "protocol", "framework", "category", "duration_s", "detail"});
    for (const auto& [p, secs] : tables.baseline_manual) {
        out += csv_line({"manual-baseline", "0", p, "", "manual-baseline", std::to_string(secs), ""});
    }
    for (const auto& [key, secs] : tables.implementation) {
        out += csv_line({"implementation", "0", key.protocol, key.framework, "implementation", std::to_string(secs), ""});
    }
    for (const auto& a : tables.activities) {
        if (!is_maintenance(a.category)) continue;
        out += csv_line({"maintenance", std::to_string(a.version), a.protocol, a.framework,
                         std::string(to_string(a.category)), std::to_string(a.duration_s),
                         a.overridden ? "overridden" : ""});
    }
    for (const auto& r : tables.runs) {
        out += csv_line({"run", std::to_string(r.version), r.protocol, r.framework, "",
                         fmt::format("{:.3f}", static_cast<double>(r.elapsed_ms) / 1000.0),
                         fmt::format("{} attempt {}", to_string(r.outcome), r.attempt)});
    }
    for (const auto& b : tables.bugs) {
        out += csv_line({"bug", std::to_string(b.version), b.protocol, b.framework, "", "",
                         fmt::format("{}: {}", to_string(b.resolution), b.description)});
    }
    return out;
}

json export_structured(const MeasurementTables& tables) {
    json protocols = json::array();
    for (const auto& p : tables.protocols) protocols.push_back({{"id", p.id}, {"title", p.title}, {"selected", p.selected}});
    json frameworks = json::array();
    for (const auto& f : tables.frameworks) frameworks.push_back({{"id", f.id}, {"name", f.name}});
    json manual = json::object();
    for (const auto& [p, secs] : tables.baseline_manual) manual[p] = secs;
    json impl = json::array();
    for (const auto& [key, secs] : tables.implementation) {
        impl.push_back({{"protocol", key.protocol}, {"framework", key.framework}, {"duration_s", secs}});
    }
    json maint = json::array();
    for (const auto& [key, cells] : tables.maintenance) {
        for (const auto& [category, cell] : cells) {
            maint.push_back({{"framework", key.first},
                             {"version", key.second},
                             {"category", to_string(category)},
                             {"durations_s", cell.durations_s}});
        }
    }
    json activities = json::array();
    for (const auto& a : tables.activities) {
        activities.push_back({{"id", a.id},
                              {"version", a.version},
                              {"protocol", a.protocol},
                              {"framework", a.framework},
                              {"category", to_string(a.category)},
                              {"started_at", format_instant(a.started_at)},
                              {"stopped_at", format_instant(a.stopped_at)},
                              {"duration_s", a.duration_s},
                              {"overridden", a.overridden},
                              {"note", a.note}});
    }
    json runs = json::array();
    for (const auto& r : tables.runs) {
        runs.push_back({{"version", r.version},
                        {"protocol", r.protocol},
                        {"framework", r.framework},
                        {"outcome", to_string(r.outcome)},
                        {"attempt", r.attempt},
                        {"elapsed_ms", r.elapsed_ms}});
    }
    json bugs = json::array();
    for (const auto& b : tables.bugs) {
        bugs.push_back({{"version", b.version},
                        {"protocol", b.protocol},
                        {"framework", b.framework},
                        {"description", b.description},
                        {"resolution", to_string(b.resolution)},
                        {"activity_id", b.activity_id}});
    }
    json open = json::array();
    for (const auto& o : tables.open_activities) {
        open.push_back({{"id", o.id},
                        {"version", o.version},
                        {"category", to_string(o.category)},
                        {"protocol", o.protocol},
                        {"framework", o.framework},
                        {"started_at", format_instant(o.started_at)}});
    }
    return {{"schema", "replayroi.tables/1"},
            {"last_sequence", tables.last_sequence},
            {"versions", tables.versions ? json(*tables.versions) : json(nullptr)},
            {"protocols", protocols},
            {"frameworks", frameworks},
            {"manual_baseline_s", manual},
            {"implementation", impl},
            {"maintenance", maint},
            {"activities", activities},
            {"runs", runs},
            {"bugs", bugs},
            {"open_activities", open},
            {"excluded_overrides", tables.excluded_overrides}};
}

} // namespace replayroi
