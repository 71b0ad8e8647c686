#pragma once

#include "replayroi/estimator.hpp"
#include "replayroi/ledger.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace replayroi {

inline constexpr std::string_view kReportSchema = "replayroi.report/1";

struct Provenance {
    std::uint64_t ledger_sequence = 0;
    std::string config_hash;
    std::uint64_t seed = 0;
};

struct HistogramBin {
    double lower = 0.0; // bin covers [lower, lower + width)
    std::size_t count = 0;
    friend bool operator==(const HistogramBin&, const HistogramBin&) = default;
};

// Bins start at 0 and are contiguous up to the bin holding the maximum.
std::vector<HistogramBin> histogram(const std::vector<SeriesPoint>& series, double bin_width_min);

struct FrameworkSeries {
    std::string framework;
    std::vector<SeriesPoint> maintenance;
    std::vector<HistogramBin> histogram;
};

struct ScheduledEstimate {
    std::string schedule; // e.g. "weekly", "monthly"
    std::string framework;
    std::optional<EstimateResult> result;
    std::string error; // set when the estimate could not be produced
};

struct ReportBundle {
    Provenance provenance;
    MaintenanceOptions maintenance;
    double bin_width_min = 5.0;
    std::size_t excluded_overrides = 0;
    SummaryStats stats;
    std::vector<FrameworkSeries> series;
    std::vector<ScheduledEstimate> estimates;
};

struct ReportOptions {
    std::string config_hash;
    double bin_width_min = 5.0;
    MaintenanceOptions maintenance;
    // One estimate per framework for every entry; empty means tables and series only.
    std::vector<EstimateOptions> schedules;
};

// Pure: same tables + options give a bit-identical bundle.
ReportBundle build_report(const MeasurementTables& tables, const ReportOptions& options);

enum class TableFormat { Text, Csv };

std::string render_tables(const MeasurementTables& tables, const SummaryStats& stats, TableFormat format);
std::string render_roi(const ReportBundle& bundle);

// Minutes with at most two decimals, trailing zeros dropped ("2284.9", "75").
std::string format_minutes(double minutes);

nlohmann::json stats_to_json(const SummaryStats& stats);
nlohmann::json render_series(const ReportBundle& bundle);
nlohmann::json estimates_to_json(const ReportBundle& bundle);
nlohmann::json bundle_to_json(const ReportBundle& bundle);

// Raw measurement dumps.
std::string export_csv(const MeasurementTables& tables);
nlohmann::json export_structured(const MeasurementTables& tables);

} // namespace replayroi
