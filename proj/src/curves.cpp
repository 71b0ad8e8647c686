#include "replayroi/error.hpp"
#include "replayroi/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace replayroi {

namespace chr = std::chrono;

std::string_view to_string(MgtFrequency f) {
    switch (f) {
    case MgtFrequency::Weekly: return "weekly";
    case MgtFrequency::Monthly: return "monthly";
    case MgtFrequency::PerVersion: return "per-version";
    }
    return "unknown";
}

MgtFrequency parse_frequency(std::string_view text) {
    if (text == "weekly") return MgtFrequency::Weekly;
    if (text == "monthly") return MgtFrequency::Monthly;
    if (text == "per-version") return MgtFrequency::PerVersion;
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown MGT frequency '{}'", text));
}

std::string_view to_string(Accrual a) { return a == Accrual::Calendar ? "calendar" : "per-step"; }

Accrual parse_accrual(std::string_view text) {
    if (text == "calendar") return Accrual::Calendar;
    if (text == "per-step") return Accrual::PerStep;
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown accrual '{}'", text));
}

std::string_view to_string(ModelKind m) {
    switch (m) {
    case ModelKind::Empirical: return "empirical";
    case ModelKind::Linear: return "linear";
    case ModelKind::Log: return "log";
    case ModelKind::Bayes: return "bayes";
    }
    return "unknown";
}

ModelKind parse_model(std::string_view text) {
    if (text == "empirical") return ModelKind::Empirical;
    if (text == "linear") return ModelKind::Linear;
    if (text == "log") return ModelKind::Log;
    if (text == "bayes") return ModelKind::Bayes;
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown model '{}'", text));
}

// ---------------------------------------------------------------------------

CumulativeCurve agt_curve(const MeasurementTables& tables, const std::string& framework, MaintenanceOptions options) {
    std::vector<TestKey> tests;
    for (const auto& t : tables.tests) {
        if (t.framework == framework) tests.push_back({t.protocol, t.framework});
    }
    if (tests.empty()) {
        for (const auto& [key, secs] : tables.implementation) {
            if (key.framework == framework) tests.push_back(key);
        }
    }
    if (tests.empty()) {
        throw Error(ErrorKind::MissingImplementation, fmt::format("no implementation records for {}", framework));
    }
    std::int64_t implementation_s = 0;
    std::vector<std::string> missing;
    for (const auto& key : tests) {
        const auto it = tables.implementation.find(key);
        if (it == tables.implementation.end()) {
            missing.push_back(key.protocol);
        } else {
            implementation_s += it->second;
        }
    }
    if (!missing.empty()) {
        throw Error(ErrorKind::MissingImplementation,
                    fmt::format("missing implementation times for {}: {}", framework, fmt::join(missing, ", ")));
    }

    CumulativeCurve curve;
    curve.origin = CurveOrigin::Agt;
    curve.label = framework;
    // Seconds are summed exactly before converting, so point(i) - point(i-1) equals the series entry.
    std::int64_t running = implementation_s;
    curve.minutes.push_back(to_minutes(running));
    const std::size_t m = tables.version_count();
    std::vector<std::int64_t> per_version(m + 1, 0);
    for (const auto& [key, cells] : tables.maintenance) {
        if (key.first != framework || key.second < 1 || key.second > m) continue;
        for (const auto& [category, cell] : cells) {
            if (options.include_bug_time || category != ActivityCategory::HandleBug) per_version[key.second] += cell.total_s();
        }
    }
    for (std::size_t i = 1; i <= m; ++i) {
        running += per_version[i];
        curve.minutes.push_back(to_minutes(running));
    }
    if (tables.versions) curve.calendar = step_calendar(*tables.versions);
    return curve;
}

std::vector<Instant> step_calendar(const VersionSequence& versions) {
    std::vector<Instant> cal;
    if (versions.entries.empty()) return cal;
    cal.push_back(versions.entries.front().calendar_time);
    for (const auto& e : versions.entries) cal.push_back(e.calendar_time);
    return cal;
}

std::vector<Instant> extend_calendar(std::vector<Instant> calendar, std::size_t extra) {
    if (extra == 0) return calendar;
    if (calendar.empty()) {
        throw Error(ErrorKind::Precondition, "cannot extend an empty calendar");
    }
    std::vector<Millis::rep> gaps;
    for (std::size_t k = 1; k < calendar.size(); ++k) {
        const auto gap = (calendar[k] - calendar[k - 1]).count();
        if (gap > 0) gaps.push_back(gap);
    }
    Millis spacing = chr::days{1};
    if (!gaps.empty()) {
        std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
        spacing = Millis{gaps[gaps.size() / 2]};
    }
    for (std::size_t k = 0; k < extra; ++k) calendar.push_back(calendar.back() + spacing);
    return calendar;
}

namespace {

Instant add_months(Instant t, std::int64_t months) {
    const auto day = chr::floor<chr::days>(t);
    const auto time_of_day = t - day;
    chr::year_month_day ymd{day};
    chr::year_month_day shifted = ymd + chr::months{months};
    if (!shifted.ok()) {
        shifted = chr::year_month_day{chr::year_month_day_last{shifted.year(), chr::month_day_last{shifted.month()}}};
    }
    return Instant{chr::sys_days{shifted}} + time_of_day;
}

} // namespace

std::int64_t elapsed_periods(MgtFrequency frequency, Instant from, Instant to) {
    if (to <= from) return 0;
    switch (frequency) {
    case MgtFrequency::Weekly:
        return (to - from) / chr::duration_cast<Millis>(chr::weeks{1});
    case MgtFrequency::Monthly: {
        const chr::year_month_day a{chr::floor<chr::days>(from)};
        const chr::year_month_day b{chr::floor<chr::days>(to)};
        std::int64_t n = (static_cast<int>(b.year()) - static_cast<int>(a.year())) * 12 +
                         (static_cast<int>(static_cast<unsigned>(b.month())) -
                          static_cast<int>(static_cast<unsigned>(a.month())));
        while (n > 0 && add_months(from, n) > to) --n;
        return std::max<std::int64_t>(n, 0);
    }
    case MgtFrequency::PerVersion:
        break;
    }
    throw Error(ErrorKind::InvalidArgument, "per-version frequency has no calendar period");
}

CumulativeCurve mgt_curve(const MgtSchedule& schedule, std::size_t steps, const std::vector<Instant>& calendar,
                          Accrual accrual) {
    if (!(schedule.session_cost_min > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "manual session cost must be > 0");
    }
    CumulativeCurve curve;
    curve.origin = CurveOrigin::Mgt;
    curve.label = fmt::format("mgt-{}-{}", to_string(schedule.frequency), to_string(accrual));
    curve.calendar = calendar;
    const bool per_step = accrual == Accrual::PerStep || schedule.frequency == MgtFrequency::PerVersion;
    if (!per_step && calendar.size() < steps) {
        throw Error(ErrorKind::Precondition, "calendar accrual needs a calendar instant for every step");
    }
    for (std::size_t k = 0; k < steps; ++k) {
        const double periods = per_step ? static_cast<double>(k)
                                        : static_cast<double>(elapsed_periods(schedule.frequency, calendar[0], calendar[k]));
        curve.minutes.push_back(periods * schedule.session_cost_min);
    }
    return curve;
}

// ---------------------------------------------------------------------------

double LogModelFit::operator()(double x) const { return a + b * std::log(x + 1.0); }

namespace {

struct LineFit {
    double a = 0.0;
    double b = 0.0;
};

LineFit least_squares(std::span<const double> u, std::span<const double> y) {
    if (u.size() != y.size()) throw Error(ErrorKind::InvalidArgument, "x and y lengths differ");
    const double n = static_cast<double>(u.size());
    if (u.size() < 2) throw Error(ErrorKind::Degenerate, "need at least two points");
    const double ubar = std::accumulate(u.begin(), u.end(), 0.0) / n;
    const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double suu = 0.0;
    double suy = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        suu += (u[i] - ubar) * (u[i] - ubar);
        suy += (u[i] - ubar) * (y[i] - ybar);
    }
    if (!(suu > 0.0)) throw Error(ErrorKind::Degenerate, "all x values are equal");
    const double b = suy / suu;
    return {ybar - b * ubar, b};
}

double rmse_of(std::span<const double> x, std::span<const double> y, auto&& model) {
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - model(x[i]);
        ss += r * r;
    }
    return std::sqrt(ss / static_cast<double>(x.size()));
}

std::vector<double> steps_of(const CumulativeCurve& curve) {
    std::vector<double> x(curve.minutes.size());
    std::iota(x.begin(), x.end(), 0.0);
    return x;
}

} // namespace

LogModelFit fit_log_model(std::span<const double> x, std::span<const double> y) {
    std::vector<double> u(x.size());
    std::transform(x.begin(), x.end(), u.begin(), [](double v) { return std::log(v + 1.0); });
    const auto line = least_squares(u, y);
    LogModelFit fit{line.a, line.b, 0.0};
    fit.rmse = rmse_of(x, y, fit);
    return fit;
}

LinearModelFit fit_linear_model(std::span<const double> x, std::span<const double> y) {
    const auto line = least_squares(x, y);
    LinearModelFit fit{line.a, line.b, 0.0};
    fit.rmse = rmse_of(x, y, fit);
    return fit;
}

LogModelFit fit_log_model(const CumulativeCurve& curve) {
    const auto x = steps_of(curve);
    return fit_log_model(x, curve.minutes);
}

LinearModelFit fit_linear_model(const CumulativeCurve& curve) {
    const auto x = steps_of(curve);
    return fit_linear_model(x, curve.minutes);
}

// ---------------------------------------------------------------------------

std::optional<std::size_t> first_crossing(std::span<const double> agt, std::span<const double> mgt) {
    const std::size_t n = std::min(agt.size(), mgt.size());
    for (std::size_t k = 0; k < n; ++k) {
        if (mgt[k] >= agt[k]) return k;
    }
    return std::nullopt;
}

RoiEstimate break_even(const CumulativeCurve& agt, const CumulativeCurve& mgt) {
    RoiEstimate roi;
    roi.model = "empirical";
    const std::size_t n = std::min(agt.minutes.size(), mgt.minutes.size());
    roi.horizon_step = n == 0 ? 0 : n - 1;
    roi.break_even_step = first_crossing(agt.minutes, mgt.minutes);
    if (roi.break_even_step) {
        const auto k = *roi.break_even_step;
        roi.break_even_minutes = agt.minutes[k];
        if (k < agt.calendar.size()) {
            roi.break_even_time = agt.calendar[k];
        } else if (k < mgt.calendar.size()) {
            roi.break_even_time = mgt.calendar[k];
        }
    } else {
        roi.fraction_beyond_horizon = 1.0;
    }
    return roi;
}

RoiEstimate break_even(const CumulativeCurve& observed_agt, const PredictiveBands& bands, const CumulativeCurve& mgt) {
    const std::size_t m = observed_agt.last_step();
    // Point curve: observed values, then the (monotone) predictive median.
    CumulativeCurve point = observed_agt;
    for (std::size_t k = 0; k < bands.steps.size(); ++k) {
        if (bands.steps[k] > m) point.minutes.push_back(std::max(point.minutes.back(), bands.median[k]));
    }
    point.calendar = mgt.calendar;
    RoiEstimate roi = break_even(point, mgt);
    roi.model = "bayes";
    roi.has_interval = true;

    constexpr std::size_t kBeyond = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> per_draw;
    per_draw.reserve(bands.trajectories.size());
    std::vector<double> agt(observed_agt.minutes);
    for (const auto& traj : bands.trajectories) {
        agt.resize(observed_agt.minutes.size());
        for (std::size_t k = 0; k < bands.steps.size(); ++k) {
            if (bands.steps[k] > m) agt.push_back(std::max(agt.back(), traj[k]));
        }
        const auto k = first_crossing(agt, mgt.minutes);
        per_draw.push_back(k.value_or(kBeyond));
    }
    if (per_draw.empty()) return roi;
    std::sort(per_draw.begin(), per_draw.end());
    const auto beyond = std::count(per_draw.begin(), per_draw.end(), kBeyond);
    roi.fraction_beyond_horizon = static_cast<double>(beyond) / static_cast<double>(per_draw.size());
    // Inverted-CDF quantiles keep the bounds on the integer step grid.
    const auto rank = [&](double p) {
        const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(per_draw.size()))) - 1;
        return per_draw[std::min(idx, per_draw.size() - 1)];
    };
    const auto lo = rank(0.025);
    const auto hi = rank(0.975);
    if (lo != kBeyond) roi.interval_lower = lo;
    if (hi != kBeyond) roi.interval_upper = hi;
    return roi;
}

// ---------------------------------------------------------------------------

double manual_session_cost(const MeasurementTables& tables) {
    if (tables.baseline_manual.empty()) {
        throw Error(ErrorKind::IncompleteBaseline, "no manual baseline recorded");
    }
    std::int64_t total = 0;
    for (const auto& [p, secs] : tables.baseline_manual) total += secs;
    return to_minutes(total);
}

namespace {

void require_complete_baseline(const MeasurementTables& tables, const std::string& framework) {
    std::vector<std::string> missing;
    for (const auto& p : tables.protocols) {
        if (p.selected && !tables.baseline_manual.count(p.id)) missing.push_back("manual baseline " + p.id);
    }
    bool any_test = false;
    for (const auto& t : tables.tests) {
        if (t.framework != framework) continue;
        any_test = true;
        if (!tables.implementation.count({t.protocol, t.framework})) {
            missing.push_back("implementation " + t.protocol + "/" + t.framework);
        }
    }
    if (!any_test && std::none_of(tables.implementation.begin(), tables.implementation.end(),
                                  [&](const auto& kv) { return kv.first.framework == framework; })) {
        missing.push_back("implementation records for " + framework);
    }
    if (tables.baseline_manual.empty() && missing.empty()) missing.push_back("manual baseline");
    if (!missing.empty()) {
        throw Error(ErrorKind::IncompleteBaseline, fmt::format("baseline incomplete: {}", fmt::join(missing, ", ")));
    }
}

} // namespace

EstimateResult estimate(const MeasurementTables& tables, const std::string& framework, const EstimateOptions& options) {
    require_complete_baseline(tables, framework);
    EstimateResult result;
    result.framework = framework;
    result.agt = agt_curve(tables, framework, options.maintenance);
    const std::size_t m = result.agt.last_step();

    MgtSchedule schedule = options.schedule;
    if (!(schedule.session_cost_min > 0.0)) schedule.session_cost_min = manual_session_cost(tables);

    const std::size_t horizon = options.model == ModelKind::Empirical ? 0 : options.horizon;
    const std::size_t total_steps = m + horizon + 1;
    std::vector<Instant> calendar;
    if (!result.agt.calendar.empty()) calendar = extend_calendar(result.agt.calendar, horizon);
    result.mgt = mgt_curve(schedule, total_steps, calendar, options.accrual);

    result.agt_projection = result.agt.minutes;
    const auto extend_with = [&](auto&& model) {
        for (std::size_t k = m + 1; k < total_steps; ++k) {
            result.agt_projection.push_back(std::max(result.agt_projection.back(), model(static_cast<double>(k))));
        }
    };

    CumulativeCurve projected;
    switch (options.model) {
    case ModelKind::Empirical:
        break;
    case ModelKind::Linear:
        result.linear = fit_linear_model(result.agt);
        extend_with(*result.linear);
        break;
    case ModelKind::Log:
        result.log = fit_log_model(result.agt);
        extend_with(*result.log);
        break;
    case ModelKind::Bayes: {
        result.posterior = fit_bayes(result.agt, options.predictor, options.priors, options.mcmc, options.mode);
        result.bands = posterior_predictive(*result.posterior, horizon, options.allow_unconverged);
        for (std::size_t k = 0; k < result.bands->steps.size(); ++k) {
            if (result.bands->steps[k] > m) {
                result.agt_projection.push_back(std::max(result.agt_projection.back(), result.bands->median[k]));
            }
        }
        break;
    }
    }

    if (options.model == ModelKind::Bayes) {
        result.roi = break_even(result.agt, *result.bands, result.mgt);
    } else {
        projected = result.agt;
        projected.minutes = result.agt_projection;
        projected.calendar = result.mgt.calendar;
        result.roi = break_even(projected, result.mgt);
        result.roi.model = std::string(to_string(options.model));
    }
    CumulativeCurve observed_mgt = result.mgt;
    observed_mgt.minutes.resize(m + 1);
    if (observed_mgt.calendar.size() > m + 1) observed_mgt.calendar.resize(m + 1);
    result.observed_roi = break_even(result.agt, observed_mgt);
    return result;
}

} // namespace replayroi
