#pragma once

#include "replayroi/ledger.hpp"
#include "replayroi/time.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace replayroi {

// ---------------------------------------------------------------------------
// Cumulative curves

enum class CurveOrigin { Agt, Mgt };

struct CumulativeCurve {
    CurveOrigin origin = CurveOrigin::Agt;
    std::string label;           // framework id or schedule name
    std::vector<double> minutes; // index = step 0..N
    std::vector<Instant> calendar; // parallel to minutes; may be empty

    std::size_t last_step() const { return minutes.empty() ? 0 : minutes.size() - 1; }
};

// point(0) = sum of implementation times; point(i) = point(i-1) + maintenance at v_i.
// Throws Error(MissingImplementation) if any (protocol, framework) test lacks one.
CumulativeCurve agt_curve(const MeasurementTables& tables, const std::string& framework,
                          MaintenanceOptions options = {});

enum class MgtFrequency { Weekly, Monthly, PerVersion };
enum class Accrual { Calendar, PerStep };

std::string_view to_string(MgtFrequency f);
MgtFrequency parse_frequency(std::string_view text);
std::string_view to_string(Accrual a);
Accrual parse_accrual(std::string_view text);

struct MgtSchedule {
    MgtFrequency frequency = MgtFrequency::Weekly;
    double session_cost_min = 0.0; // tau_{T+}
};

// Step calendar: element k is the instant of step k (step 0 shares v_1's instant).
std::vector<Instant> step_calendar(const VersionSequence& versions);
// Extends a calendar by `extra` steps using the median spacing of its last steps.
std::vector<Instant> extend_calendar(std::vector<Instant> calendar, std::size_t extra);

// `steps` = number of points (step 0..steps-1). Calendar accrual needs `calendar`.
CumulativeCurve mgt_curve(const MgtSchedule& schedule, std::size_t steps, const std::vector<Instant>& calendar,
                          Accrual accrual);

// Whole schedule periods elapsed between two instants (calendar months for monthly).
std::int64_t elapsed_periods(MgtFrequency frequency, Instant from, Instant to);

// ---------------------------------------------------------------------------
// Least-squares models

struct LogModelFit {
    double a = 0.0; // y = a + b ln(x + 1)
    double b = 0.0;
    double rmse = 0.0;
    double operator()(double x) const;
};

struct LinearModelFit {
    double a = 0.0; // y = a + b x
    double b = 0.0;
    double rmse = 0.0;
    double operator()(double x) const { return a + b * x; }
};

// Both throw Error(Degenerate) when fewer than two distinct x values exist.
LogModelFit fit_log_model(const CumulativeCurve& curve);
LinearModelFit fit_linear_model(const CumulativeCurve& curve);
LogModelFit fit_log_model(std::span<const double> x, std::span<const double> y);
LinearModelFit fit_linear_model(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Bayesian negative-binomial regression on cumulative cost

enum class Predictor { Step, LogStep };
enum class PhiPrior { GammaOnLogPhi, ExponentialOnPhi };
enum class FitMode { Cumulative, Increments };

std::string_view to_string(Predictor p);
Predictor parse_predictor(std::string_view text);
std::string_view to_string(FitMode m);
FitMode parse_fit_mode(std::string_view text);
std::string_view to_string(PhiPrior p);
PhiPrior parse_phi_prior(std::string_view text);

double predictor_value(Predictor p, std::size_t step);

struct Priors {
    double alpha_sd = 10.0;
    double beta_sd = 10.0;
    PhiPrior phi = PhiPrior::GammaOnLogPhi;
    double gamma_shape = 0.5; // on log(phi)
    double gamma_rate = 0.5;
    double exponential_rate = 1.0; // on phi
};

struct McmcConfig {
    int chains = 4;
    int warmup = 1000;
    int draws = 2000;
    std::uint64_t seed = 1;
};

// Observations for the count likelihood: predictor x_i and count y_i at step s_i.
struct CountData {
    std::vector<std::size_t> steps;
    std::vector<double> x;
    std::vector<std::int64_t> y;
};

// Cumulative mode: y_i = round(curve[i]) for steps 1..m.
// Increments mode: y_i = round(curve[i] - curve[i-1]).
CountData counts_from_curve(const CumulativeCurve& curve, Predictor predictor, FitMode mode);

struct Draw {
    double alpha = 0.0;
    double beta = 0.0;
    double phi = 0.0;
    friend bool operator==(const Draw&, const Draw&) = default;
};

struct ParamDiagnostics {
    double split_rhat = 0.0;
    double ess = 0.0;
};

struct PosteriorSamples {
    std::vector<Draw> draws; // chain-major: chain c occupies [c*draws_per_chain, (c+1)*draws_per_chain)
    int chains = 0;
    int draws_per_chain = 0;
    ParamDiagnostics alpha, beta, phi;
    std::vector<double> acceptance; // per chain, post-warmup
    bool converged = false;         // every split-R-hat <= 1.05 and ESS >= 200
    std::uint64_t seed = 0;
    Predictor predictor = Predictor::Step;
    FitMode mode = FitMode::Cumulative;
    // Context for prediction.
    std::size_t observed_steps = 0;
    double base_minutes = 0.0; // curve value at the step before the first observation

    std::vector<double> column(double Draw::*field) const;
};

inline constexpr double kRhatLimit = 1.05;
inline constexpr double kMinEss = 200.0;

// Throws Error(InvalidArgument) for chains < 2 or non-positive sizes, and
// Error(Degenerate) with fewer than two observations.
PosteriorSamples fit_bayes(const CountData& data, Priors priors, McmcConfig mcmc,
                           Predictor predictor = Predictor::Step, FitMode mode = FitMode::Cumulative);
PosteriorSamples fit_bayes(const CumulativeCurve& curve, Predictor predictor, Priors priors, McmcConfig mcmc,
                           FitMode mode = FitMode::Cumulative);

// Unnormalised log density of the sampler's target at natural parameters (the
// phi-coordinate Jacobian included); exposed for tests.
double log_posterior(const CountData& data, const Priors& priors, double alpha, double beta, double phi);

// Split-R-hat and ESS over equal-length chains.
ParamDiagnostics chain_diagnostics(const std::vector<std::vector<double>>& chains);

// Negative-binomial draw via its Gamma-Poisson mixture.
template <class Rng>
std::int64_t sample_negative_binomial(Rng& rng, double mean, double phi);

struct PredictiveBands {
    std::vector<std::size_t> steps; // observed steps followed by the horizon
    std::vector<double> lower;      // 2.5%
    std::vector<double> median;     // non-decreasing after post-processing
    std::vector<double> upper;      // 97.5%
    std::vector<double> raw_median;
    std::size_t observed_steps = 0;
    bool saturated = false; // some lambda hit the overflow cap
    // trajectories[d][k]: cumulative minutes for draw d at steps[k].
    std::vector<std::vector<double>> trajectories;
};

inline constexpr double kLambdaCap = 1e12;

// Throws Error(Precondition) if the samples failed diagnostics and `allow_unconverged` is false.
PredictiveBands posterior_predictive(const PosteriorSamples& samples, std::size_t horizon,
                                     bool allow_unconverged = false);

// Type-7 (linear interpolation) quantile of unsorted values.
double quantile(std::vector<double> values, double p);

// ---------------------------------------------------------------------------
// Break-even

struct RoiEstimate {
    std::optional<std::size_t> break_even_step; // nullopt: beyond horizon
    double break_even_minutes = 0.0;            // AGT cumulative cost at the break-even step
    std::optional<Instant> break_even_time;
    // Interval over posterior draws (Bayesian only). nullopt bound: beyond horizon.
    bool has_interval = false;
    std::optional<std::size_t> interval_lower;
    std::optional<std::size_t> interval_upper;
    double fraction_beyond_horizon = 0.0;
    std::size_t horizon_step = 0; // last step examined
    std::string model;
};

// Smallest k with mgt[k] >= agt[k] over the common length.
std::optional<std::size_t> first_crossing(std::span<const double> agt, std::span<const double> mgt);

RoiEstimate break_even(const CumulativeCurve& agt, const CumulativeCurve& mgt);
// AGT is the observed curve up to its last step, then the predictive band;
// the interval comes from per-draw trajectories.
RoiEstimate break_even(const CumulativeCurve& observed_agt, const PredictiveBands& bands, const CumulativeCurve& mgt);

// ---------------------------------------------------------------------------
// End-to-end estimate for one framework

enum class ModelKind { Empirical, Linear, Log, Bayes };
std::string_view to_string(ModelKind m);
ModelKind parse_model(std::string_view text);

struct EstimateOptions {
    MgtSchedule schedule;
    Accrual accrual = Accrual::Calendar;
    ModelKind model = ModelKind::Log;
    Predictor predictor = Predictor::Step;
    FitMode mode = FitMode::Cumulative;
    std::size_t horizon = 0;
    Priors priors;
    McmcConfig mcmc;
    MaintenanceOptions maintenance;
    bool allow_unconverged = false;
};

struct EstimateResult {
    std::string framework;
    CumulativeCurve agt;                // observed, steps 0..m
    CumulativeCurve mgt;                // steps 0..m+horizon
    std::vector<double> agt_projection; // steps 0..m+horizon; observed then model
    std::optional<LinearModelFit> linear;
    std::optional<LogModelFit> log;
    std::optional<PosteriorSamples> posterior;
    std::optional<PredictiveBands> bands;
    RoiEstimate roi;
    RoiEstimate observed_roi; // within the replayed window only
};

EstimateResult estimate(const MeasurementTables& tables, const std::string& framework,
                        const EstimateOptions& options);

// Sum of manual baseline minutes; throws Error(IncompleteBaseline) if none.
double manual_session_cost(const MeasurementTables& tables);

} // namespace replayroi

#include "replayroi/detail/negative_binomial.hpp"
