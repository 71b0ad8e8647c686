#include "replayroi/error.hpp"
#include "replayroi/estimator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include <fmt/format.h>

namespace replayroi {

std::string_view to_string(Predictor p) { return p == Predictor::Step ? "step" : "log-step"; }

Predictor parse_predictor(std::string_view text) {
    if (text == "step") return Predictor::Step;
    if (text == "log-step") return Predictor::LogStep;
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown predictor '{}'", text));
}

std::string_view to_string(FitMode m) { return m == FitMode::Cumulative ? "cumulative" : "increments"; }

FitMode parse_fit_mode(std::string_view text) {
    if (text == "cumulative") return FitMode::Cumulative;
    if (text == "increments") return FitMode::Increments;
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown fit mode '{}'", text));
}

std::string_view to_string(PhiPrior p) { return p == PhiPrior::GammaOnLogPhi ? "gamma-log-phi" : "exponential-phi"; }

PhiPrior parse_phi_prior(std::string_view text) {
    if (text == "gamma-log-phi") return PhiPrior::GammaOnLogPhi;
    if (text == "exponential-phi") return PhiPrior::ExponentialOnPhi;
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown phi prior '{}'", text));
}

double predictor_value(Predictor p, std::size_t step) {
    const double s = static_cast<double>(step);
    return p == Predictor::Step ? s : std::log(s + 1.0);
}

CountData counts_from_curve(const CumulativeCurve& curve, Predictor predictor, FitMode mode) {
    CountData data;
    for (std::size_t k = 1; k < curve.minutes.size(); ++k) {
        const double value = mode == FitMode::Cumulative ? curve.minutes[k] : curve.minutes[k] - curve.minutes[k - 1];
        data.steps.push_back(k);
        data.x.push_back(predictor_value(predictor, k));
        data.y.push_back(std::max<std::int64_t>(0, std::llround(value)));
    }
    return data;
}

std::vector<double> PosteriorSamples::column(double Draw::*field) const {
    std::vector<double> out;
    out.reserve(draws.size());
    for (const auto& d : draws) out.push_back(d.*field);
    return out;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMaxEta = 700.0;

double log_add_exp(double a, double b) {
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// lgamma(x) minus its Stirling approximation; accurate for x >= 10.
double stirling_remainder(double x) {
    const double x2 = x * x;
    return (1.0 / 12.0 - (1.0 / 360.0 - 1.0 / (1260.0 * x2)) / x2) / x;
}

// NB2 log-pmf. For large phi the lgamma difference cancels catastrophically,
// so it is rewritten with log1p terms that tend to the Poisson limit.
double nb_log_pmf(double y, double log_mu, double phi, double lg_y1) {
    const double mu = std::exp(log_mu);
    if (phi < 10.0) {
        const double lse = log_add_exp(std::log(phi), log_mu);
        return std::lgamma(y + phi) - std::lgamma(phi) - lg_y1 + phi * (std::log(phi) - lse) + y * (log_mu - lse);
    }
    return (phi - 0.5) * std::log1p(y / phi) - phi * std::log1p(mu / phi) + y * std::log1p((y - mu) / (phi + mu)) +
           y * log_mu - y - lg_y1 + stirling_remainder(phi + y) - stirling_remainder(phi);
}

double log_likelihood(const CountData& data, double alpha, double beta, double phi) {
    if (!(phi > 0.0) || !std::isfinite(phi)) return kNegInf;
    double ll = 0.0;
    for (std::size_t i = 0; i < data.y.size(); ++i) {
        const double eta = alpha + beta * data.x[i];
        if (eta > kMaxEta) return kNegInf;
        const double y = static_cast<double>(data.y[i]);
        ll += nb_log_pmf(y, eta, phi, std::lgamma(y + 1.0));
    }
    return ll;
}

double log_normal_prior(double v, double sd) { return -0.5 * (v / sd) * (v / sd); }

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

// Unconstrained sampling coordinates: centred intercept, slope, and w, where
// phi = exp(exp(w)) under the Gamma prior on log(phi), or exp(w) otherwise.
struct Target {
    const CountData& data;
    Priors priors;
    double x_center = 0.0;

    Draw natural(const Vec3& th) const {
        const double beta = th[1];
        const double alpha = th[0] - beta * x_center;
        double phi = 0.0;
        if (priors.phi == PhiPrior::GammaOnLogPhi) {
            phi = th[2] > 6.5 ? std::numeric_limits<double>::infinity() : std::exp(std::exp(th[2]));
        } else {
            phi = th[2] > kMaxEta ? std::numeric_limits<double>::infinity() : std::exp(th[2]);
        }
        return {alpha, beta, phi};
    }

    double operator()(const Vec3& th) const {
        const Draw d = natural(th);
        if (!std::isfinite(d.phi)) return kNegInf;
        double lp = log_normal_prior(d.alpha, priors.alpha_sd) + log_normal_prior(d.beta, priors.beta_sd);
        if (priors.phi == PhiPrior::GammaOnLogPhi) {
            // u = log(phi) ~ Gamma(shape, rate); w = log(u); Jacobian du/dw = u.
            const double u = std::exp(th[2]);
            lp += priors.gamma_shape * th[2] - priors.gamma_rate * u;
        } else {
            // phi ~ Exponential(rate); w = log(phi); Jacobian = phi.
            lp += -priors.exponential_rate * d.phi + th[2];
        }
        const double ll = log_likelihood(data, d.alpha, d.beta, d.phi);
        return std::isfinite(ll) ? lp + ll : kNegInf;
    }
};

bool cholesky(const Mat3& a, Mat3& l) {
    l = {};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[i][j];
            for (int k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
            if (i == j) {
                if (!(s > 0.0)) return false;
                l[i][i] = std::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    return true;
}

Mat3 covariance(const std::vector<Vec3>& xs, std::size_t from) {
    Mat3 cov{};
    const std::size_t n = xs.size() - from;
    Vec3 mean{};
    for (std::size_t t = from; t < xs.size(); ++t) {
        for (int i = 0; i < 3; ++i) mean[i] += xs[t][i] / static_cast<double>(n);
    }
    for (std::size_t t = from; t < xs.size(); ++t) {
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) cov[i][j] += (xs[t][i] - mean[i]) * (xs[t][j] - mean[j]);
        }
    }
    for (auto& row : cov) {
        for (auto& v : row) v /= static_cast<double>(n - 1);
    }
    return cov;
}

struct ChainOutput {
    std::vector<Draw> draws;
    double acceptance = 0.0;
};

struct ChainSetup {
    Vec3 start;
    Mat3 chol;
};

ChainOutput run_chain(const Target& target, const ChainSetup& setup, const McmcConfig& mcmc, std::uint64_t chain) {
    std::seed_seq seq{static_cast<std::uint32_t>(mcmc.seed & 0xffffffffu), static_cast<std::uint32_t>(mcmc.seed >> 32),
                      static_cast<std::uint32_t>(chain), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    Vec3 theta = setup.start;
    for (int i = 0; i < 3; ++i) {
        double jitter = 0.0;
        for (int j = 0; j <= i; ++j) jitter += setup.chol[i][j] * normal(rng);
        theta[i] += 2.0 * jitter;
    }
    double lp = target(theta);
    // Pull an unlucky start back toward the common centre.
    for (int tries = 0; !std::isfinite(lp) && tries < 50; ++tries) {
        for (int i = 0; i < 3; ++i) theta[i] = 0.5 * (theta[i] + setup.start[i]);
        lp = target(theta);
    }
    if (!std::isfinite(lp)) {
        throw Error(ErrorKind::Degenerate, "posterior is not finite at the starting point");
    }

    constexpr double kTargetAcceptance = 0.3;
    const double base_scale = 2.38 * 2.38 / 3.0;
    Mat3 chol = setup.chol;
    double log_scale = std::log(base_scale);
    std::vector<Vec3> history;
    history.reserve(static_cast<std::size_t>(mcmc.warmup));
    const int total = mcmc.warmup + mcmc.draws;
    ChainOutput out;
    out.draws.reserve(static_cast<std::size_t>(mcmc.draws));
    int accepted = 0;
    int adapt_step = 0;

    for (int t = 0; t < total; ++t) {
        const bool warming = t < mcmc.warmup;
        Vec3 z{normal(rng), normal(rng), normal(rng)};
        const double s = std::exp(0.5 * log_scale);
        Vec3 proposal = theta;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j <= i; ++j) proposal[i] += s * chol[i][j] * z[j];
        }
        const double lp_new = target(proposal);
        const double log_ratio = lp_new - lp;
        const double accept_prob = std::isfinite(lp_new) ? std::min(1.0, std::exp(std::min(0.0, log_ratio))) : 0.0;
        const double u = uniform(rng);
        if (u < accept_prob) {
            theta = proposal;
            lp = lp_new;
            if (!warming) ++accepted;
        }
        if (warming) {
            history.push_back(theta);
            ++adapt_step;
            log_scale += (accept_prob - kTargetAcceptance) / std::pow(adapt_step, 0.6);
            log_scale = std::clamp(log_scale, -20.0, 5.0);
            // Re-estimate the proposal covariance from the latter half of the warmup so far.
            const int quarter = std::max(1, mcmc.warmup / 4);
            if ((t + 1) % quarter == 0 && t + 1 < mcmc.warmup && history.size() >= 20) {
                Mat3 cov = covariance(history, history.size() / 2);
                for (int i = 0; i < 3; ++i) cov[i][i] += 1e-10 + 1e-6 * std::abs(cov[i][i]);
                Mat3 l;
                if (cholesky(cov, l)) {
                    chol = l;
                    log_scale = std::log(base_scale);
                    adapt_step = 0;
                }
            }
        } else {
            out.draws.push_back(target.natural(theta));
        }
    }
    out.acceptance = static_cast<double>(accepted) / static_cast<double>(std::max(1, mcmc.draws));
    return out;
}

ChainSetup initial_setup(const CountData& data, const Priors& priors, double x_center) {
    // Crude log-linear least squares for a starting point and proposal scales.
    std::vector<double> xc(data.x.size());
    std::vector<double> ly(data.y.size());
    for (std::size_t i = 0; i < data.x.size(); ++i) {
        xc[i] = data.x[i] - x_center;
        ly[i] = std::log(static_cast<double>(data.y[i]) + 0.5);
    }
    const double n = static_cast<double>(xc.size());
    const double ybar = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < xc.size(); ++i) {
        sxx += xc[i] * xc[i];
        sxy += xc[i] * (ly[i] - ybar);
    }
    const double beta = sxx > 0.0 ? sxy / sxx : 0.0;
    double rss = 0.0;
    for (std::size_t i = 0; i < xc.size(); ++i) {
        const double r = ly[i] - ybar - beta * xc[i];
        rss += r * r;
    }
    const double sigma = std::max(0.05, std::sqrt(rss / std::max(1.0, n - 2.0)));
    const double phi0 = std::clamp(1.0 / (sigma * sigma), 1.5, 1e4);

    ChainSetup setup;
    setup.start = {ybar, beta, priors.phi == PhiPrior::GammaOnLogPhi ? std::log(std::log(phi0)) : std::log(phi0)};
    setup.chol = {};
    setup.chol[0][0] = sigma / std::sqrt(n);
    setup.chol[1][1] = sxx > 0.0 ? sigma / std::sqrt(sxx) : 0.1;
    setup.chol[2][2] = 0.2;
    return setup;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v, double mean) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
}

} // namespace

double log_posterior(const CountData& data, const Priors& priors, double alpha, double beta, double phi) {
    const double w = priors.phi == PhiPrior::GammaOnLogPhi ? std::log(std::log(phi)) : std::log(phi);
    const Target target{data, priors, 0.0};
    return target(Vec3{alpha, beta, w});
}

ParamDiagnostics chain_diagnostics(const std::vector<std::vector<double>>& chains) {
    ParamDiagnostics diag;
    const std::size_t m = chains.size();
    if (m == 0) return diag;
    const std::size_t n = chains.front().size();
    if (n < 4) return diag;

    // Split R-hat over 2m half-chains.
    const std::size_t half = n / 2;
    std::vector<std::vector<double>> halves;
    for (const auto& c : chains) {
        halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    std::vector<double> means;
    double w = 0.0;
    for (const auto& h : halves) {
        means.push_back(mean_of(h));
        w += variance_of(h, means.back());
    }
    w /= static_cast<double>(halves.size());
    const double grand = mean_of(means);
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= static_cast<double>(half) / static_cast<double>(halves.size() - 1);
    const double nh = static_cast<double>(half);
    const double var_plus = (nh - 1.0) / nh * w + b / nh;
    diag.split_rhat = w > 0.0 ? std::sqrt(var_plus / w) : (b > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);

    // ESS with Geyer's initial monotone sequence on the combined autocorrelation.
    std::vector<double> chain_mean(m);
    std::vector<double> chain_var(m);
    for (std::size_t c = 0; c < m; ++c) {
        chain_mean[c] = mean_of(chains[c]);
        chain_var[c] = variance_of(chains[c], chain_mean[c]);
    }
    const double wc = mean_of(chain_var);
    const double nn = static_cast<double>(n);
    double bc = 0.0;
    if (m > 1) bc = nn * variance_of(chain_mean, mean_of(chain_mean));
    const double var_c = (nn - 1.0) / nn * wc + bc / nn;
    if (!(var_c > 0.0)) {
        diag.ess = 0.0;
        return diag;
    }
    const auto rho = [&](std::size_t lag) {
        double acov = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            double s = 0.0;
            const auto& x = chains[c];
            for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - chain_mean[c]) * (x[t + lag] - chain_mean[c]);
            acov += s / nn;
        }
        acov /= static_cast<double>(m);
        return 1.0 - (wc - acov) / var_c;
    };
    double tau = -1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        double pair = rho(2 * k) + rho(2 * k + 1);
        if (pair < 0.0) break;
        pair = std::min(pair, prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
    }
    tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m) * nn));
    diag.ess = static_cast<double>(m) * nn / tau;
    return diag;
}

PosteriorSamples fit_bayes(const CountData& data, Priors priors, McmcConfig mcmc, Predictor predictor, FitMode mode) {
    if (mcmc.chains < 2) throw Error(ErrorKind::InvalidArgument, "at least two chains are required");
    if (mcmc.warmup < 4 || mcmc.draws < 4) throw Error(ErrorKind::InvalidArgument, "warmup and draws must be >= 4");
    if (data.y.size() < 2 || data.y.size() != data.x.size()) {
        throw Error(ErrorKind::Degenerate, "need at least two observations");
    }
    const double x_center = std::accumulate(data.x.begin(), data.x.end(), 0.0) / static_cast<double>(data.x.size());
    const Target target{data, priors, x_center};
    const ChainSetup setup = initial_setup(data, priors, x_center);

    std::vector<ChainOutput> outputs(static_cast<std::size_t>(mcmc.chains));
    std::vector<std::exception_ptr> failures(outputs.size());
    {
        std::vector<std::jthread> workers;
        for (std::size_t c = 0; c < outputs.size(); ++c) {
            workers.emplace_back([&, c] {
                try {
                    outputs[c] = run_chain(target, setup, mcmc, c);
                } catch (...) {
                    failures[c] = std::current_exception();
                }
            });
        }
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    PosteriorSamples samples;
    samples.chains = mcmc.chains;
    samples.draws_per_chain = mcmc.draws;
    samples.seed = mcmc.seed;
    samples.predictor = predictor;
    samples.mode = mode;
    samples.observed_steps = data.steps.empty() ? data.y.size() : data.steps.back();
    for (auto& out : outputs) {
        samples.acceptance.push_back(out.acceptance);
        samples.draws.insert(samples.draws.end(), out.draws.begin(), out.draws.end());
    }
    const auto per_chain = [&](double Draw::*field) {
        std::vector<std::vector<double>> chains;
        for (const auto& out : outputs) {
            std::vector<double> v;
            v.reserve(out.draws.size());
            for (const auto& d : out.draws) v.push_back(d.*field);
            chains.push_back(std::move(v));
        }
        return chains;
    };
    samples.alpha = chain_diagnostics(per_chain(&Draw::alpha));
    samples.beta = chain_diagnostics(per_chain(&Draw::beta));
    samples.phi = chain_diagnostics(per_chain(&Draw::phi));
    samples.converged = true;
    for (const auto* d : {&samples.alpha, &samples.beta, &samples.phi}) {
        if (!(d->split_rhat <= kRhatLimit) || !(d->ess >= kMinEss)) samples.converged = false;
    }
    return samples;
}

PosteriorSamples fit_bayes(const CumulativeCurve& curve, Predictor predictor, Priors priors, McmcConfig mcmc,
                           FitMode mode) {
    auto samples = fit_bayes(counts_from_curve(curve, predictor, mode), priors, mcmc, predictor, mode);
    samples.observed_steps = curve.last_step();
    samples.base_minutes = curve.minutes.empty() ? 0.0 : curve.minutes.front();
    return samples;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

PredictiveBands posterior_predictive(const PosteriorSamples& samples, std::size_t horizon, bool allow_unconverged) {
    if (!samples.converged && !allow_unconverged) {
        throw Error(ErrorKind::Precondition,
                    fmt::format("posterior failed diagnostics (split-R-hat alpha {:.3f}, beta {:.3f}, phi {:.3f})",
                                samples.alpha.split_rhat, samples.beta.split_rhat, samples.phi.split_rhat));
    }
    PredictiveBands bands;
    bands.observed_steps = samples.observed_steps;
    const std::size_t last = samples.observed_steps + horizon;
    for (std::size_t s = 1; s <= last; ++s) bands.steps.push_back(s);

    std::seed_seq seq{static_cast<std::uint32_t>(samples.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(samples.seed >> 32), 0xb4edu};
    std::mt19937_64 rng(seq);
    const double log_cap = std::log(kLambdaCap);
    bands.trajectories.reserve(samples.draws.size());
    for (const auto& d : samples.draws) {
        std::vector<double> traj;
        traj.reserve(bands.steps.size());
        double running = samples.base_minutes;
        for (std::size_t s : bands.steps) {
            double eta = d.alpha + d.beta * predictor_value(samples.predictor, s);
            if (eta > log_cap) {
                eta = log_cap;
                bands.saturated = true;
            }
            const auto y = static_cast<double>(sample_negative_binomial(rng, std::exp(eta), d.phi));
            if (samples.mode == FitMode::Cumulative) {
                traj.push_back(y);
            } else {
                running += y;
                traj.push_back(running);
            }
        }
        bands.trajectories.push_back(std::move(traj));
    }

    std::vector<double> column(bands.trajectories.size());
    for (std::size_t k = 0; k < bands.steps.size(); ++k) {
        for (std::size_t d = 0; d < bands.trajectories.size(); ++d) column[d] = bands.trajectories[d][k];
        bands.lower.push_back(quantile(column, 0.025));
        bands.raw_median.push_back(quantile(column, 0.5));
        bands.upper.push_back(quantile(column, 0.975));
    }
    bands.median = bands.raw_median;
    for (std::size_t k = 1; k < bands.median.size(); ++k) bands.median[k] = std::max(bands.median[k], bands.median[k - 1]);
    for (std::size_t k = 0; k < bands.median.size(); ++k) {
        bands.upper[k] = std::max(bands.upper[k], bands.median[k]);
        bands.lower[k] = std::min(bands.lower[k], bands.median[k]);
    }
    return bands;
}

} // namespace replayroi
