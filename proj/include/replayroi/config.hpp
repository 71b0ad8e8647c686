#pragma once

#include "replayroi/domain.hpp"
#include "replayroi/estimator.hpp"
#include "replayroi/history.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace replayroi {

struct EstimatorDefaults {
    ModelKind model = ModelKind::Log;
    Predictor predictor = Predictor::Step;
    FitMode mode = FitMode::Cumulative;
    PhiPrior phi_prior = PhiPrior::GammaOnLogPhi;
    std::size_t horizon = 0;
    McmcConfig mcmc;
    bool exclude_bug_time = false;
    double bin_width_min = 5.0;
};

struct ProjectConfig {
    std::filesystem::path source; // the config file; relative paths resolve against its directory
    std::string project;
    std::filesystem::path repo;
    std::string branch = "main";
    std::optional<std::string> range_from;
    std::optional<std::string> range_to;
    std::string strategy = "interval:7d";
    std::vector<std::string> sentinels;
    std::filesystem::path workspace; // defaults to repo
    std::string build_command;
    std::int64_t build_timeout_s = 1800;
    std::int64_t test_timeout_s = 600;
    std::vector<TestProtocol> protocols;
    std::vector<FrameworkId> frameworks;
    std::vector<AutomatedTestRef> tests;
    MgtSchedule mgt;
    Accrual accrual = Accrual::Calendar;
    EstimatorDefaults estimator;
    std::filesystem::path ledger;
    std::filesystem::path versions_file;
    std::optional<std::filesystem::path> assets;

    std::string token; // from the environment only, never hashed
    std::string hash;  // fingerprint of the effective settings

    TimeRange range() const;
    SelectionStrategy selection() const;
    EstimateOptions estimate_options() const;
    std::vector<events::ProtocolInfo> protocol_infos() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

// Throws Error(InvalidConfig) with "file:line:col" for syntax errors and the
// offending field path for semantic ones.
ProjectConfig load_config(const std::filesystem::path& file, const EnvLookup& env = process_env);
ProjectConfig parse_config(const std::string& text, const std::filesystem::path& source,
                           const EnvLookup& env = process_env);

// Starter config written by `init`.
std::string config_template(const std::string& project, const std::string& repo, const std::string& branch);

// 16 hex digits of FNV-1a over the canonical JSON form.
std::string fingerprint(const std::string& text);

} // namespace replayroi
