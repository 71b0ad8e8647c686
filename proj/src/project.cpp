#include "replayroi/project.hpp"

#include "replayroi/error.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace replayroi {

SessionContext make_context(const ProjectConfig& config, VcsAdapter* vcs, CommandRunner* runner, const Clock* clock) {
    SessionContext ctx;
    ctx.protocols = config.protocols;
    ctx.frameworks = config.frameworks;
    ctx.tests = config.tests;
    ctx.workspace = config.workspace;
    ctx.build_command.command = config.build_command;
    ctx.build_command.timeout = std::chrono::seconds(config.build_timeout_s);
    ctx.vcs = vcs;
    ctx.runner = runner;
    ctx.clock = clock;
    return ctx;
}

Project::Project(ProjectConfig config, ProjectDeps deps) : config_(std::move(config)), deps_(std::move(deps)) {
    if (!deps_.runner) deps_.runner = std::make_shared<ShellRunner>();
    if (!deps_.vcs) deps_.vcs = std::make_shared<GitAdapter>(config_.repo, deps_.runner);
    if (!deps_.clock) deps_.clock = std::make_shared<SystemClock>();
    std::error_code ec;
    std::filesystem::create_directories(config_.ledger.parent_path(), ec);
    ledger_ = Ledger::open(config_.ledger);
    session_ = std::make_unique<Session>(
        ledger_, make_context(config_, deps_.vcs.get(), deps_.runner.get(), deps_.clock.get()));
    session_->configure(config_.project, config_.hash);
}

VersionSequence Project::select_versions() const {
    const auto strategy = config_.selection();
    const bool churn = strategy.kind == SelectionStrategy::Kind::Churn;
    const auto history = load_commit_history(*deps_.vcs, config_.branch, config_.range(), churn);
    return replayroi::select_versions(history, strategy);
}

void Project::save_versions(const VersionSequence& versions) const {
    std::error_code ec;
    std::filesystem::create_directories(config_.versions_file.parent_path(), ec);
    const auto tmp = config_.versions_file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Storage, fmt::format("cannot write '{}'", tmp));
        out << nlohmann::json(versions).dump(2) << "\n";
        if (!out) throw Error(ErrorKind::Storage, fmt::format("cannot write '{}'", tmp));
    }
    std::filesystem::rename(tmp, config_.versions_file);
}

std::optional<VersionSequence> Project::load_versions() const {
    if (session_->state().versions) return session_->state().versions;
    std::ifstream in(config_.versions_file, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return nlohmann::json::parse(ss.str()).get<VersionSequence>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Storage, fmt::format("{}: {}", config_.versions_file.string(), e.what()));
    }
}

MeasurementTables Project::tables(bool exclude_overrides) const {
    return fold_events(ledger_.events(), FoldOptions{exclude_overrides});
}

ReportBundle Project::report(const std::vector<EstimateOptions>& schedules, bool exclude_overrides) const {
    ReportOptions options;
    options.config_hash = config_.hash;
    options.bin_width_min = config_.estimator.bin_width_min;
    options.maintenance.include_bug_time = !config_.estimator.exclude_bug_time;
    if (!schedules.empty()) options.maintenance = schedules.front().maintenance;
    options.schedules = schedules;
    return build_report(tables(exclude_overrides), options);
}

} // namespace replayroi
