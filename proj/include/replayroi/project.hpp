#pragma once

#include "replayroi/config.hpp"
#include "replayroi/history.hpp"
#include "replayroi/ledger.hpp"
#include "replayroi/report.hpp"
#include "replayroi/session.hpp"

#include <memory>
#include <optional>

namespace replayroi {

// Injection points; anything left null gets the real implementation.
struct ProjectDeps {
    std::shared_ptr<VcsAdapter> vcs;
    std::shared_ptr<CommandRunner> runner;
    std::shared_ptr<const Clock> clock;
};

// A configured project: the open ledger plus a session bound to it.
class Project {
public:
    explicit Project(ProjectConfig config, ProjectDeps deps = {});

    const ProjectConfig& config() const { return config_; }
    Ledger& ledger() { return ledger_; }
    const Ledger& ledger() const { return ledger_; }
    Session& session() { return *session_; }
    VcsAdapter& vcs() { return *deps_.vcs; }
    const Clock& clock() const { return *deps_.clock; }

    // Version selection from the configured repository, range and strategy.
    VersionSequence select_versions() const;
    void save_versions(const VersionSequence& versions) const;
    // The persisted selection, or the session's own sequence once replay started.
    std::optional<VersionSequence> load_versions() const;

    MeasurementTables tables(bool exclude_overrides = false) const;
    ReportBundle report(const std::vector<EstimateOptions>& schedules, bool exclude_overrides = false) const;

private:
    ProjectConfig config_;
    ProjectDeps deps_;
    Ledger ledger_;
    std::unique_ptr<Session> session_;
};

SessionContext make_context(const ProjectConfig& config, VcsAdapter* vcs, CommandRunner* runner, const Clock* clock);

} // namespace replayroi
