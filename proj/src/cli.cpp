#include "replayroi/cli.hpp"

#include "replayroi/error.hpp"
#include "replayroi/report.hpp"
#include "replayroi/server.hpp"
#include "replayroi/views.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

namespace replayroi::cli {

using nlohmann::json;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Blocked: return kBlocked;
    case ErrorKind::Internal:
    case ErrorKind::Storage: return kInternalError;
    default: return kUserError;
    }
}

std::int64_t parse_effort(std::string_view text) {
    const std::string s(text);
    const auto bad = [&] { return Error(ErrorKind::InvalidArgument, fmt::format("malformed duration '{}'", s)); };
    if (s.empty()) throw bad();
    if (s.find(':') != std::string::npos) {
        std::int64_t total = 0;
        int parts = 0;
        std::stringstream ss(s);
        std::string part;
        while (std::getline(ss, part, ':')) {
            if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) throw bad();
            total = total * 60 + std::stoll(part);
            ++parts;
        }
        if (parts < 2 || parts > 3) throw bad();
        return parts == 2 ? total * 60 : total; // HH:MM or HH:MM:SS
    }
    double scale = 60.0;
    std::string number = s;
    switch (s.back()) {
    case 's': scale = 1.0; number.pop_back(); break;
    case 'm': scale = 60.0; number.pop_back(); break;
    case 'h': scale = 3600.0; number.pop_back(); break;
    default: break;
    }
    double value = 0.0;
    std::size_t pos = 0;
    try {
        value = std::stod(number, &pos);
    } catch (const std::exception&) {
        throw bad();
    }
    if (pos != number.size() || !(value >= 0.0) || !std::isfinite(value)) throw bad();
    return std::llround(value * scale);
}

namespace {

struct EstimateFlags {
    std::vector<std::string> frameworks;
    std::string mgt, accrual, model, predictor, mode, phi_prior;
    std::optional<double> mgt_cost;
    std::optional<std::size_t> horizon, seed;
    std::optional<int> chains, warmup, draws;
    bool exclude_bug_time = false;
    bool allow_unconverged = false;

    std::map<std::string, std::string> overrides() const {
        std::map<std::string, std::string> o;
        const auto put = [&](const char* k, const std::string& v) {
            if (!v.empty()) o[k] = v;
        };
        put("mgt", mgt);
        put("accrual", accrual);
        put("model", model);
        put("predictor", predictor);
        put("mode", mode);
        put("phi_prior", phi_prior);
        if (mgt_cost) o["mgt_cost"] = fmt::format("{}", *mgt_cost);
        if (horizon) o["horizon"] = std::to_string(*horizon);
        if (seed) o["seed"] = std::to_string(*seed);
        if (chains) o["chains"] = std::to_string(*chains);
        if (warmup) o["warmup"] = std::to_string(*warmup);
        if (draws) o["draws"] = std::to_string(*draws);
        if (exclude_bug_time) o["exclude_bug_time"] = "true";
        if (allow_unconverged) o["allow_unconverged"] = "true";
        return o;
    }
};

void add_estimate_flags(CLI::App* app, EstimateFlags& f, bool framework_filter) {
    if (framework_filter) app->add_option("--framework", f.frameworks, "Framework id (repeatable; default all)");
    app->add_option("--mgt", f.mgt, "Manual testing schedule: weekly|monthly|per-version");
    app->add_option("--mgt-cost", f.mgt_cost, "Minutes per manual test session (default: manual baseline sum)");
    app->add_option("--accrual", f.accrual, "How the manual cost accrues: calendar|per-step");
    app->add_option("--model", f.model, "AGT projection: empirical|linear|log|bayes");
    app->add_option("--predictor", f.predictor, "Bayesian predictor: step|log-step");
    app->add_option("--mode", f.mode, "Bayesian fit target: cumulative|increments");
    app->add_option("--phi-prior", f.phi_prior, "Dispersion prior: gamma-log-phi|exponential-phi");
    app->add_option("--horizon", f.horizon, "Steps to project beyond the replayed versions");
    app->add_option("--seed", f.seed, "Random seed for the sampler");
    app->add_option("--chains", f.chains, "Sampler chains");
    app->add_option("--warmup", f.warmup, "Warmup iterations per chain");
    app->add_option("--draws", f.draws, "Kept draws per chain");
    app->add_flag("--exclude-bug-time", f.exclude_bug_time, "Leave bug-handling time out of maintenance");
    app->add_flag("--allow-unconverged", f.allow_unconverged, "Report bands even if diagnostics fail");
}

struct Options {
    std::string config = "replayroi.json";
    bool json_output = false;

    // init
    std::string project, repo, branch = "main";
    bool force = false;
    // baseline / replay / activity
    std::string protocol, framework, kind, category, note, duration, bug_description, resolution;
    std::optional<std::uint64_t> activity_id;
    bool overwrite = false;
    bool all = false;
    // report / export
    std::string report_format = "table";
    std::string export_format = "structured";
    std::string out_file;
    bool exclude_overrides = false;
    std::optional<double> bin_width;
    EstimateFlags estimate;
    // serve
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string token;
    std::string assets;
};

struct Commands {
    CLI::App* init;
    CLI::App* versions_select;
    CLI::App* versions_list;
    CLI::App* baseline_manual;
    CLI::App* baseline_impl;
    CLI::App* baseline_status;
    CLI::App* replay_start;
    CLI::App* replay_status;
    CLI::App* replay_run;
    CLI::App* replay_classify;
    CLI::App* replay_advance;
    CLI::App* replay_verify;
    CLI::App* replay_checkout;
    CLI::App* activity_start;
    CLI::App* activity_stop;
    CLI::App* estimate;
    CLI::App* report;
    CLI::App* export_;
    CLI::App* serve;
    CLI::App* help;
};

Commands build_app(CLI::App& app, Options& o) {
    app.require_subcommand(1);
    app.add_option("--config", o.config, "Project config file")->capture_default_str();
    app.add_flag("--json", o.json_output, "Machine-readable output on stdout");
    Commands c{};

    c.init = app.add_subcommand("init", "Write a starter project config");
    c.init->add_option("--project", o.project, "Project name")->required();
    c.init->add_option("--repo", o.repo, "Path to the Git working copy of the system under test")->required();
    c.init->add_option("--branch", o.branch, "Branch to replay")->capture_default_str();
    c.init->add_flag("--force", o.force, "Overwrite an existing config");

    auto* versions = app.add_subcommand("versions", "Select the versions to replay");
    versions->require_subcommand(1);
    c.versions_select = versions->add_subcommand("select", "Select versions from the repository and save them");
    c.versions_list = versions->add_subcommand("list", "Show the saved version selection");

    auto* baseline = app.add_subcommand("baseline", "Phase 1: manual and implementation baselines");
    baseline->require_subcommand(1);
    c.baseline_manual = baseline->add_subcommand("record-manual", "Record a manual execution time for a protocol");
    c.baseline_manual->add_option("--protocol", o.protocol, "Protocol id")->required();
    c.baseline_manual->add_option("--duration", o.duration, "Effort: 90s, 12m, 1.5h, HH:MM:SS or minutes")->required();
    c.baseline_manual->add_flag("--overwrite", o.overwrite, "Replace an existing record");
    c.baseline_manual->add_option("--note", o.note, "Free-text note");
    c.baseline_impl = baseline->add_subcommand("record-impl", "Record the implementation time of an automated test");
    c.baseline_impl->add_option("--protocol", o.protocol, "Protocol id")->required();
    c.baseline_impl->add_option("--framework", o.framework, "Framework id")->required();
    c.baseline_impl->add_option("--duration", o.duration, "Effort: 90s, 12m, 1.5h, HH:MM:SS or minutes")->required();
    c.baseline_impl->add_flag("--overwrite", o.overwrite, "Replace an existing record");
    c.baseline_impl->add_option("--note", o.note, "Free-text note");
    c.baseline_status = baseline->add_subcommand("status", "List baseline measurements still missing");

    auto* replay = app.add_subcommand("replay", "Phase 2: step-wise replay of the selected versions");
    replay->require_subcommand(1);
    c.replay_start = replay->add_subcommand("start", "Start the replay at the first version");
    c.replay_start->add_flag("--force", o.force, "Discard local workspace changes on checkout");
    c.replay_status = replay->add_subcommand("status", "Show the session state");
    c.replay_run = replay->add_subcommand("run", "Run automated tests at the current version");
    c.replay_run->add_option("--protocol", o.protocol, "Protocol id");
    c.replay_run->add_option("--framework", o.framework, "Framework id");
    c.replay_run->add_flag("--all", o.all, "Run every test not yet passing, stopping at the first failure");
    c.replay_classify = replay->add_subcommand("classify", "Classify a failed (or falsely passing) test");
    c.replay_classify->add_option("--protocol", o.protocol, "Protocol id")->required();
    c.replay_classify->add_option("--framework", o.framework, "Framework id")->required();
    c.replay_classify->add_option("--kind", o.kind, "bug|broken-test|false-negative|crash")->required();
    c.replay_advance = replay->add_subcommand("advance", "Complete this version and check out the next");
    c.replay_advance->add_flag("--force", o.force, "Discard local workspace changes on checkout");
    c.replay_verify = replay->add_subcommand("verify", "Re-run the build at the current version");
    c.replay_checkout = replay->add_subcommand("checkout", "Retry checking out the current version");
    c.replay_checkout->add_flag("--force", o.force, "Discard local workspace changes");

    auto* activity = app.add_subcommand("activity", "Time tester activities");
    activity->require_subcommand(1);
    c.activity_start = activity->add_subcommand("start", "Start a timer");
    c.activity_start->add_option("--category", o.category,
                                 "analysis|repair|bug|false-negative|crash|implementation|manual-baseline")
        ->required();
    c.activity_start->add_option("--protocol", o.protocol, "Protocol id");
    c.activity_start->add_option("--framework", o.framework, "Framework id");
    c.activity_stop = activity->add_subcommand("stop", "Stop the running timer");
    c.activity_stop->add_option("--id", o.activity_id, "Activity id (default: the running one)");
    c.activity_stop->add_option("--note", o.note, "Free-text note");
    c.activity_stop->add_option("--duration", o.duration, "Override the measured duration (flagged in reports)");
    c.activity_stop->add_option("--bug-description", o.bug_description, "Describe the bug handled");
    c.activity_stop->add_option("--resolution", o.resolution, "fix|workaround");

    c.estimate = app.add_subcommand("estimate", "Phase 3: cumulative costs and break-even");
    add_estimate_flags(c.estimate, o.estimate, true);

    c.report = app.add_subcommand("report", "Summary tables, series and ROI");
    c.report->add_option("--format", o.report_format, "table|csv|bundle")->default_val("table")->capture_default_str();
    c.report->add_option("--out", o.out_file, "Write to a file instead of stdout");
    c.report->add_flag("--exclude-overrides", o.exclude_overrides, "Leave manually overridden durations out");
    c.report->add_option("--bin-width", o.bin_width, "Histogram bin width in minutes");
    add_estimate_flags(c.report, o.estimate, false);

    c.export_ = app.add_subcommand("export", "Dump the measurement tables");
    c.export_->add_option("--format", o.export_format, "csv|structured")->default_val("structured")->capture_default_str();
    c.export_->add_option("--out", o.out_file, "Write to a file instead of stdout");
    c.export_->add_flag("--exclude-overrides", o.exclude_overrides, "Leave manually overridden durations out");

    c.serve = app.add_subcommand("serve", "Serve the API, event stream and console assets");
    c.serve->add_option("--host", o.host, "Interface to bind")->capture_default_str();
    c.serve->add_option("--port", o.port, "Port to listen on (0 picks one)")->capture_default_str();
    c.serve->add_option("--token", o.token, "Shared token for command endpoints (or REPLAYROI_TOKEN)");
    c.serve->add_option("--assets", o.assets, "Directory of console assets to serve");

    c.help = app.add_subcommand("help", "Print help for every command");
    return c;
}

void write_output(const std::string& text, const std::string& file, std::ostream& out) {
    if (file.empty()) {
        out << text;
        return;
    }
    std::ofstream f(file, std::ios::binary | std::ios::trunc);
    if (!f || !(f << text)) throw Error(ErrorKind::Storage, fmt::format("cannot write '{}'", file));
}

std::string versions_text(const VersionSequence& seq) {
    std::string out = fmt::format("{} versions ({})\n", seq.size(), seq.strategy.describe());
    for (const auto& e : seq.entries) out += fmt::format("  {}\n", e.label);
    return out;
}

std::string status_text(const Project& project, const Session& session) {
    const auto& st = session.state();
    std::string out = fmt::format("phase: {}\n", to_string(st.phase));
    if (st.phase == Phase::Baseline) {
        const auto missing = session.missing_baseline();
        out += missing.empty() ? "baseline complete\n" : fmt::format("missing: {}\n", fmt::join(missing, ", "));
    }
    if (st.versions && st.version >= 1) {
        out += fmt::format("version: {}/{} {}\n", st.version, st.versions->size(), st.versions->at(st.version).label);
        out += fmt::format("build: {}\n", !st.build_ok ? "not verified" : (*st.build_ok ? "ok" : "FAILED"));
        for (const auto& t : st.tests) {
            const auto it = st.status.find({t.protocol, t.framework});
            std::string line = "not run";
            if (it != st.status.end() && it->second.latest) {
                line = fmt::format("{} (attempt {})", to_string(*it->second.latest), it->second.attempts);
                if (it->second.awaiting_classification) line += ", awaiting classification";
                if (it->second.classification) line += fmt::format(", classified {}", to_string(*it->second.classification));
            }
            out += fmt::format("  {}/{}: {}\n", t.protocol, t.framework, line);
        }
    }
    if (st.timer) {
        const auto j = timer_json(*st.timer, project.clock());
        out += fmt::format("timer: #{} {} {}/{} running {:.0f}s\n", st.timer->id, to_string(st.timer->category),
                           st.timer->protocol, st.timer->framework, j["elapsed_s"].get<double>());
    }
    for (const auto& r : st.blocking_reasons()) out += fmt::format("blocked: {}\n", r);
    return out;
}

std::string run_text(const TestRunRecord& r) {
    return fmt::format("{}/{}: {} (attempt {}, {:.2f} s)\n", r.protocol, r.framework, to_string(r.outcome), r.attempt,
                       static_cast<double>(r.elapsed_ms) / 1000.0);
}

int serve(Project& project, const Options& o, const Environment& env) {
    ServerOptions so;
    so.host = o.host;
    so.port = o.port;
    so.token = !o.token.empty() ? o.token : project.config().token;
    if (!o.assets.empty()) {
        so.assets = std::filesystem::absolute(o.assets);
    } else {
        so.assets = project.config().assets;
    }
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr); // server threads inherit the mask
    Server server(project, so);
    const int port = server.bind();
    *env.out << fmt::format("serving on http://{}:{}/ (API under {})\n", so.host, port, kApiPrefix) << std::flush;
    server.start();
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    return kOk;
}

int dispatch(const Commands& c, const Options& o, const Environment& env) {
    std::ostream& out = *env.out;
    const auto emit = [&](const json& j, const std::string& text) {
        if (o.json_output) {
            out << j.dump(2) << "\n";
        } else {
            out << text;
        }
    };

    if (c.help->parsed()) {
        out << help_text();
        return kOk;
    }
    if (c.init->parsed()) {
        const std::filesystem::path path(o.config);
        if (std::filesystem::exists(path) && !o.force) {
            throw Error(ErrorKind::Precondition, fmt::format("{} exists; use --force to overwrite", path.string()));
        }
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f || !(f << config_template(o.project, o.repo, o.branch))) {
            throw Error(ErrorKind::Storage, fmt::format("cannot write '{}'", path.string()));
        }
        f.close();
        const auto config = load_config(path, env.env); // fail fast on a bad repo path
        emit({{"config", std::filesystem::absolute(path).string()}, {"hash", config.hash}},
             fmt::format("wrote {}; edit protocols, frameworks and tests before recording baselines\n", path.string()));
        return kOk;
    }

    Project project(load_config(o.config, env.env), env.deps);
    Session& session = project.session();

    if (c.versions_select->parsed()) {
        const auto seq = project.select_versions();
        project.save_versions(seq);
        emit(json(seq), versions_text(seq));
        return kOk;
    }
    if (c.versions_list->parsed()) {
        const auto seq = project.load_versions();
        if (!seq) throw Error(ErrorKind::Precondition, "no version selection; run `versions select` first");
        emit(json(*seq), versions_text(*seq));
        return kOk;
    }
    if (c.baseline_manual->parsed()) {
        const auto r = session.record_manual_baseline(o.protocol, parse_effort(o.duration), o.overwrite, o.note);
        emit(to_json_view(r), fmt::format("manual baseline {}: {} min\n", r.protocol, format_minutes(to_minutes(r.duration_s))));
        if (r.duration_s == 0) *env.err << "warning: zero-length manual baseline\n";
        return kOk;
    }
    if (c.baseline_impl->parsed()) {
        const auto r = session.record_implementation({o.protocol, o.framework}, parse_effort(o.duration), o.overwrite, o.note);
        emit(to_json_view(r), fmt::format("implementation {}/{}: {} min\n", r.protocol, r.framework,
                                          format_minutes(to_minutes(r.duration_s))));
        return kOk;
    }
    if (c.baseline_status->parsed()) {
        const auto missing = session.missing_baseline();
        emit({{"missing", missing}},
             missing.empty() ? std::string("baseline complete\n") : fmt::format("missing:\n  {}\n", fmt::join(missing, "\n  ")));
        return kOk;
    }
    if (c.replay_start->parsed()) {
        const auto seq = project.load_versions();
        if (!seq) throw Error(ErrorKind::Precondition, "no version selection; run `versions select` first");
        session.start_replay(*seq, o.force);
        emit(status_json(session.state(), project.clock(), {}), status_text(project, session));
        return kOk;
    }
    if (c.replay_status->parsed()) {
        emit(status_json(session.state(), project.clock(), session.missing_baseline()), status_text(project, session));
        return kOk;
    }
    if (c.replay_run->parsed()) {
        json runs = json::array();
        std::string text;
        if (session.state().phase != Phase::Replay) {
            throw Error(ErrorKind::Precondition, "tests run during replay; start it with `replay start`");
        }
        if (o.all) {
            for (const auto& t : session.state().tests) {
                const TestKey key{t.protocol, t.framework};
                const auto it = session.state().status.find(key);
                if (it != session.state().status.end() && it->second.latest == TestOutcome::Pass) continue;
                const auto r = session.run_test(key);
                runs.push_back(to_json_view(r));
                text += run_text(r);
                if (r.outcome == TestOutcome::Fail) break;
            }
        } else {
            if (o.protocol.empty() || o.framework.empty()) {
                throw Error(ErrorKind::InvalidArgument, "give --protocol and --framework, or --all");
            }
            const auto r = session.run_test({o.protocol, o.framework});
            runs.push_back(to_json_view(r));
            text += run_text(r);
        }
        emit({{"runs", runs}}, text.empty() ? std::string("all tests pass\n") : text);
        return kOk;
    }
    if (c.replay_classify->parsed()) {
        const auto actions = session.classify_failure({o.protocol, o.framework}, parse_failure_kind(o.kind));
        std::vector<std::string> cats;
        for (auto a : actions.activities) cats.emplace_back(to_string(a));
        emit(to_json_view(actions), fmt::format("next: time {}{}\n", fmt::join(cats, ", "),
                                                 actions.automatic_rerun ? " (re-run follows automatically)" : ""));
        return kOk;
    }
    if (c.replay_advance->parsed()) {
        const auto phase = session.advance_version(o.force);
        emit({{"phase", to_string(phase)}, {"version", session.state().version}},
             phase == Phase::Completed ? std::string("replay completed\n") : status_text(project, session));
        return kOk;
    }
    if (c.replay_verify->parsed()) {
        const auto r = session.reverify_build();
        emit(to_json_view(r), r.ok ? std::string("build ok\n") : fmt::format("build FAILED (exit {})\n{}\n", r.exit_code, r.log_excerpt));
        return kOk;
    }
    if (c.replay_checkout->parsed()) {
        session.checkout_current(o.force);
        emit(status_json(session.state(), project.clock(), {}), status_text(project, session));
        return kOk;
    }
    if (c.activity_start->parsed()) {
        const auto id = session.start_activity(parse_category(o.category), {o.protocol, o.framework});
        emit({{"activity_id", id}}, fmt::format("started activity {} ({})\n", id, o.category));
        return kOk;
    }
    if (c.activity_stop->parsed()) {
        std::uint64_t id = 0;
        if (o.activity_id) {
            id = *o.activity_id;
        } else if (session.state().timer) {
            id = session.state().timer->id;
        } else {
            throw Error(ErrorKind::NoActiveTimer, "no activity is running");
        }
        std::optional<std::int64_t> override_s;
        if (!o.duration.empty()) override_s = parse_effort(o.duration);
        std::optional<BugDetails> bug;
        if (!o.bug_description.empty()) {
            bug = BugDetails{o.bug_description, o.resolution.empty() ? Resolution::Workaround : parse_resolution(o.resolution)};
        }
        const auto r = session.stop_activity(id, o.note, override_s, bug);
        std::string text = fmt::format("stopped activity {} ({}): {} min{}\n", r.record.id, to_string(r.record.category),
                                       format_minutes(to_minutes(r.record.duration_s)),
                                       r.record.overridden ? " (overridden)" : "");
        if (r.bug) text += "bug recorded\n";
        if (r.script_updated) text += "test script update recorded\n";
        if (r.rerun) text += "re-run: " + run_text(*r.rerun);
        emit(to_json_view(r), text);
        return kOk;
    }
    if (c.estimate->parsed()) {
        auto bundle = project.report({estimate_options_with(project.config(), o.estimate.overrides())});
        if (!o.estimate.frameworks.empty()) {
            std::erase_if(bundle.estimates, [&](const ScheduledEstimate& e) {
                return std::find(o.estimate.frameworks.begin(), o.estimate.frameworks.end(), e.framework) ==
                       o.estimate.frameworks.end();
            });
        }
        if (bundle.estimates.empty()) throw Error(ErrorKind::InvalidArgument, "no such framework");
        // An estimate that could not be produced (e.g. no baseline) is the command's failure.
        for (const auto& e : bundle.estimates) {
            if (!e.result) {
                const auto& msg = e.error;
                const auto colon = msg.find(':');
                ErrorKind kind = ErrorKind::Precondition;
                const auto name = msg.substr(0, colon);
                for (int k = 0; k <= static_cast<int>(ErrorKind::Internal); ++k) {
                    if (to_string(static_cast<ErrorKind>(k)) == name) kind = static_cast<ErrorKind>(k);
                }
                throw Error(kind, fmt::format("{}: {}", e.framework, colon == std::string::npos ? msg : msg.substr(colon + 2)));
            }
        }
        emit(bundle_to_json(bundle), render_roi(bundle));
        return kOk;
    }
    if (c.report->parsed()) {
        auto bundle_options = estimate_options_with(project.config(), o.estimate.overrides());
        ReportOptions ro;
        ro.config_hash = project.config().hash;
        ro.bin_width_min = o.bin_width.value_or(project.config().estimator.bin_width_min);
        ro.maintenance = bundle_options.maintenance;
        ro.schedules = {bundle_options};
        const auto tables = project.tables(o.exclude_overrides);
        const auto bundle = build_report(tables, ro);
        std::string text;
        if (o.report_format == "table") {
            text = render_tables(tables, bundle.stats, TableFormat::Text) + "\n" + render_roi(bundle);
        } else if (o.report_format == "csv") {
            text = render_tables(tables, bundle.stats, TableFormat::Csv);
        } else if (o.report_format == "bundle") {
            text = bundle_to_json(bundle).dump(2) + "\n";
        } else {
            throw Error(ErrorKind::InvalidArgument, fmt::format("unknown report format '{}'", o.report_format));
        }
        write_output(text, o.out_file, out);
        return kOk;
    }
    if (c.export_->parsed()) {
        const auto tables = project.tables(o.exclude_overrides);
        std::string text;
        if (o.export_format == "csv") {
            text = export_csv(tables);
        } else if (o.export_format == "structured") {
            text = export_structured(tables).dump(2) + "\n";
        } else {
            throw Error(ErrorKind::InvalidArgument, fmt::format("unknown export format '{}'", o.export_format));
        }
        write_output(text, o.out_file, out);
        return kOk;
    }
    if (c.serve->parsed()) return serve(project, o, env);
    throw Error(ErrorKind::Internal, "no command dispatched");
}

// CLI11 appends the command's own name to `parent` in the usage line.
void collect_help(const CLI::App* app, const std::string& parent, std::string& out) {
    const std::string path = parent.empty() ? app->get_name() : parent + " " + app->get_name();
    out += "==> " + path + "\n" + app->help(parent) + "\n";
    for (const auto* sub : app->get_subcommands({})) {
        if (sub->get_name() == "help") continue;
        collect_help(sub, path, out);
    }
}

} // namespace

std::string help_text() {
    CLI::App app{"Measure automated-testing maintenance by replaying a repository's history", "replayroi"};
    Options o;
    build_app(app, o);
    std::string out;
    collect_help(&app, "", out);
    return out;
}

int run(const std::vector<std::string>& args, const Environment& environment) {
    Environment env = environment;
    if (env.out == nullptr) env.out = &std::cout;
    if (env.err == nullptr) env.err = &std::cerr;
    CLI::App app{"Measure automated-testing maintenance by replaying a repository's history", "replayroi"};
    Options o;
    const Commands commands = build_app(app, o);
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        *env.out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        *env.out << help_text();
        return kOk;
    } catch (const CLI::ParseError& e) {
        *env.err << "error: " << e.what() << "\n";
        *env.err << "run `replayroi help` for every command and flag\n";
        return kUserError;
    }
    try {
        return dispatch(commands, o, env);
    } catch (const Error& e) {
        if (o.json_output) {
            *env.out << json{{"ok", false}, {"error", {{"kind", to_string(e.kind()), }, {"message", e.what()}}}}.dump(2)
                     << "\n";
        }
        *env.err << fmt::format("error[{}]: {}\n", to_string(e.kind()), e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        *env.err << fmt::format("internal error: {}\n", e.what());
        return kInternalError;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, Environment{});
}

} // namespace replayroi::cli
