#include "replayroi/server.hpp"

#include "replayroi/error.hpp"
#include "replayroi/views.hpp"

#include <httplib.h>

#include <fmt/format.h>

namespace replayroi {

using nlohmann::json;

namespace {

// A stale expected_seq is not a domain error; it only exists at this boundary.
struct StaleState {
    std::uint64_t expected;
    std::uint64_t actual;
};

int status_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Unauthorized: return 401;
    case ErrorKind::InvalidArgument:
    case ErrorKind::SchemaViolation: return 400;
    case ErrorKind::Blocked:
    case ErrorKind::TimerActive:
    case ErrorKind::NoActiveTimer:
    case ErrorKind::NotClassifiable:
    case ErrorKind::Precondition:
    case ErrorKind::IncompleteBaseline:
    case ErrorKind::Duplicate:
    case ErrorKind::DirtyWorkspace:
    case ErrorKind::OutOfOrder: return 409;
    case ErrorKind::Storage:
    case ErrorKind::Internal: return 500;
    default: return 422;
    }
}

json error_body(std::string_view kind, std::string_view message, std::uint64_t last_sequence) {
    return {{"ok", false}, {"error", {{"kind", kind}, {"message", message}}}, {"last_sequence", last_sequence}};
}

std::string str(const json& body, const char* key, bool required = true) {
    if (!body.contains(key) || body.at(key).is_null()) {
        if (required) throw Error(ErrorKind::InvalidArgument, fmt::format("missing field '{}'", key));
        return {};
    }
    if (!body.at(key).is_string()) throw Error(ErrorKind::InvalidArgument, fmt::format("field '{}' must be a string", key));
    return body.at(key).get<std::string>();
}

bool flag(const json& body, const char* key) {
    if (!body.contains(key) || body.at(key).is_null()) return false;
    if (!body.at(key).is_boolean()) throw Error(ErrorKind::InvalidArgument, fmt::format("field '{}' must be a boolean", key));
    return body.at(key).get<bool>();
}

std::optional<std::int64_t> seconds(const json& body, const char* key) {
    if (!body.contains(key) || body.at(key).is_null()) return std::nullopt;
    if (!body.at(key).is_number_integer() || body.at(key).get<std::int64_t>() < 0) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("field '{}' must be a non-negative integer", key));
    }
    return body.at(key).get<std::int64_t>();
}

TestKey test_of(const json& body) { return {str(body, "protocol"), str(body, "framework")}; }

std::map<std::string, std::string> params_of(const httplib::Request& req) {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : req.params) out[k] = v;
    return out;
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

bool truthy(const std::string& v) { return v == "1" || v == "true" || v == "yes"; }

std::string cache_key(std::uint64_t seq, const std::map<std::string, std::string>& params) {
    std::string key = std::to_string(seq);
    for (const auto& [k, v] : params) key += "&" + k + "=" + v;
    return key;
}

std::size_t to_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const auto n = std::stoull(v, &pos);
        if (pos == v.size()) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::InvalidArgument, fmt::format("{} must be a non-negative integer, got '{}'", key, v));
}

} // namespace

EstimateOptions estimate_options_with(const ProjectConfig& config, const std::map<std::string, std::string>& o) {
    EstimateOptions opts = config.estimate_options();
    for (const auto& [key, value] : o) {
        if (key == "mgt") {
            opts.schedule.frequency = parse_frequency(value);
        } else if (key == "accrual") {
            opts.accrual = parse_accrual(value);
        } else if (key == "mgt_cost") {
            try {
                opts.schedule.session_cost_min = std::stod(value);
            } catch (const std::exception&) {
                throw Error(ErrorKind::InvalidArgument, fmt::format("mgt_cost must be a number, got '{}'", value));
            }
        } else if (key == "model") {
            opts.model = parse_model(value);
        } else if (key == "predictor") {
            opts.predictor = parse_predictor(value);
        } else if (key == "mode") {
            opts.mode = parse_fit_mode(value);
        } else if (key == "phi_prior") {
            opts.priors.phi = parse_phi_prior(value);
        } else if (key == "horizon") {
            opts.horizon = to_size(key, value);
        } else if (key == "seed") {
            opts.mcmc.seed = to_size(key, value);
        } else if (key == "chains") {
            opts.mcmc.chains = static_cast<int>(to_size(key, value));
        } else if (key == "warmup") {
            opts.mcmc.warmup = static_cast<int>(to_size(key, value));
        } else if (key == "draws") {
            opts.mcmc.draws = static_cast<int>(to_size(key, value));
        } else if (key == "exclude_bug_time") {
            opts.maintenance.include_bug_time = !truthy(value);
        } else if (key == "allow_unconverged") {
            opts.allow_unconverged = truthy(value);
        } else {
            throw Error(ErrorKind::InvalidArgument, fmt::format("unknown estimate option '{}'", key));
        }
    }
    return opts;
}

Server::Server(Project& project, ServerOptions options)
    : project_(project), options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
    if (options_.token.empty()) {
        throw Error(ErrorKind::InvalidArgument, "a shared token is required to serve (--token or REPLAYROI_TOKEN)");
    }
    // httplib's default sets SO_REUSEPORT, which lets a second server share a
    // busy port silently. Plain SO_REUSEADDR keeps restarts quick.
    http_->set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    routes();
}

Server::~Server() { stop(); }

int Server::bind() {
    if (options_.port == 0) {
        port_ = http_->bind_to_any_port(options_.host);
        if (port_ < 0) throw Error(ErrorKind::PortInUse, "could not bind any port");
    } else {
        if (!http_->bind_to_port(options_.host, options_.port)) {
            throw Error(ErrorKind::PortInUse, fmt::format("port {} on {} is in use", options_.port, options_.host));
        }
        port_ = options_.port;
    }
    return port_;
}

void Server::start() {
    if (port_ == 0) bind();
    thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
}

void Server::run() {
    if (port_ == 0) bind();
    http_->listen_after_bind();
}

void Server::stop() {
    stopping_ = true;
    if (http_) http_->stop();
    if (thread_.joinable()) thread_.join();
}

std::shared_ptr<const ReportBundle> Server::bundle_for(const std::map<std::string, std::string>& params) {
    std::map<std::string, std::string> overrides = params;
    overrides.erase("bin_width_min");
    const auto schedule = estimate_options_with(project_.config(), overrides);

    MeasurementTables tables;
    {
        std::shared_lock lock(state_mutex_);
        tables = project_.tables();
    }
    const auto key = cache_key(tables.last_sequence, params);
    {
        std::lock_guard lock(cache_mutex_);
        if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    ReportOptions options;
    options.config_hash = project_.config().hash;
    options.bin_width_min = project_.config().estimator.bin_width_min;
    if (const auto it = params.find("bin_width_min"); it != params.end()) {
        try {
            options.bin_width_min = std::stod(it->second);
        } catch (const std::exception&) {
            throw Error(ErrorKind::InvalidArgument, "bin_width_min must be a number");
        }
    }
    options.maintenance = schedule.maintenance;
    options.schedules = {schedule};
    auto bundle = std::make_shared<const ReportBundle>(build_report(tables, options));
    std::lock_guard lock(cache_mutex_);
    if (cache_.size() > 64) cache_.clear();
    cache_[key] = bundle;
    return bundle;
}

json Server::run_command(const std::string& name, const json& body) {
    Session& s = project_.session();
    if (name == "start-replay") {
        const auto versions = project_.load_versions();
        if (!versions) throw Error(ErrorKind::Precondition, "no version selection; run `versions select` first");
        s.start_replay(*versions, flag(body, "force"));
        return {{"phase", to_string(s.state().phase)}, {"version", s.state().version}};
    }
    if (name == "checkout") {
        s.checkout_current(flag(body, "force"));
        return {{"version", s.state().version}, {"build_ok", s.state().build_ok.value_or(false)}};
    }
    if (name == "verify") return to_json_view(s.reverify_build());
    if (name == "run") return to_json_view(s.run_test(test_of(body)));
    if (name == "classify") {
        return to_json_view(s.classify_failure(test_of(body), parse_failure_kind(str(body, "kind"))));
    }
    if (name == "activity-start") {
        const auto category = parse_category(str(body, "category"));
        TestKey key{str(body, "protocol", false), str(body, "framework", false)};
        return {{"activity_id", s.start_activity(category, key)}};
    }
    if (name == "activity-stop") {
        std::uint64_t id = 0;
        if (body.contains("activity_id") && body.at("activity_id").is_number_unsigned()) {
            id = body.at("activity_id").get<std::uint64_t>();
        } else if (s.state().timer) {
            id = s.state().timer->id;
        } else {
            throw Error(ErrorKind::NoActiveTimer, "no activity is running");
        }
        std::optional<BugDetails> bug;
        if (const auto description = str(body, "bug_description", false); !description.empty()) {
            BugDetails d;
            d.description = description;
            if (const auto r = str(body, "resolution", false); !r.empty()) d.resolution = parse_resolution(r);
            bug = d;
        }
        return to_json_view(s.stop_activity(id, str(body, "note", false), seconds(body, "duration_s"), bug));
    }
    if (name == "advance") {
        const auto phase = s.advance_version(flag(body, "force"));
        return {{"phase", to_string(phase)}, {"version", s.state().version}};
    }
    if (name == "baseline-manual") {
        const auto d = seconds(body, "duration_s");
        if (!d) throw Error(ErrorKind::InvalidArgument, "missing field 'duration_s'");
        return to_json_view(
            s.record_manual_baseline(str(body, "protocol"), *d, flag(body, "overwrite"), str(body, "note", false)));
    }
    if (name == "baseline-implementation") {
        const auto d = seconds(body, "duration_s");
        if (!d) throw Error(ErrorKind::InvalidArgument, "missing field 'duration_s'");
        return to_json_view(s.record_implementation(test_of(body), *d, flag(body, "overwrite"), str(body, "note", false)));
    }
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown command '{}'", name));
}

std::pair<int, json> Server::command(const std::string& name, const json& body) {
    std::unique_lock lock(state_mutex_);
    std::string command_id;
    if (body.is_object() && body.contains("command_id") && body.at("command_id").is_string()) {
        command_id = body.at("command_id").get<std::string>();
        if (const auto it = completed_.find(command_id); it != completed_.end()) {
            auto replay = it->second;
            replay.second["replayed"] = true;
            return replay;
        }
    }
    const std::uint64_t before = project_.ledger().last_sequence();
    std::pair<int, json> response;
    try {
        if (!body.is_object()) throw Error(ErrorKind::InvalidArgument, "request body must be a JSON object");
        if (body.contains("expected_seq") && !body.at("expected_seq").is_null()) {
            const auto expected = body.at("expected_seq").get<std::uint64_t>();
            if (expected != before) throw StaleState{expected, before};
        }
        json result = run_command(name, body);
        json appended = json::array();
        for (const auto& e : project_.ledger().events()) {
            if (e.sequence > before) appended.push_back(event_to_json(e));
        }
        response = {200,
                    {{"ok", true},
                     {"command", name},
                     {"result", result},
                     {"events", appended},
                     {"last_sequence", project_.ledger().last_sequence()}}};
    } catch (const StaleState& st) {
        // Not cached: a retry after refreshing must be able to go through.
        return {409, error_body("stale", fmt::format("expected sequence {}, ledger is at {}", st.expected, st.actual),
                                before)};
    } catch (const Error& e) {
        response = {status_for(e.kind()), error_body(to_string(e.kind()), e.what(), project_.ledger().last_sequence())};
    } catch (const json::exception& e) {
        response = {400, error_body("invalid-argument", e.what(), project_.ledger().last_sequence())};
    }
    if (!command_id.empty()) completed_[command_id] = response;
    return response;
}

void Server::routes() {
    const std::string api(kApiPrefix);
    auto& http = *http_;

    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_json(res, status_for(e.kind()), error_body(to_string(e.kind()), e.what(), 0));
        } catch (const std::exception& e) {
            send_json(res, 500, error_body("internal", e.what(), 0));
        }
    });

    http.Get(api + "/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"ok", true}, {"schema", kReportSchema}});
    });

    http.Get(api + "/session", [this](const httplib::Request&, httplib::Response& res) {
        std::shared_lock lock(state_mutex_);
        send_json(res, 200,
                  status_json(project_.session().state(), project_.clock(), project_.session().missing_baseline()));
    });

    http.Get(api + "/events", [this](const httplib::Request& req, httplib::Response& res) {
        std::uint64_t since = 0;
        if (req.has_param("since")) since = to_size("since", req.get_param_value("since"));
        json out = json::array();
        std::shared_lock lock(state_mutex_);
        for (const auto& e : project_.ledger().events()) {
            if (e.sequence > since) out.push_back(event_to_json(e));
        }
        send_json(res, 200, {{"events", out}, {"last_sequence", project_.ledger().last_sequence()}});
    });

    http.Get(api + "/tables", [this](const httplib::Request& req, httplib::Response& res) {
        MeasurementTables tables;
        {
            std::shared_lock lock(state_mutex_);
            tables = project_.tables();
        }
        MaintenanceOptions mo;
        mo.include_bug_time = !project_.config().estimator.exclude_bug_time;
        if (req.has_param("exclude_bug_time")) mo.include_bug_time = !truthy(req.get_param_value("exclude_bug_time"));
        const auto stats = summary_stats(tables, mo);
        send_json(res, 200,
                  {{"schema", kReportSchema},
                   {"last_sequence", tables.last_sequence},
                   {"tables", stats_to_json(stats)},
                   {"text", render_tables(tables, stats, TableFormat::Text)}});
    });

    http.Get(api + "/series", [this](const httplib::Request& req, httplib::Response& res) {
        const auto bundle = bundle_for(params_of(req));
        json body = render_series(*bundle);
        body["last_sequence"] = bundle->provenance.ledger_sequence;
        send_json(res, 200, body);
    });

    http.Get(api + "/roi", [this](const httplib::Request& req, httplib::Response& res) {
        const auto bundle = bundle_for(params_of(req));
        send_json(res, 200,
                  {{"schema", kReportSchema},
                   {"last_sequence", bundle->provenance.ledger_sequence},
                   {"estimates", estimates_to_json(*bundle)},
                   {"text", render_roi(*bundle)}});
    });

    http.Get(api + "/bundle", [this](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, bundle_to_json(*bundle_for(params_of(req))));
    });

    http.Post(api + R"(/commands/([a-z\-]+))", [this](const httplib::Request& req, httplib::Response& res) {
        std::string presented = req.get_header_value("X-Replayroi-Token");
        const auto auth = req.get_header_value("Authorization");
        if (auth.rfind("Bearer ", 0) == 0) presented = auth.substr(7);
        if (presented != options_.token) {
            send_json(res, 401, error_body("unauthorized", "missing or wrong token", 0));
            return;
        }
        json body = json::object();
        if (!req.body.empty()) {
            body = json::parse(req.body, nullptr, false);
            if (body.is_discarded()) {
                send_json(res, 400, error_body("invalid-argument", "request body is not valid JSON", 0));
                return;
            }
        }
        const auto [status, out] = command(req.matches[1], body);
        send_json(res, status, out);
    });

    // Server-sent events: ledger events as they land, plus a timer tick.
    http.Get(api + "/stream", [this](const httplib::Request& req, httplib::Response& res) {
        std::uint64_t since = 0;
        if (req.has_param("since")) {
            since = to_size("since", req.get_param_value("since"));
        } else if (req.has_header("Last-Event-ID")) {
            since = to_size("Last-Event-ID", req.get_header_value("Last-Event-ID"));
        }
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [this, cursor = since](std::size_t, httplib::DataSink& sink) mutable {
                while (!stopping_ && sink.is_writable()) {
                    std::string chunk;
                    json tick;
                    {
                        std::shared_lock lock(state_mutex_);
                        for (const auto& e : project_.ledger().events()) {
                            if (e.sequence <= cursor) continue;
                            chunk += fmt::format("id: {}\nevent: ledger\ndata: {}\n\n", e.sequence, serialize_event(e));
                            cursor = e.sequence;
                        }
                        const auto& state = project_.session().state();
                        tick = {{"server_time", format_instant(project_.clock().wall())},
                                {"last_sequence", project_.ledger().last_sequence()},
                                {"timer", state.timer ? timer_json(*state.timer, project_.clock()) : json(nullptr)}};
                    }
                    chunk += fmt::format("event: tick\ndata: {}\n\n", tick.dump());
                    if (!sink.write(chunk.data(), chunk.size())) return false;
                    std::this_thread::sleep_for(options_.tick);
                }
                sink.done();
                return true;
            });
    });

    if (options_.assets) {
        http.set_mount_point("/", options_.assets->string());
    } else {
        http.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("replayroi server: no console assets configured; the API lives under /api/v1\n",
                            "text/plain");
        });
    }
}

} // namespace replayroi
