#include "replayroi/config.hpp"

#include "replayroi/error.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace replayroi {

using nlohmann::json;

namespace {

[[noreturn]] void field_error(const std::string& source, const std::string& field, const std::string& message) {
    throw Error(ErrorKind::InvalidConfig, fmt::format("{}: field '{}': {}", source, field, message));
}

// Typed accessor that names the field on failure.
class Reader {
public:
    Reader(const json& j, std::string path, std::string source)
        : j_(j), path_(std::move(path)), source_(std::move(source)) {
        if (!j_.is_object()) field_error(source_, path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
    const json& raw(const std::string& key) const { return j_.at(key); }

    template <typename T>
    std::optional<T> get(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) field_error(source_, field(key), "expected a string");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) field_error(source_, field(key), "expected true or false");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) field_error(source_, field(key), "expected an integer");
            if (v.get<std::int64_t>() < 0) field_error(source_, field(key), "must not be negative");
        } else {
            if (!v.is_number()) field_error(source_, field(key), "expected a number");
        }
        return v.get<T>();
    }

    template <typename T>
    T require(const std::string& key) const {
        auto v = get<T>(key);
        if (!v) field_error(source_, field(key), "is required");
        return *v;
    }

    const json& array(const std::string& key) const {
        if (!has(key) || !j_.at(key).is_array()) field_error(source_, field(key), "expected an array");
        return j_.at(key);
    }

    void reject_unknown(std::initializer_list<std::string_view> known) const {
        for (const auto& [k, _] : j_.items()) {
            if (std::find(known.begin(), known.end(), k) == known.end()) {
                field_error(source_, field(k), "unknown field");
            }
        }
    }

    const std::string& source() const { return source_; }

private:
    const json& j_;
    std::string path_;
    std::string source_;
};

template <typename F>
auto parse_enum(const Reader& r, const std::string& key, F parse) -> std::optional<decltype(parse(""))> {
    const auto text = r.get<std::string>(key);
    if (!text) return std::nullopt;
    try {
        return parse(*text);
    } catch (const Error& e) {
        field_error(r.source(), r.field(key), e.what());
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

} // namespace

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str()); v != nullptr && *v != '\0') return std::string(v);
    return std::nullopt;
}

std::string fingerprint(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return fmt::format("{:016x}", h);
}

TimeRange ProjectConfig::range() const {
    TimeRange r{Instant::min(), Instant::max()};
    if (range_from) r.from = parse_instant(*range_from);
    if (range_to) {
        r.to = parse_instant(*range_to);
        // A bare date includes the whole day.
        if (is_date_only(*range_to)) r.to += std::chrono::days{1} - Millis{1};
    }
    return r;
}

SelectionStrategy ProjectConfig::selection() const {
    auto s = SelectionStrategy::parse(strategy);
    for (const auto& w : sentinels) s.sentinels.push_back(SelectionStrategy::parse_sentinel(w));
    if (s.kind == SelectionStrategy::Kind::Interval && range_from) s.anchor = parse_instant(*range_from);
    s.validate();
    return s;
}

EstimateOptions ProjectConfig::estimate_options() const {
    EstimateOptions o;
    o.schedule = mgt;
    o.accrual = accrual;
    o.model = estimator.model;
    o.predictor = estimator.predictor;
    o.mode = estimator.mode;
    o.horizon = estimator.horizon;
    o.priors.phi = estimator.phi_prior;
    o.mcmc = estimator.mcmc;
    o.maintenance.include_bug_time = !estimator.exclude_bug_time;
    return o;
}

std::vector<events::ProtocolInfo> ProjectConfig::protocol_infos() const {
    std::vector<events::ProtocolInfo> out;
    for (const auto& p : protocols) out.push_back({p.id, p.title, p.selected});
    return out;
}

ProjectConfig parse_config(const std::string& text, const std::filesystem::path& source, const EnvLookup& env) {
    const std::string src = source.string();
    json doc;
    try {
        doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        std::string what = e.what();
        if (const auto pos = what.find("syntax error"); pos != std::string::npos) what = what.substr(pos);
        throw Error(ErrorKind::InvalidConfig, fmt::format("{}:{}:{}: {}", src, line, col, what));
    }
    const Reader root(doc, "", src);
    root.reject_unknown({"project", "repo", "branch", "range", "strategy", "sentinels", "workspace", "build_command",
                         "build_timeout_s", "test_timeout_s", "protocols", "frameworks", "tests", "mgt", "estimator",
                         "ledger", "versions_file", "assets"});
    const auto base = std::filesystem::absolute(source).parent_path();

    ProjectConfig c;
    c.source = std::filesystem::absolute(source);
    c.project = root.require<std::string>("project");
    c.repo = resolve(base, root.require<std::string>("repo"));
    if (!std::filesystem::is_directory(c.repo)) field_error(src, "repo", fmt::format("'{}' is not a directory", c.repo.string()));
    c.branch = root.get<std::string>("branch").value_or(c.branch);
    if (root.has("range")) {
        const Reader range(root.raw("range"), "range", src);
        range.reject_unknown({"from", "to"});
        c.range_from = range.get<std::string>("from");
        c.range_to = range.get<std::string>("to");
        for (const auto* key : {"from", "to"}) {
            const auto& v = std::string(key) == "from" ? c.range_from : c.range_to;
            if (!v) continue;
            try {
                parse_instant(*v);
            } catch (const Error& e) {
                field_error(src, range.field(key), e.what());
            }
        }
    }
    c.strategy = root.get<std::string>("strategy").value_or(c.strategy);
    if (root.has("sentinels")) {
        for (const auto& s : root.array("sentinels")) {
            if (!s.is_string()) field_error(src, "sentinels", "expected strings like START..END:1d");
            c.sentinels.push_back(s.get<std::string>());
        }
    }
    try {
        (void)c.selection();
    } catch (const Error& e) {
        field_error(src, "strategy", e.what());
    }
    c.workspace = root.has("workspace") ? resolve(base, root.require<std::string>("workspace")) : c.repo;
    c.build_command = root.get<std::string>("build_command").value_or("");
    c.build_timeout_s = root.get<std::int64_t>("build_timeout_s").value_or(c.build_timeout_s);
    c.test_timeout_s = root.get<std::int64_t>("test_timeout_s").value_or(c.test_timeout_s);

    std::set<std::string> protocol_ids;
    const auto& protocols = root.array("protocols");
    for (std::size_t i = 0; i < protocols.size(); ++i) {
        const Reader p(protocols[i], fmt::format("protocols[{}]", i), src);
        p.reject_unknown({"id", "title", "description", "selected"});
        TestProtocol tp;
        tp.id = p.require<std::string>("id");
        tp.title = p.get<std::string>("title").value_or(tp.id);
        tp.description = p.get<std::string>("description").value_or("");
        tp.selected = p.get<bool>("selected").value_or(true);
        if (tp.id.empty() || !protocol_ids.insert(tp.id).second) field_error(src, p.field("id"), "must be unique and non-empty");
        c.protocols.push_back(std::move(tp));
    }
    std::set<std::string> framework_ids;
    const auto& frameworks = root.array("frameworks");
    for (std::size_t i = 0; i < frameworks.size(); ++i) {
        const Reader f(frameworks[i], fmt::format("frameworks[{}]", i), src);
        f.reject_unknown({"id", "name"});
        FrameworkId fw;
        fw.id = f.require<std::string>("id");
        fw.display_name = f.get<std::string>("name").value_or(fw.id);
        if (fw.id.empty() || !framework_ids.insert(fw.id).second) field_error(src, f.field("id"), "must be unique and non-empty");
        c.frameworks.push_back(std::move(fw));
    }
    std::set<TestKey> test_keys;
    if (root.has("tests")) {
        const auto& tests = root.array("tests");
        for (std::size_t i = 0; i < tests.size(); ++i) {
            const Reader t(tests[i], fmt::format("tests[{}]", i), src);
            t.reject_unknown({"protocol", "framework", "run", "script", "timeout_s"});
            AutomatedTestRef ref;
            ref.protocol = t.require<std::string>("protocol");
            ref.framework = t.require<std::string>("framework");
            if (!protocol_ids.count(ref.protocol)) field_error(src, t.field("protocol"), fmt::format("unknown protocol '{}'", ref.protocol));
            if (!framework_ids.count(ref.framework)) field_error(src, t.field("framework"), fmt::format("unknown framework '{}'", ref.framework));
            if (!test_keys.insert(key_of(ref)).second) field_error(src, tests[i].dump(), "duplicate test");
            ref.run_command.command = t.require<std::string>("run");
            ref.run_command.timeout = std::chrono::seconds(t.get<std::int64_t>("timeout_s").value_or(c.test_timeout_s));
            ref.script_locator = t.get<std::string>("script").value_or("");
            c.tests.push_back(std::move(ref));
        }
    }
    if (root.has("mgt")) {
        const Reader m(root.raw("mgt"), "mgt", src);
        m.reject_unknown({"frequency", "session_cost_min", "accrual"});
        if (auto f = parse_enum(m, "frequency", parse_frequency)) c.mgt.frequency = *f;
        c.mgt.session_cost_min = m.get<double>("session_cost_min").value_or(0.0);
        if (c.mgt.session_cost_min < 0.0) field_error(src, m.field("session_cost_min"), "must not be negative");
        if (auto a = parse_enum(m, "accrual", parse_accrual)) c.accrual = *a;
    }
    if (root.has("estimator")) {
        const Reader e(root.raw("estimator"), "estimator", src);
        e.reject_unknown({"model", "predictor", "mode", "phi_prior", "horizon", "seed", "chains", "warmup", "draws",
                          "exclude_bug_time", "bin_width_min"});
        auto& d = c.estimator;
        if (auto v = parse_enum(e, "model", parse_model)) d.model = *v;
        if (auto v = parse_enum(e, "predictor", parse_predictor)) d.predictor = *v;
        if (auto v = parse_enum(e, "mode", parse_fit_mode)) d.mode = *v;
        if (auto v = parse_enum(e, "phi_prior", parse_phi_prior)) d.phi_prior = *v;
        d.horizon = e.get<std::size_t>("horizon").value_or(d.horizon);
        d.mcmc.seed = e.get<std::uint64_t>("seed").value_or(d.mcmc.seed);
        d.mcmc.chains = e.get<int>("chains").value_or(d.mcmc.chains);
        d.mcmc.warmup = e.get<int>("warmup").value_or(d.mcmc.warmup);
        d.mcmc.draws = e.get<int>("draws").value_or(d.mcmc.draws);
        d.exclude_bug_time = e.get<bool>("exclude_bug_time").value_or(false);
        d.bin_width_min = e.get<double>("bin_width_min").value_or(d.bin_width_min);
        if (d.mcmc.chains < 2) field_error(src, e.field("chains"), "at least 2 chains are needed for diagnostics");
        if (!(d.bin_width_min > 0.0)) field_error(src, e.field("bin_width_min"), "must be positive");
    }
    c.ledger = resolve(base, root.get<std::string>("ledger").value_or(".replayroi/ledger.jsonl"));
    c.versions_file = resolve(base, root.get<std::string>("versions_file").value_or(".replayroi/versions.json"));
    if (root.has("assets")) {
        c.assets = resolve(base, root.require<std::string>("assets"));
        if (!std::filesystem::is_directory(*c.assets)) field_error(src, "assets", fmt::format("'{}' is not a directory", c.assets->string()));
    }

    // Secrets and paths only.
    if (auto v = env("REPLAYROI_LEDGER")) c.ledger = std::filesystem::absolute(*v);
    if (auto v = env("REPLAYROI_TOKEN")) c.token = *v;

    // The ledger location itself is not part of the fingerprint: moving a
    // ledger must not look like a configuration change.
    json canonical = doc;
    canonical.erase("ledger");
    canonical.erase("versions_file");
    canonical.erase("assets");
    c.hash = fingerprint(canonical.dump());
    return c;
}

ProjectConfig load_config(const std::filesystem::path& file, const EnvLookup& env) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorKind::InvalidConfig, fmt::format("cannot read config '{}'", file.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), file, env);
}

std::string config_template(const std::string& project, const std::string& repo, const std::string& branch) {
    json j = {
        {"project", project},
        {"repo", repo},
        {"branch", branch},
        {"range", {{"from", "2000-01-01"}, {"to", "2100-01-01"}}},
        {"strategy", "interval:7d"},
        {"sentinels", json::array()},
        {"build_command", ""},
        {"build_timeout_s", 1800},
        {"test_timeout_s", 600},
        {"protocols", json::array({{{"id", "P1"}, {"title", "First test protocol"}}})},
        {"frameworks", json::array({{{"id", "fw1"}, {"name", "Framework 1"}}})},
        {"tests", json::array({{{"protocol", "P1"}, {"framework", "fw1"}, {"run", "./run-p1.sh"}}})},
        {"mgt", {{"frequency", "weekly"}, {"session_cost_min", 0}, {"accrual", "calendar"}}},
        {"estimator", {{"model", "log"}, {"predictor", "step"}, {"horizon", 0}, {"seed", 1}}},
        {"ledger", ".replayroi/ledger.jsonl"},
        {"versions_file", ".replayroi/versions.json"},
    };
    return j.dump(2) + "\n";
}

} // namespace replayroi
