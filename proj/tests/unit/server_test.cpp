#include <doctest.h>

#include "replayroi/config.hpp"
#include "replayroi/error.hpp"
#include "replayroi/server.hpp"

#include "support.hpp"

#include <httplib.h>

using namespace replayroi;
using json = nlohmann::json;
using namespace std::chrono_literals;

namespace {

const char* kToken = "tok-123";

// A configured project on fakes: two protocols, one framework, three versions.
struct Fixture {
    testing::TempDir tmp;
    std::shared_ptr<testing::FakeVcs> vcs = std::make_shared<testing::FakeVcs>();
    std::shared_ptr<testing::ScriptedRunner> runner = std::make_shared<testing::ScriptedRunner>();
    std::shared_ptr<testing::FakeClock> clock = std::make_shared<testing::FakeClock>();
    std::set<std::string> failing;
    std::unique_ptr<Project> project;

    Fixture() {
        std::filesystem::create_directories(tmp / "repo");
        auto j = json::parse(config_template("demo", "repo", "main"));
        j["protocols"] = json::array({{{"id", "P1"}, {"title", "Login"}}, {{"id", "P2"}, {"title", "Search"}}});
        j["tests"] = json::array({{{"protocol", "P1"}, {"framework", "fw1"}, {"run", "run-p1"}},
                                  {{"protocol", "P2"}, {"framework", "fw1"}, {"run", "run-p2"}}});
        j["mgt"]["accrual"] = "per-step";
        const auto config = parse_config(j.dump(), tmp / "replayroi.json", [](const std::string&) { return std::nullopt; });
        runner->behaviour = [this](const CommandSpec& spec) { return testing::exited(failing.count(spec.command) ? 1 : 0); };
        project = std::make_unique<Project>(config, ProjectDeps{vcs, runner, clock});
        project->save_versions(testing::synthetic_versions(3));
    }
};

struct Running {
    Fixture f;
    Server server;
    httplib::Client client;

    explicit Running(ServerOptions options = base_options())
        : server(*f.project, std::move(options)), client("127.0.0.1", (server.bind(), server.port())) {
        server.start();
        client.set_read_timeout(10, 0);
    }
    ~Running() { server.stop(); }

    static ServerOptions base_options() {
        ServerOptions o;
        o.port = 0;
        o.token = kToken;
        o.tick = 50ms;
        return o;
    }

    std::pair<int, json> post(const std::string& name, const json& body) {
        const httplib::Headers headers{{"Authorization", std::string("Bearer ") + kToken}};
        const auto res = client.Post(std::string(kApiPrefix) + "/commands/" + name, headers, body.dump(), "application/json");
        REQUIRE(res);
        return {res->status, json::parse(res->body)};
    }

    json get(const std::string& path) {
        const auto res = client.Get(std::string(kApiPrefix) + path);
        REQUIRE(res);
        REQUIRE(res->status == 200);
        return json::parse(res->body);
    }

    void baselines() {
        for (const auto& [p, s] : std::vector<std::pair<std::string, int>>{{"P1", 600}, {"P2", 900}}) {
            CHECK(post("baseline-manual", {{"protocol", p}, {"duration_s", s}}).first == 200);
            CHECK(post("baseline-implementation", {{"protocol", p}, {"framework", "fw1"}, {"duration_s", s * 4}}).first ==
                  200);
        }
    }
};

} // namespace

TEST_SUITE("server") {
    TEST_CASE("commands need the token") {
        Running r;
        CHECK(r.get("/health")["ok"] == true);
        const std::string path = std::string(kApiPrefix) + "/commands/baseline-manual";
        const std::string body = R"({"protocol":"P1","duration_s":60})";
        auto res = r.client.Post(path, body, "application/json");
        REQUIRE(res);
        CHECK(res->status == 401);
        res = r.client.Post(path, {{"Authorization", "Bearer wrong"}}, body, "application/json");
        CHECK(res->status == 401);
        res = r.client.Post(path, {{"X-Replayroi-Token", kToken}}, body, "application/json");
        CHECK(res->status == 200);
        CHECK(r.f.project->ledger().last_sequence() >= 1);
        res = r.client.Post(path, {{"X-Replayroi-Token", kToken}}, "{not json", "application/json");
        CHECK(res->status == 400);
    }

    TEST_CASE("a replay driven over HTTP") {
        Running r;
        r.baselines();
        r.f.failing.insert("run-p1");
        auto [status, out] = r.post("start-replay", json::object());
        REQUIRE(status == 200);
        CHECK(out["result"]["phase"] == "replay");
        CHECK(r.post("run", {{"protocol", "P1"}, {"framework", "fw1"}}).second["result"]["outcome"] == "fail");

        std::tie(status, out) = r.post("advance", json::object());
        CHECK(status == 409);
        CHECK(out["error"]["kind"] == "blocked");

        CHECK(r.post("classify", {{"protocol", "P1"}, {"framework", "fw1"}, {"kind", "broken-test"}}).first == 200);
        const auto started =
            r.post("activity-start", {{"category", "repair"}, {"protocol", "P1"}, {"framework", "fw1"}});
        CHECK(started.first == 200);
        CHECK(r.post("activity-start", {{"category", "bug"}, {"protocol", "P2"}, {"framework", "fw1"}}).first ==
              409);
        r.f.clock->advance(90s);
        std::tie(status, out) = r.post("activity-stop", {{"note", "selector changed"}});
        CHECK(status == 200);
        CHECK(out["result"]["script_updated"] == true);
        CHECK(out["events"].size() == 2); // ActivityStopped, TestScriptUpdated

        r.f.failing.clear();
        r.post("run", {{"protocol", "P1"}, {"framework", "fw1"}});
        r.post("run", {{"protocol", "P2"}, {"framework", "fw1"}});
        std::tie(status, out) = r.post("advance", json::object());
        CHECK(status == 200);
        CHECK(out["result"]["version"] == 2);

        const auto session = r.get("/session");
        CHECK(session["phase"] == "replay");
        CHECK(session["version"] == 2);
        CHECK(session["last_sequence"] == r.f.project->ledger().last_sequence());

        CHECK(r.post("teleport", json::object()).first == 400);
        CHECK(r.post("run", {{"protocol", "P1"}}).first == 400);
    }

    TEST_CASE("stale writes are refused and retried commands replay") {
        Running r;
        const auto seq = r.f.project->ledger().last_sequence();
        auto [status, out] = r.post("baseline-manual", {{"protocol", "P1"}, {"duration_s", 60}, {"expected_seq", seq + 5}});
        CHECK(status == 409);
        CHECK(out["error"]["kind"] == "stale");
        CHECK(r.f.project->ledger().last_sequence() == seq);

        const json body{{"protocol", "P1"}, {"duration_s", 60}, {"expected_seq", seq}, {"command_id", "c-1"}};
        std::tie(status, out) = r.post("baseline-manual", body);
        CHECK(status == 200);
        CHECK(out["last_sequence"] == seq + 1);
        std::tie(status, out) = r.post("baseline-manual", body);
        CHECK(status == 200);
        CHECK(out["replayed"] == true);
        CHECK(r.f.project->ledger().last_sequence() == seq + 1);

        // A failed command is cached under its id too.
        const json dup{{"protocol", "P1"}, {"duration_s", 60}, {"command_id", "c-2"}};
        CHECK(r.post("baseline-manual", dup).first == 409);
        const auto again = r.post("baseline-manual", dup);
        CHECK(again.first == 409);
        CHECK(again.second["replayed"] == true);
    }

    TEST_CASE("events can be fetched from a sequence on") {
        Running r;
        r.baselines();
        const auto all = r.get("/events");
        const auto last = all["last_sequence"].get<std::uint64_t>();
        CHECK(all["events"].size() == last);
        const auto tail = r.get("/events?since=" + std::to_string(last - 2));
        REQUIRE(tail["events"].size() == 2);
        CHECK(tail["events"][0]["seq"] == last - 1);
    }

    TEST_CASE("tables and ROI agree with the in-process report") {
        Running r;
        r.baselines();
        const auto tables = r.f.project->tables();
        const auto stats = summary_stats(tables);
        const auto got = r.get("/tables");
        CHECK(got["text"] == render_tables(tables, stats, TableFormat::Text));
        CHECK(got["tables"] == stats_to_json(stats));

        r.post("start-replay", json::object());
        for (int v = 0; v < 3; ++v) {
            r.post("run", {{"protocol", "P1"}, {"framework", "fw1"}});
            r.post("run", {{"protocol", "P2"}, {"framework", "fw1"}});
            r.post("advance", json::object());
        }
        const auto roi = r.get("/roi?model=empirical&mgt_cost=30");
        const auto local = r.f.project->report(
            {estimate_options_with(r.f.project->config(), {{"model", "empirical"}, {"mgt_cost", "30"}})});
        CHECK(roi["estimates"] == estimates_to_json(local));
        CHECK(roi["last_sequence"] == r.f.project->ledger().last_sequence());
        const auto bundle = r.get("/bundle?model=empirical&mgt_cost=30");
        CHECK(bundle["schema"] == "replayroi.report/1");
        CHECK(r.get("/series?model=empirical&mgt_cost=30")["frameworks"].size() == 1);

        const auto bad = r.client.Get(std::string(kApiPrefix) + "/roi?model=oracle");
        REQUIRE(bad);
        CHECK(bad->status == 400);
    }

    TEST_CASE("the stream delivers ledger events and timer ticks") {
        Running r;
        r.baselines();
        std::string received;
        std::thread writer([&] {
            std::this_thread::sleep_for(200ms);
            r.post("baseline-manual", {{"protocol", "P1"}, {"duration_s", 30}, {"overwrite", true}});
        });
        const auto expected_last = r.f.project->ledger().last_sequence() + 1;
        httplib::Client sse("127.0.0.1", r.server.port());
        sse.set_read_timeout(5, 0);
        sse.Get(std::string(kApiPrefix) + "/stream?since=2", [&](const char* data, std::size_t n) {
            received.append(data, n);
            return received.find(fmt::format("id: {}\n", expected_last)) == std::string::npos;
        });
        writer.join();
        CHECK(received.find("id: 2\n") == std::string::npos);
        CHECK(received.find("id: 3\nevent: ledger\n") != std::string::npos);
        CHECK(received.find("event: tick\n") != std::string::npos);
        CHECK(received.find(fmt::format("id: {}\n", expected_last)) != std::string::npos);

        // Resume via Last-Event-ID.
        std::string resumed;
        sse.Get(std::string(kApiPrefix) + "/stream", {{"Last-Event-ID", std::to_string(expected_last - 1)}},
                [&](const char* data, std::size_t n) {
                    resumed.append(data, n);
                    return resumed.find("event: tick") == std::string::npos;
                });
        CHECK(resumed.rfind(fmt::format("id: {}\n", expected_last), 0) == 0);
    }

    TEST_CASE("a busy port is reported") {
        Running r;
        ServerOptions o = Running::base_options();
        o.port = r.server.port();
        Server second(*r.f.project, o);
        bool threw = false;
        try {
            second.bind();
        } catch (const Error& e) {
            threw = true;
            CHECK(e.kind() == ErrorKind::PortInUse);
            CHECK(std::string(e.what()).find(std::to_string(o.port)) != std::string::npos);
        }
        CHECK(threw);
    }

    TEST_CASE("serving needs a token") {
        Fixture f;
        ServerOptions o;
        CHECK_THROWS_AS(Server(*f.project, o), Error);
    }

    TEST_CASE("console assets are served from the root") {
        testing::TempDir assets;
        testing::write_file(assets / "index.html", "<!doctype html><title>console</title>");
        ServerOptions o = Running::base_options();
        o.assets = assets.path;
        Running r(o);
        auto res = r.client.Get("/index.html");
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(res->body.find("console") != std::string::npos);
        res = r.client.Get("/");
        REQUIRE(res);
        CHECK(res->status == 200);

        Running bare;
        res = bare.client.Get("/");
        REQUIRE(res);
        CHECK(res->body.find("/api/v1") != std::string::npos);
    }

    TEST_CASE("estimate overrides parse or fail loudly") {
        Fixture f;
        const auto o = estimate_options_with(f.project->config(), {{"mgt", "monthly"},
                                                                   {"mgt_cost", "12.5"},
                                                                   {"model", "bayes"},
                                                                   {"horizon", "24"},
                                                                   {"chains", "3"},
                                                                   {"exclude_bug_time", "true"}});
        CHECK(o.schedule.frequency == MgtFrequency::Monthly);
        CHECK(o.schedule.session_cost_min == 12.5);
        CHECK(o.model == ModelKind::Bayes);
        CHECK(o.horizon == 24);
        CHECK(o.mcmc.chains == 3);
        CHECK_FALSE(o.maintenance.include_bug_time);
        CHECK_THROWS_AS(estimate_options_with(f.project->config(), {{"horizon", "soon"}}), Error);
        CHECK_THROWS_AS(estimate_options_with(f.project->config(), {{"colour", "x"}}), Error);
    }
}
