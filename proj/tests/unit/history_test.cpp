#include <doctest.h>

#include "replayroi/error.hpp"
#include "replayroi/history.hpp"

#include "support.hpp"

#include <random>
#include <set>

using namespace replayroi;
using namespace std::chrono_literals;
using testing::GitFixture;
using testing::TempDir;

namespace {

Instant day(int d) { return parse_instant("2021-01-01T12:00:00Z") + std::chrono::days{d - 1}; }

std::vector<CommitRef> daily_history(int days, Instant start) {
    std::vector<CommitRef> h;
    for (int d = 0; d < days; ++d) h.push_back({fmt::format("c{:04d}", d), start + std::chrono::days{d}, std::nullopt});
    return h;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Internal;
}

} // namespace

TEST_SUITE("history") {
    TEST_CASE("a date range keeps only the commits inside it") {
        TempDir tmp;
        GitFixture repo(tmp / "repo");
        for (int d = 1; d <= 10; ++d) repo.commit(day(d), {{"f.txt", std::to_string(d)}});
        GitAdapter git(repo.dir());

        const TimeRange range{parse_instant("2021-01-03"), parse_instant("2021-01-07T23:59:59Z")};
        const auto history = load_commit_history(git, "main", range);
        REQUIRE(history.size() == 5);
        CHECK(history.front().id == repo.ids()[2]);
        CHECK(history.back().id == repo.ids()[6]);

        const auto seq = select_versions(history, SelectionStrategy::interval(std::chrono::days{1}));
        CHECK(seq.size() == 5);
        CHECK(seq.at(1).index == 1);
        CHECK(seq.at(5).commit.id == repo.ids()[6]);
        CHECK(seq.at(1).label.rfind("v1 " + repo.ids()[2].substr(0, 10), 0) == 0);
    }

    TEST_CASE("a range without commits is an error") {
        TempDir tmp;
        GitFixture repo(tmp / "repo");
        repo.commit(day(1), {{"f.txt", "1"}});
        GitAdapter git(repo.dir());
        const TimeRange range{parse_instant("2030-01-01"), parse_instant("2030-02-01")};
        CHECK(kind_of([&] { load_commit_history(git, "main", range); }) == ErrorKind::EmptyRange);
    }

    TEST_CASE("unknown branches and non-repositories are reported") {
        TempDir tmp;
        GitFixture repo(tmp / "repo");
        repo.commit(day(1), {{"f.txt", "1"}});
        const TimeRange all{Instant::min(), Instant::max()};
        GitAdapter git(repo.dir());
        CHECK(kind_of([&] { load_commit_history(git, "no-such-branch", all); }) == ErrorKind::BranchMissing);
        std::filesystem::create_directories(tmp / "plain");
        GitAdapter not_git(tmp / "plain");
        CHECK(kind_of([&] { load_commit_history(not_git, "main", all); }) == ErrorKind::RepositoryUnreadable);
    }

    TEST_CASE("churn is lines added plus deleted") {
        TempDir tmp;
        GitFixture repo(tmp / "repo");
        repo.commit(day(1), {{"a.txt", "1\n2\n3\n"}});
        GitAdapter git(repo.dir());
        const TimeRange all{Instant::min(), Instant::max()};
        auto history = load_commit_history(git, "main", all, true);
        REQUIRE(history.size() == 1);
        CHECK(history[0].churn == 3);

        // One-commit repository: a churn threshold above its size selects nothing.
        CHECK(kind_of([&] { select_versions(history, SelectionStrategy::churn(10)); }) == ErrorKind::NoVersions);
        CHECK(select_versions(history, SelectionStrategy::churn(3)).size() == 1);

        repo.commit(day(2), {{"a.txt", "1\nTWO\n3\n4\n"}});
        history = load_commit_history(git, "main", all, true);
        REQUIRE(history.size() == 2);
        CHECK(history[1].churn == 3); // one line replaced (+1 -1) and one added
    }

    TEST_CASE("churn accumulates to the threshold and resets") {
        std::vector<CommitRef> h;
        const std::vector<std::int64_t> churn{40, 80, 30, 90, 120};
        for (std::size_t i = 0; i < churn.size(); ++i) h.push_back({fmt::format("c{}", i + 1), day(static_cast<int>(i) + 1), churn[i]});
        const auto seq = select_versions(h, SelectionStrategy::churn(100));
        REQUIRE(seq.size() == 3);
        CHECK(seq.at(1).commit.id == "c2");
        CHECK(seq.at(2).commit.id == "c4");
        CHECK(seq.at(3).commit.id == "c5");
    }

    TEST_CASE("interval selection keeps the last commit of each non-empty period") {
        // Two commits in week 0, none in week 1, one in week 2.
        std::vector<CommitRef> h{{"a", day(1), {}}, {"b", day(3), {}}, {"c", day(16), {}}};
        const auto seq = select_versions(h, SelectionStrategy::interval(std::chrono::weeks{1}));
        REQUIRE(seq.size() == 2);
        CHECK(seq.at(1).commit.id == "b");
        CHECK(seq.at(2).commit.id == "c");
    }

    TEST_CASE("explicit selection validates ids") {
        std::vector<CommitRef> h{{"a", day(1), {}}, {"b", day(2), {}}, {"c", day(3), {}}};
        const auto seq = select_versions(h, SelectionStrategy::explicit_ids({"c", "a"}));
        REQUIRE(seq.size() == 2);
        CHECK(seq.at(1).commit.id == "a");
        CHECK(kind_of([&] { select_versions(h, SelectionStrategy::explicit_ids({"zzz"})); }) == ErrorKind::InvalidArgument);
    }

    TEST_CASE("a year of weekly versions plus two daily sentinel weeks gives 66") {
        const auto start = parse_instant("2018-01-01T12:00:00Z");
        const auto history = daily_history(364, start);
        auto strategy = SelectionStrategy::interval(std::chrono::weeks{1}, start);
        // Windows straddle week boundaries so both neighbouring weeks keep commits.
        strategy.sentinels.push_back(SelectionStrategy::parse_sentinel("2018-04-11..2018-04-17:1d"));
        strategy.sentinels.push_back(SelectionStrategy::parse_sentinel("2018-09-05..2018-09-11:1d"));
        const auto seq = select_versions(history, strategy);
        CHECK(seq.size() == 66);

        std::size_t daily = 0;
        for (const auto& e : seq.entries) {
            for (const auto& w : strategy.sentinels) daily += w.contains(e.calendar_time) ? 1 : 0;
        }
        CHECK(daily == 14);
    }

    TEST_CASE("sentinel windows are half-open and a bare end date covers that day") {
        const auto w = SelectionStrategy::parse_sentinel("2021-01-01..2021-01-07:1d");
        CHECK(w.contains(parse_instant("2021-01-07T23:59:59Z")));
        CHECK_FALSE(w.contains(parse_instant("2021-01-08")));
        const auto timed = SelectionStrategy::parse_sentinel("2021-01-01T00:00:00Z..2021-01-02T00:00:00Z:6h");
        CHECK_FALSE(timed.contains(parse_instant("2021-01-02")));
        CHECK(timed.period == 6h);
        CHECK_THROWS_AS(SelectionStrategy::parse_sentinel("2021-01-05..2021-01-01:1d"), Error);
        CHECK_THROWS_AS(SelectionStrategy::parse_sentinel("2021-01-05"), Error);
    }

    TEST_CASE("overlapping sentinels and sentinels on explicit lists are rejected") {
        auto s = SelectionStrategy::interval(std::chrono::weeks{1});
        s.sentinels.push_back(SelectionStrategy::parse_sentinel("2021-01-01..2021-01-07:1d"));
        s.sentinels.push_back(SelectionStrategy::parse_sentinel("2021-01-05..2021-01-09:1d"));
        CHECK_THROWS_AS(s.validate(), Error);
        auto e = SelectionStrategy::explicit_ids({"a"});
        e.sentinels.push_back(SelectionStrategy::parse_sentinel("2021-01-01..2021-01-07:1d"));
        CHECK_THROWS_AS(e.validate(), Error);
    }

    TEST_CASE("strategy strings parse and describe symmetrically") {
        for (const char* text : {"interval:3d", "interval:7d", "churn:250", "explicit:abc,def"}) {
            CAPTURE(text);
            const auto s = SelectionStrategy::parse(text);
            CHECK(SelectionStrategy::parse(s.describe()) == s);
        }
        CHECK(SelectionStrategy::parse("churn:250").describe() == "churn:250");
        CHECK_THROWS_AS(SelectionStrategy::parse("weekly"), Error);
        CHECK_THROWS_AS(SelectionStrategy::parse("churn:-3"), Error);
    }

    TEST_CASE("selection is a deterministic, ordered subsequence matching a bucket oracle") {
        std::mt19937_64 rng(42);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<CommitRef> h;
            Instant t = parse_instant("2020-01-01");
            const int n = 1 + static_cast<int>(rng() % 60);
            for (int i = 0; i < n; ++i) {
                t += std::chrono::minutes{1 + static_cast<long>(rng() % (60 * 24 * 5))};
                h.push_back({fmt::format("{}-{}", trial, i), t, static_cast<std::int64_t>(rng() % 200)});
            }
            const auto period = std::chrono::hours{24 * (1 + static_cast<long>(rng() % 10))};
            const auto strategy = SelectionStrategy::interval(period);
            const auto a = select_versions(h, strategy);
            const auto b = select_versions(h, strategy);
            CHECK(a == b);

            // Oracle: last commit in each period bucket counted from the first commit.
            std::map<long, std::string> last;
            for (const auto& c : h) last[static_cast<long>((c.timestamp - h.front().timestamp) / period)] = c.id;
            REQUIRE(a.size() == last.size());
            std::size_t i = 1;
            for (const auto& [bucket, id] : last) CHECK(a.at(i++).commit.id == id);

            std::size_t pos = 0;
            for (const auto& e : a.entries) {
                while (pos < h.size() && h[pos].id != e.commit.id) ++pos;
                CHECK(pos < h.size()); // subsequence of the history
            }
        }
    }

    TEST_CASE("equal commit timestamps are refused") {
        std::vector<CommitRef> h{{"a", day(1), {}}, {"b", day(1), {}}};
        CHECK(kind_of([&] { select_versions(h, SelectionStrategy::explicit_ids({"a", "b"})); }) == ErrorKind::Precondition);
    }

    TEST_CASE("version sequences round-trip through JSON and bound-check access") {
        const auto seq = testing::synthetic_versions(4);
        const nlohmann::json j = seq;
        CHECK(j.get<VersionSequence>() == seq);
        CHECK_THROWS_AS(seq.at(0), Error);
        CHECK_THROWS_AS(seq.at(5), Error);
    }

    TEST_CASE("checkout respects local modifications unless forced") {
        TempDir tmp;
        GitFixture repo(tmp / "repo");
        repo.commit(day(1), {{"f.txt", "one"}});
        repo.commit(day(2), {{"f.txt", "two"}});
        GitAdapter git(repo.dir());
        const auto seq = select_versions(load_commit_history(git, "main", {Instant::min(), Instant::max()}),
                                         SelectionStrategy::interval(std::chrono::days{1}));
        SystemClock clock;

        auto ws = checkout_version(git, seq, 1, repo.dir(), {}, clock);
        CHECK(ws.commit_id == repo.ids()[0]);
        CHECK(testing::read_file(repo.dir() / "f.txt") == "one");
        CHECK(git.head(repo.dir()) == repo.ids()[0]);

        testing::write_file(repo.dir() / "f.txt", "local edit");
        CHECK(git.is_dirty(repo.dir()));
        CHECK(kind_of([&] { checkout_version(git, seq, 2, repo.dir(), {}, clock); }) == ErrorKind::DirtyWorkspace);
        CHECK(testing::read_file(repo.dir() / "f.txt") == "local edit");

        ws = checkout_version(git, seq, 2, repo.dir(), CheckoutOptions{true}, clock);
        CHECK(testing::read_file(repo.dir() / "f.txt") == "two");
        CHECK_FALSE(git.is_dirty(repo.dir()));
    }

    TEST_CASE("build verification reports pass, failure, missing commands and timeouts") {
        TempDir tmp;
        ShellRunner runner;
        const WorkspaceState ws{1, "abc", Instant{}, tmp.path};
        CHECK(verify_build(runner, ws, {"true", 10s}).ok);
        const auto failed = verify_build(runner, ws, {"echo broken; false", 10s});
        CHECK_FALSE(failed.ok);
        CHECK(failed.exit_code == 1);
        CHECK(failed.log_excerpt.find("broken") != std::string::npos);
        CHECK(kind_of([&] { verify_build(runner, ws, {"no-such-build-tool-xyz", 10s}); }) == ErrorKind::CommandNotFound);
        CHECK(kind_of([&] { verify_build(runner, ws, {"sleep 5", 1s}); }) == ErrorKind::Timeout);
        // Re-verifying the same workspace gives the same answer.
        CHECK(verify_build(runner, ws, {"true", 10s}).ok);
    }

    TEST_CASE("shell quoting survives awkward arguments") {
        ShellRunner runner;
        const std::string awkward = "it's a \"test\" $HOME `x`";
        const auto r = runner.run({"printf %s " + shell_quote(awkward), 10s}, std::filesystem::temp_directory_path());
        CHECK(r.output == awkward);
    }
}
