#include <doctest.h>

#include <unistd.h>

#include <atomic>
#include <fstream>
#include <random>
#include <thread>

#include "oracles.hpp"
#include "spatialgym/episode_log.hpp"
#include "spatialgym/generator.hpp"

using namespace spatialgym;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = fs::temp_directory_path() /
               ("sg-log-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<std::string> lines_of(const fs::path& file) {
    std::ifstream in(file);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) out.push_back(line);
    return out;
}

void write_lines(const fs::path& file, const std::vector<std::string>& lines) {
    std::ofstream out(file, std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
}

fs::path only_day_file(const fs::path& root) {
    for (const auto& de : fs::directory_iterator(root))
        if (de.path().extension() == ".ndjson") return de.path();
    return {};
}

EpisodeRecord scripted(const std::shared_ptr<const Puzzle>& p, std::vector<Action> script, const EnvConfig& env = {}) {
    AgentBinding b;
    b.kind = AgentKind::Scripted;
    b.script = std::move(script);
    auto agent = make_agent(b, 0);
    EpisodeConfig cfg;
    cfg.env = env;
    return run_episode(*agent, p, cfg);
}

const std::vector<Action> kStarsRoute{Action::Down, Action::Down, Action::Down, Action::Right, Action::Right};

}  // namespace

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("star board session round-trips through the log") {
    TempDir dir;
    EpisodeLog log(dir.path);
    const auto p = oracle::fixture("stars_2x2.puz");
    const EpisodeRecord original = scripted(p, kStarsRoute);
    const ReplayResult r = persist_and_replay(log, "s-1", original, p, {});
    CHECK(r.integrity.empty());
    CHECK_FALSE(r.incomplete);
    CHECK(r.record.status == Status::Solved);
    CHECK(r.record.total_actions == 5);
    REQUIRE(r.record.steps.size() == original.steps.size());
    for (std::size_t k = 0; k < original.steps.size(); ++k) {
        CHECK(r.record.steps[k].observation_text == original.steps[k].observation_text);
        CHECK(r.record.steps[k].raw_response == original.steps[k].raw_response);
    }

    const auto entries = log.read_session("s-1");
    REQUIRE(entries.size() == 7);
    CHECK(entries.front().event == "reset");
    CHECK(entries.back().event == "terminal");
    for (std::size_t k = 0; k < entries.size(); ++k) {
        CHECK(entries[k].seq == k);
        CHECK(entries[k].checksum == entry_checksum(entries[k]));
    }
    CHECK(log.session_ids() == std::vector<std::string>{"s-1"});

    std::ifstream in(dir.path / "manifest.json");
    const auto manifest = nlohmann::json::parse(in);
    CHECK(manifest["v"] == 1);
    CHECK(manifest["files"][only_day_file(dir.path).filename().string()] == 7);
}

TEST_CASE("log without a terminal entry replays as incomplete") {
    TempDir dir;
    const auto p = oracle::fixture("stars_2x2.puz");
    {
        EpisodeLog log(dir.path);
        log_episode(log, "s-2", scripted(p, kStarsRoute), {});
    }
    const fs::path file = only_day_file(dir.path);
    auto lines = lines_of(file);
    lines.resize(3);
    write_lines(file, lines);

    EpisodeLog log(dir.path);
    const ReplayResult r = replay_session(log.read_session("s-2"), p);
    CHECK(r.incomplete);
    CHECK(r.integrity.empty());
    CHECK(r.record.status == Status::Running);
    CHECK(r.record.failure_reason == "Incomplete");
    CHECK(r.record.total_actions == 2);
}

TEST_CASE("reordered lines are rejected") {
    TempDir dir;
    const auto p = oracle::fixture("stars_2x2.puz");
    {
        EpisodeLog log(dir.path);
        log_episode(log, "s-3", scripted(p, kStarsRoute), {});
    }
    const fs::path file = only_day_file(dir.path);
    auto lines = lines_of(file);
    std::swap(lines[2], lines[3]);
    write_lines(file, lines);
    CHECK_THROWS_AS(EpisodeLog(dir.path).read_session("s-3"), CorruptLog);
}

TEST_CASE("edited payload breaks the checksum") {
    TempDir dir;
    const auto p = oracle::fixture("stars_2x2.puz");
    {
        EpisodeLog log(dir.path);
        log_episode(log, "s-4", scripted(p, kStarsRoute), {});
    }
    const fs::path file = only_day_file(dir.path);
    auto lines = lines_of(file);
    auto doc = nlohmann::json::parse(lines[1]);
    doc["payload"]["action"] = 0;
    lines[1] = doc.dump();
    write_lines(file, lines);
    CHECK_THROWS_AS(EpisodeLog(dir.path).read_session("s-4"), CorruptLog);

    lines[1] = "{not json";
    write_lines(file, lines);
    CHECK_THROWS_AS(EpisodeLog(dir.path).read_session("s-4"), CorruptLog);
}

TEST_CASE("re-signed but altered observation fails the replay check") {
    TempDir dir;
    const auto p = oracle::fixture("stars_2x2.puz");
    EpisodeLog log(dir.path);
    log_episode(log, "s-5", scripted(p, kStarsRoute), {});
    auto entries = log.read_session("s-5");
    REQUIRE(entries[2].payload.contains("observation"));
    entries[2].payload["observation"] = entries[2].payload["observation"].get<std::string>() + "!";
    entries[2].checksum = entry_checksum(entries[2]);
    CHECK_NOTHROW(entry_from_json(entry_to_json(entries[2])));
    CHECK_FALSE(replay_session(entries, p).integrity.empty());
}

TEST_CASE("entries after the terminal are corrupt") {
    TempDir dir;
    const auto p = oracle::fixture("stars_2x2.puz");
    EpisodeLog log(dir.path);
    log_episode(log, "s-6", scripted(p, kStarsRoute), {});
    log.append("s-6", p->id(), "action", {{"action", 0}});
    CHECK_THROWS_AS(replay_session(log.read_session("s-6"), p), CorruptLog);
}

TEST_CASE("day files roll over with the clock and sequences resume") {
    TempDir dir;
    using namespace std::chrono;
    auto now = sys_days{year{2026} / 3 / 1} + hours{23} + minutes{59};
    const WallClock clock = [&now] { return system_clock::time_point(now); };
    {
        EpisodeLog log(dir.path, clock);
        log.append("a", "p", "reset", nlohmann::json::object());
        now += minutes{2};
        log.append("a", "p", "action", {{"action", 1}});
    }
    EpisodeLog reopened(dir.path, clock);
    const LogEntry third = reopened.append("a", "p", "action", {{"action", 3}});
    CHECK(third.seq == 2);
    CHECK(third.ts.rfind("2026-03-02T00:01:00.000", 0) == 0);
    CHECK(fs::exists(dir.path / "2026-03-01.ndjson"));
    CHECK(fs::exists(dir.path / "2026-03-02.ndjson"));
    CHECK(reopened.read_session("a").size() == 3);
    std::ifstream in(dir.path / "manifest.json");
    const auto manifest = nlohmann::json::parse(in);
    CHECK(manifest["files"]["2026-03-01.ndjson"] == 1);
    CHECK(manifest["files"]["2026-03-02.ndjson"] == 2);
}

TEST_CASE("concurrent appends keep per-session order") {
    TempDir dir;
    EpisodeLog log(dir.path);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&log, t] {
            for (int k = 0; k < 50; ++k) log.append("t" + std::to_string(t), "p", "action", {{"k", k}});
        });
    for (auto& th : threads) th.join();
    for (int t = 0; t < 4; ++t) {
        const auto entries = log.read_session("t" + std::to_string(t));
        REQUIRE(entries.size() == 50);
        for (int k = 0; k < 50; ++k) CHECK(entries[k].payload["k"] == k);
    }
    CHECK(log.session_ids().size() == 4);
}

TEST_CASE("random episodes replay byte for byte") {
    TempDir dir;
    EpisodeLog log(dir.path);
    GenConfig gen;
    AgentBinding b;
    b.kind = AgentKind::RandomWalk;
    for (int k = 0; k < 20; ++k) {
        gen.seed = batch_seed(55, k);
        const auto p = std::make_shared<const Puzzle>(generate_puzzle(gen).puzzle);
        EpisodeConfig cfg;
        cfg.env.mode = k % 2 ? Mode::Backtrack : Mode::NoBacktrack;
        cfg.env.process_rewards = k % 3 == 0;
        auto agent = make_agent(b, batch_seed(9, k));
        const EpisodeRecord rec = run_episode(*agent, p, cfg);
        const ReplayResult r = persist_and_replay(log, "r" + std::to_string(k), rec, p, cfg.env);
        CHECK(r.integrity.empty());
        CHECK(r.record.status == rec.status);
        REQUIRE(r.record.steps.size() == rec.steps.size());
        for (std::size_t s = 0; s < rec.steps.size(); ++s) {
            CHECK(r.record.steps[s].observation_text == rec.steps[s].observation_text);
            CHECK(r.record.steps[s].reward.total() == doctest::Approx(rec.steps[s].reward.total()));
        }
    }
}
