#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include <httplib.h>

#include "oracles.hpp"
#include "spatialgym/generator.hpp"
#include "spatialgym/harness.hpp"

using namespace spatialgym;

namespace {

ActionSet of(std::initializer_list<Action> xs) {
    ActionSet s;
    for (Action a : xs) s.insert(a);
    return s;
}

ParseErrorKind parse_error(const std::string& text, ActionSet legal) {
    try {
        parse_action(text, legal);
    } catch (const ActionParseError& e) {
        return e.kind;
    }
    FAIL("expected a parse error for: " << text);
    return ParseErrorKind::NoMarker;
}

// Stand-in chat endpoint answering every request through `reply`.
class MockChat {
public:
    using Handler = std::function<std::pair<int, std::string>(const nlohmann::json&)>;

    explicit MockChat(Handler reply) : reply_(std::move(reply)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            {
                std::lock_guard lock(mu_);
                requests_.push_back(body);
            }
            auto [status, content] = reply_(body);
            res.status = status;
            nlohmann::json out = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
                                  {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 2}}}};
            res.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockChat() {
        server_.stop();
        thread_.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    std::vector<nlohmann::json> requests() {
        std::lock_guard lock(mu_);
        return requests_;
    }

private:
    Handler reply_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::mutex mu_;
    std::vector<nlohmann::json> requests_;
};

std::string last_user(const nlohmann::json& body) {
    const auto& msgs = body.at("messages");
    for (auto it = msgs.rbegin(); it != msgs.rend(); ++it)
        if ((*it)["role"] == "user") return (*it)["content"];
    return {};
}

AgentBinding chat_binding(const MockChat& mock) {
    AgentBinding b;
    b.kind = AgentKind::ChatModel;
    b.endpoint = mock.base_url();
    b.model_name = "mock-model";
    b.api_key_env = "SPATIALGYM_TEST_KEY_UNSET";
    return b;
}

EpisodeRecord scripted(const std::string& puzzle, std::vector<Action> script, Mode mode = Mode::NoBacktrack) {
    AgentBinding b;
    b.kind = AgentKind::Scripted;
    b.script = std::move(script);
    auto agent = make_agent(b, 0);
    EpisodeConfig cfg;
    cfg.env.mode = mode;
    return run_episode(*agent, oracle::fixture(puzzle), cfg);
}

const std::vector<Action> kStarsRoute{Action::Down, Action::Down, Action::Down, Action::Right, Action::Right};

std::vector<std::shared_ptr<const Puzzle>> generated(int n, std::uint64_t seed) {
    std::vector<std::shared_ptr<const Puzzle>> out;
    GenConfig cfg;
    for (int k = 0; k < n; ++k) {
        cfg.seed = batch_seed(seed, k);
        out.push_back(std::make_shared<const Puzzle>(generate_puzzle(cfg).puzzle));
    }
    return out;
}

std::map<std::string, Puzzle> catalog_of(const std::vector<std::shared_ptr<const Puzzle>>& ps) {
    std::map<std::string, Puzzle> out;
    for (const auto& p : ps) out.emplace(p->id(), *p);
    return out;
}

}  // namespace

TEST_CASE("parse_action accepts the final marker") {
    CHECK(parse_action("The star pairs line up...\nFinal: 3", of({Action::Up, Action::Down})) == Action::Down);
    CHECK(parse_action("Final: right", of({Action::Right})) == Action::Right);
    CHECK(parse_action("final: LEFT", of({Action::Left})) == Action::Left);
    CHECK(parse_action("Final: 1\nwait, no.\nFinal: 3", of({Action::Up, Action::Down})) == Action::Down);
    CHECK(parse_action("**Final:** `down`", of({Action::Down})) == Action::Down);
    CHECK(parse_action("Final: 0.", of({Action::Right})) == Action::Right);
}

TEST_CASE("parse_action errors") {
    CHECK(parse_error("I think down", of({Action::Down})) == ParseErrorKind::NoMarker);
    CHECK(parse_error("Final: banana", of({Action::Down})) == ParseErrorKind::UnknownToken);
    CHECK(parse_error("Final: 7", of({Action::Down})) == ParseErrorKind::UnknownToken);
    CHECK(parse_error("Final: 0", of({Action::Up, Action::Down})) == ParseErrorKind::IllegalChoice);
    CHECK(std::string(parse_error_name(ParseErrorKind::NoMarker)) == "NoMarker");
}

TEST_CASE("scripted star board episode") {
    const EpisodeRecord r = scripted("stars_2x2.puz", kStarsRoute);
    CHECK(r.status == Status::Solved);
    CHECK(r.total_actions == 5);
    CHECK(r.forward_edges == 5);
    CHECK(r.steps.size() == 5);
    CHECK(r.final_path == "(0,1)->(0,2)->(0,3)->(0,4)->(1,4)->(2,4)");
    CHECK(r.total_reward() == doctest::Approx(1.0));
    CHECK(r.steps[0].observation_text == oracle::fixture_text("stars_2x2_step1.txt"));
    CHECK(r.steps[0].raw_response.find("Final: 3") != std::string::npos);
    REQUIRE(r.verdict);
    CHECK(r.verdict->satisfied());
    CHECK(check_transcript(r, oracle::fixture("stars_2x2.puz"), {}).empty());
}

TEST_CASE("exhausted script ends as a parse failure") {
    const EpisodeRecord r = scripted("stars_2x2.puz", {Action::Down});
    CHECK(r.status == Status::Deadlock);
    CHECK(r.failure_reason == "ParseFailure");
    CHECK(r.total_actions == 1);
}

TEST_CASE("random walk episodes are deterministic") {
    AgentBinding b;
    b.kind = AgentKind::RandomWalk;
    EpisodeConfig cfg;
    cfg.env.mode = Mode::Backtrack;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto a1 = make_agent(b, seed);
        auto a2 = make_agent(b, seed);
        auto r1 = episode_to_json(run_episode(*a1, oracle::fixture("observation_example.puz"), cfg));
        auto r2 = episode_to_json(run_episode(*a2, oracle::fixture("observation_example.puz"), cfg));
        r1.erase("wall_time_ms");
        r2.erase("wall_time_ms");
        CHECK(r1 == r2);
    }
}

TEST_CASE("episode json round-trip") {
    const EpisodeRecord r = scripted("stars_2x2.puz", kStarsRoute);
    const nlohmann::json doc = episode_to_json(r);
    CHECK(episode_to_json(episode_from_json(doc)) == doc);
}

TEST_CASE("chat agent that never emits a marker fails to parse") {
    MockChat mock([](const nlohmann::json&) { return std::pair{200, std::string("hello")}; });
    auto agent = make_agent(chat_binding(mock), 0);
    const EpisodeRecord r = run_episode(*agent, oracle::fixture("stars_2x2.puz"), {});
    CHECK(r.status == Status::Deadlock);
    CHECK(r.failure_reason == "ParseFailure");
    CHECK_FALSE(r.aborted);
    CHECK(r.total_actions == 0);
    CHECK(r.unparsed_tail.size() == 4);
    const auto reqs = mock.requests();
    REQUIRE(reqs.size() == 4);
    CHECK(reqs.back()["messages"].size() == 8);
    CHECK(reqs.back()["model"] == "mock-model");

    const auto p = oracle::fixture("stars_2x2.puz");
    const MetricsReport m = aggregate({r}, {{p->id(), *p}});
    CHECK(m.n_episodes == 1);
    CHECK(m.accuracy == 0.0);
}

TEST_CASE("chat agent sees its own history") {
    MockChat mock([](const nlohmann::json& body) {
        const std::string obs = last_user(body);
        const auto at = obs.find("Legal Actions: [");
        const char digit = at == std::string::npos ? '0' : obs[at + 16];
        return std::pair{200, std::string("Thinking...\nFinal: ") + digit};
    });
    auto agent = make_agent(chat_binding(mock), 0);
    const EpisodeRecord r = run_episode(*agent, oracle::fixture("ring.puz"), {});
    CHECK(r.status == Status::Solved);
    CHECK(r.total_actions == 4);
    const auto reqs = mock.requests();
    REQUIRE(reqs.size() == 4);
    const auto& msgs = reqs.back()["messages"];
    REQUIRE(msgs.size() == 8);
    CHECK(msgs[0]["role"] == "system");
    for (std::size_t k = 1; k < msgs.size(); ++k) CHECK(msgs[k]["role"] == (k % 2 ? "user" : "assistant"));
    CHECK(msgs[1]["content"] == r.steps[0].observation_text);
    CHECK(r.steps[0].usage.prompt_tokens == 11);
    CHECK_FALSE(r.steps[0].usage.estimated);
    CHECK(check_transcript(r, oracle::fixture("ring.puz"), {}).empty());
}

TEST_CASE("endpoint failure aborts the episode") {
    MockChat mock([](const nlohmann::json&) { return std::pair{500, std::string("boom")}; });
    auto agent = make_agent(chat_binding(mock), 0);
    const EpisodeRecord r = run_episode(*agent, oracle::fixture("ring.puz"), {});
    CHECK(r.aborted);
    CHECK(r.failure_reason.rfind("EndpointError", 0) == 0);
    const auto p = oracle::fixture("ring.puz");
    const MetricsReport m = aggregate({r, scripted("ring.puz", {Action::Right, Action::Right, Action::Down,
                                                               Action::Down})},
                                      {{p->id(), *p}});
    CHECK(m.n_aborted == 1);
    CHECK(m.n_episodes == 1);
}

TEST_CASE("chat binding validation") {
    AgentBinding b;
    b.kind = AgentKind::ChatModel;
    CHECK_THROWS_AS(b.validate(), std::invalid_argument);
    for (AgentKind k : {AgentKind::ChatModel, AgentKind::RandomWalk, AgentKind::AStar, AgentKind::Scripted})
        CHECK(parse_agent_kind(agent_kind_name(k)) == k);
}

TEST_CASE("metrics for an all-solved batch") {
    const auto p = oracle::fixture("stars_2x2.puz");
    std::vector<EpisodeRecord> rs(10, scripted("stars_2x2.puz", kStarsRoute));
    const MetricsReport m = aggregate(rs, {{p->id(), *p}});
    CHECK(m.n_episodes == 10);
    CHECK(m.accuracy == doctest::Approx(100.0));
    CHECK(m.completion_rate == doctest::Approx(100.0));
    CHECK(m.avg_steps == doctest::Approx(5.0));
    REQUIRE(m.per_difficulty[1]);
    CHECK(*m.per_difficulty[1] == doctest::Approx(100.0));
    CHECK_FALSE(m.per_difficulty[0]);
    CHECK(m.per_rule.count(rule_name(RuleKind::Star)) == 1);
    CHECK(m.per_rule.size() == 1);
    REQUIRE(m.backtracking_ratio);
    CHECK(m.backtracking_ratio->median == doctest::Approx(1.0));
    CHECK_THROWS_AS(aggregate(rs, {}), UnknownPuzzle);
}

TEST_CASE("backtracking ratio") {
    EpisodeRecord synthetic;
    synthetic.total_actions = 10;
    synthetic.forward_edges = 5;
    CHECK(backtracking_ratio(synthetic) == doctest::Approx(2.0));
    synthetic.forward_edges = 0;
    CHECK(std::isnan(backtracking_ratio(synthetic)));

    const EpisodeRecord r =
        scripted("stars_2x2.puz",
                 {Action::Down, Action::Up, Action::Down, Action::Up, Action::Down, Action::Down, Action::Down,
                  Action::Right, Action::Right},
                 Mode::Backtrack);
    CHECK(r.status == Status::Solved);
    CHECK(r.total_actions == 9);
    CHECK(r.forward_edges == 5);
    CHECK(r.backtrack_actions() == 2);
    CHECK(backtracking_ratio(r) == doctest::Approx(9.0 / 5.0));
}

TEST_CASE("quartiles interpolate linearly") {
    const Spread s = quartiles({4, 1, 3, 2});
    CHECK(s.median == doctest::Approx(2.5));
    CHECK(s.q1 == doctest::Approx(1.75));
    CHECK(s.q3 == doctest::Approx(3.25));
    CHECK(quartiles({7}).iqr() == 0.0);
}

TEST_CASE("metrics table layout") {
    const auto p = oracle::fixture("stars_2x2.puz");
    const MetricsReport m = aggregate({scripted("stars_2x2.puz", kStarsRoute)}, {{p->id(), *p}});
    const std::string table = metrics_table("scripted", m);
    const std::string header = table.substr(0, table.find('\n'));
    std::size_t last = 0;
    for (const char* col : {"Agent", "Accuracy", "D1", "D2", "D3", "D4", "D5", "Avg. Steps"}) {
        const auto at = header.find(col, last);
        REQUIRE(at != std::string::npos);
        last = at;
    }
    CHECK(table.find("100.0") != std::string::npos);
    const nlohmann::json j = metrics_to_json(m);
    CHECK(j["per_difficulty"].contains("D2"));
}

TEST_CASE("evaluation over generated puzzles") {
    const auto puzzles = generated(30, 404);
    const auto catalog = catalog_of(puzzles);

    EvalPlan astar;
    astar.agent.kind = AgentKind::AStar;
    astar.parallel = 2;
    const auto a = run_evaluation(astar, puzzles);
    REQUIRE(a.size() == puzzles.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].puzzle_id == puzzles[k]->id());
    const MetricsReport am = aggregate(a, catalog);
    CHECK(am.completion_rate == doctest::Approx(100.0));

    EvalPlan random;
    random.agent.kind = AgentKind::RandomWalk;
    random.agent.seed = 8;
    random.episode.env.mode = Mode::Backtrack;
    const auto serial = run_evaluation(random, puzzles);
    auto r = serial;
    const MetricsReport rm = aggregate(r, catalog);
    CHECK(rm.accuracy <= rm.completion_rate);
    for (std::size_t k = 0; k < r.size(); ++k)
        CHECK(check_transcript(r[k], puzzles[k], random.episode.env).empty());

    std::mt19937_64 rng(3);
    for (int round = 0; round < 5; ++round) {
        std::shuffle(r.begin(), r.end(), rng);
        CHECK(metrics_to_json(aggregate(r, catalog)) == metrics_to_json(rm));
    }
    random.parallel = 3;
    const auto again = run_evaluation(random, puzzles);
    for (std::size_t k = 0; k < again.size(); ++k) CHECK(again[k].final_path == serial[k].final_path);
}

TEST_CASE("tampered transcript is detected") {
    EpisodeRecord r = scripted("stars_2x2.puz", kStarsRoute);
    CHECK(check_transcript(r, oracle::fixture("stars_2x2.puz"), {}).empty());
    r.steps[2].observation_text += " ";
    CHECK_FALSE(check_transcript(r, oracle::fixture("stars_2x2.puz"), {}).empty());
    EpisodeRecord s = scripted("stars_2x2.puz", kStarsRoute);
    s.status = Status::FailedRules;
    CHECK_FALSE(check_transcript(s, oracle::fixture("stars_2x2.puz"), {}).empty());
}
