#include <doctest.h>

#include "oracles.hpp"
#include "spatialgym/environment.hpp"

using namespace spatialgym;

namespace {

StepResult play(EnvState& s, const std::string& dirs) {
    StepResult last;
    for (char c : dirs) {
        const Action a = c == 'R' ? Action::Right : c == 'U' ? Action::Up : c == 'L' ? Action::Left : Action::Down;
        last = step(s, a);
    }
    return last;
}

}  // namespace

TEST_CASE("first observation matches the golden text byte for byte") {
    for (const char* name : {"stars_2x2", "observation_example"}) {
        CAPTURE(name);
        const auto p = oracle::fixture(std::string(name) + ".puz");
        const ResetResult r = reset(p);
        CHECK(r.observation.text == oracle::fixture_text(std::string(name) + "_step1.txt"));
        CHECK(r.observation.step == 1);
        CHECK(r.state.step_count == 0);
    }
}

TEST_CASE("star board solution earns the outcome reward") {
    ResetResult r = reset(oracle::fixture("stars_2x2.puz"));
    const StepResult first = step(r.state, Action::Down);
    CHECK(first.reward.outcome == 0.0);
    CHECK_FALSE(first.terminated);
    CHECK(first.observation.step == 2);
    CHECK(first.observation.text.find("Current Position: (0, 2)") != std::string::npos);
    const StepResult last = play(r.state, "DDRR");
    CHECK(r.state.status == Status::Solved);
    CHECK(last.terminated);
    CHECK(last.reward.outcome == 1.0);
    CHECK(r.state.step_count == 5);
    REQUIRE(r.state.verdict);
    CHECK(r.state.verdict->satisfied());
}

TEST_CASE("reaching the end with broken rules fails") {
    ResetResult r = reset(oracle::fixture("stars_2x2.puz"));
    const StepResult last = play(r.state, "URRDDDD");
    CHECK(r.state.status == Status::FailedRules);
    CHECK(last.reward.outcome == -1.0);
    CHECK_FALSE(r.state.verdict->satisfied());
}

TEST_CASE("illegal action leaves the state untouched") {
    ResetResult r = reset(oracle::fixture("stars_2x2.puz"));
    const EnvState before = r.state;
    try {
        step(r.state, Action::Right);
        FAIL("expected IllegalAction");
    } catch (const IllegalAction& e) {
        CHECK(format_legal_actions(e.legal) == "[1=UP,3=DOWN]");
    }
    CHECK(r.state.path == before.path);
    CHECK(r.state.step_count == 0);
}

TEST_CASE("stepping a finished episode raises") {
    ResetResult r = reset(oracle::fixture("stars_2x2.puz"));
    play(r.state, "DDDRR");
    CHECK_THROWS_AS(step(r.state, Action::Left), EpisodeOver);
}

TEST_CASE("process rewards follow solution prefixes") {
    EnvConfig cfg;
    cfg.process_rewards = true;
    ResetResult r = reset(oracle::fixture("stars_2x2.puz"), cfg);
    REQUIRE(r.state.solutions);
    CHECK(step(r.state, Action::Down).reward.process == doctest::Approx(kProcessReward));

    ResetResult off = reset(oracle::fixture("stars_2x2.puz"), cfg);
    const StepResult up = step(off.state, Action::Up);
    const Path probe(*off.state.puzzle, off.state.path.positions());
    CHECK(up.reward.process == doctest::Approx(r.state.solutions->has_prefix(probe) ? kProcessReward : -kProcessReward));

    EnvConfig plain;
    ResetResult quiet = reset(oracle::fixture("stars_2x2.puz"), plain);
    CHECK(step(quiet.state, Action::Down).reward.process == 0.0);
}

TEST_CASE("process rewards reject unsolvable puzzles") {
    const auto sealed = std::make_shared<const Puzzle>(
        oracle::board("sealed", {{"S", "G", "+"}, {"G", "N", "+"}, {"+", "+", "E"}}));
    EnvConfig cfg;
    cfg.process_rewards = true;
    CHECK_THROWS_AS(reset(sealed, cfg), UnsolvablePuzzle);
}

TEST_CASE("sealed start ends in deadlock without a step") {
    const auto sealed = std::make_shared<const Puzzle>(
        oracle::board("sealed", {{"S", "G", "+"}, {"G", "N", "+"}, {"+", "+", "E"}}));
    ResetResult r = reset(sealed);
    CHECK(r.observation.legal.empty());
    const StepResult out = step(r.state, Action::Right);
    CHECK(out.terminated);
    CHECK(out.reward.outcome == -1.0);
    CHECK(r.state.status == Status::Deadlock);
    CHECK(r.state.step_count == 0);
}

TEST_CASE("dead end mid-path is a deadlock") {
    const auto p = std::make_shared<const Puzzle>(oracle::board("pocket", {{"S", "+", "+", "+", "+"},
                                                                           {"+", "N", "+", "N", "+"},
                                                                           {"+", "+", "+", "+", "+"},
                                                                           {"+", "N", "+", "N", "+"},
                                                                           {"+", "+", "+", "+", "E"}}));
    ResetResult r = reset(p);
    const StepResult out = play(r.state, "RRDDLLU");
    CHECK(r.state.step_count == 7);
    CHECK(r.state.status == Status::Deadlock);
    CHECK(out.reward.outcome == -1.0);
}

TEST_CASE("step limit truncates a backtracking episode") {
    EnvConfig cfg;
    cfg.mode = Mode::Backtrack;
    ResetResult r = reset(oracle::fixture("ring.puz"), cfg);
    StepResult out;
    int k = 0;
    while (r.state.running()) {
        out = step(r.state, k % 2 == 0 ? Action::Right : Action::Left);
        if (k % 2 == 1) CHECK(out.backtracked);
        ++k;
    }
    CHECK(k == 100);
    CHECK(r.state.status == Status::StepLimit);
    CHECK(out.reward.outcome == -1.0);
    CHECK(r.state.path.size() == 1);
}

TEST_CASE("custom step limit") {
    EnvConfig cfg;
    cfg.step_limit = 2;
    ResetResult r = reset(oracle::fixture("stars_2x2.puz"), cfg);
    play(r.state, "DD");
    CHECK(r.state.status == Status::StepLimit);
    cfg.step_limit = 0;
    CHECK_THROWS(reset(oracle::fixture("stars_2x2.puz"), cfg));
}

TEST_CASE("episodes are deterministic") {
    auto run = [](std::uint64_t seed) {
        EnvConfig cfg;
        cfg.mode = Mode::Backtrack;
        ResetResult r = reset(oracle::fixture("observation_example.puz"), cfg);
        std::string trace = r.observation.text;
        while (r.state.running()) trace += step(r.state, random_walk_policy(r.state, seed)).observation.text;
        return trace + status_name(r.state.status);
    };
    CHECK(run(7) == run(7));
    CHECK(run(1) == run(1));
}

TEST_CASE("status names round-trip") {
    for (Status s : {Status::Running, Status::Solved, Status::FailedRules, Status::Deadlock, Status::StepLimit})
        CHECK(parse_status(status_name(s)) == s);
    CHECK_FALSE(parse_status("Bogus"));
}

TEST_CASE("system prompt names the mode rules and shapes") {
    const auto p = oracle::fixture("observation_example.puz");
    const std::string nb = system_prompt(Mode::NoBacktrack, *p);
    const std::string bt = system_prompt(Mode::Backtrack, *p);
    CHECK(nb != bt);
    CHECK(nb.find("16") != std::string::npos);
}
