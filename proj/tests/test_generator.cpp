#include <doctest.h>

#include <array>

#include "oracles.hpp"
#include "spatialgym/generator.hpp"

using namespace spatialgym;

namespace {

std::set<std::string> texts(const SolutionSet& s) {
    std::set<std::string> out;
    for (const auto& p : s.solutions) out.insert(format_path(p));
    return out;
}

DifficultyFeatures features(int distinct, int cells, double density, int grid, double interaction) {
    return {distinct, cells, density, grid, interaction};
}

const std::vector<std::vector<std::string>> kBlank = {{"S", "+", "+", "+", "+"},
                                                      {"+", "N", "+", "N", "+"},
                                                      {"+", "+", "+", "+", "+"},
                                                      {"+", "N", "+", "N", "+"},
                                                      {"+", "+", "+", "+", "E"}};

}  // namespace

TEST_CASE("generated puzzles honour the solution contract") {
    GenConfig cfg;
    for (int k = 0; k < 25; ++k) {
        cfg.seed = batch_seed(2025, k);
        const GeneratedPuzzle g = generate_puzzle(cfg);
        CAPTURE(g.puzzle.id());
        CHECK(g.solutions.exhausted);
        CHECK(g.solutions.size() >= 1);
        CHECK(g.solutions.size() <= 50);
        CHECK(parse_puzzle(serialize_puzzle(g.puzzle)) == g.puzzle);
        REQUIRE(g.puzzle.difficulty_score());
        const double score = *g.puzzle.difficulty_score();
        CHECK(score >= 1.0);
        CHECK(score <= 5.0);
        CHECK(g.puzzle.difficulty_level() == difficulty_level_for(score));
        CHECK(g.puzzle.cell_cols() >= cfg.min_cols);
        CHECK(g.puzzle.cell_cols() <= cfg.max_cols);
        CHECK(texts(enumerate_solutions(g.puzzle)) == texts(g.solutions));
        for (const auto& s : g.solutions.solutions) CHECK(verify(g.puzzle, s).satisfied());
        REQUIRE_FALSE(g.trace.empty());
        CHECK(g.trace.back().outcome == AttemptOutcome::Accepted);
    }
}

TEST_CASE("same seed yields a byte-identical puzzle") {
    GenConfig cfg;
    cfg.seed = 99;
    const GeneratedPuzzle a = generate_puzzle(cfg);
    const GeneratedPuzzle b = generate_puzzle(cfg);
    CHECK(serialize_puzzle(a.puzzle) == serialize_puzzle(b.puzzle));
    CHECK(a.trace.size() == b.trace.size());
    cfg.seed = 100;
    CHECK(serialize_puzzle(generate_puzzle(cfg).puzzle) != serialize_puzzle(a.puzzle));
}

TEST_CASE("full density on a 6x6 board lowers the density") {
    GenConfig cfg;
    cfg.min_cols = cfg.max_cols = 6;
    cfg.min_rows = cfg.max_rows = 6;
    cfg.initial_density = 1.0;
    cfg.max_attempts = 6;
    int decreases = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        cfg.seed = seed;
        std::vector<AttemptRecord> trace;
        try {
            trace = generate_puzzle(cfg).trace;
        } catch (const GenerationExhausted& e) {
            trace = e.trace;
            CHECK(trace.size() == 6);
        }
        REQUIRE_FALSE(trace.empty());
        CHECK(trace.front().density == doctest::Approx(1.0));
        for (std::size_t k = 1; k < trace.size(); ++k) {
            const AttemptRecord& prev = trace[k - 1];
            const AttemptRecord& next = trace[k];
            if (prev.outcome == AttemptOutcome::NoSolution) {
                CHECK(next.density < prev.density);
                ++decreases;
            } else if (prev.outcome == AttemptOutcome::TooMany) {
                CHECK(next.density >= prev.density);
            }
        }
        for (const auto& rec : trace)
            if (rec.outcome == AttemptOutcome::TooMany) CHECK((rec.n_solutions > 50 || !rec.exhausted));
    }
    CHECK(decreases >= 1);
}

TEST_CASE("attempt budget is enforced") {
    GenConfig cfg;
    cfg.max_attempts = 1;
    cfg.min_cols = cfg.max_cols = 6;
    cfg.min_rows = cfg.max_rows = 6;
    cfg.initial_density = 1.0;
    cfg.seed = 4;
    CHECK_THROWS_AS(generate_puzzle(cfg), GenerationExhausted);
    cfg.initial_density = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("interaction estimate") {
    SUBCASE("star board") {
        CHECK(interaction_estimate(*oracle::fixture("stars_2x2.puz")) == doctest::Approx(2.0 + 2.0 / 3.0));
    }
    SUBCASE("single adjacent pair") {
        auto rows = kBlank;
        rows[1][1] = "o-R";
        rows[1][3] = "o-B";
        CHECK(interaction_estimate(oracle::board("pair", rows)) == doctest::Approx(0.5));
    }
    SUBCASE("zero or one rule cell") {
        CHECK(interaction_estimate(oracle::board("none", kBlank)) == 0.0);
        auto rows = kBlank;
        rows[3][3] = "*-G";
        CHECK(interaction_estimate(oracle::board("one", rows)) == 0.0);
    }
}

TEST_CASE("difficulty features of the star board") {
    const DifficultyFeatures f = difficulty_features(*oracle::fixture("stars_2x2.puz"));
    CHECK(f.distinct_rule_types == 1);
    CHECK(f.rule_cells == 4);
    CHECK(f.grid_size == 4);
    CHECK(f.rule_density == doctest::Approx(1.0));
}

TEST_CASE("difficulty score bounds and monotonicity") {
    const DifficultyModel m;
    CHECK(difficulty_score(features(m.distinct.lo, m.rule_cells.lo, m.density.lo, m.grid.lo, m.interaction.lo)) ==
          doctest::Approx(1.0));
    CHECK(difficulty_score(features(0, 0, 0, 1, 0)) == doctest::Approx(1.0));
    CHECK(difficulty_score(features(7, 40, 1.0, 36, 50)) == doctest::Approx(5.0));
    CHECK(difficulty_level_for(difficulty_score(features(0, 0, 0, 1, 0))) == 1);

    const std::array<DifficultyFeatures, 3> bases{features(1, 2, 0.2, 6, 0.5), features(3, 5, 0.3, 9, 1.2),
                                                   features(2, 1, 0.1, 16, 0.0)};
    for (const auto& base : bases) {
        const double s0 = difficulty_score(base);
        for (int bump = 1; bump <= 5; ++bump) {
            auto f = base;
            f.distinct_rule_types += bump;
            CHECK(difficulty_score(f) >= s0);
            f = base;
            f.rule_cells += bump;
            CHECK(difficulty_score(f) >= s0);
            f = base;
            f.rule_density += 0.1 * bump;
            CHECK(difficulty_score(f) >= s0);
            f = base;
            f.grid_size += bump;
            CHECK(difficulty_score(f) >= s0);
            f = base;
            f.interaction_estimate += 0.5 * bump;
            CHECK(difficulty_score(f) >= s0);
        }
    }
    double total = 0;
    for (const auto& [name, w] : m.weights()) total += w;
    CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("batch seeds are distinct") {
    std::set<std::uint64_t> seen;
    for (int k = 0; k < 1000; ++k) seen.insert(batch_seed(7, k));
    CHECK(seen.size() == 1000);
    CHECK(batch_seed(7, 3) == batch_seed(7, 3));
}

TEST_CASE("sample_board respects the requested size and placement rules") {
    GenConfig cfg;
    for (int k = 0; k < 30; ++k) {
        const Puzzle p = sample_board(cfg, 2 + k % 5, 2 + (k / 5) % 5, 0.5, batch_seed(3, k), "s");
        CHECK(p.cell_cols() == 2 + k % 5);
        CHECK(p.cell_rows() == 2 + (k / 5) % 5);
        CHECK(parse_puzzle(serialize_puzzle(p)) == p);
    }
}

TEST_CASE("five hundred default puzzles cover every level") {
    GenConfig cfg;
    std::array<int, 5> levels{};
    for (int k = 0; k < 500; ++k) {
        cfg.seed = batch_seed(20260301, k);
        const GeneratedPuzzle g = generate_puzzle(cfg);
        ++levels[*g.puzzle.difficulty_level() - 1];
    }
    MESSAGE("levels: " << levels[0] << "/" << levels[1] << "/" << levels[2] << "/" << levels[3] << "/" << levels[4]);
    for (int n : levels) CHECK(n > 0);
}
