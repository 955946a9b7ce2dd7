#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "spatialgym/puzzle.hpp"
#include "spatialgym/rules.hpp"
#include "spatialgym/search.hpp"

namespace spatialgym {

struct DifficultyFeatures {
    int distinct_rule_types = 0;  // 0..7
    int rule_cells = 0;           // cell rules plus dots and gaps
    double rule_density = 0.0;    // rule_cells / (C*R)
    int grid_size = 0;            // C*R
    double interaction_estimate = 0.0;
};

// Linear difficulty model over min-max normalised features. The defaults are
// frozen: every emitted puzzle records the weights it was scored with.
struct DifficultyModel {
    struct Range {
        double lo;
        double hi;
    };
    double w_distinct = 0.25;
    double w_rule_cells = 0.20;
    double w_density = 0.15;
    double w_grid = 0.15;
    double w_interaction = 0.25;
    Range distinct{1.0, 4.0};
    Range rule_cells{1.0, 8.0};
    Range density{0.1, 0.5};
    Range grid{4.0, 16.0};
    Range interaction{0.0, 3.0};

    std::map<std::string, double> weights() const;
};

DifficultyFeatures difficulty_features(const Puzzle& puzzle);
// Sum over unordered pairs of rule cells of 1 / (1 + lattice Manhattan distance).
double interaction_estimate(const Puzzle& puzzle);
// 1 + 4 * clamp01(weighted sum of normalised features); in [1,5].
double difficulty_score(const DifficultyFeatures& f, const DifficultyModel& model = {});

// Rule kinds the generator can place; dots and gaps go on path positions.
inline constexpr RuleKind kPlaceableRules[] = {RuleKind::Dot,  RuleKind::Gap,  RuleKind::Square, RuleKind::Star,
                                               RuleKind::Triangle, RuleKind::Poly, RuleKind::Ylop};

struct GenConfig {
    int min_cols = 2, max_cols = 6;
    int min_rows = 2, max_rows = 6;
    double initial_density = 0.5;
    double density_step = 0.05;
    int solution_cap = 50;  // k
    int max_attempts = 400;
    std::map<RuleKind, double> rule_type_weights = {
        {RuleKind::Dot, 1.0},  {RuleKind::Gap, 1.0},  {RuleKind::Square, 1.0}, {RuleKind::Star, 1.0},
        {RuleKind::Triangle, 1.0}, {RuleKind::Poly, 1.0}, {RuleKind::Ylop, 1.0}};
    std::vector<Color> color_palette = {Color::R, Color::B, Color::G, Color::Y};
    double path_marker_fraction = 0.3;  // dots+gaps budget relative to the cell-rule budget
    int max_shape_area = 4;
    double ylop_match_probability = 0.7;  // ylop copies an existing poly's shape and colour
    std::uint64_t max_nodes = 2'000'000;  // per validation solve
    std::chrono::milliseconds max_time{10'000};
    DifficultyModel difficulty{};
    std::uint64_t seed = 0;

    void validate() const;
};

enum class AttemptOutcome { Accepted, NoSolution, TooMany };
const char* attempt_outcome_name(AttemptOutcome o) noexcept;

struct AttemptRecord {
    int attempt = 0;
    int cols = 0;
    int rows = 0;
    double density = 0.0;
    std::size_t n_solutions = 0;
    bool exhausted = false;
    std::uint64_t nodes = 0;
    double elapsed_ms = 0.0;
    AttemptOutcome outcome = AttemptOutcome::NoSolution;
};

struct GeneratedPuzzle {
    Puzzle puzzle;
    SolutionSet solutions;
    DifficultyFeatures features;
    std::vector<AttemptRecord> trace;
};

struct GenerationExhausted : std::runtime_error {
    GenerationExhausted(const std::string& what, std::vector<AttemptRecord> attempts)
        : std::runtime_error(what), trace(std::move(attempts)) {}
    std::vector<AttemptRecord> trace;
};

// Generate-solve-adjust loop: no solution lowers the density, more than k
// solutions (or an unfinished solve) raises it. Deterministic in config.seed.
GeneratedPuzzle generate_puzzle(const GenConfig& config);

// Random board at a fixed size and density; no solvability check.
Puzzle sample_board(const GenConfig& config, int cols, int rows, double density, std::uint64_t attempt_seed,
                    const std::string& puzzle_id);

// Seed used for the index-th puzzle of a batch.
std::uint64_t batch_seed(std::uint64_t seed, int index) noexcept;

}  // namespace spatialgym
