#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "spatialgym/path.hpp"
#include "spatialgym/puzzle.hpp"

namespace spatialgym {

struct SearchBudget {
    int max_solutions = 51;  // 51 is enough to tell "more than 50"
    std::uint64_t max_nodes = 50'000'000;
    std::chrono::milliseconds max_time{60'000};
};

// Sound necessary conditions used to cut the enumeration tree. Each one can be
// switched off for differential testing.
struct PruneOptions {
    bool unreachable_end = true;
    bool unreachable_dots = true;
    bool triangles = true;       // too many touched edges, or too few still touchable
    bool sealed_regions = true;  // regions that can no longer be split must already be valid

    static PruneOptions none() { return {false, false, false, false}; }
};

struct SolutionSet {
    std::vector<Path> solutions;
    bool exhausted = false;
    int cap = 0;
    std::chrono::milliseconds elapsed{0};
    std::uint64_t nodes = 0;

    std::size_t size() const noexcept { return solutions.size(); }
    // True when `prefix` is a prefix of at least one stored solution.
    bool has_prefix(const Path& prefix) const noexcept;
};

// Solver report: {n_solutions, exhausted, elapsed_ms, solutions, cap}.
nlohmann::json solver_report(const SolutionSet& set);
SolutionSet solution_set_from_report(const Puzzle& puzzle, const nlohmann::json& report);

// Depth-first enumeration of satisfying paths, children in action-digit order.
SolutionSet enumerate_solutions(const Puzzle& puzzle, const SearchBudget& budget = {},
                                const PruneOptions& prune = {});

// False only if no completion of `prefix` can satisfy the puzzle.
bool prefix_feasible(const Puzzle& puzzle, const Path& prefix, const PruneOptions& prune = {});

// Shortest start-to-end walk around gaps, ignoring every other rule.
// Manhattan heuristic; equal f-scores break by action digit, then FIFO.
std::optional<Path> astar_path(const Puzzle& puzzle);

struct NoLegalAction : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Counter-based draw: uniform over `legal`, a pure function of (seed, step_index).
Action random_walk_choice(ActionSet legal, std::uint64_t seed, std::uint64_t step_index);

}  // namespace spatialgym
