#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "spatialgym/environment.hpp"
#include "spatialgym/path.hpp"
#include "spatialgym/puzzle.hpp"

// Slow reference implementations. None of them share code with the search or
// rule internals beyond the Puzzle data type and the rule verifier.
namespace oracle {

using spatialgym::Mode;
using spatialgym::Position;
using spatialgym::Puzzle;

std::shared_ptr<const Puzzle> fixture(const std::string& name);
std::string fixture_text(const std::string& name);

// Plain DFS over every simple start-to-end path, keeping those the verifier accepts.
std::set<std::string> naive_solutions(const Puzzle& p);
// Every simple start-to-end path, rules ignored.
std::set<std::string> all_simple_paths(const Puzzle& p);

// Shortest start-to-end walk length in half-steps.
std::optional<int> bfs_distance(const Puzzle& p);

// Cells as (i, j). Tries every translation of every remaining shape.
bool brute_force_tiling(const std::set<std::pair<int, int>>& region,
                        const std::vector<std::vector<std::vector<int>>>& shapes);

// Regions by pairwise merging over non-trodden shared edges (union-find).
std::vector<std::set<std::pair<int, int>>> reference_regions(const Puzzle& p, const std::vector<Position>& path);

// Exact probability that a uniform random policy reaches the end node before
// the step limit, by recursion over (path, step count).
double random_walk_completion(const Puzzle& p, Mode mode, int step_limit);

// Small board builder: rows of tokens, start/end derived from S/E.
Puzzle board(const std::string& id, const std::vector<std::vector<std::string>>& rows,
             const spatialgym::ShapeCatalog& shapes = {});

}  // namespace oracle
