#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spatialgym/path.hpp"
#include "spatialgym/puzzle.hpp"
#include "spatialgym/rules.hpp"
#include "spatialgym/search.hpp"

namespace spatialgym {

enum class Status { Running, Solved, FailedRules, Deadlock, StepLimit };

const char* status_name(Status s) noexcept;
std::optional<Status> parse_status(std::string_view s) noexcept;
inline bool reached_end(Status s) noexcept { return s == Status::Solved || s == Status::FailedRules; }

// Which solutions the process reward compares prefixes against.
enum class PrefixTarget { AnySolution, FirstSolution };

struct EnvConfig {
    Mode mode = Mode::NoBacktrack;
    int step_limit = 100;
    bool process_rewards = false;
    PrefixTarget prefix_target = PrefixTarget::AnySolution;
    SearchBudget solver_budget{};  // used when solutions must be enumerated on reset
};

struct EnvState {
    std::shared_ptr<const Puzzle> puzzle;
    Path path;
    int step_count = 0;
    Mode mode = Mode::NoBacktrack;
    Status status = Status::Running;
    int step_limit = 100;
    bool process_rewards = false;
    PrefixTarget prefix_target = PrefixTarget::AnySolution;
    std::shared_ptr<const SolutionSet> solutions;
    std::optional<Verdict> verdict;  // set once the head reaches the end

    ActionSet legal() const { return legal_moves(*puzzle, path, mode); }
    bool running() const noexcept { return status == Status::Running; }
};

struct Observation {
    std::string text;
    int step = 1;
    Position position;
    ActionSet legal;
    std::vector<std::string> grid_rows;
};

struct RewardSignal {
    double outcome = 0.0;
    double process = 0.0;

    double total() const noexcept { return outcome + process; }
};

inline constexpr double kProcessReward = 0.01;

struct StepResult {
    Observation observation;
    RewardSignal reward;
    bool terminated = false;
    bool backtracked = false;
};

struct ResetResult {
    EnvState state;
    Observation observation;
};

struct IllegalAction : std::runtime_error {
    IllegalAction(const std::string& what, ActionSet legal_set) : std::runtime_error(what), legal(legal_set) {}
    ActionSet legal;
};
struct EpisodeOver : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnsolvablePuzzle : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Starts an episode at the puzzle start. With process rewards on and no
// solution set supplied, the solutions are enumerated here.
ResetResult reset(std::shared_ptr<const Puzzle> puzzle, const EnvConfig& config = {},
                  std::shared_ptr<const SolutionSet> solutions = nullptr);

StepResult step(EnvState& state, Action action);

Observation make_observation(const EnvState& state);
std::string render_observation(const EnvState& state);
// Fixed user-message template.
std::string format_observation(int step, Position position, ActionSet legal,
                               const std::vector<std::string>& grid_rows);

// System prompt for the mode with the puzzle's shapes substituted.
std::string system_prompt(Mode mode, const Puzzle& puzzle);

// Uniform choice over the state's legal set, seeded per episode.
Action random_walk_policy(const EnvState& state, std::uint64_t seed);

}  // namespace spatialgym
