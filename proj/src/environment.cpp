#include "spatialgym/environment.hpp"

namespace spatialgym {

namespace {

constexpr const char* kStatusNames[] = {"Running", "Solved", "FailedRules", "Deadlock", "StepLimit"};

double process_reward(const EnvState& s) {
    if (!s.process_rewards) return 0.0;
    bool matched = false;
    if (s.solutions && !s.solutions->solutions.empty()) {
        if (s.prefix_target == PrefixTarget::FirstSolution)
            matched = s.path.is_prefix_of(s.solutions->solutions.front());
        else
            matched = s.solutions->has_prefix(s.path);
    }
    return matched ? kProcessReward : -kProcessReward;
}

}  // namespace

const char* status_name(Status s) noexcept { return kStatusNames[static_cast<int>(s)]; }

std::optional<Status> parse_status(std::string_view s) noexcept {
    for (int k = 0; k < 5; ++k)
        if (s == kStatusNames[k]) return static_cast<Status>(k);
    return std::nullopt;
}

std::string format_observation(int step, Position position, ActionSet legal,
                               const std::vector<std::string>& grid_rows) {
    std::string text;
    text += "Step: " + std::to_string(step) + "\n";
    text += "Current Position: (" + std::to_string(position.x) + ", " + std::to_string(position.y) + ")\n";
    text += "Legal Actions: " + format_legal_actions(legal) + "\n";
    text += "\nGrid State:\n";
    for (const auto& row : grid_rows) text += row + "\n";
    text +=
        "\nYou MAY think step-by-step, but you MUST end your response with:\n"
        "Final: <action>\n"
        "Where <action> is one of 0=RIGHT, 1=UP, 2=LEFT, 3=DOWN\n"
        "  (you may also write the direction name, e.g. Final: right).";
    return text;
}

Observation make_observation(const EnvState& state) {
    Observation obs;
    obs.step = state.step_count + 1;
    obs.position = state.path.head();
    obs.legal = state.legal();
    obs.grid_rows = render_grid_tokens(*state.puzzle, state.path.positions());
    obs.text = format_observation(obs.step, obs.position, obs.legal, obs.grid_rows);
    return obs;
}

std::string render_observation(const EnvState& state) { return make_observation(state).text; }

ResetResult reset(std::shared_ptr<const Puzzle> puzzle, const EnvConfig& config,
                  std::shared_ptr<const SolutionSet> solutions) {
    if (!puzzle) throw std::invalid_argument("reset needs a puzzle");
    if (config.step_limit < 1) throw std::invalid_argument("step_limit must be positive");
    EnvState state;
    state.puzzle = std::move(puzzle);
    state.path = Path(state.puzzle->start());
    state.mode = config.mode;
    state.step_limit = config.step_limit;
    state.process_rewards = config.process_rewards;
    state.prefix_target = config.prefix_target;
    if (config.process_rewards) {
        if (!solutions)
            solutions = std::make_shared<const SolutionSet>(enumerate_solutions(*state.puzzle, config.solver_budget));
        if (solutions->solutions.empty())
            throw UnsolvablePuzzle("puzzle " + state.puzzle->id() + " has no solution; process rewards need one");
    }
    state.solutions = std::move(solutions);
    Observation obs = make_observation(state);
    return {std::move(state), std::move(obs)};
}

StepResult step(EnvState& state, Action action) {
    if (!state.running())
        throw EpisodeOver(std::string("episode already finished with status ") + status_name(state.status));

    StepResult out;
    const ActionSet legal = state.legal();
    if (legal.empty()) {
        // Nothing can move; the episode ends without changing the path.
        state.status = Status::Deadlock;
        out.reward.outcome = -1.0;
        out.reward.process = process_reward(state);
        out.terminated = true;
        out.observation = make_observation(state);
        return out;
    }
    if (!legal.contains(action))
        throw IllegalAction(std::string(action_name(action)) + " is not legal; legal actions are " +
                                format_legal_actions(legal),
                            legal);

    out.backtracked = is_backtrack(state.path, action, state.mode);
    state.path = apply_move(*state.puzzle, state.path, action, state.mode);
    ++state.step_count;
    out.reward.process = process_reward(state);

    if (state.path.head() == state.puzzle->end()) {
        state.verdict = verify(*state.puzzle, state.path);
        state.status = state.verdict->satisfied() ? Status::Solved : Status::FailedRules;
    } else if (state.legal().empty()) {
        state.status = Status::Deadlock;
    } else if (state.step_count >= state.step_limit) {
        state.status = Status::StepLimit;
    }
    out.terminated = !state.running();
    if (out.terminated) out.reward.outcome = state.status == Status::Solved ? 1.0 : -1.0;
    out.observation = make_observation(state);
    return out;
}

Action random_walk_policy(const EnvState& state, std::uint64_t seed) {
    return random_walk_choice(state.legal(), seed, static_cast<std::uint64_t>(state.step_count));
}

}  // namespace spatialgym
