#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spatialgym/chat_client.hpp"
#include "spatialgym/environment.hpp"
#include "spatialgym/rules.hpp"

namespace spatialgym {

// ---- action parsing -------------------------------------------------------

enum class ParseErrorKind { NoMarker, UnknownToken, IllegalChoice };

struct ActionParseError : std::runtime_error {
    ActionParseError(ParseErrorKind k, const std::string& what) : std::runtime_error(what), kind(k) {}
    ParseErrorKind kind;
};

const char* parse_error_name(ParseErrorKind k) noexcept;

// Reads the last "Final: <digit|direction>" marker in a model reply.
Action parse_action(const std::string& response, ActionSet legal);

// ---- agents -------------------------------------------------------------------

struct AgentReply {
    std::string text;
    ChatUsage usage;
};

// One agent per episode. The harness owns the conversation; agents that do
// not read text (baselines) answer with a "Final:" line like a model would.
class Agent {
public:
    virtual ~Agent() = default;
    virtual std::string name() const = 0;
    virtual void begin(const EnvState& state) { (void)state; }
    virtual AgentReply respond(const EnvState& state, const std::vector<ChatMessage>& conversation) = 0;
};

enum class AgentKind { ChatModel, RandomWalk, AStar, Scripted };

const char* agent_kind_name(AgentKind k) noexcept;
std::optional<AgentKind> parse_agent_kind(std::string_view s) noexcept;

struct AgentBinding {
    AgentKind kind = AgentKind::RandomWalk;
    std::string endpoint;    // ChatModel only
    std::string model_name;  // ChatModel only
    std::string api_key_env = "SPATIALGYM_API_KEY";
    Sampling sampling{};
    int retry_limit = 3;  // corrective re-prompts after an unparsable reply
    std::uint64_t seed = 0;
    std::vector<Action> script;  // Scripted only

    void validate() const;
    std::string label() const;
};

// Builds the agent for one episode. `episode_seed` feeds the random walk.
std::unique_ptr<Agent> make_agent(const AgentBinding& binding, std::uint64_t episode_seed);

// ---- episodes ------------------------------------------------------------------

struct StepRecord {
    std::string observation_text;
    std::string raw_response;
    std::vector<std::string> rejected_responses;  // replies that failed to parse before this one
    Action action = Action::Right;
    RewardSignal reward;
    bool is_backtrack = false;
    ChatUsage usage;
};

struct EpisodeRecord {
    std::string puzzle_id;
    Mode mode = Mode::NoBacktrack;
    std::string agent;
    std::vector<StepRecord> steps;
    Status status = Status::Running;
    std::string failure_reason;  // "ParseFailure", "EndpointError: ...", "Abandoned", "Incomplete"
    bool aborted = false;        // excluded from metrics
    int total_actions = 0;
    int forward_edges = 0;  // final path length in half-steps
    std::string final_path;
    std::optional<Verdict> verdict;
    std::int64_t wall_time_ms = 0;
    std::vector<std::string> unparsed_tail;  // replies that exhausted the retry budget

    double total_reward() const noexcept;
    int backtrack_actions() const noexcept;
};

nlohmann::json episode_to_json(const EpisodeRecord& r);
EpisodeRecord episode_from_json(const nlohmann::json& doc);

struct EpisodeConfig {
    EnvConfig env{};
    int retry_limit = 3;
};

EpisodeRecord run_episode(Agent& agent, std::shared_ptr<const Puzzle> puzzle, const EpisodeConfig& config,
                          std::shared_ptr<const SolutionSet> solutions = nullptr);

// Replays the recorded actions through a fresh environment and compares
// observation texts and terminal status. Returns an empty string on success,
// otherwise a description of the first mismatch.
std::string check_transcript(const EpisodeRecord& record, std::shared_ptr<const Puzzle> puzzle,
                             const EnvConfig& env, std::shared_ptr<const SolutionSet> solutions = nullptr);

struct EvalPlan {
    AgentBinding agent;
    EpisodeConfig episode;
    int parallel = 1;
};

// Runs one episode per puzzle, up to `parallel` at a time. Output order
// follows the input order.
std::vector<EpisodeRecord> run_evaluation(const EvalPlan& plan,
                                          const std::vector<std::shared_ptr<const Puzzle>>& puzzles);

// ---- metrics ---------------------------------------------------------------------

struct Spread {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr() const noexcept { return q3 - q1; }
};

struct MetricsReport {
    int n_episodes = 0;  // episodes counted in the rates
    int n_aborted = 0;
    int n_abandoned = 0;
    double accuracy = 0.0;         // percent Solved
    double completion_rate = 0.0;  // percent that reached the end
    double avg_steps = 0.0;        // mean actions, backtracks included
    double avg_forward_moves = 0.0;
    double avg_path_half_steps = 0.0;
    double avg_path_edges = 0.0;  // node-to-node edges, half-steps / 2
    std::array<std::optional<double>, 5> per_difficulty{};
    std::array<int, 5> per_difficulty_n{};
    std::map<std::string, double> per_rule;
    std::map<std::string, int> per_rule_n;
    std::optional<Spread> backtracking_ratio;
};

struct UnknownPuzzle : std::runtime_error {
    using std::runtime_error::runtime_error;
};

double backtracking_ratio(const EpisodeRecord& r);  // NaN when the final path has no edges
Spread quartiles(std::vector<double> values);

MetricsReport aggregate(const std::vector<EpisodeRecord>& records, const std::map<std::string, Puzzle>& catalog);
nlohmann::json metrics_to_json(const MetricsReport& m);
// Aligned plain-text table: Accuracy, D1..D5, Avg. Steps.
std::string metrics_table(const std::string& label, const MetricsReport& m);

}  // namespace spatialgym
