#include "spatialgym/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "spatialgym/generator.hpp"

namespace spatialgym {

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string final_line(Action a) { return "Final: " + std::to_string(digit(a)); }

class ScriptedAgent final : public Agent {
public:
    explicit ScriptedAgent(std::vector<Action> script) : script_(std::move(script)) {}
    std::string name() const override { return "scripted"; }
    AgentReply respond(const EnvState& state, const std::vector<ChatMessage>&) override {
        const auto k = static_cast<std::size_t>(state.step_count);
        if (k >= script_.size()) return {"(script exhausted)", {}};
        return {final_line(script_[k]), {}};
    }

private:
    std::vector<Action> script_;
};

class RandomWalkAgent final : public Agent {
public:
    explicit RandomWalkAgent(std::uint64_t seed) : seed_(seed) {}
    std::string name() const override { return "random-walk"; }
    AgentReply respond(const EnvState& state, const std::vector<ChatMessage>&) override {
        return {final_line(random_walk_policy(state, seed_)), {}};
    }

private:
    std::uint64_t seed_;
};

// Follows a precomputed shortest route; rules other than gaps are ignored.
class AStarAgent final : public Agent {
public:
    std::string name() const override { return "astar"; }
    void begin(const EnvState& state) override { route_ = astar_path(*state.puzzle); }
    AgentReply respond(const EnvState& state, const std::vector<ChatMessage>&) override {
        const ActionSet legal = state.legal();
        if (route_) {
            const auto& ps = route_->positions();
            const std::size_t k = state.path.size();
            if (k < ps.size() && state.path.is_prefix_of(*route_))
                if (const auto a = step_between(state.path.head(), ps[k]); a && legal.contains(*a))
                    return {final_line(*a), {}};
        }
        const auto options = legal.to_vector();
        return {options.empty() ? "no move" : final_line(options.front()), {}};
    }

private:
    std::optional<Path> route_;
};

class ChatModelAgent final : public Agent {
public:
    explicit ChatModelAgent(ChatClient client) : client_(std::move(client)) {}
    std::string name() const override { return client_.model(); }
    AgentReply respond(const EnvState&, const std::vector<ChatMessage>& conversation) override {
        ChatReply r = client_.complete(conversation);
        return {std::move(r.content), r.usage};
    }

private:
    ChatClient client_;
};

std::string corrective_message(const ActionParseError& e, ActionSet legal) {
    return "Your reply could not be used (" + std::string(e.what()) +
           "). Reply again and end with exactly one line of the form \"Final: <action>\", choosing from " +
           format_legal_actions(legal) + ".";
}

nlohmann::json usage_json(const ChatUsage& u) {
    return {{"prompt", u.prompt_tokens}, {"completion", u.completion_tokens}, {"estimated", u.estimated}};
}

}  // namespace

const char* parse_error_name(ParseErrorKind k) noexcept {
    switch (k) {
        case ParseErrorKind::NoMarker: return "NoMarker";
        case ParseErrorKind::UnknownToken: return "UnknownToken";
        case ParseErrorKind::IllegalChoice: return "IllegalChoice";
    }
    return "?";
}

Action parse_action(const std::string& response, ActionSet legal) {
    const std::string text = lower(response);
    // Last "final" followed by optional markdown emphasis and a colon.
    std::size_t value_at = std::string::npos;
    for (std::size_t at = text.find("final"); at != std::string::npos; at = text.find("final", at + 1)) {
        std::size_t k = at + 5;
        while (k < text.size() && (text[k] == '*' || text[k] == ' ')) ++k;
        if (k < text.size() && text[k] == ':') value_at = k + 1;
    }
    if (value_at == std::string::npos) throw ActionParseError(ParseErrorKind::NoMarker, "no 'Final:' line found");

    std::size_t k = value_at;
    while (k < text.size() && (std::isspace(static_cast<unsigned char>(text[k])) || text[k] == '*' ||
                               text[k] == '`' || text[k] == '"' || text[k] == '\'' || text[k] == '<'))
        ++k;
    std::size_t e = k;
    while (e < text.size() && std::isalnum(static_cast<unsigned char>(text[e]))) ++e;
    const std::string token = text.substr(k, e - k);
    const auto action = parse_action_token(token);
    if (!action)
        throw ActionParseError(ParseErrorKind::UnknownToken, "'" + token + "' is not an action digit or direction");
    if (!legal.contains(*action))
        throw ActionParseError(ParseErrorKind::IllegalChoice,
                               std::string(action_name(*action)) + " is not among " + format_legal_actions(legal));
    return *action;
}

const char* agent_kind_name(AgentKind k) noexcept {
    switch (k) {
        case AgentKind::ChatModel: return "chat";
        case AgentKind::RandomWalk: return "random";
        case AgentKind::AStar: return "astar";
        case AgentKind::Scripted: return "scripted";
    }
    return "?";
}

std::optional<AgentKind> parse_agent_kind(std::string_view s) noexcept {
    for (AgentKind k : {AgentKind::ChatModel, AgentKind::RandomWalk, AgentKind::AStar, AgentKind::Scripted})
        if (s == agent_kind_name(k)) return k;
    return std::nullopt;
}

void AgentBinding::validate() const {
    if (kind == AgentKind::ChatModel && (endpoint.empty() || model_name.empty()))
        throw std::invalid_argument("a chat agent needs an endpoint and a model name");
    if (retry_limit < 0) throw std::invalid_argument("retry_limit must be non-negative");
}

std::string AgentBinding::label() const {
    return kind == AgentKind::ChatModel ? model_name : agent_kind_name(kind);
}

std::unique_ptr<Agent> make_agent(const AgentBinding& binding, std::uint64_t episode_seed) {
    binding.validate();
    switch (binding.kind) {
        case AgentKind::Scripted: return std::make_unique<ScriptedAgent>(binding.script);
        case AgentKind::RandomWalk: return std::make_unique<RandomWalkAgent>(episode_seed);
        case AgentKind::AStar: return std::make_unique<AStarAgent>();
        case AgentKind::ChatModel: {
            const char* key = std::getenv(binding.api_key_env.c_str());
            return std::make_unique<ChatModelAgent>(
                ChatClient(binding.endpoint, binding.model_name, key ? key : "", binding.sampling));
        }
    }
    throw std::invalid_argument("unknown agent kind");
}

double EpisodeRecord::total_reward() const noexcept {
    double sum = 0.0;
    for (const auto& s : steps) sum += s.reward.total();
    return sum;
}

int EpisodeRecord::backtrack_actions() const noexcept {
    return static_cast<int>(std::count_if(steps.begin(), steps.end(), [](const StepRecord& s) { return s.is_backtrack; }));
}

nlohmann::json episode_to_json(const EpisodeRecord& r) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : r.steps)
        steps.push_back({{"observation_text", s.observation_text},
                         {"raw_response", s.raw_response},
                         {"rejected_responses", s.rejected_responses},
                         {"parsed_action", digit(s.action)},
                         {"reward", {{"outcome", s.reward.outcome}, {"process", s.reward.process}}},
                         {"is_backtrack", s.is_backtrack},
                         {"token_counts", usage_json(s.usage)}});
    nlohmann::json doc = {{"puzzle_id", r.puzzle_id},
                          {"mode", mode_name(r.mode)},
                          {"agent", r.agent},
                          {"status", status_name(r.status)},
                          {"failure_reason", r.failure_reason},
                          {"aborted", r.aborted},
                          {"total_actions", r.total_actions},
                          {"forward_edges", r.forward_edges},
                          {"final_path", r.final_path},
                          {"wall_time_ms", r.wall_time_ms},
                          {"unparsed_tail", r.unparsed_tail},
                          {"steps", steps}};
    doc["verdict"] = r.verdict ? verdict_to_json(*r.verdict) : nlohmann::json(nullptr);
    return doc;
}

EpisodeRecord episode_from_json(const nlohmann::json& doc) {
    EpisodeRecord r;
    r.puzzle_id = doc.at("puzzle_id").get<std::string>();
    const auto mode = parse_mode(doc.at("mode").get<std::string>());
    const auto status = parse_status(doc.at("status").get<std::string>());
    if (!mode || !status) throw std::invalid_argument("episode record has an unknown mode or status");
    r.mode = *mode;
    r.status = *status;
    r.agent = doc.at("agent").get<std::string>();
    r.failure_reason = doc.value("failure_reason", "");
    r.aborted = doc.value("aborted", false);
    r.total_actions = doc.at("total_actions").get<int>();
    r.forward_edges = doc.at("forward_edges").get<int>();
    r.final_path = doc.value("final_path", "");
    r.wall_time_ms = doc.value("wall_time_ms", std::int64_t{0});
    r.unparsed_tail = doc.value("unparsed_tail", std::vector<std::string>{});
    if (doc.contains("verdict") && !doc["verdict"].is_null()) r.verdict = verdict_from_json(doc["verdict"]);
    for (const auto& s : doc.at("steps")) {
        StepRecord st;
        st.observation_text = s.at("observation_text").get<std::string>();
        st.raw_response = s.value("raw_response", "");
        st.rejected_responses = s.value("rejected_responses", std::vector<std::string>{});
        const auto a = action_from_digit(s.at("parsed_action").get<int>());
        if (!a) throw std::invalid_argument("episode record has an invalid action digit");
        st.action = *a;
        st.reward = {s.at("reward").at("outcome").get<double>(), s.at("reward").at("process").get<double>()};
        st.is_backtrack = s.value("is_backtrack", false);
        if (s.contains("token_counts")) {
            const auto& t = s["token_counts"];
            st.usage = {t.value("prompt", 0), t.value("completion", 0), t.value("estimated", false)};
        }
        r.steps.push_back(std::move(st));
    }
    return r;
}

EpisodeRecord run_episode(Agent& agent, std::shared_ptr<const Puzzle> puzzle, const EpisodeConfig& config,
                          std::shared_ptr<const SolutionSet> solutions) {
    const auto started = std::chrono::steady_clock::now();
    EpisodeRecord rec;
    rec.puzzle_id = puzzle->id();
    rec.mode = config.env.mode;
    rec.agent = agent.name();

    auto [state, obs] = reset(puzzle, config.env, std::move(solutions));
    agent.begin(state);
    std::vector<ChatMessage> conversation{{"system", system_prompt(state.mode, *puzzle)}};

    auto finish = [&] {
        rec.total_actions = static_cast<int>(rec.steps.size());
        rec.forward_edges = state.path.half_steps();
        rec.final_path = format_path(state.path);
        rec.verdict = state.verdict;
        rec.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - started)
                               .count();
        return rec;
    };

    while (state.running()) {
        StepRecord step_rec;
        step_rec.observation_text = obs.text;
        conversation.push_back({"user", obs.text});
        const ActionSet legal = state.legal();
        Action action = Action::Right;
        if (!legal.empty()) {
            int rejected = 0;
            while (true) {
                AgentReply reply;
                try {
                    reply = agent.respond(state, conversation);
                } catch (const ChatEndpointError& e) {
                    rec.aborted = true;
                    rec.failure_reason = std::string("EndpointError: ") + e.what();
                    rec.status = state.status;
                    return finish();
                }
                conversation.push_back({"assistant", reply.text});
                step_rec.usage.prompt_tokens += reply.usage.prompt_tokens;
                step_rec.usage.completion_tokens += reply.usage.completion_tokens;
                step_rec.usage.estimated = step_rec.usage.estimated || reply.usage.estimated;
                try {
                    action = parse_action(reply.text, legal);
                    step_rec.raw_response = std::move(reply.text);
                    break;
                } catch (const ActionParseError& e) {
                    if (++rejected > config.retry_limit) {
                        step_rec.rejected_responses.push_back(std::move(reply.text));
                        rec.unparsed_tail = std::move(step_rec.rejected_responses);
                        rec.status = Status::Deadlock;
                        rec.failure_reason = "ParseFailure";
                        return finish();
                    }
                    step_rec.rejected_responses.push_back(std::move(reply.text));
                    conversation.push_back({"user", corrective_message(e, legal)});
                }
            }
        }
        const StepResult r = step(state, action);
        step_rec.action = action;
        step_rec.reward = r.reward;
        step_rec.is_backtrack = r.backtracked;
        rec.steps.push_back(std::move(step_rec));
        obs = r.observation;
    }
    rec.status = state.status;
    return finish();
}

std::string check_transcript(const EpisodeRecord& record, std::shared_ptr<const Puzzle> puzzle, const EnvConfig& env,
                             std::shared_ptr<const SolutionSet> solutions) {
    if (record.puzzle_id != puzzle->id()) return "puzzle id mismatch";
    EnvConfig cfg = env;
    cfg.mode = record.mode;
    auto [state, obs] = reset(std::move(puzzle), cfg, std::move(solutions));
    for (std::size_t k = 0; k < record.steps.size(); ++k) {
        const auto& s = record.steps[k];
        if (obs.text != s.observation_text) return "observation mismatch before action " + std::to_string(k + 1);
        if (!state.running()) return "recorded action " + std::to_string(k + 1) + " after the episode ended";
        StepResult r;
        try {
            r = step(state, s.action);
        } catch (const std::exception& e) {
            return "action " + std::to_string(k + 1) + " rejected on replay: " + e.what();
        }
        if (std::abs(r.reward.outcome - s.reward.outcome) > 1e-12 || std::abs(r.reward.process - s.reward.process) > 1e-12)
            return "reward mismatch at action " + std::to_string(k + 1);
        obs = r.observation;
    }
    Status expected = record.status;
    if (record.failure_reason == "ParseFailure" || record.aborted || record.failure_reason == "Abandoned" ||
        record.failure_reason == "Incomplete")
        expected = Status::Running;
    if (state.status != expected)
        return std::string("terminal status mismatch: replay ") + status_name(state.status) + ", record " +
               status_name(expected);
    if (format_path(state.path) != record.final_path && !record.final_path.empty()) return "final path mismatch";
    return {};
}

std::vector<EpisodeRecord> run_evaluation(const EvalPlan& plan,
                                          const std::vector<std::shared_ptr<const Puzzle>>& puzzles) {
    plan.agent.validate();
    std::vector<EpisodeRecord> out(puzzles.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < puzzles.size(); k = next++) {
            auto agent = make_agent(plan.agent, batch_seed(plan.agent.seed, static_cast<int>(k)));
            EpisodeConfig cfg = plan.episode;
            cfg.retry_limit = plan.agent.retry_limit;
            try {
                out[k] = run_episode(*agent, puzzles[k], cfg);
            } catch (const UnsolvablePuzzle& e) {
                out[k].puzzle_id = puzzles[k]->id();
                out[k].mode = cfg.env.mode;
                out[k].agent = agent->name();
                out[k].aborted = true;
                out[k].failure_reason = std::string("UnsolvablePuzzle: ") + e.what();
            }
        }
    };
    const int n = std::max(1, std::min<int>(plan.parallel, static_cast<int>(puzzles.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return out;
}

double backtracking_ratio(const EpisodeRecord& r) {
    if (r.forward_edges <= 0) return std::nan("");
    return static_cast<double>(r.total_actions) / r.forward_edges;
}

Spread quartiles(std::vector<double> v) {
    if (v.empty()) return {};
    std::sort(v.begin(), v.end());
    auto at = [&](double q) {
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {at(0.5), at(0.25), at(0.75)};
}

MetricsReport aggregate(const std::vector<EpisodeRecord>& records, const std::map<std::string, Puzzle>& catalog) {
    MetricsReport m;
    int solved = 0, completed = 0;
    double steps = 0, forward = 0, half_steps = 0;
    std::array<int, 5> level_solved{};
    std::map<std::string, int> rule_solved;
    std::vector<double> ratios;
    for (const auto& r : records) {
        const auto it = catalog.find(r.puzzle_id);
        if (it == catalog.end()) throw UnknownPuzzle("episode references unknown puzzle " + r.puzzle_id);
        if (r.failure_reason == "Abandoned") {
            ++m.n_abandoned;
            continue;
        }
        if (r.aborted || r.status == Status::Running) {
            ++m.n_aborted;
            continue;
        }
        ++m.n_episodes;
        const bool ok = r.status == Status::Solved;
        solved += ok;
        completed += reached_end(r.status);
        steps += r.total_actions;
        forward += r.total_actions - r.backtrack_actions();
        half_steps += r.forward_edges;
        const Puzzle& p = it->second;
        if (const auto level = p.difficulty_level()) {
            ++m.per_difficulty_n[*level - 1];
            level_solved[*level - 1] += ok;
        }
        std::set<std::string> kinds;
        for (int y = 0; y < p.height(); ++y)
            for (int x = 0; x < p.width(); ++x)
                if (const auto rule = rule_of(p.at({x, y}))) kinds.insert(rule_name(*rule));
        for (const auto& k : kinds) {
            ++m.per_rule_n[k];
            rule_solved[k] += ok;
        }
        if (const double ratio = backtracking_ratio(r); !std::isnan(ratio)) ratios.push_back(ratio);
    }
    if (m.n_episodes > 0) {
        const double n = m.n_episodes;
        m.accuracy = 100.0 * solved / n;
        m.completion_rate = 100.0 * completed / n;
        m.avg_steps = steps / n;
        m.avg_forward_moves = forward / n;
        m.avg_path_half_steps = half_steps / n;
        m.avg_path_edges = half_steps / n / 2.0;
    }
    for (int k = 0; k < 5; ++k)
        if (m.per_difficulty_n[k] > 0) m.per_difficulty[k] = 100.0 * level_solved[k] / m.per_difficulty_n[k];
    for (const auto& [k, n] : m.per_rule_n) m.per_rule[k] = 100.0 * rule_solved[k] / n;
    if (!ratios.empty()) m.backtracking_ratio = quartiles(ratios);
    return m;
}

nlohmann::json metrics_to_json(const MetricsReport& m) {
    nlohmann::json levels = nlohmann::json::object();
    for (int k = 0; k < 5; ++k) {
        const std::string key = "D" + std::to_string(k + 1);
        levels[key] = m.per_difficulty[k] ? nlohmann::json(*m.per_difficulty[k]) : nlohmann::json(nullptr);
    }
    nlohmann::json level_n = nlohmann::json::object();
    for (int k = 0; k < 5; ++k) level_n["D" + std::to_string(k + 1)] = m.per_difficulty_n[k];
    nlohmann::json doc = {{"n_episodes", m.n_episodes},
                          {"n_aborted", m.n_aborted},
                          {"n_abandoned", m.n_abandoned},
                          {"accuracy", m.accuracy},
                          {"completion_rate", m.completion_rate},
                          {"avg_steps", m.avg_steps},
                          {"avg_forward_moves", m.avg_forward_moves},
                          {"avg_path_half_steps", m.avg_path_half_steps},
                          {"avg_path_edges", m.avg_path_edges},
                          {"per_difficulty", levels},
                          {"per_difficulty_n", level_n},
                          {"per_rule", m.per_rule},
                          {"per_rule_n", m.per_rule_n}};
    if (m.backtracking_ratio)
        doc["backtracking_ratio"] = {{"median", m.backtracking_ratio->median},
                                     {"q1", m.backtracking_ratio->q1},
                                     {"q3", m.backtracking_ratio->q3},
                                     {"iqr", m.backtracking_ratio->iqr()}};
    else
        doc["backtracking_ratio"] = nullptr;
    return doc;
}

std::string metrics_table(const std::string& label, const MetricsReport& m) {
    std::ostringstream out;
    const int name_w = std::max<int>(8, static_cast<int>(label.size()));
    out << std::left << std::setw(name_w) << "Agent" << std::right << std::setw(10) << "Accuracy";
    for (int k = 1; k <= 5; ++k) out << std::setw(8) << ("D" + std::to_string(k));
    out << std::setw(12) << "Avg. Steps" << "\n";
    out << std::left << std::setw(name_w) << label << std::right << std::fixed << std::setprecision(1)
        << std::setw(10) << m.accuracy;
    for (int k = 0; k < 5; ++k) {
        if (m.per_difficulty[k])
            out << std::setw(8) << *m.per_difficulty[k];
        else
            out << std::setw(8) << "-";
    }
    out << std::setw(12) << m.avg_steps << "\n";
    return out.str();
}

}  // namespace spatialgym
