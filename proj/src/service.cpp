#include "spatialgym/service.hpp"

#include <filesystem>
#include <random>
#include <sstream>

#include <httplib.h>

namespace spatialgym {

namespace {

ServiceError not_found(const std::string& what) { return {"NotFound", 404, what}; }
ServiceError bad_request(const std::string& what) { return {"BadRequest", 400, what}; }

std::string new_session_id() {
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mu);
    std::ostringstream out;
    out << std::hex;
    for (int k = 0; k < 2; ++k) {
        const std::uint64_t v = rng();
        for (int b = 60; b >= 0; b -= 4) out << ((v >> b) & 0xF);
    }
    return out.str();
}

nlohmann::json legal_json(ActionSet legal) {
    nlohmann::json out = nlohmann::json::array();
    for (Action a : legal.to_vector()) out.push_back({{"digit", digit(a)}, {"name", action_name(a)}});
    return out;
}

nlohmann::json grid_json(const Puzzle& p, const Path& path) {
    nlohmann::json rows = nlohmann::json::array();
    for (int y = 0; y < p.height(); ++y) {
        nlohmann::json row = nlohmann::json::array();
        for (int x = 0; x < p.width(); ++x) {
            const Position pos{x, y};
            if (!path.empty() && pos == path.head())
                row.push_back("L");
            else if (path.contains(pos))
                row.push_back("V");
            else
                row.push_back(format_token(p.at(pos)));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Action action_from_request(const nlohmann::json& request) {
    if (!request.is_object() || !request.contains("action")) throw bad_request("body needs an \"action\" field");
    const auto& a = request["action"];
    std::optional<Action> parsed;
    if (a.is_number_integer())
        parsed = action_from_digit(a.get<int>());
    else if (a.is_string())
        parsed = parse_action_token(a.get<std::string>());
    if (!parsed) throw bad_request("action must be a digit 0-3 or a direction name");
    return *parsed;
}

}  // namespace

nlohmann::json error_body(const ServiceError& e) {
    nlohmann::json err = {{"code", e.code}, {"message", e.what()}};
    for (const auto& [k, v] : e.detail.items()) err[k] = v;
    return {{"error", err}};
}

void PuzzleCatalog::add(Puzzle p) {
    const std::string id = p.id();
    by_id_[id] = std::make_shared<const Puzzle>(std::move(p));
}

PuzzleCatalog PuzzleCatalog::load_dir(const std::string& dir) {
    PuzzleCatalog c;
    std::vector<std::filesystem::path> files;
    for (const auto& de : std::filesystem::directory_iterator(dir)) {
        const auto ext = de.path().extension();
        if (de.is_regular_file() && (ext == ".puz" || (ext == ".json" && de.path().filename() != "manifest.json")))
            files.push_back(de.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) c.add(load_puzzle_file(f.string()));
    return c;
}

std::shared_ptr<const Puzzle> PuzzleCatalog::find(const std::string& id) const {
    const auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<const Puzzle>> PuzzleCatalog::at_level(int level) const {
    std::vector<std::shared_ptr<const Puzzle>> out;
    for (const auto& [id, p] : by_id_)
        if (p->difficulty_level() == level) out.push_back(p);
    return out;
}

std::vector<std::shared_ptr<const Puzzle>> PuzzleCatalog::all() const {
    std::vector<std::shared_ptr<const Puzzle>> out;
    for (const auto& [id, p] : by_id_) out.push_back(p);
    return out;
}

SessionManager::SessionManager(PuzzleCatalog catalog, std::shared_ptr<EpisodeLog> log, ServiceConfig config)
    : catalog_(std::move(catalog)), log_(std::move(log)), config_(std::move(config)) {
    if (!config_.clock) config_.clock = [] { return std::chrono::system_clock::now(); };
}

std::shared_ptr<Session> SessionManager::lookup(const std::string& id) const {
    std::shared_lock lock(table_mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw not_found("no session " + id);
    return it->second;
}

nlohmann::json SessionManager::snapshot_locked(const Session& s) const {
    const EnvState& e = s.env;
    const ActionSet legal = e.running() ? e.legal() : ActionSet{};
    nlohmann::json path = nlohmann::json::array();
    for (const Position p : e.path.positions()) path.push_back({p.x, p.y});
    const auto level = e.puzzle->difficulty_level();
    nlohmann::json snap = {{"session_id", s.id},
                           {"puzzle_id", e.puzzle->id()},
                           {"owner", s.owner == Owner::Human ? "human" : "agent"},
                           {"mode", mode_name(e.mode)},
                           {"status", status_name(e.status)},
                           {"expired", s.expired},
                           {"step", e.step_count + 1},
                           {"step_count", e.step_count},
                           {"step_limit", e.step_limit},
                           {"position", {e.path.head().x, e.path.head().y}},
                           {"legal_actions", legal_json(legal)},
                           {"legal_actions_text", format_legal_actions(legal)},
                           {"grid", grid_json(*e.puzzle, e.path)},
                           {"path", path},
                           {"difficulty_level", level ? nlohmann::json(*level) : nlohmann::json(nullptr)},
                           {"version", s.version}};
    snap["verdict"] = e.verdict ? verdict_to_json(*e.verdict) : nlohmann::json(nullptr);
    return snap;
}

nlohmann::json SessionManager::create_session(const nlohmann::json& request) {
    if (!request.is_object()) throw bad_request("request body must be a JSON object");
    std::shared_ptr<const Puzzle> puzzle;
    if (request.contains("puzzle_id")) {
        if (!request["puzzle_id"].is_string()) throw bad_request("puzzle_id must be a string");
        puzzle = catalog_.find(request["puzzle_id"].get<std::string>());
        if (!puzzle) throw not_found("unknown puzzle " + request["puzzle_id"].get<std::string>());
    } else if (request.contains("difficulty_level")) {
        if (!request["difficulty_level"].is_number_integer()) throw bad_request("difficulty_level must be an integer");
        const int level = request["difficulty_level"].get<int>();
        const auto pool = catalog_.at_level(level);
        if (pool.empty()) throw ServiceError("Unavailable", 503, "no puzzle at difficulty level " + std::to_string(level));
        std::unique_lock lock(table_mu_);
        puzzle = pool[level_cursor_[level]++ % pool.size()];
    } else {
        throw bad_request("request needs puzzle_id or difficulty_level");
    }

    EnvConfig env = config_.env;
    if (request.contains("mode")) {
        const auto mode = request["mode"].is_string() ? parse_mode(request["mode"].get<std::string>()) : std::nullopt;
        if (!mode) throw bad_request("mode must be \"no_backtrack\" or \"backtrack\"");
        env.mode = *mode;
    }
    if (request.contains("step_limit")) {
        if (!request["step_limit"].is_number_integer() || request["step_limit"].get<int>() < 1)
            throw bad_request("step_limit must be a positive integer");
        env.step_limit = request["step_limit"].get<int>();
    }
    if (request.contains("process_rewards")) env.process_rewards = request["process_rewards"].get<bool>();
    const std::string owner = request.value("owner", "agent");
    if (owner != "agent" && owner != "human") throw bad_request("owner must be \"human\" or \"agent\"");

    auto session = std::make_shared<Session>();
    session->id = new_session_id();
    session->owner = owner == "human" ? Owner::Human : Owner::Agent;
    try {
        auto [state, obs] = reset(puzzle, env);
        session->env = std::move(state);
        session->observation = obs.text;
    } catch (const UnsolvablePuzzle& e) {
        throw ServiceError("Unavailable", 503, e.what());
    }
    session->created_at = session->last_active = now();

    nlohmann::json response;
    {
        std::lock_guard lock(session->mu);
        if (log_)
            log_->append(session->id, puzzle->id(), "reset",
                         reset_payload(env, owner, session->observation));
        response = {{"session_id", session->id},
                    {"state_snapshot", snapshot_locked(*session)},
                    {"observation_text", session->observation}};
    }
    std::unique_lock lock(table_mu_);
    sessions_[session->id] = session;
    return response;
}

bool SessionManager::expire_locked(Session& s) {
    if (s.expired) return true;
    if (now() - s.last_active <= config_.idle_ttl) return false;
    s.expired = true;
    ++s.version;
    if (s.env.running() && log_) {
        const bool human = s.owner == Owner::Human;
        log_->append(s.id, s.env.puzzle->id(), "terminal",
                     terminal_payload(s.env.status, human ? "Abandoned" : "Expired", !human));
    }
    s.cv.notify_all();
    return true;
}

nlohmann::json SessionManager::apply_action(const std::string& session_id, const nlohmann::json& request) {
    const Action action = action_from_request(request);
    auto s = lookup(session_id);
    std::lock_guard lock(s->mu);
    if (!s->env.running()) throw ServiceError("EpisodeOver", 409, "episode already ended with status " +
                                                                       std::string(status_name(s->env.status)));
    if (expire_locked(*s)) throw ServiceError("SessionExpired", 410, "session " + session_id + " expired");

    StepResult r;
    try {
        r = step(s->env, action);
    } catch (const IllegalAction& e) {
        ServiceError err("IllegalAction", 422, e.what());
        err.detail["legal_actions"] = legal_json(e.legal);
        err.detail["legal_actions_text"] = format_legal_actions(e.legal);
        throw err;
    }
    s->observation = r.observation.text;
    s->last_active = now();
    ++s->version;

    if (log_) {
        StepRecord rec;
        rec.action = action;
        rec.reward = r.reward;
        rec.is_backtrack = r.backtracked;
        log_->append(s->id, s->env.puzzle->id(), "action", action_payload(rec, s->observation));
        if (r.terminated) log_->append(s->id, s->env.puzzle->id(), "terminal", terminal_payload(s->env.status, "", false));
    }

    nlohmann::json response = {
        {"state_snapshot", snapshot_locked(*s)},
        {"observation_text", s->observation},
        {"reward", {{"outcome", r.reward.outcome}, {"process", r.reward.process}, {"total", r.reward.total()}}},
        {"terminated", r.terminated && s->env.status != Status::StepLimit},
        {"truncated", s->env.status == Status::StepLimit},
        {"backtracked", r.backtracked}};
    if (r.terminated) response["verdict"] = s->env.verdict ? verdict_to_json(*s->env.verdict) : nlohmann::json(nullptr);
    s->cv.notify_all();
    return response;
}

nlohmann::json SessionManager::snapshot(const std::string& session_id) {
    auto s = lookup(session_id);
    std::lock_guard lock(s->mu);
    expire_locked(*s);
    nlohmann::json snap = snapshot_locked(*s);
    return {{"state_snapshot", snap}, {"observation_text", s->observation}};
}

std::optional<nlohmann::json> SessionManager::wait_for_update(const std::string& session_id, std::uint64_t seen,
                                                              std::chrono::milliseconds timeout) {
    auto s = lookup(session_id);
    std::unique_lock lock(s->mu);
    if (!s->cv.wait_for(lock, timeout, [&] { return s->version > seen; })) return std::nullopt;
    return snapshot_locked(*s);
}

int SessionManager::expire_idle() {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::shared_lock lock(table_mu_);
        for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    int n = 0;
    for (const auto& s : all) {
        std::lock_guard lock(s->mu);
        if (!s->expired && s->env.running() && expire_locked(*s)) ++n;
    }
    return n;
}

HttpService::HttpService(SessionManager& sessions, std::string token)
    : sessions_(sessions), token_(std::move(token)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpService::listen_after_bind() { return server_->listen_after_bind(); }

void HttpService::stop() {
    if (server_) server_->stop();
}

void HttpService::install_routes() {
    using httplib::Request;
    using httplib::Response;

    auto send = [](Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    // Wraps a handler with auth, JSON parsing and error mapping.
    auto wrap = [this, send](auto handler) {
        return [this, send, handler](const Request& req, Response& res) {
            try {
                if (!token_.empty() && req.get_header_value("Authorization") != "Bearer " + token_)
                    throw ServiceError("Unauthorized", 401, "missing or wrong bearer token");
                handler(req, res);
            } catch (const ServiceError& e) {
                send(res, e.http_status, error_body(e));
            } catch (const nlohmann::json::exception& e) {
                send(res, 400, error_body(ServiceError("BadRequest", 400, e.what())));
            } catch (const std::exception& e) {
                send(res, 500, error_body(ServiceError("Internal", 500, e.what())));
            }
        };
    };
    auto body_of = [](const Request& req) {
        if (req.body.empty()) return nlohmann::json::object();
        try {
            return nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error&) {
            throw ServiceError("BadRequest", 400, "request body is not valid JSON");
        }
    };

    server_->Get("/puzzles", wrap([this, send](const Request&, Response& res) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& p : sessions_.catalog().all()) {
            const auto level = p->difficulty_level();
            const auto score = p->difficulty_score();
            list.push_back({{"puzzle_id", p->id()},
                            {"cell_cols", p->cell_cols()},
                            {"cell_rows", p->cell_rows()},
                            {"difficulty_level", level ? nlohmann::json(*level) : nlohmann::json(nullptr)},
                            {"difficulty_score", score ? nlohmann::json(*score) : nlohmann::json(nullptr)}});
        }
        send(res, 200, {{"puzzles", list}});
    }));
    server_->Get(R"(/puzzles/([^/]+))", wrap([this, send](const Request& req, Response& res) {
        const auto p = sessions_.catalog().find(req.matches[1]);
        if (!p) throw not_found("unknown puzzle " + std::string(req.matches[1]));
        send(res, 200, puzzle_to_json(*p));
    }));
    server_->Post("/sessions", wrap([this, send, body_of](const Request& req, Response& res) {
        send(res, 201, sessions_.create_session(body_of(req)));
    }));
    server_->Get(R"(/sessions/([^/]+))", wrap([this, send](const Request& req, Response& res) {
        send(res, 200, sessions_.snapshot(req.matches[1]));
    }));
    server_->Post(R"(/sessions/([^/]+)/actions)", wrap([this, send, body_of](const Request& req, Response& res) {
        send(res, 200, sessions_.apply_action(req.matches[1], body_of(req)));
    }));
    server_->Get(R"(/sessions/([^/]+)/events)", wrap([this](const Request& req, Response& res) {
        const std::string id = req.matches[1];
        const auto first = sessions_.snapshot(id);  // 404 before the stream starts
        auto seen = std::make_shared<std::int64_t>(-1);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [this, id, seen, first](size_t, httplib::DataSink& sink) {
                auto emit = [&](const nlohmann::json& snap) {
                    const std::string frame = "event: snapshot\ndata: " + snap.dump() + "\n\n";
                    *seen = snap.at("version").get<std::int64_t>();
                    sink.write(frame.data(), frame.size());
                    const bool over = snap.at("status") != "Running" || snap.at("expired").get<bool>();
                    if (over) sink.done();
                    return true;
                };
                if (*seen < 0) return emit(first.at("state_snapshot"));
                const auto next = sessions_.wait_for_update(id, static_cast<std::uint64_t>(*seen),
                                                            std::chrono::seconds(15));
                if (next) return emit(*next);
                static constexpr char kPing[] = ": keep-alive\n\n";
                return sink.write(kPing, sizeof(kPing) - 1);
            });
    }));
}

}  // namespace spatialgym
