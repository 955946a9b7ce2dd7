#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spatialgym/environment.hpp"
#include "spatialgym/episode_log.hpp"
#include "spatialgym/puzzle.hpp"

namespace httplib {
class Server;
}

namespace spatialgym {

// Error with a stable code and the HTTP status it maps to.
struct ServiceError : std::runtime_error {
    ServiceError(std::string code_, int http_status_, const std::string& what)
        : std::runtime_error(what), code(std::move(code_)), http_status(http_status_) {}
    std::string code;  // NotFound, Unavailable, BadRequest, IllegalAction, SessionExpired, EpisodeOver, Unauthorized
    int http_status;
    nlohmann::json detail = nlohmann::json::object();
};

nlohmann::json error_body(const ServiceError& e);

class PuzzleCatalog {
public:
    void add(Puzzle p);
    // Loads every *.puz / *.json puzzle under dir (non-recursive).
    static PuzzleCatalog load_dir(const std::string& dir);

    std::shared_ptr<const Puzzle> find(const std::string& id) const;
    std::vector<std::shared_ptr<const Puzzle>> at_level(int level) const;
    std::vector<std::shared_ptr<const Puzzle>> all() const;
    std::size_t size() const noexcept { return by_id_.size(); }

private:
    std::map<std::string, std::shared_ptr<const Puzzle>> by_id_;
};

enum class Owner { Human, Agent };

struct ServiceConfig {
    std::chrono::milliseconds idle_ttl = std::chrono::minutes(30);
    EnvConfig env{};     // defaults; the create request may override mode, step_limit, process_rewards
    std::string token;   // when set, requests need "Authorization: Bearer <token>"
    WallClock clock;     // defaults to the system clock
};

struct Session {
    std::string id;
    Owner owner = Owner::Agent;
    EnvState env;
    std::string observation;
    std::chrono::system_clock::time_point created_at;
    std::chrono::system_clock::time_point last_active;
    bool expired = false;
    std::uint64_t version = 0;  // bumped on every change
    mutable std::mutex mu;
    std::condition_variable cv;
};

// Thread-safe session table. Actions on one session are serialised by the
// session mutex; distinct sessions proceed independently.
class SessionManager {
public:
    SessionManager(PuzzleCatalog catalog, std::shared_ptr<EpisodeLog> log, ServiceConfig config = {});

    const PuzzleCatalog& catalog() const noexcept { return catalog_; }

    // {puzzle_id | difficulty_level, mode?, owner?, step_limit?, process_rewards?}
    // -> {session_id, state_snapshot, observation_text}
    nlohmann::json create_session(const nlohmann::json& request);
    // {action: digit or direction name}
    // -> {state_snapshot, observation_text, reward, terminated, truncated, backtracked, verdict?}
    nlohmann::json apply_action(const std::string& session_id, const nlohmann::json& request);
    nlohmann::json snapshot(const std::string& session_id);

    // Blocks until the session version exceeds `seen` or the timeout passes.
    // Returns the snapshot (with "version") when it changed.
    std::optional<nlohmann::json> wait_for_update(const std::string& session_id, std::uint64_t seen,
                                                  std::chrono::milliseconds timeout);

    // Marks idle sessions expired and logs them; returns how many expired.
    int expire_idle();

private:
    std::shared_ptr<Session> lookup(const std::string& id) const;
    nlohmann::json snapshot_locked(const Session& s) const;
    bool expire_locked(Session& s);
    std::chrono::system_clock::time_point now() const { return config_.clock(); }

    PuzzleCatalog catalog_;
    std::shared_ptr<EpisodeLog> log_;
    ServiceConfig config_;
    mutable std::shared_mutex table_mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::map<int, std::uint64_t> level_cursor_;
};

// HTTP front end: /puzzles, /puzzles/{id}, /sessions, /sessions/{id},
// /sessions/{id}/actions and the event stream /sessions/{id}/events.
class HttpService {
public:
    explicit HttpService(SessionManager& sessions, std::string token = {});
    ~HttpService();
    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    // Binds to port 0 for an ephemeral port; returns the bound port or -1.
    int bind(const std::string& host, int port);
    // Blocks serving requests until stop().
    bool listen_after_bind();
    void stop();

private:
    void install_routes();

    SessionManager& sessions_;
    std::string token_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace spatialgym
