#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spatialgym/harness.hpp"

namespace spatialgym {

// One NDJSON line. `checksum` is the hex SHA-256 of the entry serialised
// without its checksum field.
struct LogEntry {
    int v = 1;
    std::uint64_t seq = 0;  // per session, starting at 0
    std::string ts;         // UTC, ISO 8601 with milliseconds
    std::string session_id;
    std::string puzzle_id;
    std::string event;  // "reset", "action" or "terminal"
    nlohmann::json payload = nlohmann::json::object();
    std::string checksum;
};

struct CorruptLog : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string sha256_hex(const std::string& bytes);
std::string entry_checksum(const LogEntry& e);
nlohmann::json entry_to_json(const LogEntry& e);
// Throws CorruptLog on a missing field or a checksum mismatch.
LogEntry entry_from_json(const nlohmann::json& doc);

using WallClock = std::function<std::chrono::system_clock::time_point()>;

// Append-only store: one file per UTC day plus manifest.json listing the day
// files and their entry counts. Safe to share between threads.
class EpisodeLog {
public:
    explicit EpisodeLog(std::filesystem::path root, WallClock clock = nullptr);

    const std::filesystem::path& root() const noexcept { return root_; }

    // Assigns seq and ts, computes the checksum and appends the line.
    LogEntry append(const std::string& session_id, const std::string& puzzle_id, const std::string& event,
                    nlohmann::json payload);

    // Entries of one session in file order. Throws CorruptLog when a line is
    // damaged or the sequence numbers are not 0,1,2,...
    std::vector<LogEntry> read_session(const std::string& session_id) const;
    std::vector<std::string> session_ids() const;

private:
    void bump_manifest(const std::string& file);
    std::vector<std::filesystem::path> day_files() const;

    std::filesystem::path root_;
    WallClock clock_;
    mutable std::mutex mu_;
    std::map<std::string, std::uint64_t> next_seq_;
};

// Payload builders shared by the harness and the session service.
// `observation` is the text shown after the event; empty leaves it out.
nlohmann::json reset_payload(const EnvConfig& env, const std::string& agent, const std::string& observation);
nlohmann::json action_payload(const StepRecord& step, const std::string& observation);
nlohmann::json terminal_payload(Status status, const std::string& failure_reason, bool aborted);

// Writes a finished in-memory episode as reset/action/terminal entries.
void log_episode(EpisodeLog& log, const std::string& session_id, const EpisodeRecord& record, const EnvConfig& env);

struct ReplayResult {
    EpisodeRecord record;
    bool incomplete = false;  // no terminal entry
    std::string integrity;    // empty when the replayed environment agrees with the log
};

// Rebuilds an episode from its entries and re-runs it through a fresh
// environment on `puzzle`.
ReplayResult replay_session(const std::vector<LogEntry>& entries, std::shared_ptr<const Puzzle> puzzle);

// log_episode followed by read_session and replay_session.
ReplayResult persist_and_replay(EpisodeLog& log, const std::string& session_id, const EpisodeRecord& record,
                                std::shared_ptr<const Puzzle> puzzle, const EnvConfig& env);

}  // namespace spatialgym
