#include "spatialgym/episode_log.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

namespace spatialgym {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";

struct Stamp {
    std::string iso;
    std::string day;
};

Stamp stamp(std::chrono::system_clock::time_point t) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
    const std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm utc{};
    gmtime_r(&secs, &utc);
    std::ostringstream day, iso;
    day << std::put_time(&utc, "%Y-%m-%d");
    iso << std::put_time(&utc, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << (ms % 1000)
        << 'Z';
    return {iso.str(), day.str()};
}

nlohmann::json unsigned_json(const LogEntry& e) {
    return {{"v", e.v},
            {"seq", e.seq},
            {"ts", e.ts},
            {"session_id", e.session_id},
            {"puzzle_id", e.puzzle_id},
            {"event", e.event},
            {"payload", e.payload}};
}

nlohmann::json usage_json(const ChatUsage& u) {
    return {{"prompt", u.prompt_tokens}, {"completion", u.completion_tokens}, {"estimated", u.estimated}};
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-12; }

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("SHA-256 digest failed");
    }
    EVP_MD_CTX_free(ctx);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int k = 0; k < len; ++k) {
        out.push_back(hex[digest[k] >> 4]);
        out.push_back(hex[digest[k] & 0xF]);
    }
    return out;
}

std::string entry_checksum(const LogEntry& e) { return sha256_hex(unsigned_json(e).dump()); }

nlohmann::json entry_to_json(const LogEntry& e) {
    auto doc = unsigned_json(e);
    doc["checksum"] = e.checksum;
    return doc;
}

LogEntry entry_from_json(const nlohmann::json& doc) {
    LogEntry e;
    try {
        e.v = doc.at("v").get<int>();
        e.seq = doc.at("seq").get<std::uint64_t>();
        e.ts = doc.at("ts").get<std::string>();
        e.session_id = doc.at("session_id").get<std::string>();
        e.puzzle_id = doc.at("puzzle_id").get<std::string>();
        e.event = doc.at("event").get<std::string>();
        e.payload = doc.at("payload");
        e.checksum = doc.at("checksum").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
        throw CorruptLog(std::string("malformed log entry: ") + ex.what());
    }
    if (e.checksum != entry_checksum(e))
        throw CorruptLog("checksum mismatch in session " + e.session_id + " at seq " + std::to_string(e.seq));
    return e;
}

EpisodeLog::EpisodeLog(fs::path root, WallClock clock) : root_(std::move(root)), clock_(std::move(clock)) {
    if (!clock_) clock_ = [] { return std::chrono::system_clock::now(); };
    fs::create_directories(root_);
    // Resume sequence numbers for sessions already on disk.
    for (const auto& file : day_files()) {
        std::ifstream in(file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                const auto doc = nlohmann::json::parse(line);
                auto& next = next_seq_[doc.at("session_id").get<std::string>()];
                next = std::max(next, doc.at("seq").get<std::uint64_t>() + 1);
            } catch (const nlohmann::json::exception&) {
            }
        }
    }
}

std::vector<fs::path> EpisodeLog::day_files() const {
    std::vector<fs::path> files;
    if (!fs::exists(root_)) return files;
    for (const auto& de : fs::directory_iterator(root_))
        if (de.is_regular_file() && de.path().extension() == ".ndjson") files.push_back(de.path());
    std::sort(files.begin(), files.end());
    return files;
}

void EpisodeLog::bump_manifest(const std::string& file) {
    const fs::path path = root_ / kManifest;
    nlohmann::json manifest = {{"v", 1}, {"files", nlohmann::json::object()}};
    if (std::ifstream in(path); in) {
        try {
            manifest = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception&) {
        }
    }
    auto& files = manifest["files"];
    files[file] = files.value(file, 0) + 1;
    const fs::path tmp = root_ / (std::string(kManifest) + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << manifest.dump(2) << '\n';
    }
    fs::rename(tmp, path);
}

LogEntry EpisodeLog::append(const std::string& session_id, const std::string& puzzle_id, const std::string& event,
                            nlohmann::json payload) {
    std::lock_guard lock(mu_);
    const Stamp now = stamp(clock_());
    LogEntry e;
    e.seq = next_seq_[session_id]++;
    e.ts = now.iso;
    e.session_id = session_id;
    e.puzzle_id = puzzle_id;
    e.event = event;
    e.payload = std::move(payload);
    e.checksum = entry_checksum(e);
    const std::string file = now.day + ".ndjson";
    {
        std::ofstream out(root_ / file, std::ios::app);
        out << entry_to_json(e).dump() << '\n';
        out.flush();
        if (!out) throw std::runtime_error("cannot append to " + (root_ / file).string());
    }
    bump_manifest(file);
    return e;
}

std::vector<LogEntry> EpisodeLog::read_session(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    std::vector<LogEntry> out;
    for (const auto& file : day_files()) {
        std::ifstream in(file);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error&) {
                throw CorruptLog(file.filename().string() + ":" + std::to_string(line_no) + ": not valid JSON");
            }
            if (doc.value("session_id", "") != session_id) continue;
            LogEntry e = entry_from_json(doc);
            if (e.seq != out.size())
                throw CorruptLog("session " + session_id + ": expected seq " + std::to_string(out.size()) + ", found " +
                                 std::to_string(e.seq));
            out.push_back(std::move(e));
        }
    }
    return out;
}

std::vector<std::string> EpisodeLog::session_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> ids;
    for (const auto& [id, n] : next_seq_) ids.push_back(id);
    return ids;
}

nlohmann::json reset_payload(const EnvConfig& env, const std::string& agent, const std::string& observation) {
    nlohmann::json p = {{"mode", mode_name(env.mode)},
                        {"step_limit", env.step_limit},
                        {"process_rewards", env.process_rewards},
                        {"prefix_target", env.prefix_target == PrefixTarget::AnySolution ? "any" : "first"},
                        {"agent", agent}};
    if (!observation.empty()) p["observation"] = observation;
    return p;
}

nlohmann::json action_payload(const StepRecord& step, const std::string& observation) {
    nlohmann::json p = {{"action", digit(step.action)},
                        {"is_backtrack", step.is_backtrack},
                        {"reward", {{"outcome", step.reward.outcome}, {"process", step.reward.process}}},
                        {"raw_response", step.raw_response},
                        {"rejected_responses", step.rejected_responses},
                        {"token_counts", usage_json(step.usage)}};
    if (!observation.empty()) p["observation"] = observation;
    return p;
}

nlohmann::json terminal_payload(Status status, const std::string& failure_reason, bool aborted) {
    return {{"status", status_name(status)}, {"failure_reason", failure_reason}, {"aborted", aborted}};
}

void log_episode(EpisodeLog& log, const std::string& session_id, const EpisodeRecord& record, const EnvConfig& env) {
    EnvConfig cfg = env;
    cfg.mode = record.mode;
    const auto& steps = record.steps;
    log.append(session_id, record.puzzle_id, "reset",
               reset_payload(cfg, record.agent, steps.empty() ? std::string() : steps.front().observation_text));
    for (std::size_t k = 0; k < steps.size(); ++k)
        log.append(session_id, record.puzzle_id, "action",
                   action_payload(steps[k], k + 1 < steps.size() ? steps[k + 1].observation_text : std::string()));
    if (record.status != Status::Running || !record.failure_reason.empty() || record.aborted)
        log.append(session_id, record.puzzle_id, "terminal",
                   terminal_payload(record.status, record.failure_reason, record.aborted));
}

ReplayResult replay_session(const std::vector<LogEntry>& entries, std::shared_ptr<const Puzzle> puzzle) {
    if (entries.empty()) throw CorruptLog("session has no entries");
    const LogEntry& first = entries.front();
    if (first.event != "reset") throw CorruptLog("session does not begin with a reset entry");
    if (first.puzzle_id != puzzle->id()) throw CorruptLog("log refers to puzzle " + first.puzzle_id);

    EnvConfig env;
    try {
        const auto& p = first.payload;
        const auto mode = parse_mode(p.at("mode").get<std::string>());
        if (!mode) throw CorruptLog("reset entry has an unknown mode");
        env.mode = *mode;
        env.step_limit = p.at("step_limit").get<int>();
        env.process_rewards = p.at("process_rewards").get<bool>();
        env.prefix_target = p.value("prefix_target", "any") == "first" ? PrefixTarget::FirstSolution
                                                                         : PrefixTarget::AnySolution;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptLog(std::string("malformed reset entry: ") + e.what());
    }

    ReplayResult out;
    EpisodeRecord& rec = out.record;
    rec.puzzle_id = puzzle->id();
    rec.mode = env.mode;
    rec.agent = first.payload.value("agent", "");

    auto [state, obs] = reset(std::move(puzzle), env);
    auto note = [&](const std::string& what) {
        if (out.integrity.empty()) out.integrity = what;
    };
    auto compare_observation = [&](const LogEntry& e) {
        if (e.payload.contains("observation") && e.payload["observation"] != obs.text)
            note("observation mismatch at seq " + std::to_string(e.seq));
    };
    compare_observation(first);

    bool terminal = false;
    for (std::size_t k = 1; k < entries.size(); ++k) {
        const LogEntry& e = entries[k];
        if (terminal) throw CorruptLog("entry after terminal at seq " + std::to_string(e.seq));
        try {
            if (e.event == "action") {
                StepRecord st;
                st.observation_text = obs.text;
                const auto a = action_from_digit(e.payload.at("action").get<int>());
                if (!a) throw CorruptLog("invalid action digit at seq " + std::to_string(e.seq));
                st.action = *a;
                st.raw_response = e.payload.value("raw_response", "");
                st.rejected_responses = e.payload.value("rejected_responses", std::vector<std::string>{});
                if (e.payload.contains("token_counts")) {
                    const auto& t = e.payload["token_counts"];
                    st.usage = {t.value("prompt", 0), t.value("completion", 0), t.value("estimated", false)};
                }
                const RewardSignal logged{e.payload.at("reward").at("outcome").get<double>(),
                                          e.payload.at("reward").at("process").get<double>()};
                st.reward = logged;
                st.is_backtrack = e.payload.value("is_backtrack", false);
                if (!state.running()) {
                    note("action after the episode ended at seq " + std::to_string(e.seq));
                } else {
                    try {
                        const StepResult r = step(state, st.action);
                        if (!close(r.reward.outcome, logged.outcome) || !close(r.reward.process, logged.process))
                            note("reward mismatch at seq " + std::to_string(e.seq));
                        if (r.backtracked != st.is_backtrack) note("backtrack flag mismatch at seq " + std::to_string(e.seq));
                        obs = r.observation;
                        compare_observation(e);
                    } catch (const std::exception& ex) {
                        note("action at seq " + std::to_string(e.seq) + " rejected on replay: " + ex.what());
                    }
                }
                rec.steps.push_back(std::move(st));
            } else if (e.event == "terminal") {
                terminal = true;
                const auto status = parse_status(e.payload.at("status").get<std::string>());
                if (!status) throw CorruptLog("terminal entry has an unknown status");
                rec.status = *status;
                rec.failure_reason = e.payload.value("failure_reason", "");
                rec.aborted = e.payload.value("aborted", false);
            } else {
                throw CorruptLog("unexpected event '" + e.event + "' at seq " + std::to_string(e.seq));
            }
        } catch (const nlohmann::json::exception& ex) {
            throw CorruptLog("malformed entry at seq " + std::to_string(e.seq) + ": " + ex.what());
        }
    }

    if (!terminal) {
        out.incomplete = true;
        rec.status = Status::Running;
        rec.failure_reason = "Incomplete";
    } else {
        Status expected = rec.status;
        if (rec.failure_reason == "ParseFailure" || rec.aborted || rec.failure_reason == "Abandoned")
            expected = Status::Running;
        if (state.status != expected)
            note(std::string("terminal status mismatch: replay ") + status_name(state.status) + ", log " +
                 status_name(expected));
    }
    rec.total_actions = static_cast<int>(rec.steps.size());
    rec.forward_edges = state.path.half_steps();
    rec.final_path = format_path(state.path);
    rec.verdict = state.verdict;
    return out;
}

ReplayResult persist_and_replay(EpisodeLog& log, const std::string& session_id, const EpisodeRecord& record,
                                std::shared_ptr<const Puzzle> puzzle, const EnvConfig& env) {
    log_episode(log, session_id, record, env);
    return replay_session(log.read_session(session_id), std::move(puzzle));
}

}  // namespace spatialgym
