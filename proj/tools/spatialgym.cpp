#include <cctype>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "spatialgym/episode_log.hpp"
#include "spatialgym/generator.hpp"
#include "spatialgym/harness.hpp"
#include "spatialgym/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spatialgym;

namespace {

struct CliError : std::runtime_error {
    CliError(std::string code_, const std::string& what) : std::runtime_error(what), code(std::move(code_)) {}
    std::string code;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw CliError("IOError", "cannot write " + path.string());
}

std::uint64_t seed_or_random(const std::optional<std::uint64_t>& seed) {
    if (seed) return *seed;
    const std::uint64_t s = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
    std::cerr << "seed: " << s << "\n";
    return s;
}

SearchBudget budget_from(int max_solutions, std::uint64_t max_nodes, long max_time_ms) {
    SearchBudget b;
    b.max_solutions = max_solutions;
    b.max_nodes = max_nodes;
    b.max_time = std::chrono::milliseconds(max_time_ms);
    return b;
}

std::map<std::string, Puzzle> catalog_map(const PuzzleCatalog& c) {
    std::map<std::string, Puzzle> out;
    for (const auto& p : c.all()) out.emplace(p->id(), *p);
    return out;
}

Mode mode_from(const std::string& s) {
    const auto m = parse_mode(s);
    if (!m) throw CliError("UsageError", "mode must be no_backtrack or backtrack");
    return *m;
}

// ---- import ----------------------------------------------------------------

// Maps one upstream-style record into the canonical puzzle document.
Puzzle import_record(const json& rec, std::size_t index) {
    const json* grid = nullptr;
    for (const char* key : {"grid", "puzzle_array"})
        if (rec.contains(key)) grid = &rec[key];
    if (!grid || !grid->is_array() || grid->empty()) throw SchemaError("record has no grid / puzzle_array");
    const int h = static_cast<int>(grid->size());
    const int w = static_cast<int>((*grid)[0].size());
    json doc;
    doc["version"] = 1;
    std::string id = "imported-" + std::to_string(index);
    if (rec.contains("puzzle_id")) id = rec["puzzle_id"].get<std::string>();
    else if (rec.contains("id")) id = rec["id"].is_string() ? rec["id"].get<std::string>() : rec["id"].dump();
    doc["puzzle_id"] = id;
    doc["cell_cols"] = (w - 1) / 2;
    doc["cell_rows"] = (h - 1) / 2;
    doc["grid"] = *grid;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto& t = (*grid)[y][x];
            if (t == "S") doc["start"] = {x, y};
            if (t == "E") doc["end"] = {x, y};
        }
    json shapes = json::object();
    if (rec.contains("polyshapes")) {
        json raw = rec["polyshapes"];
        if (raw.is_string()) raw = json::parse(raw.get<std::string>());
        for (const auto& [k, v] : raw.items()) shapes[k] = v;
    } else if (rec.contains("shapes")) {
        shapes = rec["shapes"];
    }
    doc["shapes"] = shapes;
    if (rec.contains("difficulty_score") && rec["difficulty_score"].is_number())
        doc["difficulty_score"] = rec["difficulty_score"];
    return puzzle_from_json(doc);
}

std::vector<json> read_records(const fs::path& src) {
    std::ifstream in(src);
    if (!in) throw CliError("IOError", "cannot read " + src.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    std::vector<json> out;
    try {
        const json doc = json::parse(text);
        if (doc.is_array())
            for (const auto& r : doc) out.push_back(r);
        else
            out.push_back(doc);
        return out;
    } catch (const json::parse_error&) {
    }
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(json::parse(line));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial-Gym: grid path puzzles, environment, generator and evaluation harness"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate puzzles with a bounded solution count");
    int gen_count = 1;
    std::optional<std::uint64_t> gen_seed;
    std::string gen_out = "puzzles";
    GenConfig gen_cfg;
    gen->add_option("--count", gen_count, "Number of puzzles")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "Batch seed (random and logged when absent)");
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_option("--min-cols", gen_cfg.min_cols)->check(CLI::Range(1, 12));
    gen->add_option("--max-cols", gen_cfg.max_cols)->check(CLI::Range(1, 12));
    gen->add_option("--min-rows", gen_cfg.min_rows)->check(CLI::Range(1, 12));
    gen->add_option("--max-rows", gen_cfg.max_rows)->check(CLI::Range(1, 12));
    gen->add_option("--density", gen_cfg.initial_density, "Initial rule density");
    gen->add_option("--solution-cap", gen_cfg.solution_cap, "Maximum accepted solution count");

    // solve
    auto* solve = app.add_subcommand("solve", "Enumerate solutions of a puzzle");
    std::string solve_file;
    int solve_max = 51;
    std::uint64_t solve_nodes = 50'000'000;
    long solve_ms = 60'000;
    bool solve_naive = false;
    solve->add_option("puzzle", solve_file, "Puzzle file")->required();
    solve->add_option("--max-solutions", solve_max)->check(CLI::PositiveNumber);
    solve->add_option("--max-nodes", solve_nodes);
    solve->add_option("--max-time-ms", solve_ms);
    solve->add_flag("--no-prune", solve_naive, "Disable search pruning");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "Check a path against the puzzle rules");
    std::string verify_file, verify_path;
    bool verify_strict = false;
    verify_cmd->add_option("puzzle", verify_file, "Puzzle file")->required();
    verify_cmd->add_option("--path", verify_path, "Path as (x,y)->(x,y)... or direction letters")->required();
    verify_cmd->add_flag("--strict", verify_strict, "Exit 3 when the verdict has violations");

    // eval
    auto* eval = app.add_subcommand("eval", "Run an agent over a puzzle directory");
    std::string eval_agent = "random", eval_mode = "no_backtrack", eval_dir, eval_out = "eval-out", eval_log;
    AgentBinding binding;
    int eval_parallel = 1;
    std::optional<std::uint64_t> eval_seed;
    EpisodeConfig episode;
    eval->add_option("--agent", eval_agent, "chat | random | astar")->check(CLI::IsMember({"chat", "random", "astar"}));
    eval->add_option("--mode", eval_mode, "no_backtrack | backtrack");
    eval->add_option("--puzzles", eval_dir, "Puzzle directory")->required();
    eval->add_option("--out", eval_out, "Output directory");
    eval->add_option("--endpoint", binding.endpoint, "Chat-completions base URL");
    eval->add_option("--model", binding.model_name, "Model name");
    eval->add_option("--api-key-env", binding.api_key_env, "Environment variable holding the API key");
    eval->add_option("--temperature", binding.sampling.temperature);
    eval->add_option("--max-tokens", binding.sampling.max_tokens);
    eval->add_option("--retry-limit", binding.retry_limit, "Corrective re-prompts per step");
    eval->add_option("--parallel", eval_parallel)->check(CLI::PositiveNumber);
    eval->add_option("--seed", eval_seed);
    eval->add_option("--step-limit", episode.env.step_limit)->check(CLI::PositiveNumber);
    eval->add_flag("--process-rewards", episode.env.process_rewards);
    eval->add_option("--log", eval_log, "Episode log directory");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
    int serve_port = 8080;
    std::string serve_host = "127.0.0.1", serve_dir, serve_log = "episode-logs", serve_token_env;
    serve->add_option("--port", serve_port)->check(CLI::Range(0, 65535));
    serve->add_option("--host", serve_host);
    serve->add_option("--puzzles", serve_dir, "Puzzle directory")->required();
    serve->add_option("--log", serve_log, "Episode log directory");
    serve->add_option("--token-env", serve_token_env, "Environment variable holding a shared bearer token");

    // replay
    auto* replay = app.add_subcommand("replay", "Rebuild episodes from an episode log and check them");
    std::string replay_log, replay_dir, replay_session_id;
    replay->add_option("log", replay_log, "Episode log directory")->required();
    replay->add_option("--puzzles", replay_dir, "Puzzle directory")->required();
    replay->add_option("--session", replay_session_id, "Only this session");

    // import
    auto* import = app.add_subcommand("import", "Convert upstream-style records into canonical puzzle files");
    std::string import_src, import_out = "imported";
    import->add_option("source", import_src, "JSON array, JSON object or JSON-lines file")->required();
    import->add_option("--out", import_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: UsageError: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*gen) {
            const std::uint64_t seed = seed_or_random(gen_seed);
            gen_cfg.validate();
            fs::create_directories(gen_out);
            json entries = json::array();
            for (int k = 0; k < gen_count; ++k) {
                GenConfig cfg = gen_cfg;
                cfg.seed = batch_seed(seed, k);
                const GeneratedPuzzle g = generate_puzzle(cfg);
                const std::string file = g.puzzle.id() + ".puz";
                save_puzzle_file(g.puzzle, (fs::path(gen_out) / file).string());
                entries.push_back({{"file", file},
                                   {"puzzle_id", g.puzzle.id()},
                                   {"difficulty_score", *g.puzzle.difficulty_score()},
                                   {"level", *g.puzzle.difficulty_level()},
                                   {"n_solutions", g.solutions.size()},
                                   {"cell_cols", g.puzzle.cell_cols()},
                                   {"cell_rows", g.puzzle.cell_rows()},
                                   {"attempts", g.trace.size()}});
            }
            const json manifest = {{"version", 1}, {"seed", seed}, {"count", gen_count}, {"puzzles", entries}};
            write_text(fs::path(gen_out) / "manifest.json", manifest.dump(2) + "\n");
            std::cout << manifest.dump(2) << "\n";
        } else if (*solve) {
            const Puzzle p = load_puzzle_file(solve_file);
            const SolutionSet set = enumerate_solutions(p, budget_from(solve_max, solve_nodes, solve_ms),
                                                        solve_naive ? PruneOptions::none() : PruneOptions{});
            json report = solver_report(set);
            report["puzzle_id"] = p.id();
            std::cout << report.dump(2) << "\n";
        } else if (*verify_cmd) {
            const Puzzle p = load_puzzle_file(verify_file);
            Path path;
            try {
                path = parse_path(p, verify_path);
            } catch (const InvalidPath& e) {
                throw CliError("InvalidPath", e.what());
            }
            const Verdict v = verify(p, path);
            json out = verdict_to_json(v);
            out["puzzle_id"] = p.id();
            out["path"] = format_path(path);
            std::cout << out.dump(2) << "\n";
            if (verify_strict && !v.satisfied()) return 3;
        } else if (*eval) {
            const PuzzleCatalog catalog = PuzzleCatalog::load_dir(eval_dir);
            if (catalog.size() == 0) throw CliError("NotFound", "no puzzles in " + eval_dir);
            binding.kind = *parse_agent_kind(eval_agent);
            binding.seed = seed_or_random(eval_seed);
            episode.env.mode = mode_from(eval_mode);
            episode.retry_limit = binding.retry_limit;
            try {
                binding.validate();
            } catch (const std::invalid_argument& e) {
                throw CliError("UsageError", e.what());
            }
            const EvalPlan plan{binding, episode, eval_parallel};
            const auto records = run_evaluation(plan, catalog.all());
            fs::create_directories(eval_out);
            std::string lines;
            for (const auto& r : records) lines += episode_to_json(r).dump() + "\n";
            write_text(fs::path(eval_out) / "episodes.jsonl", lines);
            if (!eval_log.empty()) {
                EpisodeLog log(eval_log);
                for (std::size_t k = 0; k < records.size(); ++k)
                    log_episode(log, records[k].puzzle_id + "-" + std::to_string(binding.seed) + "-" + std::to_string(k),
                                records[k], episode.env);
            }
            const MetricsReport m = aggregate(records, catalog_map(catalog));
            const json doc = {{"agent", binding.label()},
                              {"mode", mode_name(episode.env.mode)},
                              {"seed", binding.seed},
                              {"metrics", metrics_to_json(m)}};
            write_text(fs::path(eval_out) / "metrics.json", doc.dump(2) + "\n");
            const std::string table = metrics_table(binding.label(), m);
            write_text(fs::path(eval_out) / "table.txt", table);
            std::cout << table;
        } else if (*serve) {
            ServiceConfig cfg;
            if (!serve_token_env.empty()) {
                const char* t = std::getenv(serve_token_env.c_str());
                if (!t || !*t) throw CliError("UsageError", "environment variable " + serve_token_env + " is empty");
                cfg.token = t;
            }
            SessionManager sessions(PuzzleCatalog::load_dir(serve_dir), std::make_shared<EpisodeLog>(serve_log), cfg);
            HttpService http(sessions, cfg.token);
            const int port = http.bind(serve_host, serve_port);
            if (port < 0) throw CliError("IOError", "cannot bind " + serve_host + ":" + std::to_string(serve_port));
            std::cerr << "listening on http://" << serve_host << ":" << port << " (" << sessions.catalog().size()
                      << " puzzles)\n";
            std::atomic<bool> running{true};
            std::thread sweeper([&] {
                while (running) {
                    std::this_thread::sleep_for(std::chrono::seconds(1));
                    sessions.expire_idle();
                }
            });
            http.listen_after_bind();
            running = false;
            sweeper.join();
        } else if (*replay) {
            const PuzzleCatalog catalog = PuzzleCatalog::load_dir(replay_dir);
            const EpisodeLog log(replay_log);
            std::vector<std::string> ids =
                replay_session_id.empty() ? log.session_ids() : std::vector<std::string>{replay_session_id};
            json sessions = json::array();
            bool all_ok = true;
            for (const auto& id : ids) {
                const auto entries = log.read_session(id);
                if (entries.empty()) throw CliError("NotFound", "no entries for session " + id);
                const auto puzzle = catalog.find(entries.front().puzzle_id);
                if (!puzzle) throw CliError("NotFound", "unknown puzzle " + entries.front().puzzle_id);
                const ReplayResult r = replay_session(entries, puzzle);
                all_ok = all_ok && r.integrity.empty();
                sessions.push_back({{"session_id", id},
                                    {"incomplete", r.incomplete},
                                    {"integrity_ok", r.integrity.empty()},
                                    {"integrity", r.integrity},
                                    {"episode", episode_to_json(r.record)}});
            }
            std::cout << json{{"sessions", sessions}}.dump(2) << "\n";
            if (!all_ok) {
                std::cerr << "error: IntegrityError: replay disagrees with the log\n";
                return 1;
            }
        } else if (*import) {
            fs::create_directories(import_out);
            json entries = json::array();
            json skipped = json::array();
            const auto records = read_records(import_src);
            for (std::size_t k = 0; k < records.size(); ++k) {
                try {
                    const Puzzle p = import_record(records[k], k);
                    std::string file = p.id() + ".puz";
                    for (char& c : file)
                        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_') c = '_';
                    save_puzzle_file(p, (fs::path(import_out) / file).string());
                    const auto level = p.difficulty_level();
                    entries.push_back({{"file", file},
                                       {"puzzle_id", p.id()},
                                       {"difficulty_level", level ? json(*level) : json(nullptr)}});
                } catch (const std::exception& e) {
                    skipped.push_back({{"index", k}, {"reason", e.what()}});
                }
            }
            const json manifest = {{"version", 1}, {"source", import_src}, {"puzzles", entries}, {"skipped", skipped}};
            write_text(fs::path(import_out) / "manifest.json", manifest.dump(2) + "\n");
            std::cout << manifest.dump(2) << "\n";
        }
    } catch (const CliError& e) {
        std::cerr << "error: " << e.code << ": " << e.what() << "\n";
        return 1;
    } catch (const PuzzleError& e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
        return 1;
    } catch (const CorruptLog& e) {
        std::cerr << "error: CorruptLog: " << e.what() << "\n";
        return 1;
    } catch (const GenerationExhausted& e) {
        std::cerr << "error: GenerationExhausted: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: UsageError: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: InternalError: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
