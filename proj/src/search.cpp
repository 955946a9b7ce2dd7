#include "spatialgym/search.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <map>
#include <queue>
#include <tuple>

#include "spatialgym/rules.hpp"

namespace spatialgym {

namespace {

using Clock = std::chrono::steady_clock;

// Flat board view shared by the enumerator and the prefix check.
class Board {
public:
    explicit Board(const Puzzle& puzzle) : puzzle_(puzzle) {
        const int n = puzzle.width() * puzzle.height();
        nbr_.assign(static_cast<std::size_t>(n), {-1, -1, -1, -1});
        for (int idx = 0; idx < n; ++idx) {
            const Position p = puzzle.position_of(idx);
            if (!puzzle.walkable(p)) continue;
            for (Action a : kAllActions) {
                const Position q = p + a;
                if (puzzle.walkable(q)) nbr_[idx][digit(a)] = puzzle.index(q);
            }
            if (puzzle.at(p).kind == SymbolKind::Dot) dots_.push_back(idx);
        }
        end_ = puzzle.index(puzzle.end());
        for (int j = 0; j < puzzle.cell_rows(); ++j)
            for (int i = 0; i < puzzle.cell_cols(); ++i) {
                const Symbol& s = puzzle.at(CellCoord{i, j}.position());
                if (s.kind != SymbolKind::Triangle) continue;
                triangles_.push_back({s.count,
                                      {puzzle.index({2 * i, 2 * j + 1}), puzzle.index({2 * i + 2, 2 * j + 1}),
                                       puzzle.index({2 * i + 1, 2 * j}), puzzle.index({2 * i + 1, 2 * j + 2})}});
            }
        for (int j = 0; j < puzzle.cell_rows(); ++j)
            for (int i = 0; i < puzzle.cell_cols(); ++i) {
                const Symbol& s = puzzle.at(CellCoord{i, j}.position());
                if (s.kind == SymbolKind::Square || s.kind == SymbolKind::Star || s.kind == SymbolKind::Poly ||
                    s.kind == SymbolKind::Ylop)
                    has_region_rules_ = true;
            }
        reach_.assign(static_cast<std::size_t>(n), 0);
        queue_.reserve(static_cast<std::size_t>(n));
        label_.assign(static_cast<std::size_t>(puzzle.cell_cols() * puzzle.cell_rows()), -1);
    }

    const Puzzle& puzzle() const { return puzzle_; }
    int size() const { return static_cast<int>(nbr_.size()); }
    int end() const { return end_; }
    int neighbour(int idx, int d) const { return nbr_[idx][d]; }
    bool is_edge(int idx) const { return classify_position(puzzle_.position_of(idx)) == ParityClass::Edge; }

    // Necessary conditions for some completion of the current prefix to succeed.
    bool feasible(const std::vector<std::uint8_t>& visited, int head, const PruneOptions& prune) {
        if (!(prune.unreachable_end || prune.unreachable_dots || prune.triangles || prune.sealed_regions))
            return true;
        flood(visited, head);
        if (prune.unreachable_end && !reached(end_)) return false;
        if (prune.unreachable_dots)
            for (int d : dots_)
                if (!visited[d] && !reached(d)) return false;
        if (prune.triangles)
            for (const auto& t : triangles_) {
                int touched = 0, open = 0;
                for (int e : t.edges) {
                    if (visited[e])
                        ++touched;
                    else if (reached(e))
                        ++open;
                }
                if (touched > t.count || touched + open < t.count) return false;
            }
        if (prune.sealed_regions && has_region_rules_ && !sealed_regions_ok(visited)) return false;
        return true;
    }

private:
    struct Triangle {
        int count;
        std::array<int, 4> edges;
    };

    bool reached(int idx) const { return reach_[idx] == stamp_; }

    // Marks positions the rest of the path could still occupy. The walk never
    // continues through the end, since entering it finishes the path.
    void flood(const std::vector<std::uint8_t>& visited, int head) {
        ++stamp_;
        queue_.clear();
        queue_.push_back(head);
        for (std::size_t q = 0; q < queue_.size(); ++q) {
            const int cur = queue_[q];
            if (cur == end_ && cur != head) continue;
            for (int d = 0; d < 4; ++d) {
                const int n = nbr_[cur][d];
                if (n < 0 || visited[n] || reach_[n] == stamp_) continue;
                reach_[n] = stamp_;
                queue_.push_back(n);
            }
        }
    }

    // A region whose internal edges are all out of reach is final; it must
    // already satisfy its region rules.
    bool sealed_regions_ok(const std::vector<std::uint8_t>& visited) {
        const int cols = puzzle_.cell_cols();
        const int rows = puzzle_.cell_rows();
        std::fill(label_.begin(), label_.end(), -1);
        std::vector<CellCoord> members;
        std::vector<Violation> violations;
        int next = 0;
        for (int j0 = 0; j0 < rows; ++j0)
            for (int i0 = 0; i0 < cols; ++i0) {
                if (label_[j0 * cols + i0] >= 0) continue;
                members.clear();
                bool sealed = true;
                members.push_back({i0, j0});
                label_[j0 * cols + i0] = next;
                for (std::size_t k = 0; k < members.size(); ++k) {
                    const CellCoord c = members[k];
                    const std::array<std::pair<CellCoord, Position>, 4> nbrs = {{
                        {{c.i + 1, c.j}, {2 * c.i + 2, 2 * c.j + 1}},
                        {{c.i - 1, c.j}, {2 * c.i, 2 * c.j + 1}},
                        {{c.i, c.j + 1}, {2 * c.i + 1, 2 * c.j + 2}},
                        {{c.i, c.j - 1}, {2 * c.i + 1, 2 * c.j}},
                    }};
                    for (const auto& [n, edge] : nbrs) {
                        if (n.i < 0 || n.j < 0 || n.i >= cols || n.j >= rows) continue;
                        const int e = puzzle_.index(edge);
                        if (visited[e]) continue;
                        if (reached(e)) sealed = false;
                        if (label_[n.j * cols + n.i] >= 0) continue;
                        label_[n.j * cols + n.i] = next;
                        members.push_back(n);
                    }
                }
                ++next;
                if (!sealed) {
                    if (!open_region_ok(members)) return false;
                    continue;
                }
                violations.clear();
                check_region(puzzle_, members, violations);
                if (!violations.empty()) return false;
            }
        return true;
    }

    // Final regions refine the current component, so a star without any
    // same-colour partner, or a ylop without a matching poly, stays broken.
    bool open_region_ok(const std::vector<CellCoord>& members) const {
        int per_color[8] = {};
        std::map<std::pair<int, int>, int> shape_balance;  // (color, shape) -> polys minus ylops
        bool any_star = false, any_ylop = false;
        for (CellCoord c : members) {
            const Symbol& s = puzzle_.at(c.position());
            if (s.has_color()) ++per_color[static_cast<int>(s.color)];
            if (s.kind == SymbolKind::Star) any_star = true;
            if (s.kind == SymbolKind::Poly) ++shape_balance[{static_cast<int>(s.color), s.shape_id}];
            if (s.kind == SymbolKind::Ylop) {
                --shape_balance[{static_cast<int>(s.color), s.shape_id}];
                any_ylop = true;
            }
        }
        if (any_star)
            for (CellCoord c : members) {
                const Symbol& s = puzzle_.at(c.position());
                if (s.kind == SymbolKind::Star && per_color[static_cast<int>(s.color)] < 2) return false;
            }
        if (any_ylop)
            for (const auto& [key, balance] : shape_balance)
                if (balance < 0) return false;
        return true;
    }

    const Puzzle& puzzle_;
    std::vector<std::array<int, 4>> nbr_;
    std::vector<int> dots_;
    std::vector<Triangle> triangles_;
    bool has_region_rules_ = false;
    int end_ = -1;
    std::vector<std::uint32_t> reach_;
    std::uint32_t stamp_ = 0;
    std::vector<int> queue_;
    std::vector<int> label_;
};

class Enumerator {
public:
    Enumerator(const Puzzle& puzzle, const SearchBudget& budget, const PruneOptions& prune)
        : board_(puzzle), budget_(budget), prune_(prune), visited_(static_cast<std::size_t>(board_.size()), 0) {}

    SolutionSet run() {
        started_ = Clock::now();
        SolutionSet out;
        out.cap = budget_.max_solutions;
        const int start = board_.puzzle().index(board_.puzzle().start());
        visited_[start] = 1;
        trail_.push_back(start);
        visit(start, out);
        out.exhausted = !tripped_;
        out.nodes = nodes_;
        out.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started_);
        return out;
    }

private:
    void visit(int head, SolutionSet& out) {
        ++nodes_;
        if (nodes_ > budget_.max_nodes ||
            ((nodes_ & 0xFFF) == 0 && Clock::now() - started_ > budget_.max_time)) {
            tripped_ = true;
            return;
        }
        if (head == board_.end()) {
            std::vector<Position> ps;
            ps.reserve(trail_.size());
            for (int idx : trail_) ps.push_back(board_.puzzle().position_of(idx));
            Path path(board_.puzzle(), std::move(ps));
            if (verify(board_.puzzle(), path).satisfied()) {
                out.solutions.push_back(std::move(path));
                if (static_cast<int>(out.solutions.size()) >= budget_.max_solutions) tripped_ = true;
            }
            return;
        }
        // An edge has one way forward; the check at the next node is stricter.
        if (!board_.is_edge(head) && !board_.feasible(visited_, head, prune_)) return;
        for (int d = 0; d < 4 && !tripped_; ++d) {
            const int n = board_.neighbour(head, d);
            if (n < 0 || visited_[n]) continue;
            visited_[n] = 1;
            trail_.push_back(n);
            visit(n, out);
            trail_.pop_back();
            visited_[n] = 0;
        }
    }

    Board board_;
    SearchBudget budget_;
    PruneOptions prune_;
    std::vector<std::uint8_t> visited_;
    std::vector<int> trail_;
    std::uint64_t nodes_ = 0;
    bool tripped_ = false;
    Clock::time_point started_;
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

bool SolutionSet::has_prefix(const Path& prefix) const noexcept {
    for (const auto& s : solutions)
        if (prefix.is_prefix_of(s)) return true;
    return false;
}

nlohmann::json solver_report(const SolutionSet& set) {
    nlohmann::json sols = nlohmann::json::array();
    for (const auto& p : set.solutions) sols.push_back(format_path(p));
    return {{"n_solutions", set.solutions.size()},
            {"exhausted", set.exhausted},
            {"elapsed_ms", set.elapsed.count()},
            {"cap", set.cap},
            {"solutions", sols}};
}

SolutionSet solution_set_from_report(const Puzzle& puzzle, const nlohmann::json& report) {
    SolutionSet out;
    out.exhausted = report.at("exhausted").get<bool>();
    out.cap = report.at("cap").get<int>();
    out.elapsed = std::chrono::milliseconds(report.value("elapsed_ms", 0));
    for (const auto& s : report.at("solutions")) out.solutions.push_back(parse_path(puzzle, s.get<std::string>()));
    return out;
}

SolutionSet enumerate_solutions(const Puzzle& puzzle, const SearchBudget& budget, const PruneOptions& prune) {
    return Enumerator(puzzle, budget, prune).run();
}

bool prefix_feasible(const Puzzle& puzzle, const Path& prefix, const PruneOptions& prune) {
    if (prefix.empty()) return false;
    if (prefix.head() == puzzle.end()) return verify(puzzle, prefix).satisfied();
    Board board(puzzle);
    std::vector<std::uint8_t> visited(static_cast<std::size_t>(board.size()), 0);
    for (Position p : prefix.positions()) visited[puzzle.index(p)] = 1;
    return board.feasible(visited, puzzle.index(prefix.head()), prune);
}

std::optional<Path> astar_path(const Puzzle& puzzle) {
    const int n = puzzle.width() * puzzle.height();
    const Position goal = puzzle.end();
    auto h = [&](Position p) { return std::abs(p.x - goal.x) + std::abs(p.y - goal.y); };

    // (f, generating action digit, insertion order, node)
    using Entry = std::tuple<int, int, std::uint64_t, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    std::vector<int> g(static_cast<std::size_t>(n), INT32_MAX);
    std::vector<int> parent(static_cast<std::size_t>(n), -1);
    std::vector<std::uint8_t> closed(static_cast<std::size_t>(n), 0);
    std::uint64_t seq = 0;

    const int s = puzzle.index(puzzle.start());
    g[s] = 0;
    open.emplace(h(puzzle.start()), -1, seq++, s);
    while (!open.empty()) {
        const auto [f, d, order, cur] = open.top();
        open.pop();
        if (closed[cur]) continue;
        closed[cur] = 1;
        const Position p = puzzle.position_of(cur);
        if (p == goal) {
            std::vector<Position> ps;
            for (int k = cur; k >= 0; k = parent[k]) ps.push_back(puzzle.position_of(k));
            std::reverse(ps.begin(), ps.end());
            return Path(puzzle, std::move(ps));
        }
        for (Action a : kAllActions) {
            const Position q = p + a;
            if (!puzzle.walkable(q)) continue;
            const int qi = puzzle.index(q);
            if (closed[qi] || g[cur] + 1 >= g[qi]) continue;
            g[qi] = g[cur] + 1;
            parent[qi] = cur;
            open.emplace(g[qi] + h(q), digit(a), seq++, qi);
        }
    }
    return std::nullopt;
}

Action random_walk_choice(ActionSet legal, std::uint64_t seed, std::uint64_t step_index) {
    const auto options = legal.to_vector();
    if (options.empty()) throw NoLegalAction("no legal action to choose from");
    const std::uint64_t r = splitmix64(splitmix64(seed) ^ step_index);
    const auto k = static_cast<std::size_t>((static_cast<unsigned __int128>(r) * options.size()) >> 64);
    return options[k];
}

}  // namespace spatialgym
