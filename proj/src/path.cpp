#include "spatialgym/path.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <tuple>

namespace spatialgym {

namespace {

std::string describe(Position p) {
    return "(" + std::to_string(p.x) + "," + std::to_string(p.y) + ")";
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

const char* action_name(Action a) noexcept {
    switch (a) {
        case Action::Right: return "RIGHT";
        case Action::Up: return "UP";
        case Action::Left: return "LEFT";
        case Action::Down: return "DOWN";
    }
    return "?";
}

char action_letter(Action a) noexcept { return action_name(a)[0]; }

std::optional<Action> action_from_digit(int d) noexcept {
    if (d < 0 || d > 3) return std::nullopt;
    return static_cast<Action>(d);
}

std::optional<Action> parse_action_token(std::string_view token) noexcept {
    if (token.size() == 1 && token[0] >= '0' && token[0] <= '9') return action_from_digit(token[0] - '0');
    const std::string t = lower(token);
    for (Action a : kAllActions)
        if (t == lower(action_name(a))) return a;
    return std::nullopt;
}

std::optional<Action> step_between(Position a, Position b) noexcept {
    for (Action act : kAllActions)
        if (a + act == b) return act;
    return std::nullopt;
}

std::vector<Action> ActionSet::to_vector() const {
    std::vector<Action> out;
    for (Action a : kAllActions)
        if (contains(a)) out.push_back(a);
    return out;
}

std::string format_legal_actions(ActionSet set) {
    std::string out = "[";
    bool first = true;
    for (Action a : set.to_vector()) {
        if (!first) out += ",";
        out += std::to_string(digit(a)) + "=" + action_name(a);
        first = false;
    }
    return out + "]";
}

const char* mode_name(Mode m) noexcept {
    return m == Mode::Backtrack ? "backtrack" : "no_backtrack";
}

std::optional<Mode> parse_mode(std::string_view s) noexcept {
    if (s == "no_backtrack") return Mode::NoBacktrack;
    if (s == "backtrack") return Mode::Backtrack;
    return std::nullopt;
}

Path::Path(const Puzzle& puzzle, std::vector<Position> positions) : positions_(std::move(positions)) {
    validate_path(puzzle, positions_);
}

bool Path::contains(Position p) const noexcept {
    return std::find(positions_.begin(), positions_.end(), p) != positions_.end();
}

std::optional<Position> Path::predecessor() const noexcept {
    if (positions_.size() < 2) return std::nullopt;
    return positions_[positions_.size() - 2];
}

bool Path::is_prefix_of(const Path& other) const noexcept {
    return positions_.size() <= other.positions_.size() &&
           std::equal(positions_.begin(), positions_.end(), other.positions_.begin());
}

void validate_path(const Puzzle& puzzle, const std::vector<Position>& positions) {
    if (positions.empty()) throw InvalidPath("path is empty");
    if (positions.front() != puzzle.start())
        throw InvalidPath("path must begin at the start " + describe(puzzle.start()));
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(puzzle.width() * puzzle.height()), 0);
    for (std::size_t k = 0; k < positions.size(); ++k) {
        const Position p = positions[k];
        if (!puzzle.in_bounds(p)) throw InvalidPath(describe(p) + " is out of bounds");
        if (!is_path_class(p)) throw InvalidPath(describe(p) + " is a rule cell");
        if (puzzle.at(p).kind == SymbolKind::Gap) throw InvalidPath(describe(p) + " is a gap");
        if (seen[puzzle.index(p)]++) throw InvalidPath(describe(p) + " is visited twice");
        if (k > 0 && !step_between(positions[k - 1], p))
            throw InvalidPath(describe(positions[k - 1]) + " and " + describe(p) + " are not adjacent");
    }
}

bool is_backtrack(const Path& path, Action a, Mode mode) noexcept {
    if (mode != Mode::Backtrack || path.empty()) return false;
    const auto prev = path.predecessor();
    return prev && path.head() + a == *prev;
}

ActionSet legal_moves(const Puzzle& puzzle, const Path& path, Mode mode) {
    ActionSet out;
    if (path.empty()) return out;
    const Position head = path.head();
    for (Action a : kAllActions) {
        const Position target = head + a;
        if (!puzzle.walkable(target)) continue;
        if (!path.contains(target) || is_backtrack(path, a, mode)) out.insert(a);
    }
    return out;
}

Path apply_move(const Puzzle& puzzle, const Path& path, Action a, Mode mode) {
    if (!legal_moves(puzzle, path, mode).contains(a))
        throw IllegalMove(std::string(action_name(a)) + " is not legal from " + describe(path.head()));
    Path next = path;
    if (is_backtrack(path, a, mode))
        next.pop();
    else
        next.push(path.head() + a);
    return next;
}

std::string format_path(const Path& path) {
    std::string out;
    for (std::size_t k = 0; k < path.size(); ++k) {
        if (k) out += "->";
        out += describe(path.positions()[k]);
    }
    return out;
}

std::string format_directions(const Path& path) {
    std::string out;
    const auto& ps = path.positions();
    for (std::size_t k = 1; k < ps.size(); ++k) {
        const auto a = step_between(ps[k - 1], ps[k]);
        out += a ? action_letter(*a) : '?';
    }
    return out;
}

Path parse_path(const Puzzle& puzzle, std::string_view text) {
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);

    std::vector<Position> positions;
    if (!text.empty() && text.front() == '(') {
        std::size_t k = 0;
        auto read_int = [&](int& v) {
            const auto [ptr, ec] = std::from_chars(text.data() + k, text.data() + text.size(), v);
            if (ec != std::errc{}) throw InvalidPath("malformed coordinate in path");
            k = static_cast<std::size_t>(ptr - text.data());
        };
        auto expect = [&](std::string_view tok) {
            if (text.substr(k, tok.size()) != tok) throw InvalidPath("expected '" + std::string(tok) + "' in path");
            k += tok.size();
        };
        while (true) {
            Position p;
            expect("(");
            read_int(p.x);
            expect(",");
            read_int(p.y);
            expect(")");
            positions.push_back(p);
            if (k == text.size()) break;
            expect("->");
        }
    } else {
        Position p = puzzle.start();
        positions.push_back(p);
        for (char c : text) {
            std::optional<Action> a;
            for (Action act : kAllActions)
                if (std::toupper(static_cast<unsigned char>(c)) == action_letter(act)) a = act;
            if (!a) throw InvalidPath(std::string("unknown direction letter '") + c + "'");
            p = p + *a;
            positions.push_back(p);
        }
    }
    return Path(puzzle, std::move(positions));
}

RegionPartition compute_regions(const Puzzle& puzzle, const Path& path) {
    const int cols = puzzle.cell_cols();
    const int rows = puzzle.cell_rows();
    std::vector<std::uint8_t> on_path(static_cast<std::size_t>(puzzle.width() * puzzle.height()), 0);
    for (Position p : path.positions()) on_path[puzzle.index(p)] = 1;

    RegionPartition out;
    out.cols = cols;
    out.rows = rows;
    out.label.assign(static_cast<std::size_t>(cols * rows), -1);
    std::vector<CellCoord> stack;
    for (int j = 0; j < rows; ++j) {
        for (int i = 0; i < cols; ++i) {
            if (out.label[j * cols + i] >= 0) continue;
            const int id = static_cast<int>(out.cells.size());
            auto& members = out.cells.emplace_back();
            stack.push_back({i, j});
            out.label[j * cols + i] = id;
            while (!stack.empty()) {
                const CellCoord c = stack.back();
                stack.pop_back();
                members.push_back(c);
                // Neighbour cell and the edge position separating them.
                const std::array<std::pair<CellCoord, Position>, 4> nbrs = {{
                    {{c.i + 1, c.j}, {2 * c.i + 2, 2 * c.j + 1}},
                    {{c.i - 1, c.j}, {2 * c.i, 2 * c.j + 1}},
                    {{c.i, c.j + 1}, {2 * c.i + 1, 2 * c.j + 2}},
                    {{c.i, c.j - 1}, {2 * c.i + 1, 2 * c.j}},
                }};
                for (const auto& [n, edge] : nbrs) {
                    if (n.i < 0 || n.j < 0 || n.i >= cols || n.j >= rows) continue;
                    if (on_path[puzzle.index(edge)] || out.label[n.j * cols + n.i] >= 0) continue;
                    out.label[n.j * cols + n.i] = id;
                    stack.push_back(n);
                }
            }
            std::sort(members.begin(), members.end(),
                      [](CellCoord a, CellCoord b) { return std::tie(a.j, a.i) < std::tie(b.j, b.i); });
        }
    }
    return out;
}

int edge_touch_count(const Puzzle& puzzle, const Path& path, CellCoord cell) {
    (void)puzzle;
    const Position edges[4] = {{2 * cell.i, 2 * cell.j + 1},
                               {2 * cell.i + 2, 2 * cell.j + 1},
                               {2 * cell.i + 1, 2 * cell.j},
                               {2 * cell.i + 1, 2 * cell.j + 2}};
    int n = 0;
    for (Position e : edges) n += path.contains(e) ? 1 : 0;
    return n;
}

}  // namespace spatialgym
