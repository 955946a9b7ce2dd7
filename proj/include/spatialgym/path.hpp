#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spatialgym/puzzle.hpp"

namespace spatialgym {

// Digit encoding of the text environment.
enum class Action : std::uint8_t { Right = 0, Up = 1, Left = 2, Down = 3 };

inline constexpr std::array<Action, 4> kAllActions = {Action::Right, Action::Up, Action::Left,
                                                      Action::Down};

constexpr int digit(Action a) noexcept { return static_cast<int>(a); }
constexpr Position delta(Action a) noexcept {
    switch (a) {
        case Action::Right: return {1, 0};
        case Action::Up: return {0, -1};
        case Action::Left: return {-1, 0};
        case Action::Down: return {0, 1};
    }
    return {0, 0};
}
constexpr Position operator+(Position p, Action a) noexcept {
    const Position d = delta(a);
    return {p.x + d.x, p.y + d.y};
}

// "RIGHT", "UP", ...
const char* action_name(Action a) noexcept;
// 'R', 'U', 'L', 'D'
char action_letter(Action a) noexcept;
std::optional<Action> action_from_digit(int d) noexcept;
// Accepts a digit or a case-insensitive direction name.
std::optional<Action> parse_action_token(std::string_view token) noexcept;
// Direction of the unit step a -> b, if they are neighbours.
std::optional<Action> step_between(Position a, Position b) noexcept;

// Small set of actions iterated in ascending digit order.
class ActionSet {
public:
    constexpr ActionSet() = default;
    constexpr void insert(Action a) noexcept { bits_ |= static_cast<std::uint8_t>(1u << digit(a)); }
    constexpr bool contains(Action a) const noexcept { return (bits_ >> digit(a)) & 1u; }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    int size() const noexcept { return __builtin_popcount(bits_); }
    std::vector<Action> to_vector() const;
    constexpr std::uint8_t bits() const noexcept { return bits_; }

    friend constexpr bool operator==(ActionSet, ActionSet) = default;

private:
    std::uint8_t bits_ = 0;
};

// "[1=UP,3=DOWN]"
std::string format_legal_actions(ActionSet set);

enum class Mode : std::uint8_t { NoBacktrack, Backtrack };

const char* mode_name(Mode m) noexcept;  // "no_backtrack" / "backtrack"
std::optional<Mode> parse_mode(std::string_view s) noexcept;

struct InvalidPath : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IllegalMove : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Simple path of unit steps over walkable positions, starting at the puzzle start.
class Path {
public:
    Path() = default;
    explicit Path(Position start) : positions_{start} {}
    // Throws InvalidPath unless the sequence satisfies the path invariants on `puzzle`.
    Path(const Puzzle& puzzle, std::vector<Position> positions);

    const std::vector<Position>& positions() const noexcept { return positions_; }
    std::size_t size() const noexcept { return positions_.size(); }
    bool empty() const noexcept { return positions_.empty(); }
    Position head() const { return positions_.back(); }
    Position front() const { return positions_.front(); }
    bool contains(Position p) const noexcept;
    // The position before the head, if any.
    std::optional<Position> predecessor() const noexcept;

    // Unit-step counts: half-steps between symbol positions and full node-to-node edges.
    int half_steps() const noexcept { return positions_.empty() ? 0 : static_cast<int>(positions_.size()) - 1; }

    bool is_prefix_of(const Path& other) const noexcept;

    void push(Position p) { positions_.push_back(p); }
    void pop() { positions_.pop_back(); }

    friend bool operator==(const Path&, const Path&) = default;
    friend auto operator<=>(const Path& a, const Path& b) { return a.positions_ <=> b.positions_; }

private:
    std::vector<Position> positions_;
};

// Throws InvalidPath describing the first broken invariant.
void validate_path(const Puzzle& puzzle, const std::vector<Position>& positions);

ActionSet legal_moves(const Puzzle& puzzle, const Path& path, Mode mode);
// True when `a` would pop the head (Backtrack mode only).
bool is_backtrack(const Path& path, Action a, Mode mode) noexcept;
Path apply_move(const Puzzle& puzzle, const Path& path, Action a, Mode mode);

// "(x0,y0)->(x1,y1)->..."
std::string format_path(const Path& path);
// Compact form over {R,U,L,D}, relative to the first position.
std::string format_directions(const Path& path);
// Accepts either canonical form; the direction form starts at the puzzle start.
Path parse_path(const Puzzle& puzzle, std::string_view text);

// Lattice coordinate of a rule cell; maps to symbol position (2i+1, 2j+1).
struct CellCoord {
    int i = 0;
    int j = 0;

    constexpr Position position() const noexcept { return {2 * i + 1, 2 * j + 1}; }
    friend auto operator<=>(const CellCoord&, const CellCoord&) = default;
};

struct RegionPartition {
    int cols = 0;
    int rows = 0;
    std::vector<int> label;                     // indexed j*cols + i
    std::vector<std::vector<CellCoord>> cells;  // label -> members, row-major

    int region_of(CellCoord c) const { return label[c.j * cols + c.i]; }
    std::size_t size() const noexcept { return cells.size(); }
};

RegionPartition compute_regions(const Puzzle& puzzle, const Path& path);
int edge_touch_count(const Puzzle& puzzle, const Path& path, CellCoord cell);

}  // namespace spatialgym
