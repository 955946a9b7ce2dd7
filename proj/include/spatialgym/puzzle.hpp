#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace spatialgym {

// Symbol-grid coordinate. (0,0) is the top-left; x grows rightward, y downward.
struct Position {
    int x = 0;
    int y = 0;

    friend auto operator<=>(const Position&, const Position&) = default;
};

enum class ParityClass { Node, Edge, Cell };

constexpr ParityClass classify_position(Position p) noexcept {
    const bool x_even = (p.x % 2) == 0;
    const bool y_even = (p.y % 2) == 0;
    if (x_even && y_even) return ParityClass::Node;
    if (!x_even && !y_even) return ParityClass::Cell;
    return ParityClass::Edge;
}

constexpr bool is_path_class(Position p) noexcept {
    return classify_position(p) != ParityClass::Cell;
}

enum class Color : std::uint8_t { R, B, G, Y, W, O, P, K };

inline constexpr Color kAllColors[] = {Color::R, Color::B, Color::G, Color::Y,
                                       Color::W, Color::O, Color::P, Color::K};

char color_code(Color c) noexcept;
std::optional<Color> parse_color(char code) noexcept;

enum class SymbolKind : std::uint8_t {
    Open,       // '+'
    Dot,        // '.'
    Gap,        // 'G'
    EmptyCell,  // 'N'
    Start,      // 'S'
    End,        // 'E'
    Square,     // 'o-X'
    Star,       // '*-X'
    Triangle,   // 'A-X'..'D-X'
    Poly,       // 'P-X-Y'
    Ylop,       // 'Y-X-Y'
};

struct Symbol {
    SymbolKind kind = SymbolKind::Open;
    Color color = Color::R;  // meaningful for colored kinds only
    int count = 0;           // triangle touch count, 1..4
    int shape_id = 0;        // poly/ylop catalog key

    static constexpr Symbol open() { return {}; }
    static constexpr Symbol dot() { return {SymbolKind::Dot}; }
    static constexpr Symbol gap() { return {SymbolKind::Gap}; }
    static constexpr Symbol empty_cell() { return {SymbolKind::EmptyCell}; }
    static constexpr Symbol start() { return {SymbolKind::Start}; }
    static constexpr Symbol end() { return {SymbolKind::End}; }
    static constexpr Symbol square(Color c) { return {SymbolKind::Square, c}; }
    static constexpr Symbol star(Color c) { return {SymbolKind::Star, c}; }
    static constexpr Symbol triangle(int n, Color c) { return {SymbolKind::Triangle, c, n}; }
    static constexpr Symbol poly(Color c, int id) { return {SymbolKind::Poly, c, 0, id}; }
    static constexpr Symbol ylop(Color c, int id) { return {SymbolKind::Ylop, c, 0, id}; }

    bool is_cell_class() const noexcept;
    bool has_color() const noexcept;
    // Anything other than an empty cell or plain '+' position.
    bool is_rule() const noexcept;

    friend bool operator==(const Symbol& a, const Symbol& b) noexcept;
};

// Grid token per the prompt legend ("+", "o-B", "P-R-16", ...).
std::string format_token(const Symbol& s);
std::optional<Symbol> parse_token(std::string_view token);

// Trimmed boolean bitmap; no rotation/mirror normalization.
class Polyshape {
public:
    Polyshape() = default;
    // Rows of 0/1. Trims empty border rows/columns; throws if nothing is set.
    explicit Polyshape(const std::vector<std::vector<int>>& rows);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool at(int col, int row) const noexcept { return bits_[row * width_ + col] != 0; }
    int area() const noexcept { return area_; }
    // (col,row) offsets of occupied cells, row-major.
    const std::vector<std::pair<int, int>>& cells() const noexcept { return cells_; }
    std::vector<std::vector<int>> rows() const;

    friend bool operator==(const Polyshape&, const Polyshape&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int area_ = 0;
    std::vector<std::uint8_t> bits_;
    std::vector<std::pair<int, int>> cells_;
};

struct PuzzleError : std::runtime_error {
    using std::runtime_error::runtime_error;
    virtual const char* code() const noexcept { return "PuzzleError"; }
};
struct SchemaError : PuzzleError {
    using PuzzleError::PuzzleError;
    const char* code() const noexcept override { return "SchemaError"; }
};
struct GridShapeError : PuzzleError {
    using PuzzleError::PuzzleError;
    const char* code() const noexcept override { return "GridShapeError"; }
};
struct SymbolPlacementError : PuzzleError {
    using PuzzleError::PuzzleError;
    const char* code() const noexcept override { return "SymbolPlacementError"; }
};
struct MissingShapeError : PuzzleError {
    using PuzzleError::PuzzleError;
    const char* code() const noexcept override { return "MissingShapeError"; }
};
struct EndpointError : PuzzleError {
    using PuzzleError::PuzzleError;
    const char* code() const noexcept override { return "EndpointError"; }
};

using ShapeCatalog = std::map<int, Polyshape>;

// Immutable board definition. Construction validates every invariant.
class Puzzle {
public:
    // grid is row-major with (2*rows+1) rows of (2*cols+1) symbols, S and E included.
    Puzzle(std::string puzzle_id, int cell_cols, int cell_rows,
           std::vector<std::vector<Symbol>> grid, ShapeCatalog shapes,
           std::optional<double> difficulty_score = std::nullopt);

    const std::string& id() const noexcept { return id_; }
    int cell_cols() const noexcept { return cols_; }
    int cell_rows() const noexcept { return rows_; }
    int width() const noexcept { return 2 * cols_ + 1; }
    int height() const noexcept { return 2 * rows_ + 1; }
    Position start() const noexcept { return start_; }
    Position end() const noexcept { return end_; }
    const ShapeCatalog& shapes() const noexcept { return shapes_; }
    const Polyshape& shape(int id) const { return shapes_.at(id); }
    std::optional<double> difficulty_score() const noexcept { return difficulty_; }
    // Weights of the difficulty model that produced the score, if recorded.
    const std::map<std::string, double>& difficulty_weights() const noexcept { return weights_; }
    std::optional<int> difficulty_level() const noexcept;

    bool in_bounds(Position p) const noexcept {
        return p.x >= 0 && p.y >= 0 && p.x < width() && p.y < height();
    }
    const Symbol& at(Position p) const { return grid_[index(p)]; }
    int index(Position p) const noexcept { return p.y * width() + p.x; }
    Position position_of(int index) const noexcept { return {index % width(), index / width()}; }
    bool on_border(Position p) const noexcept {
        return p.x == 0 || p.y == 0 || p.x == width() - 1 || p.y == height() - 1;
    }
    // In bounds, path-class and not a gap.
    bool walkable(Position p) const noexcept {
        return in_bounds(p) && is_path_class(p) && at(p).kind != SymbolKind::Gap;
    }

    Puzzle with_difficulty(double score, std::map<std::string, double> weights = {}) const;
    Puzzle with_id(std::string id) const;

    friend bool operator==(const Puzzle& a, const Puzzle& b);

private:
    std::string id_;
    int cols_ = 0;
    int rows_ = 0;
    std::vector<Symbol> grid_;
    ShapeCatalog shapes_;
    std::optional<double> difficulty_;
    std::map<std::string, double> weights_;
    Position start_;
    Position end_;
};

inline constexpr int kPuzzleSchemaVersion = 1;

// Canonical puzzle document (JSON).
Puzzle puzzle_from_json(const nlohmann::json& doc);
nlohmann::json puzzle_to_json(const Puzzle& p);
Puzzle parse_puzzle(std::string_view text);
// Canonical form: two-space indented JSON, grid rows on one line each.
std::string serialize_puzzle(const Puzzle& p);

Puzzle load_puzzle_file(const std::string& path);
void save_puzzle_file(const Puzzle& p, const std::string& path);

// One token row per grid row, rendered as "['+', 'V', 'L']". Positions in
// `path` render 'V', the last one 'L'. An empty path leaves base tokens.
std::vector<std::string> render_grid_tokens(const Puzzle& p, std::span<const Position> path = {});

// Text injected for "{polyshapes}" in the system prompt.
std::string describe_shapes(const ShapeCatalog& shapes);

// Level is the ceiling of the score clamped to [1,5].
int difficulty_level_for(double score) noexcept;

}  // namespace spatialgym
