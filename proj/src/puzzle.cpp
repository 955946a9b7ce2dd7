#include "spatialgym/puzzle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace spatialgym {

namespace {

constexpr char kColorCodes[] = {'R', 'B', 'G', 'Y', 'W', 'O', 'P', 'K'};

std::string describe(Position p) {
    return "(" + std::to_string(p.x) + "," + std::to_string(p.y) + ")";
}

std::optional<int> parse_shape_id(std::string_view s) {
    if (s.empty() || s.size() > 9) return std::nullopt;
    int v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return std::nullopt;
        v = v * 10 + (c - '0');
    }
    return v;
}

Position parse_xy(const nlohmann::json& doc, const char* field) {
    const auto& v = doc.at(field);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
        throw SchemaError(std::string("field '") + field + "' must be [x, y]");
    return {v[0].get<int>(), v[1].get<int>()};
}

}  // namespace

char color_code(Color c) noexcept { return kColorCodes[static_cast<int>(c)]; }

std::optional<Color> parse_color(char code) noexcept {
    for (int i = 0; i < 8; ++i)
        if (kColorCodes[i] == code) return static_cast<Color>(i);
    return std::nullopt;
}

bool Symbol::is_cell_class() const noexcept {
    switch (kind) {
        case SymbolKind::EmptyCell:
        case SymbolKind::Square:
        case SymbolKind::Star:
        case SymbolKind::Triangle:
        case SymbolKind::Poly:
        case SymbolKind::Ylop:
            return true;
        default:
            return false;
    }
}

bool Symbol::has_color() const noexcept {
    return is_cell_class() && kind != SymbolKind::EmptyCell;
}

bool Symbol::is_rule() const noexcept {
    switch (kind) {
        case SymbolKind::Open:
        case SymbolKind::EmptyCell:
        case SymbolKind::Start:
        case SymbolKind::End:
            return false;
        default:
            return true;
    }
}

bool operator==(const Symbol& a, const Symbol& b) noexcept {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case SymbolKind::Square:
        case SymbolKind::Star:
            return a.color == b.color;
        case SymbolKind::Triangle:
            return a.color == b.color && a.count == b.count;
        case SymbolKind::Poly:
        case SymbolKind::Ylop:
            return a.color == b.color && a.shape_id == b.shape_id;
        default:
            return true;
    }
}

std::string format_token(const Symbol& s) {
    const std::string c(1, color_code(s.color));
    switch (s.kind) {
        case SymbolKind::Open: return "+";
        case SymbolKind::Dot: return ".";
        case SymbolKind::Gap: return "G";
        case SymbolKind::EmptyCell: return "N";
        case SymbolKind::Start: return "S";
        case SymbolKind::End: return "E";
        case SymbolKind::Square: return "o-" + c;
        case SymbolKind::Star: return "*-" + c;
        case SymbolKind::Triangle: return std::string(1, static_cast<char>('A' + s.count - 1)) + "-" + c;
        case SymbolKind::Poly: return "P-" + c + "-" + std::to_string(s.shape_id);
        case SymbolKind::Ylop: return "Y-" + c + "-" + std::to_string(s.shape_id);
    }
    return "?";
}

std::optional<Symbol> parse_token(std::string_view t) {
    if (t.size() == 1) {
        switch (t[0]) {
            case '+': return Symbol::open();
            case '.': return Symbol::dot();
            case 'G': return Symbol::gap();
            case 'N': return Symbol::empty_cell();
            case 'S': return Symbol::start();
            case 'E': return Symbol::end();
            default: return std::nullopt;
        }
    }
    if (t.size() < 3 || t[1] != '-') return std::nullopt;
    const auto color = parse_color(t[2]);
    if (!color) return std::nullopt;
    if (t.size() == 3) {
        switch (t[0]) {
            case 'o': return Symbol::square(*color);
            case '*': return Symbol::star(*color);
            case 'A':
            case 'B':
            case 'C':
            case 'D': return Symbol::triangle(t[0] - 'A' + 1, *color);
            default: return std::nullopt;
        }
    }
    if (t.size() < 5 || t[3] != '-') return std::nullopt;
    const auto id = parse_shape_id(t.substr(4));
    if (!id) return std::nullopt;
    if (t[0] == 'P') return Symbol::poly(*color, *id);
    if (t[0] == 'Y') return Symbol::ylop(*color, *id);
    return std::nullopt;
}

Polyshape::Polyshape(const std::vector<std::vector<int>>& rows) {
    int min_r = INT32_MAX, max_r = -1, min_c = INT32_MAX, max_c = -1;
    for (int r = 0; r < static_cast<int>(rows.size()); ++r)
        for (int c = 0; c < static_cast<int>(rows[r].size()); ++c)
            if (rows[r][c] != 0) {
                min_r = std::min(min_r, r);
                max_r = std::max(max_r, r);
                min_c = std::min(min_c, c);
                max_c = std::max(max_c, c);
            }
    if (max_r < 0) throw SchemaError("polyshape has no occupied cell");
    height_ = max_r - min_r + 1;
    width_ = max_c - min_c + 1;
    bits_.assign(static_cast<std::size_t>(width_ * height_), 0);
    for (int r = min_r; r <= max_r; ++r)
        for (int c = min_c; c < static_cast<int>(rows[r].size()) && c <= max_c; ++c)
            if (rows[r][c] != 0) {
                bits_[(r - min_r) * width_ + (c - min_c)] = 1;
                cells_.emplace_back(c - min_c, r - min_r);
                ++area_;
            }
}

std::vector<std::vector<int>> Polyshape::rows() const {
    std::vector<std::vector<int>> out(height_, std::vector<int>(width_, 0));
    for (auto [c, r] : cells_) out[r][c] = 1;
    return out;
}

Puzzle::Puzzle(std::string puzzle_id, int cell_cols, int cell_rows,
               std::vector<std::vector<Symbol>> grid, ShapeCatalog shapes,
               std::optional<double> difficulty_score)
    : id_(std::move(puzzle_id)),
      cols_(cell_cols),
      rows_(cell_rows),
      shapes_(std::move(shapes)),
      difficulty_(difficulty_score) {
    if (cols_ < 1 || cols_ > 6 || rows_ < 1 || rows_ > 6)
        throw GridShapeError("cell_cols and cell_rows must be in [1,6]");
    if (static_cast<int>(grid.size()) != height())
        throw GridShapeError("grid has " + std::to_string(grid.size()) + " rows, expected " +
                             std::to_string(height()));
    grid_.reserve(static_cast<std::size_t>(width() * height()));
    for (int y = 0; y < height(); ++y) {
        if (static_cast<int>(grid[y].size()) != width())
            throw GridShapeError("grid row " + std::to_string(y) + " has " +
                                 std::to_string(grid[y].size()) + " tokens, expected " +
                                 std::to_string(width()));
        for (const Symbol& s : grid[y]) grid_.push_back(s);
    }

    int starts = 0, ends = 0;
    for (int y = 0; y < height(); ++y) {
        for (int x = 0; x < width(); ++x) {
            const Position p{x, y};
            const Symbol& s = at(p);
            const bool cell = classify_position(p) == ParityClass::Cell;
            if (cell != s.is_cell_class())
                throw SymbolPlacementError("token '" + format_token(s) + "' not allowed at " +
                                           describe(p));
            if (s.kind == SymbolKind::Start) {
                ++starts;
                start_ = p;
            } else if (s.kind == SymbolKind::End) {
                ++ends;
                end_ = p;
            } else if ((s.kind == SymbolKind::Poly || s.kind == SymbolKind::Ylop) &&
                       !shapes_.contains(s.shape_id)) {
                throw MissingShapeError("shape id " + std::to_string(s.shape_id) + " at " +
                                        describe(p) + " is not in the catalog");
            }
        }
    }
    if (starts != 1) throw EndpointError("expected exactly one S, found " + std::to_string(starts));
    if (ends != 1) throw EndpointError("expected exactly one E, found " + std::to_string(ends));
    if (!on_border(start_)) throw EndpointError("start " + describe(start_) + " is not on the border");
    if (!on_border(end_)) throw EndpointError("end " + describe(end_) + " is not on the border");
    if (difficulty_ && (*difficulty_ < 1.0 || *difficulty_ > 5.0))
        throw SchemaError("difficulty_score must be in [1,5]");
}

std::optional<int> Puzzle::difficulty_level() const noexcept {
    if (!difficulty_) return std::nullopt;
    return difficulty_level_for(*difficulty_);
}

Puzzle Puzzle::with_difficulty(double score, std::map<std::string, double> weights) const {
    Puzzle copy = *this;
    if (score < 1.0 || score > 5.0) throw SchemaError("difficulty_score must be in [1,5]");
    copy.difficulty_ = score;
    copy.weights_ = std::move(weights);
    return copy;
}

Puzzle Puzzle::with_id(std::string id) const {
    Puzzle copy = *this;
    copy.id_ = std::move(id);
    return copy;
}

bool operator==(const Puzzle& a, const Puzzle& b) {
    return a.id_ == b.id_ && a.cols_ == b.cols_ && a.rows_ == b.rows_ && a.grid_ == b.grid_ &&
           a.shapes_ == b.shapes_ && a.difficulty_ == b.difficulty_ && a.weights_ == b.weights_;
}

int difficulty_level_for(double score) noexcept {
    const int level = static_cast<int>(std::ceil(score - 1e-9));
    return std::clamp(level, 1, 5);
}

Puzzle puzzle_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw SchemaError("puzzle document must be an object");
    for (const char* field : {"version", "puzzle_id", "cell_cols", "cell_rows", "grid", "start", "end"})
        if (!doc.contains(field)) throw SchemaError(std::string("missing field '") + field + "'");
    if (!doc["version"].is_number_integer() || doc["version"].get<int>() != kPuzzleSchemaVersion)
        throw SchemaError("unsupported puzzle schema version");
    if (!doc["puzzle_id"].is_string()) throw SchemaError("puzzle_id must be a string");
    if (!doc["cell_cols"].is_number_integer() || !doc["cell_rows"].is_number_integer())
        throw SchemaError("cell_cols/cell_rows must be integers");
    if (!doc["grid"].is_array()) throw SchemaError("grid must be an array of token rows");

    std::vector<std::vector<Symbol>> grid;
    for (const auto& row : doc["grid"]) {
        if (!row.is_array()) throw SchemaError("grid rows must be arrays");
        auto& out = grid.emplace_back();
        for (const auto& tok : row) {
            if (!tok.is_string()) throw SchemaError("grid tokens must be strings");
            const auto s = parse_token(tok.get<std::string>());
            if (!s) throw SchemaError("unknown grid token '" + tok.get<std::string>() + "'");
            out.push_back(*s);
        }
    }

    ShapeCatalog shapes;
    if (doc.contains("shapes") && !doc["shapes"].is_null()) {
        if (!doc["shapes"].is_object()) throw SchemaError("shapes must be an object");
        for (const auto& [key, rows] : doc["shapes"].items()) {
            const auto id = parse_shape_id(key);
            if (!id) throw SchemaError("shape id '" + key + "' is not a non-negative integer");
            try {
                shapes.emplace(*id, Polyshape(rows.get<std::vector<std::vector<int>>>()));
            } catch (const nlohmann::json::exception&) {
                throw SchemaError("shape " + key + " must be a 2D array of 0/1");
            }
        }
    }

    std::optional<double> score;
    if (doc.contains("difficulty_score") && !doc["difficulty_score"].is_null()) {
        if (!doc["difficulty_score"].is_number()) throw SchemaError("difficulty_score must be a number");
        score = doc["difficulty_score"].get<double>();
    }

    Puzzle puzzle(doc["puzzle_id"].get<std::string>(), doc["cell_cols"].get<int>(),
                  doc["cell_rows"].get<int>(), std::move(grid), std::move(shapes), score);
    if (parse_xy(doc, "start") != puzzle.start())
        throw EndpointError("start field does not match the S token");
    if (parse_xy(doc, "end") != puzzle.end())
        throw EndpointError("end field does not match the E token");
    if (score && doc.contains("difficulty_weights") && doc["difficulty_weights"].is_object())
        puzzle = puzzle.with_difficulty(*score, doc["difficulty_weights"].get<std::map<std::string, double>>());
    return puzzle;
}

nlohmann::json puzzle_to_json(const Puzzle& p) {
    nlohmann::json doc = nlohmann::json::parse(serialize_puzzle(p));
    return doc;
}

Puzzle parse_puzzle(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("malformed puzzle document: ") + e.what());
    }
    return puzzle_from_json(doc);
}

std::string serialize_puzzle(const Puzzle& p) {
    using nlohmann::json;
    std::ostringstream out;
    out << "{\n";
    out << "  \"version\": " << kPuzzleSchemaVersion << ",\n";
    out << "  \"puzzle_id\": " << json(p.id()).dump() << ",\n";
    out << "  \"cell_cols\": " << p.cell_cols() << ",\n";
    out << "  \"cell_rows\": " << p.cell_rows() << ",\n";
    out << "  \"start\": [" << p.start().x << ", " << p.start().y << "],\n";
    out << "  \"end\": [" << p.end().x << ", " << p.end().y << "],\n";
    out << "  \"difficulty_score\": "
        << (p.difficulty_score() ? json(*p.difficulty_score()).dump() : "null") << ",\n";
    if (!p.difficulty_weights().empty())
        out << "  \"difficulty_weights\": " << json(p.difficulty_weights()).dump() << ",\n";
    out << "  \"grid\": [\n";
    for (int y = 0; y < p.height(); ++y) {
        out << "    [";
        for (int x = 0; x < p.width(); ++x) {
            if (x) out << ", ";
            out << json(format_token(p.at({x, y}))).dump();
        }
        out << "]" << (y + 1 < p.height() ? "," : "") << "\n";
    }
    out << "  ],\n";
    out << "  \"shapes\": {";
    bool first = true;
    for (const auto& [id, shape] : p.shapes()) {
        out << (first ? "\n" : ",\n") << "    \"" << id << "\": " << json(shape.rows()).dump();
        first = false;
    }
    out << (first ? "}" : "\n  }") << "\n}\n";
    return out.str();
}

Puzzle load_puzzle_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open puzzle file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_puzzle(buf.str());
}

void save_puzzle_file(const Puzzle& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write puzzle file " + path);
    out << serialize_puzzle(p);
}

std::vector<std::string> render_grid_tokens(const Puzzle& p, std::span<const Position> path) {
    std::vector<std::string> tokens(static_cast<std::size_t>(p.width() * p.height()));
    for (int y = 0; y < p.height(); ++y)
        for (int x = 0; x < p.width(); ++x) tokens[p.index({x, y})] = format_token(p.at({x, y}));
    for (std::size_t i = 0; i < path.size(); ++i)
        tokens[p.index(path[i])] = (i + 1 == path.size()) ? "L" : "V";

    std::vector<std::string> rows;
    rows.reserve(static_cast<std::size_t>(p.height()));
    for (int y = 0; y < p.height(); ++y) {
        std::string row = "[";
        for (int x = 0; x < p.width(); ++x) {
            if (x) row += ", ";
            row += "'" + tokens[p.index({x, y})] + "'";
        }
        rows.push_back(row + "]");
    }
    return rows;
}

std::string describe_shapes(const ShapeCatalog& shapes) {
    if (shapes.empty()) return "(no polyshapes in this puzzle)";
    std::string out;
    for (const auto& [id, shape] : shapes) {
        if (!out.empty()) out += "\n";
        out += "Shape " + std::to_string(id) + ": " + nlohmann::json(shape.rows()).dump();
    }
    return out;
}

}  // namespace spatialgym
