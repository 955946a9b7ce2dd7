#include "spatialgym/rules.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>

namespace spatialgym {

namespace {

constexpr const char* kRuleNames[] = {"Dot", "Gap", "Square", "Star", "Triangle", "Poly", "Ylop", "Endpoint"};

// Order in which verify reports rule families.
int check_rank(RuleKind r) {
    switch (r) {
        case RuleKind::Endpoint: return 0;
        case RuleKind::Dot: return 1;
        case RuleKind::Gap: return 2;
        case RuleKind::Square: return 3;
        case RuleKind::Star: return 4;
        case RuleKind::Triangle: return 5;
        case RuleKind::Poly: return 6;
        case RuleKind::Ylop: return 7;
    }
    return 8;
}

std::string where(Position p) {
    return "(" + std::to_string(p.x) + "," + std::to_string(p.y) + ")";
}

// Lattice bitmask with a fixed stride; regions live on at most a 6x6 lattice.
constexpr int kStride = 8;
using Mask = std::uint64_t;

constexpr Mask bit(int i, int j) { return Mask{1} << (j * kStride + i); }

bool tile(Mask remaining, std::vector<const Polyshape*>& pending) {
    if (pending.empty()) return remaining == 0;
    const int first = __builtin_ctzll(remaining);
    const int ci = first % kStride;
    const int cj = first / kStride;
    for (std::size_t k = 0; k < pending.size(); ++k) {
        const Polyshape* shape = pending[k];
        bool duplicate = false;
        for (std::size_t m = 0; m < k && !duplicate; ++m) duplicate = *pending[m] == *shape;
        if (duplicate) continue;
        // The shape's first occupied cell (row-major) must cover the first free cell.
        const auto [c0, r0] = shape->cells().front();
        Mask placed = 0;
        bool fits = true;
        for (auto [c, r] : shape->cells()) {
            const int i = ci + c - c0;
            const int j = cj + r - r0;
            if (i < 0 || i >= kStride || j < 0 || j >= kStride || !(remaining & bit(i, j))) {
                fits = false;
                break;
            }
            placed |= bit(i, j);
        }
        if (!fits) continue;
        std::swap(pending[k], pending.back());
        pending.pop_back();
        const bool ok = tile(remaining & ~placed, pending);
        pending.push_back(shape);
        std::swap(pending[k], pending.back());
        if (ok) return true;
    }
    return false;
}

}  // namespace

const char* rule_name(RuleKind r) noexcept { return kRuleNames[static_cast<int>(r)]; }

std::optional<RuleKind> parse_rule_name(std::string_view s) noexcept {
    for (int k = 0; k < 8; ++k)
        if (s == kRuleNames[k]) return static_cast<RuleKind>(k);
    return std::nullopt;
}

std::optional<RuleKind> rule_of(const Symbol& s) noexcept {
    switch (s.kind) {
        case SymbolKind::Dot: return RuleKind::Dot;
        case SymbolKind::Gap: return RuleKind::Gap;
        case SymbolKind::Square: return RuleKind::Square;
        case SymbolKind::Star: return RuleKind::Star;
        case SymbolKind::Triangle: return RuleKind::Triangle;
        case SymbolKind::Poly: return RuleKind::Poly;
        case SymbolKind::Ylop: return RuleKind::Ylop;
        default: return std::nullopt;
    }
}

nlohmann::json verdict_to_json(const Verdict& v) {
    nlohmann::json violations = nlohmann::json::array();
    for (const auto& x : v.violations)
        violations.push_back({{"rule", rule_name(x.rule)},
                              {"location", {x.location.x, x.location.y}},
                              {"detail", x.detail}});
    return {{"satisfied", v.satisfied()}, {"violations", violations}};
}

Verdict verdict_from_json(const nlohmann::json& doc) {
    Verdict v;
    for (const auto& x : doc.at("violations")) {
        const auto rule = parse_rule_name(x.at("rule").get<std::string>());
        if (!rule) throw std::invalid_argument("unknown rule name in verdict");
        v.violations.push_back({*rule, {x.at("location").at(0).get<int>(), x.at("location").at(1).get<int>()},
                                x.at("detail").get<std::string>()});
    }
    return v;
}

bool fit_polyominoes(const std::vector<CellCoord>& region, const std::vector<Polyshape>& shapes) {
    int area = 0;
    for (const auto& s : shapes) area += s.area();
    if (area != static_cast<int>(region.size())) return false;
    if (region.empty()) return shapes.empty();

    int min_i = region.front().i, min_j = region.front().j;
    for (auto c : region) {
        min_i = std::min(min_i, c.i);
        min_j = std::min(min_j, c.j);
    }
    Mask mask = 0;
    for (auto c : region) {
        const int i = c.i - min_i;
        const int j = c.j - min_j;
        if (i >= kStride || j >= kStride) throw std::invalid_argument("region exceeds an 8x8 lattice");
        mask |= bit(i, j);
    }
    std::vector<const Polyshape*> pending;
    pending.reserve(shapes.size());
    for (const auto& s : shapes) pending.push_back(&s);
    // Larger pieces first prunes faster; the anchored search is complete in any order.
    std::stable_sort(pending.begin(), pending.end(),
                     [](const Polyshape* a, const Polyshape* b) { return a->area() > b->area(); });
    return tile(mask, pending);
}

int star_partners(const Puzzle& puzzle, const RegionPartition& partition, CellCoord star_cell) {
    const Symbol& star = puzzle.at(star_cell.position());
    int n = 0;
    for (CellCoord c : partition.cells[partition.region_of(star_cell)]) {
        if (c == star_cell) continue;
        const Symbol& s = puzzle.at(c.position());
        if (s.has_color() && s.color == star.color) ++n;
    }
    return n;
}

void check_region(const Puzzle& puzzle, const std::vector<CellCoord>& region, std::vector<Violation>& out) {
    // Squares: at most one colour.
    std::optional<Color> square_color;
    bool mixed = false;
    for (CellCoord c : region) {
        const Symbol& s = puzzle.at(c.position());
        if (s.kind != SymbolKind::Square) continue;
        if (square_color && *square_color != s.color) mixed = true;
        square_color = s.color;
    }
    if (mixed)
        for (CellCoord c : region)
            if (puzzle.at(c.position()).kind == SymbolKind::Square)
                out.push_back({RuleKind::Square, c.position(), "squares of different colours share a region"});

    // Stars: exactly one same-colour partner.
    int per_color[8] = {};
    for (CellCoord c : region) {
        const Symbol& s = puzzle.at(c.position());
        if (s.has_color()) ++per_color[static_cast<int>(s.color)];
    }
    for (CellCoord c : region) {
        const Symbol& s = puzzle.at(c.position());
        if (s.kind != SymbolKind::Star) continue;
        const int partners = per_color[static_cast<int>(s.color)] - 1;
        if (partners != 1)
            out.push_back({RuleKind::Star, c.position(),
                           "star has " + std::to_string(partners) + " same-colour partners, needs exactly 1"});
    }

    // Polys and ylops: cancel exact (shape, colour) pairs, then tile what is left.
    std::vector<CellCoord> polys, ylops;
    for (CellCoord c : region) {
        const SymbolKind k = puzzle.at(c.position()).kind;
        if (k == SymbolKind::Poly) polys.push_back(c);
        if (k == SymbolKind::Ylop) ylops.push_back(c);
    }
    if (polys.empty() && ylops.empty()) return;
    std::vector<bool> poly_used(polys.size(), false);
    std::vector<CellCoord> leftover_ylops;
    for (CellCoord y : ylops) {
        const Symbol& ys = puzzle.at(y.position());
        bool cancelled = false;
        for (std::size_t k = 0; k < polys.size() && !cancelled; ++k) {
            const Symbol& ps = puzzle.at(polys[k].position());
            if (!poly_used[k] && ps.color == ys.color && ps.shape_id == ys.shape_id) {
                poly_used[k] = true;
                cancelled = true;
            }
        }
        if (!cancelled) leftover_ylops.push_back(y);
    }
    for (CellCoord y : leftover_ylops)
        out.push_back({RuleKind::Ylop, y.position(), "negative shape has no matching positive shape in its region"});

    std::vector<Polyshape> remaining;
    std::vector<CellCoord> remaining_at;
    for (std::size_t k = 0; k < polys.size(); ++k)
        if (!poly_used[k]) {
            remaining.push_back(puzzle.shape(puzzle.at(polys[k].position()).shape_id));
            remaining_at.push_back(polys[k]);
        }
    if (!remaining.empty() && !fit_polyominoes(region, remaining))
        for (CellCoord c : remaining_at)
            out.push_back({RuleKind::Poly, c.position(), "region is not exactly tiled by its shapes"});
}

Verdict verify(const Puzzle& puzzle, const Path& path) {
    Verdict v;
    if (path.empty() || path.front() != puzzle.start())
        v.violations.push_back({RuleKind::Endpoint, puzzle.start(), "path does not begin at the start"});
    if (path.empty() || path.head() != puzzle.end())
        v.violations.push_back({RuleKind::Endpoint, puzzle.end(),
                                path.empty() ? "path is empty" : "path ends at " + where(path.head()) + ", not at the end"});

    std::vector<std::uint8_t> on_path(static_cast<std::size_t>(puzzle.width() * puzzle.height()), 0);
    for (Position p : path.positions())
        if (puzzle.in_bounds(p)) on_path[puzzle.index(p)] = 1;

    for (int y = 0; y < puzzle.height(); ++y)
        for (int x = 0; x < puzzle.width(); ++x) {
            const Position p{x, y};
            const SymbolKind k = puzzle.at(p).kind;
            if (k == SymbolKind::Dot && !on_path[puzzle.index(p)])
                v.violations.push_back({RuleKind::Dot, p, "dot is not on the path"});
            if (k == SymbolKind::Gap && on_path[puzzle.index(p)])
                v.violations.push_back({RuleKind::Gap, p, "path crosses a gap"});
        }

    const RegionPartition partition = compute_regions(puzzle, path);
    for (const auto& region : partition.cells) check_region(puzzle, region, v.violations);

    for (int j = 0; j < puzzle.cell_rows(); ++j)
        for (int i = 0; i < puzzle.cell_cols(); ++i) {
            const CellCoord c{i, j};
            const Symbol& s = puzzle.at(c.position());
            if (s.kind != SymbolKind::Triangle) continue;
            const int touched = edge_touch_count(puzzle, path, c);
            if (touched != s.count)
                v.violations.push_back({RuleKind::Triangle, c.position(),
                                        "path touches " + std::to_string(touched) + " edges, needs " +
                                            std::to_string(s.count)});
        }

    std::stable_sort(v.violations.begin(), v.violations.end(),
                     [](const Violation& a, const Violation& b) { return check_rank(a.rule) < check_rank(b.rule); });
    return v;
}

}  // namespace spatialgym
