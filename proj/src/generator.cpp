#include "spatialgym/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

namespace spatialgym {

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Portable draws on top of mt19937_64; std distributions differ between
// standard libraries and would break seed reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }
    int below(int n) {
        return static_cast<int>((static_cast<unsigned __int128>(next()) * static_cast<unsigned>(n)) >> 64);
    }
    int between(int lo, int hi) { return lo + below(hi - lo + 1); }
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(below(static_cast<int>(v.size())))];
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int k = static_cast<int>(v.size()) - 1; k > 0; --k) std::swap(v[k], v[below(k + 1)]);
    }

    // Index drawn proportionally to weights; -1 when all weights are zero.
    int weighted(const std::vector<double>& w) {
        double total = 0.0;
        for (double x : w) total += x;
        if (total <= 0.0) return -1;
        double r = unit() * total;
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (r < w[k]) return static_cast<int>(k);
            r -= w[k];
        }
        for (int k = static_cast<int>(w.size()) - 1; k >= 0; --k)
            if (w[k] > 0.0) return k;
        return -1;
    }

private:
    std::mt19937_64 eng_;
};

double normalise(double v, DifficultyModel::Range r) {
    if (r.hi <= r.lo) return 0.0;
    return std::clamp((v - r.lo) / (r.hi - r.lo), 0.0, 1.0);
}

double weight_of(const GenConfig& c, RuleKind r) {
    const auto it = c.rule_type_weights.find(r);
    return it == c.rule_type_weights.end() ? 0.0 : it->second;
}

// Random polyomino grown cell by cell inside a 4x4 box, then trimmed.
std::vector<std::vector<int>> random_shape(Rng& rng, int area) {
    std::vector<std::vector<int>> rows(4, std::vector<int>(4, 0));
    std::vector<std::pair<int, int>> cells{{rng.below(4), rng.below(4)}};
    rows[cells[0].second][cells[0].first] = 1;
    while (static_cast<int>(cells.size()) < area) {
        std::vector<std::pair<int, int>> frontier;
        for (auto [c, r] : cells)
            for (auto [dc, dr] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
                const int nc = c + dc, nr = r + dr;
                if (nc < 0 || nr < 0 || nc >= 4 || nr >= 4 || rows[nr][nc]) continue;
                if (std::find(frontier.begin(), frontier.end(), std::pair{nc, nr}) == frontier.end())
                    frontier.emplace_back(nc, nr);
            }
        std::sort(frontier.begin(), frontier.end());
        const auto next = rng.pick(frontier);
        rows[next.second][next.first] = 1;
        cells.push_back(next);
    }
    return Polyshape(rows).rows();
}

// Shape ids are the trimmed bitmap packed row-major into a 4-column word,
// so equal shapes share an id.
int shape_key(const Polyshape& s) {
    int key = 0;
    for (auto [c, r] : s.cells()) key |= 1 << (r * 4 + c);
    return key;
}

std::string hex_id(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::map<std::string, double> DifficultyModel::weights() const {
    return {{"distinct_rule_types", w_distinct},
            {"rule_cells", w_rule_cells},
            {"rule_density", w_density},
            {"grid_size", w_grid},
            {"interaction_estimate", w_interaction}};
}

double interaction_estimate(const Puzzle& puzzle) {
    std::vector<CellCoord> cells;
    for (int j = 0; j < puzzle.cell_rows(); ++j)
        for (int i = 0; i < puzzle.cell_cols(); ++i)
            if (puzzle.at(CellCoord{i, j}.position()).is_rule()) cells.push_back({i, j});
    double sum = 0.0;
    for (std::size_t a = 0; a < cells.size(); ++a)
        for (std::size_t b = a + 1; b < cells.size(); ++b) {
            const int d = std::abs(cells[a].i - cells[b].i) + std::abs(cells[a].j - cells[b].j);
            sum += 1.0 / (1.0 + d);
        }
    return sum;
}

DifficultyFeatures difficulty_features(const Puzzle& puzzle) {
    DifficultyFeatures f;
    std::set<RuleKind> kinds;
    for (int y = 0; y < puzzle.height(); ++y)
        for (int x = 0; x < puzzle.width(); ++x)
            if (const auto r = rule_of(puzzle.at({x, y}))) {
                kinds.insert(*r);
                ++f.rule_cells;
            }
    f.distinct_rule_types = static_cast<int>(kinds.size());
    f.grid_size = puzzle.cell_cols() * puzzle.cell_rows();
    f.rule_density = static_cast<double>(f.rule_cells) / f.grid_size;
    f.interaction_estimate = interaction_estimate(puzzle);
    return f;
}

double difficulty_score(const DifficultyFeatures& f, const DifficultyModel& m) {
    const double raw = m.w_distinct * normalise(f.distinct_rule_types, m.distinct) +
                       m.w_rule_cells * normalise(f.rule_cells, m.rule_cells) +
                       m.w_density * normalise(f.rule_density, m.density) +
                       m.w_grid * normalise(f.grid_size, m.grid) +
                       m.w_interaction * normalise(f.interaction_estimate, m.interaction);
    return 1.0 + 4.0 * std::clamp(raw, 0.0, 1.0);
}

void GenConfig::validate() const {
    if (min_cols < 1 || max_cols > 6 || min_cols > max_cols || min_rows < 1 || max_rows > 6 || min_rows > max_rows)
        throw std::invalid_argument("board size ranges must lie within [1,6]");
    if (!(initial_density > 0.0 && initial_density <= 1.0)) throw std::invalid_argument("density must be in (0,1]");
    if (!(density_step > 0.0)) throw std::invalid_argument("density_step must be positive");
    if (solution_cap < 1) throw std::invalid_argument("solution cap k must be at least 1");
    if (max_attempts < 1) throw std::invalid_argument("max_attempts must be positive");
    if (color_palette.empty()) throw std::invalid_argument("colour palette is empty");
    if (max_shape_area < 1 || max_shape_area > 16) throw std::invalid_argument("max_shape_area must be in [1,16]");
    for (const auto& [r, w] : rule_type_weights)
        if (w < 0.0) throw std::invalid_argument("rule weights must be non-negative");
}

const char* attempt_outcome_name(AttemptOutcome o) noexcept {
    switch (o) {
        case AttemptOutcome::Accepted: return "accepted";
        case AttemptOutcome::NoSolution: return "no_solution";
        case AttemptOutcome::TooMany: return "too_many";
    }
    return "?";
}

std::uint64_t batch_seed(std::uint64_t seed, int index) noexcept {
    return mix(mix(seed) + static_cast<std::uint64_t>(index));
}

Puzzle sample_board(const GenConfig& config, int cols, int rows, double density, std::uint64_t attempt_seed,
                    const std::string& puzzle_id) {
    Rng rng(attempt_seed);
    const int width = 2 * cols + 1;
    const int height = 2 * rows + 1;
    std::vector<std::vector<Symbol>> grid(height, std::vector<Symbol>(width, Symbol::open()));
    for (int y = 1; y < height; y += 2)
        for (int x = 1; x < width; x += 2) grid[y][x] = Symbol::empty_cell();

    std::vector<Position> border;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const Position p{x, y};
            if (is_path_class(p) && (x == 0 || y == 0 || x == width - 1 || y == height - 1)) border.push_back(p);
        }
    const int s = rng.below(static_cast<int>(border.size()));
    int e = rng.below(static_cast<int>(border.size()) - 1);
    if (e >= s) ++e;
    const Position start = border[s];
    const Position end = border[e];
    grid[start.y][start.x] = Symbol::start();
    grid[end.y][end.x] = Symbol::end();

    const int n_cells = cols * rows;
    const int n_rules = std::min(n_cells, static_cast<int>(std::floor(density * n_cells + 1e-9)));
    const int n_markers = static_cast<int>(std::floor(config.path_marker_fraction * density * n_cells + 1e-9));

    // Dots and gaps on path positions; gaps only on edges between nodes.
    const std::vector<double> marker_w = {weight_of(config, RuleKind::Dot), weight_of(config, RuleKind::Gap)};
    std::vector<Position> free_path;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const Position p{x, y};
            if (is_path_class(p) && p != start && p != end) free_path.push_back(p);
        }
    rng.shuffle(free_path);
    std::size_t cursor = 0;
    for (int k = 0; k < n_markers; ++k) {
        const int kind = rng.weighted(marker_w);
        if (kind < 0) break;
        while (cursor < free_path.size() && kind == 1 && classify_position(free_path[cursor]) != ParityClass::Edge)
            ++cursor;
        if (cursor >= free_path.size()) break;
        const Position p = free_path[cursor];
        free_path.erase(free_path.begin() + static_cast<std::ptrdiff_t>(cursor));
        grid[p.y][p.x] = kind == 0 ? Symbol::dot() : Symbol::gap();
        cursor = 0;
    }

    // Cell rules.
    const std::vector<RuleKind> cell_kinds = {RuleKind::Square, RuleKind::Star, RuleKind::Triangle, RuleKind::Poly,
                                              RuleKind::Ylop};
    std::vector<double> cell_w;
    for (RuleKind r : cell_kinds) cell_w.push_back(weight_of(config, r));
    std::vector<CellCoord> cells;
    for (int j = 0; j < rows; ++j)
        for (int i = 0; i < cols; ++i) cells.push_back({i, j});
    rng.shuffle(cells);
    std::vector<std::pair<CellCoord, RuleKind>> chosen;
    for (int k = 0; k < n_rules; ++k) {
        const int kind = rng.weighted(cell_w);
        if (kind < 0) break;
        chosen.emplace_back(cells[k], cell_kinds[kind]);
    }
    // Polys before ylops so a ylop can mirror an existing poly.
    std::stable_partition(chosen.begin(), chosen.end(), [](const auto& c) { return c.second != RuleKind::Ylop; });

    ShapeCatalog shapes;
    std::vector<Symbol> placed_polys;
    auto new_shape = [&]() {
        const Polyshape shape(random_shape(rng, rng.between(1, config.max_shape_area)));
        const int id = shape_key(shape);
        shapes.emplace(id, shape);
        return id;
    };
    for (const auto& [cell, kind] : chosen) {
        const Position p = cell.position();
        const Color color = rng.pick(config.color_palette);
        switch (kind) {
            case RuleKind::Square: grid[p.y][p.x] = Symbol::square(color); break;
            case RuleKind::Star: grid[p.y][p.x] = Symbol::star(color); break;
            case RuleKind::Triangle: {
                const int r = rng.below(10);
                grid[p.y][p.x] = Symbol::triangle(r < 3 ? 1 : r < 6 ? 2 : r < 9 ? 3 : 4, color);
                break;
            }
            case RuleKind::Poly: {
                const Symbol sym = Symbol::poly(color, new_shape());
                grid[p.y][p.x] = sym;
                placed_polys.push_back(sym);
                break;
            }
            case RuleKind::Ylop: {
                if (!placed_polys.empty() && rng.unit() < config.ylop_match_probability) {
                    const Symbol& twin = rng.pick(placed_polys);
                    grid[p.y][p.x] = Symbol::ylop(twin.color, twin.shape_id);
                } else {
                    grid[p.y][p.x] = Symbol::ylop(color, new_shape());
                }
                break;
            }
            default: break;
        }
    }
    return Puzzle(puzzle_id, cols, rows, std::move(grid), std::move(shapes));
}

GeneratedPuzzle generate_puzzle(const GenConfig& config) {
    config.validate();
    SearchBudget budget;
    budget.max_solutions = config.solution_cap + 1;
    budget.max_nodes = config.max_nodes;
    budget.max_time = config.max_time;

    std::vector<AttemptRecord> trace;
    double density = config.initial_density;
    for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
        const std::uint64_t attempt_seed = mix(config.seed ^ mix(static_cast<std::uint64_t>(attempt) + 1));
        Rng size_rng(attempt_seed);
        const int cols = size_rng.between(config.min_cols, config.max_cols);
        const int rows = size_rng.between(config.min_rows, config.max_rows);
        Puzzle board = sample_board(config, cols, rows, density, mix(attempt_seed), "sg-" + hex_id(attempt_seed));
        SolutionSet solutions = enumerate_solutions(board, budget);

        AttemptRecord rec{attempt,           cols, rows, density, solutions.size(), solutions.exhausted,
                          solutions.nodes,   std::chrono::duration<double, std::milli>(solutions.elapsed).count(),
                          AttemptOutcome::Accepted};
        if (solutions.solutions.empty() && solutions.exhausted) {
            rec.outcome = AttemptOutcome::NoSolution;
            density = std::max(config.density_step, density - config.density_step);
        } else if (!solutions.exhausted || static_cast<int>(solutions.size()) > config.solution_cap) {
            rec.outcome = AttemptOutcome::TooMany;
            density = std::min(1.0, density + config.density_step);
        }
        trace.push_back(rec);
        if (rec.outcome != AttemptOutcome::Accepted) continue;

        const DifficultyFeatures features = difficulty_features(board);
        const double score = difficulty_score(features, config.difficulty);
        return {board.with_difficulty(score, config.difficulty.weights()), std::move(solutions), features,
                std::move(trace)};
    }
    throw GenerationExhausted("no acceptable puzzle after " + std::to_string(config.max_attempts) + " attempts",
                              std::move(trace));
}

}  // namespace spatialgym
