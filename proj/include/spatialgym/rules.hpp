#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spatialgym/path.hpp"
#include "spatialgym/puzzle.hpp"

namespace spatialgym {

enum class RuleKind { Dot, Gap, Square, Star, Triangle, Poly, Ylop, Endpoint };

const char* rule_name(RuleKind r) noexcept;
std::optional<RuleKind> parse_rule_name(std::string_view s) noexcept;
// Rule kind a grid symbol belongs to, for symbols that carry a rule.
std::optional<RuleKind> rule_of(const Symbol& s) noexcept;

struct Violation {
    RuleKind rule;
    Position location;  // symbol-grid position of the offending symbol (End for Endpoint)
    std::string detail;
};

struct Verdict {
    std::vector<Violation> violations;

    bool satisfied() const noexcept { return violations.empty(); }
};

nlohmann::json verdict_to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& doc);

// Full check of a completed path against every rule, in the order
// endpoint, dot, gap, square, star, triangle, poly/ylop.
Verdict verify(const Puzzle& puzzle, const Path& path);

// Exact tiling of `region` by all of `shapes` under translation only.
bool fit_polyominoes(const std::vector<CellCoord>& region, const std::vector<Polyshape>& shapes);

// Same-colour elements sharing the star's region, excluding the star itself.
int star_partners(const Puzzle& puzzle, const RegionPartition& partition, CellCoord star_cell);

// Rule checks that only look at one final region. Used by the verifier and by
// the solver once a region can no longer be split. Appends violations.
void check_region(const Puzzle& puzzle, const std::vector<CellCoord>& region,
                  std::vector<Violation>& out);

}  // namespace spatialgym
