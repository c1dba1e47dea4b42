#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "logipath/logic.hpp"

namespace logipath {

/// Direction in which a two-place category reads as a material conditional.
enum class Direction { Forward, Backward };

/// Propositional reading of each category. Fact(L) is always the literal L.
struct SemanticsMap {
    Direction cause = Direction::Forward;
    Direction sa = Direction::Forward;
    Direction na = Direction::Backward; // NA(A,B) reads B -> A

    Direction direction(FunctionCategory c) const;
};

// Rule names used in traces.
inline constexpr const char* kRuleAxiom = "axiom";
inline constexpr const char* kRuleContrapositive = "contrapositive";
inline constexpr const char* kRuleNaToSa = "na_to_sa";
inline constexpr const char* kRuleTransitive = "conjoin_transitive";
inline constexpr const char* kRuleModusPonens = "modus_ponens";

/// □(A,B) -> □(¬B,¬A) for □ in {Cause, SA}. Throws RuleNotApplicable otherwise.
Atom contrapositive(const Atom& a);

/// NA(A,B) -> SA(¬A,¬B), rendered with `sa_surface`.
Atom na_to_sa(const Atom& a, const std::string& sa_surface = "if");

/// ★(A,B) ∧ △(B,C) -> ★(A,C); none when a1's second literal is not a2's first.
std::optional<Atom> conjoin_transitive(const Atom& a1, const Atom& a2);

/// Fact(A) ∧ ▽(A,B) -> Fact(B); none when the literals do not chain.
std::optional<Atom> modus_ponens(const Atom& fact, const Atom& implication);

/// Truth-table entailment over at most kMaxOracleVariables distinct variables.
inline constexpr std::size_t kMaxOracleVariables = 20;
bool entails(std::span<const Atom> premises, const Atom& conclusion,
             const SemanticsMap& sem = SemanticsMap{});

/// Two-way entailment.
bool equivalent(const Atom& a, const Atom& b, const SemanticsMap& sem = SemanticsMap{});

struct ClosureConfig {
    std::size_t max_rounds = 8;
    std::size_t max_atoms = 256;
    bool sound_only = true;
    std::string na_to_sa_surface = "if";
    SemanticsMap semantics{};
};

struct Derivation {
    std::string rule;
    std::vector<Atom> premises;
};

/// Atoms reachable from a path body, deduplicated under atoms_equal. The
/// first derivation found for an atom is the one kept.
class AtomBase {
public:
    bool contains(const Atom& a) const;
    const Derivation* trace(const Atom& a) const;
    /// Insertion order.
    std::span<const Atom> atoms() const { return atoms_; }
    /// Sorted by canonical text.
    std::vector<Atom> sorted_atoms() const;
    std::size_t size() const { return atoms_.size(); }
    std::size_t rounds = 0;
    bool truncated = false;

    /// Returns false when an atoms_equal atom is already present.
    bool insert(Atom a, Derivation d);

    /// `derived_atom <= rule_name(premise1, premise2)` per derived atom.
    std::string export_traces() const;

private:
    std::vector<Atom> atoms_;
    std::vector<Derivation> traces_;
    std::map<Atom, std::size_t, AtomLogicalLess> index_;
};

AtomBase closure(std::span<const Atom> body, const ClosureConfig& cfg = ClosureConfig{});
inline AtomBase closure(const ReasoningPath& path, const ClosureConfig& cfg = ClosureConfig{}) {
    return closure(path.body, cfg);
}

} // namespace logipath
