#include "logipath/engine.hpp"

#include <algorithm>
#include <cstdint>

#include "logipath/error.hpp"

namespace logipath {

Direction SemanticsMap::direction(FunctionCategory c) const {
    switch (c) {
    case FunctionCategory::Cause: return cause;
    case FunctionCategory::SA: return sa;
    case FunctionCategory::NA: return na;
    case FunctionCategory::Fact: break;
    }
    throw RuleNotApplicable("Fact atoms have no implication direction");
}

Atom contrapositive(const Atom& a) {
    if (a.category() != FunctionCategory::Cause && a.category() != FunctionCategory::SA)
        throw RuleNotApplicable("contrapositive needs a Cause or SA atom, got " + to_string(a));
    return Atom(a.category(), a.surface(), {negate(a.second()), negate(a.first())});
}

Atom na_to_sa(const Atom& a, const std::string& sa_surface) {
    if (a.category() != FunctionCategory::NA)
        throw RuleNotApplicable("na_to_sa needs an NA atom, got " + to_string(a));
    return Atom(FunctionCategory::SA, sa_surface, {negate(a.first()), negate(a.second())});
}

std::optional<Atom> conjoin_transitive(const Atom& a1, const Atom& a2) {
    if (!is_implication(a1.category()) || !is_implication(a2.category()))
        throw RuleNotApplicable("conjoin_transitive needs two implication atoms, got " + to_string(a1) +
                                " and " + to_string(a2));
    if (a1.second() != a2.first()) return std::nullopt;
    return Atom(a1.category(), a1.surface(), {a1.first(), a2.second()});
}

std::optional<Atom> modus_ponens(const Atom& fact, const Atom& implication) {
    if (fact.category() != FunctionCategory::Fact)
        throw RuleNotApplicable("modus_ponens needs a Fact first argument, got " + to_string(fact));
    if (!is_implication(implication.category()))
        throw RuleNotApplicable("modus_ponens needs an implication second argument, got " +
                                to_string(implication));
    if (fact.first() != implication.first()) return std::nullopt;
    return Atom::fact(implication.second());
}

namespace {

struct Interpreter {
    std::vector<VariableId> vars;
    const SemanticsMap* sem;

    std::size_t slot(VariableId v) const {
        return static_cast<std::size_t>(std::lower_bound(vars.begin(), vars.end(), v) - vars.begin());
    }
    bool lit(const Literal& l, std::uint32_t assignment) const {
        const bool value = (assignment >> slot(l.variable)) & 1U;
        return value == l.positive;
    }
    bool holds(const Atom& a, std::uint32_t assignment) const {
        if (a.category() == FunctionCategory::Fact) return lit(a.first(), assignment);
        const bool x = lit(a.first(), assignment);
        const bool y = lit(a.second(), assignment);
        return sem->direction(a.category()) == Direction::Forward ? (!x || y) : (!y || x);
    }
};

} // namespace

bool entails(std::span<const Atom> premises, const Atom& conclusion, const SemanticsMap& sem) {
    Interpreter in{{}, &sem};
    auto add = [&](const Atom& a) {
        for (const auto& l : a.literals()) in.vars.push_back(l.variable);
    };
    for (const auto& p : premises) add(p);
    add(conclusion);
    std::sort(in.vars.begin(), in.vars.end());
    in.vars.erase(std::unique(in.vars.begin(), in.vars.end()), in.vars.end());
    if (in.vars.size() > kMaxOracleVariables)
        throw CapacityError("entailment oracle supports at most " + std::to_string(kMaxOracleVariables) +
                            " variables, got " + std::to_string(in.vars.size()));

    const std::uint32_t rows = 1U << in.vars.size();
    for (std::uint32_t assignment = 0; assignment < rows; ++assignment) {
        const bool premises_hold = std::all_of(premises.begin(), premises.end(),
                                               [&](const Atom& p) { return in.holds(p, assignment); });
        if (premises_hold && !in.holds(conclusion, assignment)) return false;
    }
    return true;
}

bool equivalent(const Atom& a, const Atom& b, const SemanticsMap& sem) {
    return entails(std::span(&a, 1), b, sem) && entails(std::span(&b, 1), a, sem);
}

bool AtomBase::contains(const Atom& a) const { return index_.contains(a); }

const Derivation* AtomBase::trace(const Atom& a) const {
    const auto it = index_.find(a);
    return it == index_.end() ? nullptr : &traces_[it->second];
}

std::vector<Atom> AtomBase::sorted_atoms() const {
    std::vector<std::pair<std::string, std::size_t>> keyed;
    keyed.reserve(atoms_.size());
    for (std::size_t i = 0; i < atoms_.size(); ++i) keyed.emplace_back(to_string(atoms_[i]), i);
    std::sort(keyed.begin(), keyed.end());
    std::vector<Atom> out;
    out.reserve(atoms_.size());
    for (const auto& [key, i] : keyed) out.push_back(atoms_[i]);
    return out;
}

bool AtomBase::insert(Atom a, Derivation d) {
    if (index_.contains(a)) return false;
    index_.emplace(a, atoms_.size());
    atoms_.push_back(std::move(a));
    traces_.push_back(std::move(d));
    return true;
}

std::string AtomBase::export_traces() const {
    std::string out;
    for (const auto& a : sorted_atoms()) {
        const auto* d = trace(a);
        if (d->rule == kRuleAxiom) continue;
        out += to_string(a) + " <= " + d->rule + "(";
        for (std::size_t i = 0; i < d->premises.size(); ++i) {
            if (i) out += ", ";
            out += to_string(d->premises[i]);
        }
        out += ")\n";
    }
    return out;
}

AtomBase closure(std::span<const Atom> body, const ClosureConfig& cfg) {
    if (cfg.max_rounds < 1) throw ValidationError("closure needs max_rounds >= 1");
    if (cfg.max_atoms < body.size()) throw ValidationError("closure max_atoms is below the body size");

    AtomBase base;
    for (const auto& a : body) base.insert(a, {kRuleAxiom, {}});

    auto admit = [&](Atom derived, std::string rule, std::vector<Atom> premises) {
        if (base.contains(derived)) return false;
        if (cfg.sound_only && !entails(premises, derived, cfg.semantics)) return false;
        return base.insert(std::move(derived), {std::move(rule), std::move(premises)});
    };

    for (std::size_t round = 0; round < cfg.max_rounds; ++round) {
        const auto snapshot = base.sorted_atoms();
        const std::size_t before = base.size();
        bool full = false;
        // Premises are copied only when an atom is actually admitted.
        auto offer = [&](std::optional<Atom> derived, const char* rule, const Atom& p1, const Atom* p2) {
            if (full || !derived) return;
            if (base.contains(*derived)) return;
            if (base.size() >= cfg.max_atoms) {
                base.truncated = true;
                full = true;
                return;
            }
            std::vector<Atom> premises{p1};
            if (p2) premises.push_back(*p2);
            admit(std::move(*derived), rule, std::move(premises));
        };

        for (const auto& a : snapshot) {
            if (a.category() == FunctionCategory::Cause || a.category() == FunctionCategory::SA)
                offer(contrapositive(a), kRuleContrapositive, a, nullptr);
            else if (a.category() == FunctionCategory::NA)
                offer(na_to_sa(a, cfg.na_to_sa_surface), kRuleNaToSa, a, nullptr);
        }
        for (const auto& a : snapshot) {
            for (const auto& b : snapshot) {
                if (!is_implication(b.category())) continue;
                if (a.category() == FunctionCategory::Fact) {
                    if (a.first() == b.first()) offer(modus_ponens(a, b), kRuleModusPonens, a, &b);
                } else if (a.second() == b.first()) {
                    offer(conjoin_transitive(a, b), kRuleTransitive, a, &b);
                }
            }
        }
        if (base.size() == before) break;
        base.rounds = round + 1;
        if (full) break;
    }
    return base;
}

} // namespace logipath
