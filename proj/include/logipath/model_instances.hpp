#pragma once

// Random paths and parameter draws for gradient checks.

#include <random>

#include "logipath/model.hpp"

namespace logipath {

inline const std::vector<std::string>& instance_clauses() {
    static const std::vector<std::string> c = {"the sky is blue",  "bill goes golfing",     "the river floods",
                                               "prices rise",      "tom studies chemistry", "the museum opens early",
                                               "mary plays chess", "the harvest is good"};
    return c;
}

/// Random path with at most `max_positions` units over `n_vars` variables.
inline ReasoningPath random_path(std::mt19937_64& rng, const Lexicon& lex, std::size_t max_positions,
                                 std::uint32_t n_vars = 5) {
    std::uniform_int_distribution<std::uint32_t> var(0, n_vars - 1);
    std::uniform_int_distribution<int> cat(0, 3);
    std::bernoulli_distribution sign(0.5);
    ReasoningPath p;
    for (std::uint32_t i = 0; i < n_vars; ++i) p.bindings[{i}] = instance_clauses()[i % instance_clauses().size()];
    std::size_t used = 0;
    std::vector<Atom> atoms;
    while (true) {
        const auto c = static_cast<FunctionCategory>(cat(rng));
        const std::size_t width = c == FunctionCategory::Fact ? 2 : 3;
        if (used + width > max_positions) break;
        used += width;
        const Literal a{{var(rng)}, sign(rng)};
        if (c == FunctionCategory::Fact) {
            atoms.push_back(Atom::fact(a));
        } else {
            const auto entries = lex.by_category(c);
            std::uniform_int_distribution<std::size_t> e(0, entries.size() - 1);
            atoms.push_back(Atom(c, entries[e(rng)]->text(), {a, Literal{{var(rng)}, sign(rng)}}));
        }
        if (atoms.size() >= 2 && std::bernoulli_distribution(0.3)(rng)) break;
    }
    // Last atom is the head.
    p.head.push_back(atoms.back());
    atoms.pop_back();
    p.body = atoms.empty() ? std::vector<Atom>{Atom::fact({{0}, true})} : atoms;
    return p;
}

/// Redraws every parameter for finite-difference checks. Initialization-scale
/// tables leave LayerNorm inputs with tiny variance, where its curvature
/// makes central differences at eps = 1e-3 inaccurate; full LeCun-scale
/// weights sharpen the softmaxes for the same effect. Tables are unit scale,
/// weights half LeCun.
inline void randomize_parameters(PathModel& m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& [name, t] : m.params().all()) {
        Matrix& v = t.mutable_value();
        const bool gain = name.find("gain") != std::string::npos;
        const bool table = name.rfind("embed.", 0) == 0;
        const double s = gain ? 0.2 : table ? 1.0 : 0.5 / std::sqrt(static_cast<double>(v.rows()));
        for (Index i = 0; i < v.size(); ++i) v.data()[i] = (gain ? 1.0 : 0.0) + s * n(rng);
    }
}

/// Four random option paths of at most `max_units` positions each.
inline PreparedSample random_instance(const PathModel& m, const Lexicon& lex, std::uint64_t seed,
                                      std::size_t max_units = 12) {
    std::mt19937_64 rng(seed);
    PreparedSample ps;
    ps.id = "instance-" + std::to_string(seed);
    ps.label = static_cast<int>(seed % 4);
    for (auto& o : ps.options) o = m.encode(random_path(rng, lex, max_units), "the sky is blue and bill goes golfing");
    return ps;
}

} // namespace logipath
