#include "logipath/path_engine.hpp"

#include <algorithm>
#include <bit>
#include <bitset>
#include <cctype>
#include <cmath>
#include <iostream>
#include <random>
#include <set>

#include "logipath/error.hpp"
#include "logipath/extraction.hpp"

namespace logipath {

namespace {

std::set<VariableId> variables_of(std::span<const Atom> atoms) {
    std::set<VariableId> out;
    for (const auto& a : atoms)
        for (const auto& l : a.literals()) out.insert(l.variable);
    return out;
}

bool recovers(std::span<const Atom> subset, std::span<const Atom> body, const ClosureConfig& cfg) {
    ClosureConfig c = cfg;
    c.max_atoms = std::max(c.max_atoms, subset.size());
    const auto base = closure(subset, c);
    return std::all_of(body.begin(), body.end(), [&](const Atom& a) { return base.contains(a); });
}

// Truth-table rows (over a fixed variable list) on which an atom holds, one
// bit per row. Used to reject subsets that cannot entail the body before
// paying for a closure.
constexpr std::size_t kMaskVariables = 12;
using RowMask = std::vector<std::uint64_t>;

RowMask model_mask(const Atom& a, const std::vector<VariableId>& vars, const SemanticsMap& sem) {
    const std::size_t rows = std::size_t{1} << vars.size();
    RowMask m((rows + 63) / 64, 0);
    auto value = [&](const Literal& l, std::size_t row) {
        const auto slot = static_cast<std::size_t>(std::lower_bound(vars.begin(), vars.end(), l.variable) - vars.begin());
        return (((row >> slot) & 1U) != 0) == l.positive;
    };
    for (std::size_t row = 0; row < rows; ++row) {
        bool holds;
        if (a.category() == FunctionCategory::Fact) {
            holds = value(a.first(), row);
        } else {
            const bool x = value(a.first(), row), y = value(a.second(), row);
            holds = sem.direction(a.category()) == Direction::Forward ? (!x || y) : (!y || x);
        }
        if (holds) m[row / 64] |= std::uint64_t{1} << (row % 64);
    }
    return m;
}

bool same_atoms(std::span<const Atom> a, std::span<const Atom> b) {
    if (a.size() != b.size()) return false;
    std::set<Atom, AtomLogicalLess> sa(a.begin(), a.end());
    return std::all_of(b.begin(), b.end(), [&](const Atom& x) { return sa.contains(x); }) && sa.size() == b.size();
}

} // namespace

std::vector<ReasoningPath> mine_combinations(const AtomBase& base, const ReasoningPath& original,
                                             const MineLimits& limits, const ClosureConfig& cfg) {
    std::vector<ReasoningPath> out;
    if (limits.max_candidates == 0) return out;
    const auto atoms = base.sorted_atoms();
    const std::size_t n = atoms.size();
    const std::size_t max_size = std::min(limits.max_size ? limits.max_size : original.body.size() + 2, n);

    // Variables get dense slots so coverage is a bitmask test. Closure never
    // introduces variables, so every body variable must occur in the subset.
    const auto all_vars = variables_of(atoms);
    const std::vector<VariableId> var_list(all_vars.begin(), all_vars.end());
    const bool var_bits = var_list.size() <= 64;
    auto slot_bits = [&](std::span<const Atom> as) {
        std::uint64_t bits = 0;
        for (const auto& a : as)
            for (const auto& l : a.literals())
                bits |= std::uint64_t{1} << (std::lower_bound(var_list.begin(), var_list.end(), l.variable) - var_list.begin());
        return bits;
    };
    std::vector<std::uint64_t> atom_vars(n, 0);
    std::uint64_t needed = 0;
    if (var_bits) {
        for (std::size_t i = 0; i < n; ++i) atom_vars[i] = slot_bits(std::span(&atoms[i], 1));
        needed = slot_bits(original.body);
    }

    const bool prefilter = cfg.sound_only && var_list.size() <= kMaskVariables;
    std::vector<RowMask> masks, body_masks;
    if (prefilter) {
        for (const auto& a : atoms) masks.push_back(model_mask(a, var_list, cfg.semantics));
        for (const auto& a : original.body) body_masks.push_back(model_mask(a, var_list, cfg.semantics));
    }
    const std::size_t words = prefilter ? masks.front().size() : 0;
    auto entails_body = [&](const RowMask& m) {
        for (const auto& b : body_masks)
            for (std::size_t w = 0; w < words; ++w)
                if (m[w] & ~b[w]) return false;
        return true;
    };

    std::vector<std::size_t> idx;
    std::vector<RowMask> prefix_models; // prefix_models[d] = AND of masks of idx[0..d]
    std::vector<std::uint64_t> prefix_vars;
    bool done = false;

    // Rule outputs keep a premise's category except na_to_sa (NA -> SA), so a
    // body category needs a source category in the subset.
    auto category_bit = [](FunctionCategory c) { return 1U << static_cast<unsigned>(c); };
    std::vector<unsigned> atom_cat(n);
    for (std::size_t i = 0; i < n; ++i) atom_cat[i] = category_bit(atoms[i].category());
    std::vector<unsigned> body_sources;
    for (const auto& a : original.body)
        body_sources.push_back(a.category() == FunctionCategory::SA
                                   ? category_bit(FunctionCategory::SA) | category_bit(FunctionCategory::NA)
                                   : category_bit(a.category()));
    std::vector<bool> in_body(n, false);
    for (std::size_t i = 0; i < n; ++i)
        in_body[i] = std::any_of(original.body.begin(), original.body.end(),
                                 [&](const Atom& b) { return atoms_equal(atoms[i], b); });
    const auto body_in_base =
        static_cast<std::size_t>(std::count(in_body.begin(), in_body.end(), true));

    // Over-approximation of what the rules can derive: every derived
    // implication (p, q) is a path p ~> q in the literal graph where each
    // implication atom contributes x->y, y->x, ~x->~y and ~y->~x (this graph
    // is closed under the rules' reversals and negations); every derived
    // Fact(q) is reachable from a Fact in the subset.
    auto node = [&](const Literal& l) {
        const auto slot = std::lower_bound(var_list.begin(), var_list.end(), l.variable) - var_list.begin();
        return static_cast<std::size_t>(2 * slot + (l.positive ? 0 : 1));
    };
    auto reachable_body = [&](std::span<const Atom> subset) {
        const std::size_t nodes = 2 * var_list.size();
        std::vector<std::bitset<128>> reach(nodes);
        std::bitset<128> facts;
        for (const auto& a : subset) {
            if (a.category() == FunctionCategory::Fact) {
                facts.set(node(a.first()));
                continue;
            }
            const auto x = node(a.first()), y = node(a.second());
            for (auto [u, v] : {std::pair{x, y}, {y, x}, {x ^ 1, y ^ 1}, {y ^ 1, x ^ 1}}) reach[u].set(v);
        }
        for (std::size_t k = 0; k < nodes; ++k)
            for (std::size_t i = 0; i < nodes; ++i)
                if (reach[i].test(k)) reach[i] |= reach[k];
        for (const auto& b : original.body) {
            if (std::any_of(subset.begin(), subset.end(), [&](const Atom& a) { return atoms_equal(a, b); })) continue;
            if (b.category() == FunctionCategory::Fact) {
                const auto q = node(b.first());
                bool ok = facts.test(q);
                for (std::size_t p = 0; p < nodes && !ok; ++p) ok = facts.test(p) && reach[p].test(q);
                if (!ok) return false;
            } else if (!reach[node(b.first())].test(node(b.second()))) {
                return false;
            }
        }
        return true;
    };

    auto emit = [&] {
        unsigned cats = 0;
        std::size_t body_hits = 0;
        for (auto i : idx) {
            cats |= atom_cat[i];
            body_hits += in_body[i];
        }
        for (auto need : body_sources)
            if (!(cats & need)) return;
        std::vector<Atom> subset;
        for (auto i : idx) subset.push_back(atoms[i]);
        if (same_atoms(subset, original.body)) return;
        // A subset holding the whole body recovers it trivially.
        const bool holds_body = body_in_base == original.body.size() && body_hits == body_in_base;
        if (!holds_body && var_bits && !reachable_body(subset)) return;
        if (!holds_body && !recovers(subset, original.body, cfg)) return;
        ReasoningPath p;
        p.body = std::move(subset);
        p.head = original.head;
        for (const auto* part : {&p.body, &p.head})
            for (const auto& v : variables_of(*part))
                if (auto it = original.bindings.find(v); it != original.bindings.end()) p.bindings.insert(*it);
        out.push_back(std::move(p));
        done = out.size() >= limits.max_candidates;
    };

    // Depth-first walk over k-combinations in lexicographic order.
    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t from, std::size_t k) {
        const std::size_t depth = idx.size();
        if (depth == k) {
            if (var_bits && (prefix_vars.back() & needed) != needed) return;
            if (prefilter && !entails_body(prefix_models.back())) return;
            emit();
            return;
        }
        for (std::size_t i = from; i + (k - depth) <= n && !done; ++i) {
            const std::uint64_t vars = (depth ? prefix_vars.back() : 0) | atom_vars[i];
            // Each remaining atom adds at most two variables.
            if (var_bits && 2 * (k - depth - 1) < static_cast<std::size_t>(std::popcount(needed & ~vars))) continue;
            idx.push_back(i);
            prefix_vars.push_back(vars);
            if (prefilter) {
                RowMask m = masks[i];
                if (depth)
                    for (std::size_t w = 0; w < words; ++w) m[w] &= prefix_models.back()[w];
                prefix_models.push_back(std::move(m));
            }
            walk(i + 1, k);
            idx.pop_back();
            prefix_vars.pop_back();
            if (prefilter) prefix_models.pop_back();
        }
    };
    for (std::size_t k = 1; k <= max_size && !done; ++k) walk(0, k);
    return out;
}

namespace {

const ConnectiveEntry* entry_for(const Atom& atom, const Lexicon& lex) {
    if (const auto* e = lex.lookup(atom.surface()); e && e->category == atom.category()) return e;
    static constexpr std::array<std::pair<FunctionCategory, const char*>, 3> fallback{
        {{FunctionCategory::Cause, "because"}, {FunctionCategory::SA, "if"}, {FunctionCategory::NA, "only if"}}};
    for (const auto& [c, phrase] : fallback)
        if (c == atom.category())
            if (const auto* e = lex.lookup(phrase); e && e->category == c) return e;
    const auto all = lex.by_category(atom.category());
    return all.empty() ? nullptr : all.front();
}

std::string clause(const Literal& l, const std::map<VariableId, std::string>& bindings) {
    const auto it = bindings.find(l.variable);
    if (it == bindings.end()) throw ValidationError("unbound variable " + variable_name(l.variable));
    return l.positive ? it->second : "it is not the case that " + it->second;
}

std::string sentence_case(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s + ".";
}

std::string join_sentences(std::span<const std::string> sentences) {
    std::string out;
    for (const auto& s : sentences) {
        if (!out.empty()) out += ' ';
        out += s;
    }
    return out;
}

} // namespace

std::string render_atom(const Atom& atom, const std::map<VariableId, std::string>& bindings, const Lexicon& lex) {
    if (atom.category() == FunctionCategory::Fact) {
        const auto body = clause(atom.first(), bindings);
        const auto* e = lex.lookup(atom.surface());
        if (!e || e->category != FunctionCategory::Fact || e->position == ConnectivePosition::Medial)
            return sentence_case(body);
        return sentence_case(e->text() + ", " + body);
    }
    const auto* e = entry_for(atom, lex);
    if (!e) throw ValidationError("lexicon has no connective for category " + std::string(category_name(atom.category())));
    const auto a1 = clause(atom.first(), bindings);
    const auto a2 = clause(atom.second(), bindings);
    const bool governed_first = e->order == ArgumentOrder::FirstClauseFirstArg;
    const auto& governed = governed_first ? a1 : a2;
    const auto& main = governed_first ? a2 : a1;
    if (e->position == ConnectivePosition::Medial) return sentence_case(main + " " + e->text() + " " + governed);
    return sentence_case(e->text() + " " + governed + ", " + main);
}

Sample textualize(const ReasoningPath& path, const Sample& source, const Lexicon& lex) {
    std::vector<std::string> sentences;
    for (const auto& a : path.body) sentences.push_back(render_atom(a, path.bindings, lex));
    Sample s = source;
    s.context = join_sentences(sentences);
    return s;
}

std::array<double, 4> OverlapScorer::score(const Sample& s) const {
    const auto ctx_tokens = tokenize(s.context);
    const std::set<std::string> ctx(ctx_tokens.begin(), ctx_tokens.end());
    std::array<double, 4> logits{};
    for (std::size_t i = 0; i < 4; ++i) {
        const auto toks = tokenize(s.options[i]);
        std::size_t hit = 0;
        for (const auto& t : toks) hit += ctx.contains(t);
        const double overlap = toks.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(toks.size());
        logits[i] = overlap / temperature_;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (auto& l : logits) z += (l = std::exp(l - m));
    for (auto& l : logits) l /= z;
    return logits;
}

void FilterConfig::validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ValidationError("filter threshold must lie in [0, 1], got " + std::to_string(threshold));
}

namespace {
void emit_warning(const FilterConfig& cfg, const std::string& msg) {
    if (cfg.warn) cfg.warn(msg);
    else std::cerr << "warning: " << msg << '\n';
}
} // namespace

std::vector<Scored> filter(std::span<const std::pair<Sample, int>> candidates, const FilterConfig& cfg) {
    cfg.validate();
    std::vector<Scored> kept;
    for (const auto& [sample, gold] : candidates) {
        if (!cfg.scorer) {
            kept.push_back({sample, std::nullopt});
            continue;
        }
        std::array<double, 4> scores;
        try {
            scores = cfg.scorer->score(sample);
        } catch (const std::exception& e) {
            emit_warning(cfg, "scorer " + cfg.scorer->name() + " failed on " + sample.id + ": " + e.what());
            continue;
        }
        const auto best = static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
        const double top = scores[static_cast<std::size_t>(best)];
        if (best == gold && top > cfg.threshold) kept.push_back({sample, top});
    }
    return kept;
}

namespace {

// Derivation steps behind `atom`, premises before conclusions.
void collect_provenance(const AtomBase& base, const Atom& atom, std::set<Atom, AtomLogicalLess>& seen,
                        std::vector<DerivationStep>& out) {
    if (seen.contains(atom)) return;
    seen.insert(atom);
    const auto* d = base.trace(atom);
    if (!d || d->rule == kRuleAxiom) return;
    for (const auto& p : d->premises) collect_provenance(base, p, seen, out);
    out.push_back({d->rule, d->premises, atom});
}

} // namespace

std::vector<AugmentedSample> augment(std::span<const Sample> dataset, const Lexicon& lex, const EpeConfig& epe,
                                     const FilterConfig& filter_cfg) {
    filter_cfg.validate();
    std::vector<AugmentedSample> out;
    for (const auto& sample : dataset) {
        try {
            if (!sample.label) throw ValidationError("sample has no label");
            const auto paths = build_paths(sample, lex);
            const auto& gold = paths[static_cast<std::size_t>(*sample.label)];
            const auto base = closure(gold.body, epe.closure);
            const auto mined = mine_combinations(base, gold, epe.limits, epe.closure);

            std::vector<std::pair<Sample, int>> candidates;
            std::vector<std::vector<DerivationStep>> provenance;
            for (std::size_t k = 0; k < mined.size(); ++k) {
                Sample s = textualize(mined[k], sample, lex);
                s.id = sample.id + "-epe" + std::to_string(k);
                candidates.emplace_back(std::move(s), *sample.label);
                std::set<Atom, AtomLogicalLess> seen;
                std::vector<DerivationStep> steps;
                for (const auto& a : mined[k].body) collect_provenance(base, a, seen, steps);
                provenance.push_back(std::move(steps));
            }
            const auto kept = filter(candidates, filter_cfg);
            // filter preserves order, so kept samples can be matched by id.
            std::size_t k = 0;
            for (const auto& sc : kept) {
                while (candidates[k].first.id != sc.sample.id) ++k;
                out.push_back({sc.sample, provenance[k], sample.id, sc.confidence});
            }
        } catch (const std::exception& e) {
            emit_warning(filter_cfg, "augment skipped " + sample.id + ": " + e.what());
        }
    }
    return out;
}

std::pair<std::vector<Atom>, std::vector<Atom>> extract_aligned(const std::string& a, const std::string& b,
                                                                const Lexicon& lex) {
    VariableTable vars;
    auto first = extract_text(a, lex, vars);
    auto second = extract_text(b, lex, vars);
    return {std::move(first), std::move(second)};
}

namespace {

struct ContextView {
    std::vector<std::string> sentences;
    std::vector<Atom> atoms;
    std::map<VariableId, std::string> bindings;
};

ContextView view_context(const Sample& sample, const Lexicon& lex) {
    ContextView v;
    VariableTable vars;
    v.sentences = split_sentences(sample.context);
    for (auto& s : v.sentences) {
        v.atoms.push_back(extract_atom(s, lex, vars));
        s += '.'; // split_sentences drops terminators
    }
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const VariableId id{static_cast<std::uint32_t>(i)};
        v.bindings[id] = vars.text(id);
    }
    return v;
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

Perturbation finish(const Sample& sample, ContextView& v, std::size_t i, Atom after, std::string kind,
                    const Lexicon& lex) {
    Perturbation p;
    p.sample = sample;
    p.sentence = i;
    p.before = v.atoms[i];
    p.kind = std::move(kind);
    v.sentences[i] = render_atom(after, v.bindings, lex);
    p.after = std::move(after);
    p.sample.context = join_sentences(v.sentences);
    return p;
}

Perturbation unchanged(const Sample& sample) {
    Perturbation p;
    p.sample = sample;
    p.kind = "none";
    return p;
}

} // namespace

Perturbation perturb_equivalent(const Sample& sample, const Lexicon& lex, std::uint64_t seed,
                                const SemanticsMap& sem) {
    auto v = view_context(sample, lex);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < v.atoms.size(); ++i)
        if (v.atoms[i].category() != FunctionCategory::Fact) eligible.push_back(i);
    if (eligible.empty()) return unchanged(sample);

    std::mt19937_64 rng(seed);
    const std::size_t i = eligible[pick(rng, eligible.size())];
    const Atom& a = v.atoms[i];

    std::vector<std::pair<Atom, std::string>> options;
    for (const auto* e : lex.by_category(a.category()))
        if (e->text() != a.surface()) options.emplace_back(Atom(a.category(), e->text(), {a.first(), a.second()}), "synonym");
    if (a.category() == FunctionCategory::NA) options.emplace_back(na_to_sa(a), "na_to_sa");
    else options.emplace_back(contrapositive(a), "contrapositive");
    // Synonyms and the rewrite are drawn with equal weight.
    const bool rewrite = options.size() == 1 || pick(rng, 2) == 1;
    auto choice = rewrite ? options.back() : options[pick(rng, options.size() - 1)];
    if (!equivalent(a, choice.first, sem)) {
        if (options.size() == 1) return unchanged(sample);
        choice = options[pick(rng, options.size() - 1)];
    }
    auto p = finish(sample, v, i, choice.first, choice.second, lex);
    p.changed = true;
    return p;
}

Perturbation perturb_adversarial(const Sample& sample, const Lexicon& lex, std::uint64_t seed,
                                 const SemanticsMap& sem) {
    auto v = view_context(sample, lex);
    if (v.atoms.empty()) return unchanged(sample);
    std::mt19937_64 rng(seed);
    const std::size_t i = pick(rng, v.atoms.size());
    const Atom& a = v.atoms[i];

    Atom after = a;
    std::string kind;
    if (a.category() != FunctionCategory::Fact && pick(rng, 2) == 0) {
        std::vector<const ConnectiveEntry*> pool;
        for (auto c : {FunctionCategory::Cause, FunctionCategory::SA, FunctionCategory::NA})
            if (c != a.category())
                for (const auto* e : lex.by_category(c)) pool.push_back(e);
        const auto* e = pool[pick(rng, pool.size())];
        after = Atom(e->category, e->text(), {a.first(), a.second()});
        kind = "category";
    } else {
        auto lits = a.literals();
        const std::size_t j = pick(rng, lits.size());
        lits[j] = negate(lits[j]);
        after = Atom(a.category(), a.surface(), lits);
        kind = "polarity";
    }
    const bool changed = !equivalent(a, after, sem);
    auto p = finish(sample, v, i, std::move(after), std::move(kind), lex);
    p.changed = changed;
    return p;
}

} // namespace logipath
