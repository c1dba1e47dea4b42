#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "logipath/engine.hpp"
#include "logipath/lexicon.hpp"
#include "logipath/logic.hpp"

namespace logipath {

struct MineLimits {
    /// 0 means "original body size + 2".
    std::size_t max_size = 0;
    std::size_t max_candidates = 20;
};

/// Subsets of `base` (ascending size, then canonical text) whose closure
/// contains every atom of `original.body`. The original body itself is
/// skipped. Each result keeps the original head and the bindings it uses.
std::vector<ReasoningPath> mine_combinations(const AtomBase& base, const ReasoningPath& original,
                                             const MineLimits& limits = {}, const ClosureConfig& cfg = {});

/// One sentence for `atom`. Initial/either connectives give
/// "Conn governed, main.", medial ones "Main conn governed."; negative
/// literals get "it is not the case that". Throws ValidationError on an
/// unbound variable.
std::string render_atom(const Atom& atom, const std::map<VariableId, std::string>& bindings, const Lexicon& lex);

/// New sample whose context is the rendered body; question and options come
/// from `source` unchanged.
Sample textualize(const ReasoningPath& path, const Sample& source, const Lexicon& lex);

class ConfidenceScorer {
public:
    virtual ~ConfidenceScorer() = default;
    virtual std::string name() const = 0;
    /// Four non-negative scores summing to 1.
    virtual std::array<double, 4> score(const Sample& s) const = 0;
};

/// Softmax over option/context token overlap. A baseline, not a reasoner.
class OverlapScorer : public ConfidenceScorer {
public:
    explicit OverlapScorer(double temperature = 0.125) : temperature_(temperature) {}
    std::string name() const override { return "overlap"; }
    std::array<double, 4> score(const Sample& s) const override;

private:
    double temperature_;
};

struct FilterConfig {
    double threshold = 0.9;
    /// nullptr keeps every candidate without a confidence.
    const ConfidenceScorer* scorer = nullptr;
    std::function<void(const std::string&)> warn; // defaults to stderr

    void validate() const;
};

struct Scored {
    Sample sample;
    std::optional<double> confidence;
};

/// Keeps a candidate iff argmax(scores) == gold and the max exceeds the
/// threshold. Scorer exceptions skip the candidate with a warning.
std::vector<Scored> filter(std::span<const std::pair<Sample, int>> candidates, const FilterConfig& cfg);

struct EpeConfig {
    ClosureConfig closure{};
    MineLimits limits{};
};

/// Mine, textualize and filter each labeled sample. Samples that fail are
/// reported through `filter_cfg.warn` and skipped.
std::vector<AugmentedSample> augment(std::span<const Sample> dataset, const Lexicon& lex, const EpeConfig& epe,
                                     const FilterConfig& filter_cfg);

struct Perturbation {
    Sample sample;
    bool changed = false;
    std::string kind; // "synonym", "contrapositive", "na_to_sa", "category", "polarity" or "none"
    std::size_t sentence = 0;
    std::optional<Atom> before, after;
};

/// Rewrites one random non-Fact sentence into an oracle-equivalent one.
/// `changed` is false when the context has no non-Fact atom.
Perturbation perturb_equivalent(const Sample& sample, const Lexicon& lex, std::uint64_t seed,
                                const SemanticsMap& sem = {});

/// Swaps one random atom's connective for another category, or flips one
/// literal. `changed` is true iff the new atom is not equivalent to the old.
Perturbation perturb_adversarial(const Sample& sample, const Lexicon& lex, std::uint64_t seed,
                                 const SemanticsMap& sem = {});

/// Context atoms of two texts extracted against one variable table, so
/// their variables line up.
std::pair<std::vector<Atom>, std::vector<Atom>> extract_aligned(const std::string& a, const std::string& b,
                                                                const Lexicon& lex);

} // namespace logipath
