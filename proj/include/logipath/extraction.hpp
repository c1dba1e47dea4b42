#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "logipath/lexicon.hpp"
#include "logipath/logic.hpp"

namespace logipath {

/// Splits on `.`, `?`, `!` and `;` outside double quotes. Known abbreviations
/// ("e.g.", "Dr.", ...) and decimal points do not end a sentence. Segments
/// are trimmed and returned without their terminator; empty ones are dropped.
std::vector<std::string> split_sentences(std::string_view text);

/// Normalized clause text -> variable id. Confined to one sample.
class VariableTable {
public:
    VariableId bind(const std::string& normalized_text);
    std::optional<VariableId> find(const std::string& normalized_text) const;
    const std::string& text(VariableId id) const;
    std::size_t size() const { return texts_.size(); }

private:
    std::map<std::string, VariableId> ids_;
    std::vector<std::string> texts_;
};

struct NormalizedClause {
    std::string text; // lowercase, single-spaced, negation markers removed
    bool positive = true;
};

/// Strips negation markers; an odd count flips polarity.
NormalizedClause normalize_clause(std::span<const std::string> tokens, const Lexicon& lex);

/// Maps one sentence to exactly one atom. Throws ValidationError when the
/// sentence is empty after normalization.
Atom extract_atom(std::string_view sentence, const Lexicon& lex, VariableTable& vars);

/// One path per option: body = context atoms in order, head = question atoms
/// then option atoms. A single variable table spans the whole sample.
std::array<ReasoningPath, 4> build_paths(const Sample& sample, const Lexicon& lex);

/// Atoms of every sentence of `text`, in order.
std::vector<Atom> extract_text(std::string_view text, const Lexicon& lex, VariableTable& vars);

/// Atom with variables replaced by their clause text, e.g.
/// `NA:OnlyIf(paula will visit the dentist,~bill goes golfing)`.
std::string ground_atom(const Atom& atom, const std::map<VariableId, std::string>& bindings);

/// One hand-labeled sentence of an extraction corpus.
struct GoldSentence {
    std::string sentence;
    std::string grounded; // ground_atom of the expected atom
};

/// Reads `sentence<TAB>atom<TAB>A=text;B=text` rows; `#` starts a comment.
std::vector<GoldSentence> load_extraction_gold(const std::filesystem::path& path);

struct ExtractionScore {
    std::size_t total = 0;
    std::size_t correct = 0;
    std::vector<std::string> mismatches; // "sentence: got X want Y"
    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Sentence-level atom accuracy: category, surface, polarities and bound
/// clause texts must all match.
ExtractionScore score_extraction(std::span<const GoldSentence> gold, const Lexicon& lex);

} // namespace logipath
