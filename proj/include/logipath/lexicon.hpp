#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "logipath/logic.hpp"

namespace logipath {

enum class ConnectivePosition { Initial, Medial, Either };

/// How the two clauses around a connective map onto (arg1, arg2).
///
/// The "first clause" is the one the connective introduces: X in both
/// "Because X, Y" and "Y because X". FirstClauseFirstArg binds it to arg1;
/// SecondClauseFirstArg binds the other (main) clause to arg1.
enum class ArgumentOrder { FirstClauseFirstArg, SecondClauseFirstArg };

std::string_view position_name(ConnectivePosition p);
std::string_view order_name(ArgumentOrder o);

struct ConnectiveEntry {
    std::vector<std::string> phrase; // lowercase tokens
    FunctionCategory category = FunctionCategory::Fact;
    ConnectivePosition position = ConnectivePosition::Either;
    ArgumentOrder order = ArgumentOrder::FirstClauseFirstArg;

    std::string text() const; // tokens joined by single spaces
    bool operator==(const ConnectiveEntry&) const = default;
};

/// Immutable-after-load connective table. Entries are kept sorted by
/// descending phrase length so longer phrases are tried before prefixes.
class Lexicon {
public:
    Lexicon() = default;

    /// The versioned list shipped in data/lexicon.tsv.
    static const Lexicon& bundled();
    /// Parses the tab-separated format; `origin` names the source in errors.
    static Lexicon parse(std::string_view text, std::string_view origin = "<lexicon>");

    /// Adds or replaces entries; `overrides` wins on phrase collision.
    void merge(const Lexicon& overrides);

    const ConnectiveEntry* lookup(std::string_view phrase) const;
    std::span<const ConnectiveEntry> entries() const { return entries_; }
    std::vector<const ConnectiveEntry*> by_category(FunctionCategory c) const;

    /// Multi-token negation markers, longest first.
    const std::vector<std::vector<std::string>>& negation_markers() const { return negation_; }

    std::string to_text() const;

private:
    void sort_entries();

    std::vector<ConnectiveEntry> entries_;
    std::vector<std::vector<std::string>> negation_ = default_negation_markers();

    static std::vector<std::vector<std::string>> default_negation_markers();
};

/// Bundled defaults merged with the entries of `path`, when given.
Lexicon load_lexicon(const std::optional<std::filesystem::path>& path);

/// Lowercases, splits on whitespace, keeps "," as its own token, drops other
/// punctuation and splits the "n't" clitic off its host word.
std::vector<std::string> tokenize(std::string_view text);

struct ConnectiveMatch {
    ConnectiveEntry entry;
    std::size_t begin = 0; // token span [begin, end)
    std::size_t end = 0;
};

/// Longest lexicon phrase occurring in `tokens` whose position constraint
/// holds (Initial: starts at token 0; Medial: starts later); ties go to the
/// earliest span.
std::optional<ConnectiveMatch> match_connective(std::span<const std::string> tokens,
                                                const Lexicon& lex);

} // namespace logipath
