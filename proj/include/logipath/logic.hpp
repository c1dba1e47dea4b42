#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace logipath {

/// The four connective categories. Cause, SA (sufficient assumption) and NA
/// (necessary assumption) relate two clauses; Fact asserts a single clause.
enum class FunctionCategory : std::uint8_t { Cause, SA, NA, Fact };

inline constexpr std::array<FunctionCategory, 4> kAllCategories = {
    FunctionCategory::Cause, FunctionCategory::SA, FunctionCategory::NA, FunctionCategory::Fact};

std::string_view category_name(FunctionCategory c);
std::optional<FunctionCategory> parse_category(std::string_view tag);
inline bool is_implication(FunctionCategory c) { return c != FunctionCategory::Fact; }

/// Opaque variable identifier. Rendered as A, B, ..., Z, AA, AB, ...
struct VariableId {
    std::uint32_t value = 0;
    auto operator<=>(const VariableId&) const = default;
};

std::string variable_name(VariableId id);
std::optional<VariableId> parse_variable_name(std::string_view name);

struct Literal {
    VariableId variable;
    bool positive = true;
    auto operator<=>(const Literal&) const = default;
};

inline Literal negate(Literal lit) { return {lit.variable, !lit.positive}; }

std::string to_string(const Literal& lit);

/// Surface used by Fact atoms that carry no explicit connective.
inline constexpr std::string_view kBareFactSurface = "fact";

/// One connective applied to one or two signed variables.
///
/// `surface` keeps the matched phrase (lowercase words) so the atom can be
/// rendered back to text; logical comparisons ignore it.
class Atom {
public:
    Atom() = default;
    /// Throws ValidationError unless Fact atoms have one literal and the
    /// other categories two.
    Atom(FunctionCategory category, std::string surface, std::vector<Literal> literals);

    static Atom fact(Literal lit, std::string surface = std::string(kBareFactSurface));

    FunctionCategory category() const { return category_; }
    const std::string& surface() const { return surface_; }
    const std::vector<Literal>& literals() const { return literals_; }
    std::size_t arity() const { return literals_.size(); }
    const Literal& first() const { return literals_.front(); }
    const Literal& second() const { return literals_.at(1); }

private:
    FunctionCategory category_ = FunctionCategory::Fact;
    std::string surface_{kBareFactSurface};
    std::vector<Literal> literals_{Literal{}};
};

/// Category and signed literal list equal; surface ignored.
bool atoms_equal(const Atom& a, const Atom& b);

/// Strict weak order consistent with atoms_equal (category, then literals).
struct AtomLogicalLess {
    bool operator()(const Atom& a, const Atom& b) const;
};

/// "only if" -> "OnlyIf"
std::string surface_to_camel(std::string_view surface);
/// "OnlyIf" -> "only if"
std::string camel_to_surface(std::string_view camel);

/// Canonical text form, e.g. `NA:OnlyIf(A,~B)`.
std::string to_string(const Atom& atom);
/// Inverse of to_string(Atom); throws ValidationError on malformed text.
Atom parse_atom(std::string_view text);

/// An instantiated logical rule: body atoms (context) imply head atoms
/// (question followed by one option).
struct ReasoningPath {
    std::vector<Atom> body;
    std::vector<Atom> head;
    std::optional<double> confidence;
    std::map<VariableId, std::string> bindings;

    /// Throws ValidationError when body/head is empty, a variable is unbound
    /// or the confidence lies outside [0, 1].
    void validate() const;
};

/// Line-oriented text form used in dumps and golden files.
std::string serialize_path(const ReasoningPath& path);
ReasoningPath parse_path(std::string_view text);

bool paths_equal(const ReasoningPath& a, const ReasoningPath& b);

/// A four-option multiple-choice item.
struct Sample {
    std::string id;
    std::string context;
    std::string question;
    std::array<std::string, 4> options;
    std::optional<int> label;

    void validate() const;
    bool operator==(const Sample&) const = default;
};

struct DerivationStep {
    std::string rule;
    std::vector<Atom> inputs;
    Atom output;
};

struct AugmentedSample {
    Sample sample;
    std::vector<DerivationStep> provenance;
    std::string source_id;
    std::optional<double> confidence;
};

} // namespace logipath
