#include "logipath/logic.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "logipath/error.hpp"

namespace logipath {

std::string_view category_name(FunctionCategory c) {
    switch (c) {
    case FunctionCategory::Cause: return "Cause";
    case FunctionCategory::SA: return "SA";
    case FunctionCategory::NA: return "NA";
    case FunctionCategory::Fact: return "Fact";
    }
    return "?";
}

std::optional<FunctionCategory> parse_category(std::string_view tag) {
    for (auto c : kAllCategories)
        if (category_name(c) == tag) return c;
    return std::nullopt;
}

std::string variable_name(VariableId id) {
    // bijective base-26
    std::string out;
    std::uint64_t n = std::uint64_t{id.value} + 1;
    while (n > 0) {
        --n;
        out.push_back(static_cast<char>('A' + n % 26));
        n /= 26;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::optional<VariableId> parse_variable_name(std::string_view name) {
    if (name.empty() || name.size() > 6) return std::nullopt;
    std::uint64_t n = 0;
    for (char ch : name) {
        if (ch < 'A' || ch > 'Z') return std::nullopt;
        n = n * 26 + static_cast<std::uint64_t>(ch - 'A' + 1);
    }
    return VariableId{static_cast<std::uint32_t>(n - 1)};
}

std::string to_string(const Literal& lit) {
    return (lit.positive ? "" : "~") + variable_name(lit.variable);
}

Atom::Atom(FunctionCategory category, std::string surface, std::vector<Literal> literals)
    : category_(category), surface_(std::move(surface)), literals_(std::move(literals)) {
    const std::size_t want = category == FunctionCategory::Fact ? 1 : 2;
    if (literals_.size() != want)
        throw ValidationError(std::string(category_name(category)) + " atom needs " +
                              std::to_string(want) + " literal(s), got " +
                              std::to_string(literals_.size()));
    if (surface_.empty()) throw ValidationError("atom surface must be non-empty");
}

Atom Atom::fact(Literal lit, std::string surface) {
    return Atom(FunctionCategory::Fact, std::move(surface), {lit});
}

bool atoms_equal(const Atom& a, const Atom& b) {
    return a.category() == b.category() && a.literals() == b.literals();
}

bool AtomLogicalLess::operator()(const Atom& a, const Atom& b) const {
    if (a.category() != b.category()) return a.category() < b.category();
    return a.literals() < b.literals();
}

std::string surface_to_camel(std::string_view surface) {
    std::string out;
    bool upper = true;
    for (char ch : surface) {
        if (ch == ' ') {
            upper = true;
            continue;
        }
        out.push_back(upper ? static_cast<char>(std::toupper(static_cast<unsigned char>(ch))) : ch);
        upper = false;
    }
    return out;
}

std::string camel_to_surface(std::string_view camel) {
    std::string out;
    for (std::size_t i = 0; i < camel.size(); ++i) {
        const auto ch = static_cast<unsigned char>(camel[i]);
        if (std::isupper(ch)) {
            if (i > 0) out.push_back(' ');
            out.push_back(static_cast<char>(std::tolower(ch)));
        } else {
            out.push_back(static_cast<char>(ch));
        }
    }
    return out;
}

std::string to_string(const Atom& atom) {
    std::string out(category_name(atom.category()));
    out += ':';
    out += surface_to_camel(atom.surface());
    out += '(';
    for (std::size_t i = 0; i < atom.literals().size(); ++i) {
        if (i) out += ',';
        out += to_string(atom.literals()[i]);
    }
    out += ')';
    return out;
}

Atom parse_atom(std::string_view text) {
    const auto colon = text.find(':');
    const auto open = text.find('(');
    if (colon == std::string_view::npos || open == std::string_view::npos || open < colon ||
        text.empty() || text.back() != ')')
        throw ValidationError("malformed atom: " + std::string(text));
    const auto category = parse_category(text.substr(0, colon));
    if (!category) throw ValidationError("unknown category in atom: " + std::string(text));
    const auto camel = text.substr(colon + 1, open - colon - 1);
    if (camel.empty()) throw ValidationError("missing surface in atom: " + std::string(text));

    std::vector<Literal> lits;
    auto args = text.substr(open + 1, text.size() - open - 2);
    while (true) {
        const auto comma = args.find(',');
        auto tok = args.substr(0, comma);
        Literal lit;
        if (!tok.empty() && tok.front() == '~') {
            lit.positive = false;
            tok.remove_prefix(1);
        }
        const auto id = parse_variable_name(tok);
        if (!id) throw ValidationError("bad variable in atom: " + std::string(text));
        lit.variable = *id;
        lits.push_back(lit);
        if (comma == std::string_view::npos) break;
        args.remove_prefix(comma + 1);
    }
    return Atom(*category, camel_to_surface(camel), std::move(lits));
}

namespace {

void collect_variables(const std::vector<Atom>& atoms, std::vector<VariableId>& out) {
    for (const auto& a : atoms)
        for (const auto& l : a.literals()) out.push_back(l.variable);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void ReasoningPath::validate() const {
    if (body.empty()) throw ValidationError("reasoning path body is empty");
    if (head.empty()) throw ValidationError("reasoning path head is empty");
    if (confidence && (*confidence < 0.0 || *confidence > 1.0))
        throw ValidationError("confidence outside [0,1]");
    std::vector<VariableId> vars;
    collect_variables(body, vars);
    collect_variables(head, vars);
    for (auto v : vars)
        if (!bindings.contains(v))
            throw ValidationError("variable " + variable_name(v) + " has no binding");
}

std::string serialize_path(const ReasoningPath& path) {
    std::string out;
    for (const auto& a : path.body) out += "body\t" + to_string(a) + '\n';
    for (const auto& a : path.head) out += "head\t" + to_string(a) + '\n';
    out += "confidence\t" + (path.confidence ? format_double(*path.confidence) : "unset") + '\n';
    for (const auto& [id, text] : path.bindings) out += "bind\t" + variable_name(id) + '\t' + text + '\n';
    return out;
}

ReasoningPath parse_path(std::string_view text) {
    ReasoningPath path;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ValidationError("path line " + std::to_string(lineno) + ": missing tab");
        const auto key = line.substr(0, tab);
        const auto rest = line.substr(tab + 1);
        if (key == "body") {
            path.body.push_back(parse_atom(rest));
        } else if (key == "head") {
            path.head.push_back(parse_atom(rest));
        } else if (key == "confidence") {
            if (rest != "unset") {
                double v = 0;
                const auto [p, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
                if (ec != std::errc{} || p != rest.data() + rest.size())
                    throw ValidationError("path line " + std::to_string(lineno) + ": bad confidence");
                path.confidence = v;
            }
        } else if (key == "bind") {
            const auto tab2 = rest.find('\t');
            const auto id = parse_variable_name(rest.substr(0, tab2));
            if (tab2 == std::string::npos || !id)
                throw ValidationError("path line " + std::to_string(lineno) + ": bad binding");
            path.bindings[*id] = rest.substr(tab2 + 1);
        } else {
            throw ValidationError("path line " + std::to_string(lineno) + ": unknown key " + key);
        }
    }
    return path;
}

bool paths_equal(const ReasoningPath& a, const ReasoningPath& b) {
    auto same_atoms = [](const std::vector<Atom>& x, const std::vector<Atom>& y) {
        return std::equal(x.begin(), x.end(), y.begin(), y.end(), [](const Atom& p, const Atom& q) {
            return atoms_equal(p, q) && p.surface() == q.surface();
        });
    };
    return same_atoms(a.body, b.body) && same_atoms(a.head, b.head) &&
           a.confidence == b.confidence && a.bindings == b.bindings;
}

void Sample::validate() const {
    if (label && (*label < 0 || *label > 3))
        throw ValidationError("sample " + id + ": label " + std::to_string(*label) + " outside 0..3");
}

} // namespace logipath
