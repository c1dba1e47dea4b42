#include "logipath/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <set>

#include "logipath/error.hpp"

namespace logipath {

namespace {

const std::set<std::string, std::less<>>& abbreviations() {
    static const std::set<std::string, std::less<>> abbr = {
        "e.g", "i.e", "etc", "mr", "mrs", "ms", "dr", "vs", "prof", "st", "jr", "sr",
        "u.s", "u.k", "inc", "ltd", "co", "corp", "approx", "dept", "fig", "cf", "al", "a.m", "p.m"};
    return abbr;
}

bool is_terminator(char c) { return c == '.' || c == '?' || c == '!' || c == ';'; }

std::string trim_copy(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Word (letters and interior dots) ending right before position `dot`.
std::string word_before(std::string_view text, std::size_t dot) {
    std::size_t b = dot;
    while (b > 0 && (std::isalpha(static_cast<unsigned char>(text[b - 1])) || text[b - 1] == '.')) --b;
    std::string w(text.substr(b, dot - b));
    for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return w;
}

} // namespace

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    bool quoted = false;
    auto emit = [&](std::size_t end) {
        auto seg = trim_copy(text.substr(start, end - start));
        if (!seg.empty()) out.push_back(std::move(seg));
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '"') {
            quoted = !quoted;
            continue;
        }
        if (quoted || !is_terminator(c)) continue;
        if (c == '.') {
            const bool digit_before = i > 0 && std::isdigit(static_cast<unsigned char>(text[i - 1]));
            const bool digit_after = i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]));
            if (digit_before && digit_after) continue;
            // Dot inside an abbreviation like "e.g." (followed by a letter).
            if (i + 1 < text.size() && std::isalpha(static_cast<unsigned char>(text[i + 1]))) continue;
            if (abbreviations().contains(word_before(text, i))) continue;
        }
        emit(i);
        std::size_t j = i;
        while (j + 1 < text.size() && is_terminator(text[j + 1])) ++j;
        i = j;
        start = j + 1;
    }
    emit(text.size());
    return out;
}

VariableId VariableTable::bind(const std::string& normalized_text) {
    if (auto it = ids_.find(normalized_text); it != ids_.end()) return it->second;
    const VariableId id{static_cast<std::uint32_t>(texts_.size())};
    ids_.emplace(normalized_text, id);
    texts_.push_back(normalized_text);
    return id;
}

std::optional<VariableId> VariableTable::find(const std::string& normalized_text) const {
    if (auto it = ids_.find(normalized_text); it != ids_.end()) return it->second;
    return std::nullopt;
}

const std::string& VariableTable::text(VariableId id) const { return texts_.at(id.value); }

NormalizedClause normalize_clause(std::span<const std::string> tokens, const Lexicon& lex) {
    NormalizedClause out;
    std::vector<std::string> kept;
    std::size_t i = 0;
    while (i < tokens.size()) {
        bool stripped = false;
        for (const auto& marker : lex.negation_markers()) {
            if (i + marker.size() <= tokens.size() &&
                std::equal(marker.begin(), marker.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
                out.positive = !out.positive;
                i += marker.size();
                stripped = true;
                break;
            }
        }
        if (stripped) continue;
        if (tokens[i] != ",") kept.push_back(tokens[i]);
        ++i;
    }
    for (const auto& t : kept) {
        if (!out.text.empty()) out.text += ' ';
        out.text += t;
    }
    return out;
}

namespace {

using Tokens = std::vector<std::string>;

void strip_commas(Tokens& t) {
    while (!t.empty() && t.front() == ",") t.erase(t.begin());
    while (!t.empty() && t.back() == ",") t.pop_back();
}

// "Therefore, X" asserts X: a medial-only connective cannot open a two-clause
// sentence, so it is dropped. The longest entry at the start decides, so
// "as a result of the fact that" is not cut down to "as a result".
void strip_leading_discourse(Tokens& t, const Lexicon& lex) {
    for (const auto& e : lex.entries()) {
        if (e.phrase.size() >= t.size() || !std::equal(e.phrase.begin(), e.phrase.end(), t.begin())) continue;
        if (e.position != ConnectivePosition::Medial) return;
        t.erase(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(e.phrase.size()));
        strip_commas(t);
        return;
    }
}

Literal bind_clause(std::span<const std::string> tokens, const Lexicon& lex, VariableTable& vars) {
    auto clause = normalize_clause(tokens, lex);
    if (clause.text.empty()) throw ValidationError("clause is empty after removing negation");
    return Literal{vars.bind(clause.text), clause.positive};
}

Atom bare_fact(const Tokens& t, const Lexicon& lex, VariableTable& vars) {
    return Atom::fact(bind_clause(t, lex, vars));
}

} // namespace

Atom extract_atom(std::string_view sentence, const Lexicon& lex, VariableTable& vars) {
    Tokens tokens = tokenize(sentence);
    strip_commas(tokens);
    if (tokens.empty()) throw ValidationError("empty sentence");
    if (normalize_clause(tokens, lex).text.empty())
        throw ValidationError("sentence is empty after normalization: '" + std::string(sentence) + "'");
    strip_leading_discourse(tokens, lex);

    const auto m = match_connective(tokens, lex);
    if (!m) return bare_fact(tokens, lex, vars);

    const auto& entry = m->entry;
    const auto surface = entry.text();
    Tokens before(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(m->begin));
    Tokens after(tokens.begin() + static_cast<std::ptrdiff_t>(m->end), tokens.end());
    strip_commas(before);
    strip_commas(after);

    if (entry.category == FunctionCategory::Fact) {
        Tokens rest = before;
        rest.insert(rest.end(), after.begin(), after.end());
        if (normalize_clause(rest, lex).text.empty()) return bare_fact(tokens, lex, vars);
        return Atom::fact(bind_clause(rest, lex, vars), surface);
    }

    Tokens governed, main;
    if (m->begin == 0) {
        // "Conn X, Y"
        const auto comma = std::find(after.begin(), after.end(), std::string(","));
        if (comma == after.end()) return bare_fact(tokens, lex, vars);
        governed.assign(after.begin(), comma);
        main.assign(comma + 1, after.end());
        strip_commas(main);
        if (!main.empty() && main.front() == "then") main.erase(main.begin());
    } else {
        // "Y conn X"
        main = before;
        governed = after;
    }
    if (normalize_clause(governed, lex).text.empty() || normalize_clause(main, lex).text.empty())
        return bare_fact(tokens, lex, vars);

    const bool governed_first = entry.order == ArgumentOrder::FirstClauseFirstArg;
    const auto& arg1 = governed_first ? governed : main;
    const auto& arg2 = governed_first ? main : governed;
    const auto l1 = bind_clause(arg1, lex, vars);
    const auto l2 = bind_clause(arg2, lex, vars);
    return Atom(entry.category, surface, {l1, l2});
}

std::vector<Atom> extract_text(std::string_view text, const Lexicon& lex, VariableTable& vars) {
    std::vector<Atom> atoms;
    for (const auto& s : split_sentences(text)) atoms.push_back(extract_atom(s, lex, vars));
    return atoms;
}

std::array<ReasoningPath, 4> build_paths(const Sample& sample, const Lexicon& lex) {
    sample.validate();
    VariableTable vars;
    const auto body = extract_text(sample.context, lex, vars);
    const auto question = extract_text(sample.question, lex, vars);
    std::array<ReasoningPath, 4> paths;
    for (std::size_t i = 0; i < 4; ++i) {
        auto& p = paths[i];
        p.body = body;
        p.head = question;
        const auto opt = extract_text(sample.options[i], lex, vars);
        p.head.insert(p.head.end(), opt.begin(), opt.end());
        for (const auto* part : {&p.body, &p.head})
            for (const auto& a : *part)
                for (const auto& l : a.literals()) p.bindings[l.variable] = vars.text(l.variable);
        if (p.body.empty()) throw ValidationError("sample " + sample.id + ": context has no sentences");
        if (p.head.empty()) throw ValidationError("sample " + sample.id + ": empty question and option");
    }
    return paths;
}

std::string ground_atom(const Atom& atom, const std::map<VariableId, std::string>& bindings) {
    std::string out(category_name(atom.category()));
    out += ':' + surface_to_camel(atom.surface()) + '(';
    for (std::size_t i = 0; i < atom.literals().size(); ++i) {
        const auto& l = atom.literals()[i];
        if (i) out += ',';
        if (!l.positive) out += '~';
        const auto it = bindings.find(l.variable);
        out += it == bindings.end() ? "?" + variable_name(l.variable) : it->second;
    }
    return out + ')';
}

std::vector<GoldSentence> load_extraction_gold(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open extraction corpus " + path.string());
    std::vector<GoldSentence> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.front() == '#') continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos)
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected 3 columns");
        const Atom atom = parse_atom(line.substr(t1 + 1, t2 - t1 - 1));
        std::map<VariableId, std::string> bindings;
        std::istringstream binds(line.substr(t2 + 1));
        std::string item;
        while (std::getline(binds, item, ';')) {
            const auto eq = item.find('=');
            const auto id = parse_variable_name(item.substr(0, eq));
            if (eq == std::string::npos || !id)
                throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": bad binding '" + item + "'");
            bindings[*id] = item.substr(eq + 1);
        }
        out.push_back({line.substr(0, t1), ground_atom(atom, bindings)});
    }
    return out;
}

ExtractionScore score_extraction(std::span<const GoldSentence> gold, const Lexicon& lex) {
    ExtractionScore score;
    for (const auto& g : gold) {
        ++score.total;
        VariableTable vars;
        std::string got;
        try {
            const Atom a = extract_atom(g.sentence, lex, vars);
            std::map<VariableId, std::string> bindings;
            for (const auto& l : a.literals()) bindings[l.variable] = vars.text(l.variable);
            got = ground_atom(a, bindings);
        } catch (const ValidationError& e) {
            got = std::string("error: ") + e.what();
        }
        if (got == g.grounded) ++score.correct;
        else score.mismatches.push_back(g.sentence + ": got " + got + " want " + g.grounded);
    }
    return score;
}

} // namespace logipath
