#include "logipath/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "logipath/error.hpp"

namespace logipath {

// Generated from data/lexicon.tsv at configure time.
extern const char* const kBundledLexiconText;

std::string_view position_name(ConnectivePosition p) {
    switch (p) {
    case ConnectivePosition::Initial: return "initial";
    case ConnectivePosition::Medial: return "medial";
    case ConnectivePosition::Either: return "either";
    }
    return "?";
}

std::string_view order_name(ArgumentOrder o) {
    return o == ArgumentOrder::FirstClauseFirstArg ? "first-clause-first-arg" : "second-clause-first-arg";
}

std::string ConnectiveEntry::text() const {
    std::string out;
    for (const auto& t : phrase) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

std::vector<std::vector<std::string>> Lexicon::default_negation_markers() {
    std::vector<std::vector<std::string>> m = {
        {"it", "is", "not", "the", "case", "that"},
        {"not"},
        {"no"},
        {"never"},
        {"n't"},
        {"cannot"},
        {"without"},
    };
    return m;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(std::string s) {
    const auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && issp(static_cast<unsigned char>(s[i]))) ++i;
    return s.substr(i);
}

} // namespace

Lexicon Lexicon::parse(std::string_view text, std::string_view origin) {
    Lexicon lex;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw ValidationError(std::string(origin) + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || trim(line).front() == '#') continue;
        const auto cols = split(line, '\t');
        if (cols.size() != 4) fail("expected 4 tab-separated columns, got " + std::to_string(cols.size()));

        ConnectiveEntry e;
        for (const auto& tok : split(trim(cols[0]), ' ')) {
            if (tok.empty()) continue;
            for (unsigned char ch : tok)
                if (!std::islower(ch)) fail("phrase must be lowercase letters: '" + cols[0] + "'");
            e.phrase.push_back(tok);
        }
        if (e.phrase.empty()) fail("empty phrase");

        const auto cat = parse_category(trim(cols[1]));
        if (!cat) fail("unknown category '" + trim(cols[1]) + "'");
        e.category = *cat;

        const auto pos = trim(cols[2]);
        if (pos == "initial") e.position = ConnectivePosition::Initial;
        else if (pos == "medial") e.position = ConnectivePosition::Medial;
        else if (pos == "either") e.position = ConnectivePosition::Either;
        else fail("unknown position '" + pos + "'");

        const auto ord = trim(cols[3]);
        if (ord == order_name(ArgumentOrder::FirstClauseFirstArg)) e.order = ArgumentOrder::FirstClauseFirstArg;
        else if (ord == order_name(ArgumentOrder::SecondClauseFirstArg)) e.order = ArgumentOrder::SecondClauseFirstArg;
        else fail("unknown order '" + ord + "'");

        if (lex.lookup(e.text())) fail("duplicate phrase '" + e.text() + "'");
        lex.entries_.push_back(std::move(e));
    }
    lex.sort_entries();
    return lex;
}

const Lexicon& Lexicon::bundled() {
    static const Lexicon lex = parse(kBundledLexiconText, "data/lexicon.tsv");
    return lex;
}

void Lexicon::merge(const Lexicon& overrides) {
    for (const auto& e : overrides.entries_) {
        auto it = std::find_if(entries_.begin(), entries_.end(),
                               [&](const ConnectiveEntry& x) { return x.phrase == e.phrase; });
        if (it != entries_.end()) *it = e;
        else entries_.push_back(e);
    }
    sort_entries();
}

void Lexicon::sort_entries() {
    std::sort(entries_.begin(), entries_.end(), [](const ConnectiveEntry& a, const ConnectiveEntry& b) {
        if (a.phrase.size() != b.phrase.size()) return a.phrase.size() > b.phrase.size();
        return a.phrase < b.phrase;
    });
}

const ConnectiveEntry* Lexicon::lookup(std::string_view phrase) const {
    for (const auto& e : entries_)
        if (e.text() == phrase) return &e;
    return nullptr;
}

std::vector<const ConnectiveEntry*> Lexicon::by_category(FunctionCategory c) const {
    std::vector<const ConnectiveEntry*> out;
    for (const auto& e : entries_)
        if (e.category == c) out.push_back(&e);
    return out;
}

std::string Lexicon::to_text() const {
    std::string out;
    for (const auto& e : entries_) {
        out += e.text();
        out += '\t';
        out += category_name(e.category);
        out += '\t';
        out += position_name(e.position);
        out += '\t';
        out += order_name(e.order);
        out += '\n';
    }
    return out;
}

Lexicon load_lexicon(const std::optional<std::filesystem::path>& path) {
    Lexicon lex = Lexicon::bundled();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ValidationError("cannot open lexicon file " + path->string());
        std::stringstream buf;
        buf << in.rdbuf();
        lex.merge(Lexicon::parse(buf.str(), path->string()));
    }
    return lex;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        // "doesn't" -> "does" "n't"
        if (cur.size() > 3 && cur.compare(cur.size() - 3, 3, "n't") == 0) {
            out.push_back(cur.substr(0, cur.size() - 3));
            out.emplace_back("n't");
        } else {
            while (!cur.empty() && (cur.back() == '\'' || cur.back() == '-')) cur.pop_back();
            std::size_t i = 0;
            while (i < cur.size() && (cur[i] == '\'' || cur[i] == '-')) ++i;
            if (i < cur.size()) out.push_back(cur.substr(i));
        }
        cur.clear();
    };
    for (char raw : text) {
        const auto ch = static_cast<unsigned char>(raw);
        if (std::isalnum(ch) || raw == '\'' || raw == '-' || ch >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(ch)));
        } else if (raw == ',') {
            flush();
            out.emplace_back(",");
        } else {
            flush();
        }
    }
    flush();
    return out;
}

std::optional<ConnectiveMatch> match_connective(std::span<const std::string> tokens,
                                                const Lexicon& lex) {
    std::optional<ConnectiveMatch> best;
    for (const auto& e : lex.entries()) {
        const auto n = e.phrase.size();
        if (best && n < best->end - best->begin) break; // entries sorted by length desc
        if (n > tokens.size()) continue;
        for (std::size_t start = 0; start + n <= tokens.size(); ++start) {
            if (best && best->end - best->begin == n && start >= best->begin) break;
            if (e.position == ConnectivePosition::Initial && start != 0) break;
            if (e.position == ConnectivePosition::Medial && start == 0) continue;
            if (!std::equal(e.phrase.begin(), e.phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(start)))
                continue;
            best = ConnectiveMatch{e, start, start + n};
            break;
        }
    }
    return best;
}

} // namespace logipath
