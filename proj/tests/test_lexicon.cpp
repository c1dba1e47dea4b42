#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "logipath/error.hpp"
#include "logipath/lexicon.hpp"

using namespace logipath;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::ofstream(p) << text;
    return p;
}

std::optional<ConnectiveMatch> match(const std::string& sentence, const Lexicon& lex = Lexicon::bundled()) {
    return match_connective(tokenize(sentence), lex);
}

} // namespace

TEST_CASE("bundled lexicon covers all four categories with at least 100 entries") {
    const auto& lex = Lexicon::bundled();
    CHECK(lex.entries().size() >= 100);
    for (auto c : kAllCategories) CHECK_FALSE(lex.by_category(c).empty());
    for (const char* p : {"because", "since", "only if", "unless", "in fact", "if", "when"})
        CHECK_MESSAGE(lex.lookup(p) != nullptr, p);
    CHECK(lex.lookup("because")->category == FunctionCategory::Cause);
    CHECK(lex.lookup("only if")->category == FunctionCategory::NA);
    CHECK(lex.lookup("in fact")->category == FunctionCategory::Fact);

    std::set<std::string> seen;
    for (const auto& e : lex.entries()) CHECK(seen.insert(e.text()).second);
    for (std::size_t i = 1; i < lex.entries().size(); ++i)
        CHECK(lex.entries()[i - 1].phrase.size() >= lex.entries()[i].phrase.size());
}

TEST_CASE("load_lexicon merges user entries over the defaults") {
    CHECK(load_lexicon(std::nullopt).entries().size() == Lexicon::bundled().entries().size());

    const auto path = write_temp("logipath_lex_ok.tsv",
                                 "# extra\ngranted that\tSA\teither\tfirst-clause-first-arg\n"
                                 "because\tSA\teither\tfirst-clause-first-arg\n");
    const auto lex = load_lexicon(path);
    REQUIRE(lex.lookup("granted that"));
    CHECK(lex.lookup("granted that")->category == FunctionCategory::SA);
    CHECK(lex.lookup("because")->category == FunctionCategory::SA);
    CHECK(lex.entries().size() == Lexicon::bundled().entries().size() + 1);
}

TEST_CASE("malformed lexicon rows name their line") {
    const auto bad_cat = write_temp("logipath_lex_bad.tsv",
                                    "if\tSA\teither\tfirst-clause-first-arg\n# c\nfoo\tXY\teither\tfirst-clause-first-arg\n");
    try {
        load_lexicon(bad_cat);
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
        CHECK(std::string(e.what()).find("XY") != std::string::npos);
    }
    CHECK_THROWS_AS(Lexicon::parse("if\tSA\teither\n"), ValidationError);
    CHECK_THROWS_AS(Lexicon::parse("if\tSA\tsomewhere\tfirst-clause-first-arg\n"), ValidationError);
    CHECK_THROWS_AS(Lexicon::parse("if\tSA\teither\tfirst-clause-first-arg\nif\tNA\teither\tfirst-clause-first-arg\n"),
                    ValidationError);
}

TEST_CASE("lexicon text form round-trips") {
    const auto& lex = Lexicon::bundled();
    const auto again = Lexicon::parse(lex.to_text());
    CHECK(again.to_text() == lex.to_text());
    REQUIRE(again.entries().size() == lex.entries().size());
    for (std::size_t i = 0; i < lex.entries().size(); ++i) CHECK(again.entries()[i] == lex.entries()[i]);
}

TEST_CASE("tokenize") {
    CHECK(tokenize("Paula won't go, Bill's sure.") ==
          std::vector<std::string>{"paula", "wo", "n't", "go", ",", "bill's", "sure"});
    CHECK(tokenize("").empty());
}

TEST_CASE("match_connective picks the longest phrase") {
    auto m = match("paula will visit the dentist only if bill goes golfing");
    REQUIRE(m);
    CHECK(m->entry.text() == "only if");
    CHECK(m->entry.category == FunctionCategory::NA);
    CHECK(m->begin == 5);

    CHECK_FALSE(match("the sky is blue"));

    m = match("the light is on if and only if the switch is up");
    REQUIRE(m);
    CHECK(m->entry.text() == "if and only if");
}

TEST_CASE("match_connective respects position and breaks ties by earliest span") {
    // "therefore" is medial-only
    CHECK_FALSE(match("therefore the plan fails"));
    auto m = match("the plan fails , therefore the team regroups");
    REQUIRE(m);
    CHECK(m->entry.text() == "therefore");

    m = match("if it rains , the game stops because the field floods");
    REQUIRE(m);
    CHECK(m->entry.text() == "if");
    CHECK(m->begin == 0);

    // "in fact" is initial-only
    CHECK_FALSE(match("the sky is in fact blue"));
}

TEST_CASE("longest-match property holds over the bundled lexicon") {
    const auto& lex = Lexicon::bundled();
    const std::vector<std::string> sentences = {
        "we will go only if it is sunny and so long as the car works",
        "unless the fee is paid , the account closes",
        "as soon as the bell rings , the class ends which means that we leave",
        "in fact the museum opened",
        "the road is closed because of the fact that the bridge collapsed"};
    for (const auto& s : sentences) {
        const auto toks = tokenize(s);
        const auto m = match_connective(toks, lex);
        REQUIRE(m);
        for (const auto& e : lex.entries()) {
            for (std::size_t st = 0; st + e.phrase.size() <= toks.size(); ++st) {
                if (e.position == ConnectivePosition::Initial && st != 0) continue;
                if (e.position == ConnectivePosition::Medial && st == 0) continue;
                if (std::equal(e.phrase.begin(), e.phrase.end(), toks.begin() + static_cast<long>(st)))
                    CHECK(e.phrase.size() <= m->end - m->begin);
            }
        }
    }
}
