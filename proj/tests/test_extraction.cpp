#include <fstream>
#include <sstream>

#include "doctest.h"
#include "logipath/error.hpp"
#include "logipath/extraction.hpp"

using namespace logipath;

namespace {

const Lexicon& lex() { return Lexicon::bundled(); }

std::string grounded(std::string_view sentence) {
    VariableTable vars;
    const auto a = extract_atom(sentence, lex(), vars);
    std::map<VariableId, std::string> b;
    for (const auto& l : a.literals()) b[l.variable] = vars.text(l.variable);
    return ground_atom(a, b);
}

Sample mini1() {
    Sample s;
    s.id = "mini-1";
    s.context = "Paula will visit the dentist only if Bill goes golfing. Bill goes golfing unless Carol stays home. "
                "It is not the case that Carol stays home. Paula likes the summer.";
    s.question = "Which one of the following can be properly inferred?";
    s.options = {"Paula will visit the dentist.", "Bill does not go golfing.", "Carol stays home.",
                 "Paula dislikes the summer."};
    s.label = 0;
    return s;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

TEST_CASE("split_sentences") {
    CHECK(split_sentences("A. B!") == std::vector<std::string>{"A", "B"});
    CHECK(split_sentences("").empty());
    CHECK(split_sentences("  ...  ").empty());
    CHECK(split_sentences("Is it? Yes; no.") == std::vector<std::string>{"Is it", "Yes", "no"});
    CHECK(split_sentences("He said \"stop. now\" and left.") ==
          std::vector<std::string>{"He said \"stop. now\" and left"});
    CHECK(split_sentences("It costs 3.5 dollars. Fine") == std::vector<std::string>{"It costs 3.5 dollars", "Fine"});
}

TEST_CASE("split_sentences keeps abbreviations intact on a hand-segmented corpus") {
    const std::string text =
        "Some fruits, e.g. apples and pears, ripen quickly. Dr. Smith disagreed with Mr. Jones. "
        "Several cities, i.e. the coastal ones, flooded; the inland towns did not. Prices rose by 2.5 percent! "
        "The committee met at 10 a.m. on Friday? It adjourned early.";
    const std::vector<std::string> gold = {
        "Some fruits, e.g. apples and pears, ripen quickly",
        "Dr. Smith disagreed with Mr. Jones",
        "Several cities, i.e. the coastal ones, flooded",
        "the inland towns did not",
        "Prices rose by 2.5 percent",
        "The committee met at 10 a.m. on Friday",
        "It adjourned early"};
    CHECK(split_sentences(text) == gold);
}

TEST_CASE("split_sentences reproduces the input modulo whitespace") {
    const std::string text = "If it rains, we stay. Unless it snows; we go! Really?";
    std::string joined;
    std::size_t pos = 0;
    for (const auto& s : split_sentences(text)) {
        pos = text.find(s, pos);
        REQUIRE(pos != std::string::npos);
        pos += s.size();
        joined += s;
    }
    auto strip = [](std::string s) {
        std::erase_if(s, [](char c) { return c == ' ' || c == '.' || c == '?' || c == '!' || c == ';'; });
        return s;
    };
    CHECK(strip(joined) == strip(text));
}

TEST_CASE("extract_atom examples") {
    CHECK(grounded("Paula will visit the dentist only if Bill goes golfing") ==
          "NA:OnlyIf(paula will visit the dentist,bill goes golfing)");
    CHECK(grounded("Paula will not visit the dentist") == "Fact:Fact(~paula will visit the dentist)");
    CHECK(grounded("Because it rained, the game was cancelled") ==
          "Cause:Because(it rained,the game was cancelled)");
    CHECK(grounded("The game was cancelled because it rained") ==
          "Cause:Because(it rained,the game was cancelled)");
    CHECK(grounded("It rained, so the game was cancelled") == "Cause:So(it rained,the game was cancelled)");
    CHECK(grounded("Therefore, the game was cancelled") == "Fact:Fact(the game was cancelled)");
    CHECK(grounded("It is not the case that it is not the case that the door is open") ==
          "Fact:Fact(the door is open)");
    // no comma after an initial connective: cannot split, falls back to Fact
    CHECK(grounded("If it rains the game stops") == "Fact:Fact(if it rains the game stops)");

    VariableTable vars;
    CHECK_THROWS_AS(extract_atom("", lex(), vars), ValidationError);
    CHECK_THROWS_AS(extract_atom(" , ", lex(), vars), ValidationError);
    CHECK_THROWS_AS(extract_atom("not never", lex(), vars), ValidationError);
}

TEST_CASE("a factual paragraph becomes a conjunction of facts") {
    VariableTable vars;
    const auto atoms = extract_text("The sky is blue. Grass is green. Water is wet. Snow is white.", lex(), vars);
    REQUIRE(atoms.size() == 4);
    for (std::uint32_t i = 0; i < 4; ++i) {
        CHECK(atoms[i].category() == FunctionCategory::Fact);
        CHECK(atoms[i].first() == Literal{VariableId{i}, true});
    }
}

TEST_CASE("build_paths") {
    const auto s = mini1();
    const auto paths = build_paths(s, lex());
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(paths[i].body.size() == 4);
        CHECK(paths[i].head.size() == 2);
        CHECK_NOTHROW(paths[i].validate());
        CHECK_FALSE(paths[i].confidence);
    }
    // option 0 repeats a context clause and so shares its variable
    CHECK(paths[0].head[1].first() == paths[0].body[0].first());

    // golden file (hand-labeled)
    std::string got;
    for (std::size_t i = 0; i < 4; ++i) got += "# option " + std::to_string(i) + "\n" + serialize_path(paths[i]);
    CHECK(got == read_file(LOGIPATH_DATA_DIR "/golden/mini-1.paths"));

    // deterministic
    const auto again = build_paths(s, lex());
    for (std::size_t i = 0; i < 4; ++i) CHECK(serialize_path(again[i]) == serialize_path(paths[i]));

    Sample bad = s;
    bad.label = 7;
    CHECK_THROWS_AS(build_paths(bad, lex()), ValidationError);
}

TEST_CASE("atom count equals sentence count") {
    Sample s = mini1();
    s.context = "If it rains, we stay. Unless it snows, we go. In fact, we went. We came back; we slept.";
    const auto paths = build_paths(s, lex());
    CHECK(paths[0].body.size() == split_sentences(s.context).size());
}

TEST_CASE("extraction accuracy on the hand-labeled corpus") {
    const auto gold = load_extraction_gold(LOGIPATH_DATA_DIR "/extraction_gold.tsv");
    CHECK(gold.size() == 60);
    const auto score = score_extraction(gold, lex());
    for (const auto& m : score.mismatches) MESSAGE(m);
    CHECK(score.accuracy() >= 0.95);
}
