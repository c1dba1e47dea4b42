#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "logipath/engine.hpp"
#include "logipath/error.hpp"
#include "logipath/extraction.hpp"
#include "logipath/train_eval.hpp"
#include "oracles.hpp"

using namespace logipath;
using namespace logipath::testing;

namespace {

const Lexicon& lex() { return Lexicon::bundled(); }

ModelConfig tiny_model() {
    ModelConfig c;
    c.d = 16;
    c.heads = 2;
    c.layers = 2;
    c.vocab_hash_dim = 512;
    c.max_positions = 32;
    c.seed = 3;
    return c;
}

std::vector<PreparedSample> prepare_all(const PathModel& m, const std::vector<Sample>& data) {
    std::vector<PreparedSample> out;
    for (const auto& s : data) out.push_back(m.prepare(s, lex()));
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Fresh uniform-random scores on every call.
class RandomScorer : public ConfidenceScorer {
public:
    std::string name() const override { return "random"; }
    std::array<double, 4> score(const Sample&) const override {
        std::array<double, 4> s{};
        double z = 0;
        for (auto& x : s) z += (x = u_(rng_));
        for (auto& x : s) x /= z;
        return s;
    }

private:
    mutable std::mt19937_64 rng_{99};
    mutable std::uniform_real_distribution<double> u_{0.0, 1.0};
};

// Sees only the multiset of non-connective context tokens plus the option.
class ConnectiveBlindScorer : public ConfidenceScorer {
public:
    std::string name() const override { return "blind"; }
    std::array<double, 4> score(const Sample& s) const override {
        std::set<std::string> drop;
        for (const auto& e : lex().entries())
            for (const auto& t : e.phrase) drop.insert(t);
        std::multiset<std::string> ctx;
        for (const auto& t : tokenize(s.context))
            if (!drop.count(t) && t != ",") ctx.insert(t);
        std::array<double, 4> out{};
        double z = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            std::size_t overlap = 0;
            for (const auto& t : tokenize(s.options[i])) overlap += ctx.count(t);
            z += (out[i] = 1.0 + static_cast<double>(overlap) + 0.01 * static_cast<double>(i));
        }
        for (auto& x : out) x /= z;
        return out;
    }
};

} // namespace

TEST_CASE("synthetic generator: shape, determinism, validation") {
    CHECK(generate_synthetic({0, 6, 4, 1}, lex()).empty());
    const auto a = generate_synthetic({50, 6, 4, 5}, lex());
    const auto b = generate_synthetic({50, 6, 4, 5}, lex());
    CHECK(a == b);
    CHECK(a != generate_synthetic({50, 6, 4, 6}, lex()));
    for (const auto& s : a) {
        CHECK_NOTHROW(s.validate());
        CHECK(s.question == kSyntheticQuestion);
    }
    CHECK_THROWS_AS(generate_synthetic({1, 6, 1, 1}, lex()), ValidationError);
    CHECK_THROWS_AS(generate_synthetic({1, 3, 4, 1}, lex()), ValidationError);
    CHECK(generate_synthetic({5, 3, 3, 1}, lex()).size() == 5);
}

TEST_CASE("synthetic generator: gold entailed, distractors not, by independent checks") {
    const auto data = generate_synthetic({400, 6, 4, 11}, lex());
    for (const auto& s : data) {
        const auto paths = build_paths(s, lex());
        const auto body = paths[0].body;
        REQUIRE(body.size() == 4);
        const auto raw_body = raw_all(body);
        const auto base = closure(body);
        for (std::size_t i = 0; i < 4; ++i) {
            const Atom& opt = paths[i].head.back();
            const bool gold = static_cast<int>(i) == *s.label;
            CHECK_MESSAGE(reference_entails(raw_body, raw(opt)) == gold, s.id);
            if (gold) CHECK_MESSAGE(base.contains(opt), s.id);
        }
    }
}

TEST_CASE("synthetic generator: labels near uniform") {
    const auto data = generate_synthetic({2000, 6, 4, 7}, lex());
    std::array<int, 4> counts{};
    for (const auto& s : data) ++counts[static_cast<std::size_t>(*s.label)];
    for (int c : counts) CHECK(std::abs(c / 2000.0 - 0.25) <= 0.05);
}

TEST_CASE("training reduces loss and is deterministic") {
    const auto data = generate_synthetic({96, 6, 4, 21}, lex());
    const auto dir = std::filesystem::temp_directory_path();
    std::string first;
    for (int run = 0; run < 2; ++run) {
        PathModel m(tiny_model(), lex());
        const auto prepared = prepare_all(m, data);
        TrainConfig tc;
        tc.epochs = 2;
        tc.seed = 4;
        tc.log = [](const std::string&) {};
        tc.history_path = dir / ("logipath_hist_" + std::to_string(run) + ".jsonl");
        const auto r = train(m, prepared, std::span<const PreparedSample>(prepared).first(32), tc);
        CHECK(r.epochs_run == 2);
        // First epoch summary against the first step's loss.
        double epoch1 = -1;
        for (const auto& h : r.history)
            if (h.epoch == 1u) epoch1 = h.loss;
        CHECK(epoch1 < r.history.front().loss);
        const auto text = slurp(*tc.history_path);
        const auto line = text.substr(0, text.find('\n'));
        CHECK(nlohmann::json::parse(line).contains("step"));
        if (run == 0) first = text;
        else CHECK(first == text);
        std::filesystem::remove(*tc.history_path);
    }
}

TEST_CASE("a single sample can be overfit") {
    const auto data = generate_synthetic({1, 6, 4, 3}, lex());
    PathModel m(tiny_model(), lex());
    const auto prepared = prepare_all(m, data);
    TrainConfig tc;
    tc.epochs = 200;
    tc.batch_size = 1;
    tc.lr = 1e-2;
    tc.max_steps = 200;
    tc.patience = 200;
    tc.log = [](const std::string&) {};
    train(m, prepared, {}, tc);
    const auto r = evaluate(m, prepared);
    CHECK(r.accuracy == 1.0);
    CHECK(r.predictions[0].scores[static_cast<std::size_t>(*data[0].label)] > 0.99);
}

TEST_CASE("divergence aborts with the sample id") {
    const auto data = generate_synthetic({4, 6, 4, 3}, lex());
    PathModel m(tiny_model(), lex());
    const auto prepared = prepare_all(m, data);
    m.params().get("out.b").mutable_value()(0, 0) = std::nan("");
    TrainConfig tc;
    tc.log = [](const std::string&) {};
    try {
        train(m, prepared, {}, tc);
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        CHECK(std::string(e.what()).find("synth-3-") != std::string::npos);
    }
    CHECK_THROWS_AS(train(m, {}, {}, tc), ValidationError);
}

TEST_CASE("evaluation") {
    const auto data = generate_synthetic({400, 6, 4, 13}, lex());
    PathModel m(tiny_model(), lex());
    auto prepared = prepare_all(m, data);
    const auto untrained = evaluate(m, prepared);
    // Chance level, three binomial standard deviations.
    CHECK(std::abs(untrained.accuracy - 0.25) <= 3 * std::sqrt(0.25 * 0.75 / 400));

    for (std::size_t i = 0; i < prepared.size(); ++i) prepared[i].label = untrained.predictions[i].pred;
    CHECK(evaluate(m, prepared).accuracy == 1.0);

    const auto path = std::filesystem::temp_directory_path() / "logipath_preds.jsonl";
    write_predictions(path, untrained.predictions);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    const auto j = nlohmann::json::parse(line);
    CHECK(j["id"] == data[0].id);
    CHECK(j["scores"].size() == 4);
    CHECK(j["label"] == *data[0].label);
    std::filesystem::remove(path);
}

TEST_CASE("perturbation protocols") {
    const auto data = generate_synthetic({600, 6, 4, 17}, lex());
    const auto part = perturbation_partition(data.size(), 5);
    CHECK(std::count(part.begin(), part.end(), true) == 300);

    RandomScorer random;
    const auto c = consistency_eval(random, data, lex(), 5);
    CHECK(c.evaluated > 250);
    CHECK(std::abs(c.rate - 0.75) < 0.1);

    ConnectiveBlindScorer blind;
    const auto p = perception_eval(blind, data, lex(), 5);
    CHECK(p.evaluated > 250);
    std::size_t category_only = 0;
    for (const auto& r : p.records)
        if (r.kind == "category") {
            ++category_only;
            CHECK(r.before == r.after);
        }
    CHECK(category_only > 30);

    std::set<std::string> seen;
    for (const auto& r : c.records) seen.insert(r.id);
    for (const auto& r : p.records) CHECK(seen.count(r.id) == 0);
}

TEST_CASE("category statistics") {
    Sample fact{"f", "The sky is blue. Bill goes golfing.", "Which is true?", {"a.", "b.", "c.", "d."}, 0};
    auto st = stats(std::vector<Sample>{fact}, lex());
    CHECK(st.logic_ratio() == 0.0);
    CHECK(st.atoms == 2);

    Sample cause{"c", "Because the sky is blue, bill goes golfing.", "Which is true?", {"a.", "b.", "c.", "d."}, 0};
    st = stats(std::vector<Sample>{cause}, lex());
    CHECK(st.sample_ratio(FunctionCategory::Cause) == 1.0);
    CHECK(st.logic_ratio() == 1.0);

    const auto data = generate_synthetic({200, 6, 4, 2}, lex());
    st = stats(data, lex());
    std::size_t total = 0;
    for (auto n : st.atoms_by_category) total += n;
    CHECK(total == st.atoms);
    CHECK(st.atoms == 800);
    CHECK(nlohmann::json::parse(st.to_json())["atoms"] == 800);
    CHECK(st.to_table().find("has logic") != std::string::npos);
}
