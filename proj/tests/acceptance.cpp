// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,4,7] [--strict]
//
// Exit status is 0 unless something crashes; with --strict a failed
// criterion also gives 1.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fuzz.hpp"
#include "logipath/cli_io.hpp"
#include "logipath/engine.hpp"
#include "logipath/extraction.hpp"
#include "logipath/model.hpp"
#include "logipath/model_instances.hpp"
#include "logipath/path_engine.hpp"
#include "logipath/train_eval.hpp"
#include "oracles.hpp"

using namespace logipath;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kData = LOGIPATH_DATA_DIR;
const Lexicon& lex() { return Lexicon::bundled(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s << std::setprecision(prec) << v;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<VariableId, std::string> bindings_for(std::uint32_t n) {
    std::map<VariableId, std::string> b;
    for (std::uint32_t i = 0; i < n; ++i) b[{i}] = instance_clauses()[i % instance_clauses().size()];
    return b;
}

// 1 ---------------------------------------------------------------------

Atom two(FunctionCategory c, Literal x, Literal y) {
    static const char* const surfaces[] = {"because", "if", "only if"};
    return Atom(c, surfaces[static_cast<int>(c)], {x, y});
}

std::string verdict(bool v) { return v ? "valid" : "invalid"; }

// Premises |= conclusion, and conclusion |= every premise.
std::string row(const std::string& rule, const std::string& cats, const std::vector<Atom>& premises, const Atom& c) {
    bool back = true;
    for (const auto& p : premises) back = back && entails(std::span(&c, 1), p);
    return rule + "\t" + cats + "\t" + verdict(entails(premises, c)) + "\t" + verdict(back);
}

Outcome soundness_matrix() {
    const auto t0 = Clock::now();
    const Literal A{{0}}, B{{1}}, C{{2}};
    const FunctionCategory imps[] = {FunctionCategory::Cause, FunctionCategory::SA, FunctionCategory::NA};
    std::vector<std::string> rows;
    std::size_t oracle_disagreements = 0;
    auto add = [&](const std::string& rule, const std::string& cats, const std::vector<Atom>& premises, const Atom& c) {
        rows.push_back(row(rule, cats, premises, c));
        if (testing::reference_entails(testing::raw_all(premises), testing::raw(c)) != entails(premises, c))
            ++oracle_disagreements;
    };
    for (auto c : {FunctionCategory::Cause, FunctionCategory::SA}) {
        const Atom a = two(c, A, B);
        add("contrapositive", std::string(category_name(c)), {a}, contrapositive(a));
    }
    {
        const Atom a = two(FunctionCategory::NA, A, B);
        add("na_to_sa", "NA", {a}, na_to_sa(a));
    }
    for (auto c1 : imps)
        for (auto c2 : imps) {
            const Atom a1 = two(c1, A, B), a2 = two(c2, B, C);
            add("conjoin_transitive", std::string(category_name(c1)) + "+" + std::string(category_name(c2)), {a1, a2},
                *conjoin_transitive(a1, a2));
        }
    for (auto c : imps) {
        const Atom f = Atom::fact(A), imp = two(c, A, B);
        add("modus_ponens", std::string(category_name(c)), {f, imp}, *modus_ponens(f, imp));
    }

    std::vector<std::string> golden;
    std::ifstream in(kData / "golden" / "soundness_matrix.txt");
    for (std::string line; std::getline(in, line);)
        if (!line.empty() && line[0] != '#') golden.push_back(line);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < std::max(rows.size(), golden.size()); ++i) {
        const auto got = i < rows.size() ? rows[i] : "<missing>";
        const auto want = i < golden.size() ? golden[i] : "<missing>";
        if (got != want) {
            ++mismatches;
            std::cout << "    matrix row " << i << ": got '" << got << "' want '" << want << "'\n";
        }
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && oracle_disagreements == 0 && !golden.empty() && secs < 1.0,
            std::to_string(rows.size()) + " rows, " + std::to_string(mismatches) + " golden mismatches, " +
                std::to_string(oracle_disagreements) + " truth-table disagreements, " + fmt(secs, 3) + " s"};
}

// 2 ---------------------------------------------------------------------

Outcome epe_round_trip() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::size_t candidates = 0, failures = 0, productive = 0;
    for (int trial = 0; trial < 500; ++trial) {
        ReasoningPath p;
        const auto n = std::uniform_int_distribution<int>(2, 4)(rng);
        for (int i = 0; i < n; ++i) p.body.push_back(testing::random_atom(rng, 4));
        p.head = {testing::random_atom(rng, 4)};
        p.bindings = bindings_for(4);
        const auto mined = mine_combinations(closure(p.body, {}), p);
        if (!mined.empty()) ++productive;
        for (const auto& m : mined) {
            ++candidates;
            const auto ref = testing::reference_closure(testing::raw_all(m.body), true);
            for (const auto& a : p.body)
                if (!ref.contains(testing::raw(a))) {
                    ++failures;
                    break;
                }
        }
    }
    const double secs = seconds_since(t0);
    return {failures == 0 && candidates > 0 && secs < 120.0,
            std::to_string(candidates) + " candidates from " + std::to_string(productive) + "/500 paths, " +
                std::to_string(failures) + " fail the reference closure, " + fmt(secs, 3) + " s"};
}

// 3 ---------------------------------------------------------------------

Outcome involutions() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(3);
    std::size_t failures = 0;
    for (int i = 0; i < 10000; ++i) {
        const Atom a = testing::random_atom(rng, 8, {FunctionCategory::Cause, FunctionCategory::SA});
        const Atom back = contrapositive(contrapositive(a));
        if (!atoms_equal(back, a) || back.surface() != a.surface()) ++failures;
    }
    for (int i = 0; i < 10000; ++i) {
        const Literal l = testing::random_literal(rng, 8);
        if (negate(negate(l)) != l) ++failures;
    }
    const double secs = seconds_since(t0);
    return {failures == 0 && secs < 5.0,
            "20000 inputs, " + std::to_string(failures) + " failures, " + fmt(secs, 3) + " s"};
}

// 4 ---------------------------------------------------------------------

Outcome extraction_accuracy() {
    const auto t0 = Clock::now();
    const auto gold = load_extraction_gold(kData / "extraction_gold.tsv");
    const auto score = score_extraction(gold, lex());
    for (const auto& m : score.mismatches) std::cout << "    " << m << "\n";
    const double secs = seconds_since(t0);
    return {score.total == 60 && score.accuracy() >= 0.95 && secs < 1.0,
            std::to_string(score.correct) + "/" + std::to_string(score.total) + " = " + fmt(score.accuracy()) + ", " +
                fmt(secs, 3) + " s"};
}

// 5 ---------------------------------------------------------------------

Outcome gradient_check() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.d = 8;
    // Unit-scale tables, matching randomize_parameters.
    cfg.token_scale = 1.0 / std::sqrt(8.0);
    double scaled = 0.0, strict = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t k = 0; k < 5; ++k) {
        PathModel m(cfg, lex());
        const auto seed = mix_seed(0, k);
        randomize_parameters(m, seed);
        const auto ps = random_instance(m, lex(), seed, 12);
        std::vector<Tensor> params;
        for (auto& [name, t] : m.params().all()) params.push_back(t);
        const auto rep = finite_diff_check([&] { return m.loss(ps); }, params, 1e-3, 400, seed);
        std::cout << "    instance " << k << ": scaled " << fmt(rep.max_scaled_error, 3) << ", strict "
                  << fmt(rep.max_rel_error, 3) << " (analytic " << fmt(rep.worst_analytic, 3) << " numeric "
                  << fmt(rep.worst_numeric, 3) << "), " << rep.checked << " coords, " << rep.skipped_kinks
                  << " kinks\n";
        scaled = std::max(scaled, rep.max_scaled_error);
        strict = std::max(strict, rep.max_rel_error);
        checked += rep.checked;
    }
    const double secs = seconds_since(t0);
    return {scaled <= 1e-4 && secs < 60.0,
            "max relative error " + fmt(scaled, 3) + " (floored denominator; unfloored " + fmt(strict, 3) + "), " +
                std::to_string(checked) + " coords, " + fmt(secs, 3) + " s"};
}

// 6 ---------------------------------------------------------------------

double asymmetry(const Matrix& m) { return (m - m.transpose()).cwiseAbs().maxCoeff(); }

Outcome attention_invariants() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.d = 16;
    cfg.vocab_hash_dim = 512;
    cfg.seed = 6;
    PathModel m(cfg, lex());
    randomize_parameters(m, 6);
    std::mt19937_64 rng(6);
    double asym = 0.0, row_err = 0.0, pa_spread = 0.0;
    std::size_t layers_seen = 0;
    for (int i = 0; i < 100; ++i) {
        const auto s = m.encode(random_path(rng, lex(), 24, 6), "the sky is blue");
        Tensor h = m.embed(s);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            asym = std::max({asym, asymmetry(m.in_atom_scores(l, s, h).value()),
                             asymmetry(m.cross_atom_scores(l, s, h).value())});
            const auto pa = m.path_attention(l, s, h);
            for (const auto& w : pa.weights)
                for (Index r = 0; r < w.rows(); ++r) row_err = std::max(row_err, std::abs(w.row(r).sum() - 1.0));
            const Matrix& hp = pa.h_pa.value();
            for (Index r = 1; r < hp.rows(); ++r) pa_spread = std::max(pa_spread, (hp.row(r) - hp.row(0)).cwiseAbs().maxCoeff());
            h = m.block_forward(l, s, h).h;
            ++layers_seen;
        }
    }
    const double secs = seconds_since(t0);
    return {asym == 0.0 && row_err <= 1e-9 && pa_spread == 0.0 && secs < 30.0,
            std::to_string(layers_seen) + " layer passes: max asymmetry " + fmt(asym, 3) + ", max |row sum - 1| " +
                fmt(row_err, 3) + ", H_PA row spread " + fmt(pa_spread, 3) + ", " + fmt(secs, 3) + " s"};
}

// 7 ---------------------------------------------------------------------

Outcome diffusion_degeneracy() {
    const auto t0 = Clock::now();
    const Literal A{{0}}, B{{1}}, C{{2}};
    ReasoningPath p;
    p.body = {Atom::fact(A), two(FunctionCategory::SA, A, B), two(FunctionCategory::Cause, B, C)};
    p.head = {Atom::fact(C)};
    p.bindings = bindings_for(3);
    auto scores = [&](ModelConfig cfg) {
        cfg.d = 16;
        cfg.vocab_hash_dim = 512;
        cfg.seed = 11;
        PathModel m(cfg, lex());
        randomize_parameters(m, 11);
        const auto s = m.encode(p, "t");
        Matrix out = m.option_score(s).value();
        Tensor h = m.embed(s);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const auto pa = m.path_attention(l, s, h);
            out.conservativeResize(1, out.cols() + pa.h_seq.value().size());
            out.rightCols(pa.h_seq.value().size()) = pa.h_seq.value().reshaped<Eigen::RowMajor>().transpose();
            h = m.block_forward(l, s, h).h;
        }
        return out;
    };
    ModelConfig plain;
    plain.use_diffusion = false;
    ModelConfig first = plain;
    first.use_diffusion = true;
    first.alpha = {1.0};
    first.beta = {1.0};
    ModelConfig second = plain;
    second.use_diffusion = true; // defaults: N=2, alpha {0.2, 0.8}, beta {0, 1}
    const Matrix base = scores(plain);
    const double same = (scores(first) - base).cwiseAbs().maxCoeff();
    const double differ = (scores(second) - base).cwiseAbs().maxCoeff();
    const double secs = seconds_since(t0);
    return {same <= 1e-12 && differ > 1e-6 && secs < 10.0,
            "N=1 vs no diffusion " + fmt(same, 3) + ", N=2 vs no diffusion " + fmt(differ, 3) + " on a 2-hop chain, " +
                fmt(secs, 3) + " s"};
}

// 8-10 ------------------------------------------------------------------

struct ToyRun {
    bool done = false;
    double untrained = 0.0, accuracy = 0.0, train_secs = 0.0;
    std::size_t epochs = 0, best_epoch = 0;
    PerturbEvalResult consistency, perception;
};

ToyRun& toy_run() {
    static ToyRun r;
    if (r.done) return r;
    r.done = true;
    SynthConfig sc;
    sc.body_len = 4;
    sc.n_vars = 6;
    sc.seed = 7;
    sc.n_samples = 2000;
    const auto train_set = generate_synthetic(sc, lex());
    sc.n_samples = 500;
    sc.seed = mix_seed(7, 1);
    const auto test_set = generate_synthetic(sc, lex());
    sc.n_samples = 250;
    sc.seed = mix_seed(7, 2);
    const auto dev_set = generate_synthetic(sc, lex());

    ModelConfig mc; // L=3, heads=4, d=64, N=2, alpha {0.2, 0.8}
    mc.seed = 7;
    PathModel m(mc, lex());
    auto prep = [&](const std::vector<Sample>& data) {
        std::vector<PreparedSample> out;
        for (const auto& s : data) out.push_back(m.prepare(s, lex()));
        return out;
    };
    const auto ptrain = prep(train_set), ptest = prep(test_set), pdev = prep(dev_set);
    r.untrained = evaluate(m, ptest).accuracy;

    TrainConfig tc;
    tc.epochs = 30;
    tc.patience = 30; // the budget is the epoch count; the best dev epoch is kept
    tc.seed = 7;
    tc.log = [](const std::string& line) { std::cout << "    " << line << "\n" << std::flush; };
    const auto t0 = Clock::now();
    const auto res = train(m, ptrain, pdev, tc);
    r.train_secs = seconds_since(t0);
    r.epochs = res.epochs_run;
    r.best_epoch = res.best_epoch;
    r.accuracy = evaluate(m, ptest).accuracy;

    const ModelScorer scorer(m, lex());
    r.consistency = consistency_eval(scorer, test_set, lex(), 7);
    r.perception = perception_eval(scorer, test_set, lex(), 7);
    return r;
}

Outcome toy_learnability() {
    const auto& r = toy_run();
    return {r.accuracy >= 0.85 && r.train_secs < 600.0,
            "test accuracy " + fmt(r.accuracy) + " (untrained " + fmt(r.untrained) + "), best dev epoch " +
                std::to_string(r.best_epoch) + " of " + std::to_string(r.epochs) + ", training " +
                fmt(r.train_secs, 4) + " s"};
}

std::string perturb_detail(const PerturbEvalResult& p) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> by_kind;
    for (const auto& rec : p.records) {
        auto& [n, changed] = by_kind[rec.kind];
        ++n;
        if (rec.before != rec.after) ++changed;
    }
    std::string s = std::to_string(p.changed_predictions) + "/" + std::to_string(p.evaluated) + ", skipped " +
                    std::to_string(p.skipped) + ";";
    for (const auto& [k, c] : by_kind) s += " " + k + " " + std::to_string(c.second) + "/" + std::to_string(c.first);
    return s;
}

Outcome consistency() {
    const auto& r = toy_run();
    return {r.consistency.evaluated > 0 && r.consistency.rate <= 0.10,
            "flip rate " + fmt(r.consistency.rate) + " = " + perturb_detail(r.consistency)};
}

Outcome perception() {
    const auto& r = toy_run();
    return {r.perception.evaluated > 0 && r.perception.rate >= 0.50,
            "sensitivity " + fmt(r.perception.rate) + " = " + perturb_detail(r.perception)};
}

// 11 --------------------------------------------------------------------

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "logipath");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) std::cout << "    " << args[1] << " exited " << code << ": " << err.str();
    return code;
}

Outcome determinism() {
    const auto t0 = Clock::now();
    const fs::path dir = fs::temp_directory_path() / "logipath_acceptance";
    fs::create_directories(dir);
    const auto data = dir / "synth.jsonl", aug = dir / "aug.jsonl", ckpt = dir / "model.ckpt",
               hist = dir / "history.jsonl", preds = dir / "preds.jsonl";
    const std::vector<std::string> seed = {"--seed", "11"};
    const std::vector<std::string> model = {"--d", "16", "--layers", "2", "--heads", "2", "--vocab-hash-dim", "512"};
    auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    std::vector<std::vector<std::string>> snapshots;
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& p : {data, aug, ckpt, hist, preds}) fs::remove(p);
        bool ok = cli(with({"gen-synth", "--n", "60", "--out", data.string()}, seed)) == 0 &&
                  cli(with({"augment", "--scorer", "none", "--max-candidates", "3", "--in", data.string(), "--out", aug.string()}, seed)) == 0 &&
                  cli(with(with({"train", "--train", aug.string(), "--dev", data.string(), "--epochs", "2", "--out",
                                 ckpt.string(), "--history", hist.string()},
                                seed),
                           model)) == 0 &&
                  cli({"eval", "--model", ckpt.string(), "--in", data.string(), "--predictions", preds.string()}) == 0;
        if (!ok) return {false, "pipeline failed on pass " + std::to_string(pass + 1)};
        std::vector<std::string> snap;
        for (const auto& p : {data, aug, ckpt, hist, preds}) snap.push_back(slurp(p));
        snapshots.push_back(std::move(snap));
    }
    const char* names[] = {"dataset", "augmented", "checkpoint", "history", "predictions"};
    std::string detail;
    std::size_t differing = 0, bytes = 0;
    for (std::size_t i = 0; i < snapshots[0].size(); ++i) {
        bytes += snapshots[0][i].size();
        if (snapshots[0][i] != snapshots[1][i]) {
            ++differing;
            detail += std::string(" ") + names[i];
        }
    }
    fs::remove_all(dir);
    const bool nonempty = std::none_of(snapshots[0].begin(), snapshots[0].end(), [](const auto& s) { return s.empty(); });
    return {differing == 0 && nonempty,
            "5 artifacts, " + std::to_string(bytes) + " bytes per run, " + std::to_string(differing) + " differ" +
                detail + ", " + fmt(seconds_since(t0), 3) + " s"};
}

} // namespace

int main(int argc, char** argv) {
    bool strict = false;
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--strict") {
            strict = true;
        } else if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
        } else {
            std::cerr << "usage: acceptance [--only 1,2,...] [--strict]\n";
            return 2;
        }
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"rewrite soundness matrix", soundness_matrix},
        {"mined paths recover their body", epe_round_trip},
        {"involutions", involutions},
        {"extraction accuracy >= 0.95", extraction_accuracy},
        {"gradient check <= 1e-4", gradient_check},
        {"attention invariants", attention_invariants},
        {"diffusion degeneracy", diffusion_degeneracy},
        {"toy learnability >= 0.85", toy_learnability},
        {"consistency flip rate <= 0.10", consistency},
        {"perception sensitivity >= 0.50", perception},
        {"pipeline determinism", determinism},
    };
    std::size_t failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!only.empty() && !only.contains(n)) continue;
        const auto o = criteria[i].second();
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << ". " << criteria[i].first << ": " << o.detail << "\n"
                  << std::flush;
    }
    std::cout << failed << " criteria failed\n";
    return strict && failed ? 1 : 0;
}
