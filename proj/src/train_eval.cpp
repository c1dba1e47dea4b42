#include "logipath/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "logipath/engine.hpp"
#include "logipath/error.hpp"
#include "logipath/extraction.hpp"

namespace logipath {

namespace {

// Abstract clause templates: subject + predicate. None of these words is a
// connective or a negation marker.
const std::vector<std::string> kSubjects = {
    "the committee", "the mayor",   "the bakery",  "the museum",  "the orchestra", "the farmer", "the library",
    "the airline",   "the hospital", "the railway", "the gallery", "the clinic",    "the studio", "the council",
};
const std::vector<std::string> kPredicates = {
    "approves the plan", "hires more staff",   "opens on sunday",   "raises its prices",
    "wins the award",    "expands the program", "closes the branch", "buys new equipment",
    "hosts the festival", "cuts the budget",    "moves downtown",    "signs the contract",
};

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }
bool coin(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

std::string random_surface(Rng& rng, const Lexicon& lex, FunctionCategory c) {
    const auto entries = lex.by_category(c);
    if (entries.empty()) throw ValidationError("lexicon has no " + std::string(category_name(c)) + " entry");
    return entries[pick(rng, entries.size())]->text();
}

// Some atom whose reading is p -> q.
Atom implication(Rng& rng, const Lexicon& lex, Literal p, Literal q, double contrapositive_rate) {
    const FunctionCategory cats[] = {FunctionCategory::Cause, FunctionCategory::SA, FunctionCategory::NA};
    const auto c = cats[pick(rng, 3)];
    const bool flipped = coin(rng, contrapositive_rate);
    Literal a = p, b = q;
    if (flipped) {
        a = negate(q);
        b = negate(p);
    }
    // NA(x, y) reads y -> x.
    if (c == FunctionCategory::NA) std::swap(a, b);
    return Atom(c, random_surface(rng, lex, c), {a, b});
}

Literal random_literal(Rng& rng, VariableId v) { return {v, coin(rng, 0.5)}; }

struct Draft {
    std::vector<Atom> body;
    Atom gold;
    std::vector<Atom> distractors;
};

std::optional<Draft> draft(Rng& rng, const Lexicon& lex, std::size_t n_vars, const SynthConfig& cfg) {
    const std::size_t body_len = cfg.body_len;
    std::vector<VariableId> vars;
    for (std::uint32_t i = 0; i < n_vars; ++i) vars.push_back({i});
    std::shuffle(vars.begin(), vars.end(), rng);

    const std::size_t chain = (body_len >= 3 && coin(rng, cfg.two_hop_rate)) ? 2 : 1;
    std::vector<Literal> lits;
    for (std::size_t i = 0; i <= chain; ++i) lits.push_back(random_literal(rng, vars[i]));

    Draft d;
    d.body.push_back(Atom::fact(lits[0]));
    for (std::size_t i = 0; i < chain; ++i) d.body.push_back(implication(rng, lex, lits[i], lits[i + 1], cfg.contrapositive_rate));
    // Filler stays off the chain so the gold is not stated outright.
    const std::vector<VariableId> free(vars.begin() + static_cast<std::ptrdiff_t>(chain + 1), vars.end());
    // A decoy's consequent looks reachable unless the fact's polarity is checked.
    if (d.body.size() < body_len && !free.empty() && coin(rng, cfg.decoy_rate))
        d.body.push_back(implication(rng, lex, negate(lits[0]), random_literal(rng, free[pick(rng, free.size())]),
                                     cfg.contrapositive_rate));
    while (d.body.size() < body_len) {
        if (free.empty()) return std::nullopt;
        if (free.size() < 2 || coin(rng, cfg.filler_fact_rate)) {
            d.body.push_back(Atom::fact(random_literal(rng, free[pick(rng, free.size())])));
        } else {
            const auto i = pick(rng, free.size());
            auto j = pick(rng, free.size() - 1);
            if (j >= i) ++j;
            d.body.push_back(implication(rng, lex, random_literal(rng, free[i]), random_literal(rng, free[j]),
                                         cfg.contrapositive_rate));
        }
    }
    d.gold = Atom::fact(lits[chain]);
    if (!entails(d.body, d.gold)) return std::nullopt;

    // Distractors: non-entailed facts, preferring variables the body mentions.
    std::set<VariableId> in_body;
    for (const auto& a : d.body)
        for (const auto& l : a.literals()) in_body.insert(l.variable);
    std::vector<Atom> hard, easy;
    for (auto v : vars)
        for (bool positive : {true, false}) {
            Atom f = Atom::fact({v, positive});
            if (entails(d.body, f)) continue;
            (in_body.count(v) ? hard : easy).push_back(std::move(f));
        }
    std::shuffle(hard.begin(), hard.end(), rng);
    std::shuffle(easy.begin(), easy.end(), rng);
    for (auto* pool : {&hard, &easy})
        for (auto& f : *pool)
            if (d.distractors.size() < 3) d.distractors.push_back(f);
    if (d.distractors.size() < 3) return std::nullopt;
    std::shuffle(d.body.begin(), d.body.end(), rng);
    return d;
}

std::string capitalize_sentence(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

bool round_trips(const std::vector<Atom>& atoms, const std::string& text,
                 const std::map<VariableId, std::string>& bindings, const Lexicon& lex) {
    try {
        VariableTable table;
        const auto got = extract_text(text, lex, table);
        if (got.size() != atoms.size()) return false;
        std::map<VariableId, std::string> got_bindings;
        for (std::uint32_t i = 0; i < table.size(); ++i) got_bindings[{i}] = table.text({i});
        for (std::size_t i = 0; i < atoms.size(); ++i)
            if (ground_atom(atoms[i], bindings) != ground_atom(got[i], got_bindings)) return false;
        return true;
    } catch (const ValidationError&) {
        return false;
    }
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 step over the combined value
    std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return mix(a, b); }

void SynthConfig::validate() const {
    if (body_len < 2) throw ValidationError("body_len must be at least 2");
    if (n_vars < body_len) throw ValidationError("n_vars must be at least body_len");
    if (n_vars > kSubjects.size())
        throw ValidationError("n_vars above " + std::to_string(kSubjects.size()) + " clause templates");
    for (double r : {contrapositive_rate, two_hop_rate, filler_fact_rate, decoy_rate})
        if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("synthetic rates must lie in [0, 1]");
}

std::vector<Sample> generate_synthetic(const SynthConfig& cfg, const Lexicon& lex) {
    cfg.validate();
    // Oracle capacity: fall back to fewer variables.
    const std::size_t n_vars = std::min(cfg.n_vars, kMaxOracleVariables);
    std::vector<Sample> out;
    out.reserve(cfg.n_samples);
    for (std::size_t k = 0; k < cfg.n_samples; ++k) {
        Rng rng(mix(cfg.seed, k));
        for (std::size_t attempt = 0;; ++attempt) {
            if (attempt == 1000)
                throw ValidationError("synthetic sample " + std::to_string(k) + ": no valid draft after 1000 attempts");
            auto d = draft(rng, lex, n_vars, cfg);
            if (!d) continue;

            std::vector<std::size_t> subj(kSubjects.size());
            std::iota(subj.begin(), subj.end(), 0);
            std::shuffle(subj.begin(), subj.end(), rng);
            std::map<VariableId, std::string> bindings;
            for (std::uint32_t v = 0; v < n_vars; ++v)
                bindings[{v}] = kSubjects[subj[v]] + " " + kPredicates[pick(rng, kPredicates.size())];

            std::string context;
            for (const auto& a : d->body) {
                if (!context.empty()) context += ' ';
                context += render_atom(a, bindings, lex);
            }
            if (!round_trips(d->body, context, bindings, lex)) continue;

            Sample s;
            s.id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(k);
            s.context = context;
            s.question = kSyntheticQuestion;
            const int label = static_cast<int>(pick(rng, 4));
            s.label = label;
            std::size_t next = 0;
            for (int i = 0; i < 4; ++i) {
                const Atom& a = i == label ? d->gold : d->distractors[next++];
                s.options[static_cast<std::size_t>(i)] = capitalize_sentence(render_atom(a, bindings, lex));
            }
            out.push_back(std::move(s));
            break;
        }
    }
    return out;
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw ValidationError("batch_size must be positive");
    if (!(lr > 0)) throw ValidationError("learning rate must be positive");
    if (epochs == 0) throw ValidationError("epochs must be positive");
}

std::string history_line(const HistoryEntry& e) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    j["loss"] = e.loss;
    if (e.epoch) j["epoch"] = *e.epoch;
    if (e.dev_acc) j["dev_acc"] = *e.dev_acc;
    return j.dump();
}

TrainResult train(PathModel& model, std::span<const PreparedSample> train_set, std::span<const PreparedSample> dev,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw ValidationError("training set is empty");
    for (const auto& p : train_set)
        if (!p.label) throw ValidationError("training sample " + p.id + " has no label");
    auto log = cfg.log ? cfg.log : [](const std::string& m) { std::cerr << m << '\n'; };

    auto& params = model.params().all();
    std::map<std::string, Matrix> m1, m2, best;
    for (auto& [name, t] : params) {
        m1[name] = Matrix::Zero(t.rows(), t.cols());
        m2[name] = Matrix::Zero(t.rows(), t.cols());
    }

    std::ofstream history;
    if (cfg.history_path) {
        history.open(*cfg.history_path, std::ios::binary);
        if (!history) throw ValidationError("cannot write history file " + cfg.history_path->string());
        if (!cfg.history_header.empty()) history << cfg.history_header << '\n';
    }
    TrainResult res;
    auto record = [&](HistoryEntry e) {
        if (history) history << history_line(e) << '\n';
        res.history.push_back(std::move(e));
    };

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed);
    std::size_t step = 0, stale = 0;
    double best_acc = -1.0;
    bool stop = false;

    for (std::size_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(end - start);
            model.params().zero_grad();
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& ps = train_set[order[i]];
                const Tensor loss = model.loss(ps);
                if (!std::isfinite(loss.item()))
                    throw TrainingDiverged("non-finite loss at step " + std::to_string(step) + ", epoch " +
                                           std::to_string(epoch) + ", sample " + ps.id);
                batch_loss += loss.item() * inv;
                backward(scale(loss, inv));
            }
            ++step;
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (auto& [name, t] : params) {
                const Matrix& g = t.grad();
                Matrix& a = m1[name];
                Matrix& b = m2[name];
                a = cfg.beta1 * a + (1.0 - cfg.beta1) * g;
                b = cfg.beta2 * b + (1.0 - cfg.beta2) * g.cwiseProduct(g);
                t.mutable_value().array() -=
                    cfg.lr * (a.array() / c1) / ((b.array() / c2).sqrt() + cfg.adam_eps);
            }
            record({step, batch_loss, std::nullopt, std::nullopt});
            epoch_loss += batch_loss * static_cast<double>(end - start);
            if (cfg.max_steps && step >= cfg.max_steps) {
                stop = true;
                break;
            }
        }
        epoch_loss /= static_cast<double>(train_set.size());
        res.epochs_run = epoch;

        std::optional<double> acc;
        if (!dev.empty()) acc = evaluate(model, dev).accuracy;
        record({step, epoch_loss, acc, epoch});
        std::ostringstream msg;
        msg << "epoch " << epoch << " step " << step << " loss " << epoch_loss;
        if (acc) msg << " dev_acc " << *acc;
        log(msg.str());

        const double score = acc.value_or(0.0);
        if (!acc || score > best_acc) {
            best_acc = score;
            res.best_epoch = epoch;
            stale = 0;
            for (auto& [name, t] : params) best[name] = t.value();
        } else if (++stale >= cfg.patience) {
            log("early stop: no dev improvement for " + std::to_string(cfg.patience) + " epochs");
            break;
        }
    }
    for (auto& [name, t] : params) t.mutable_value() = best.at(name);
    res.best_dev_acc = std::max(best_acc, 0.0);
    res.steps = step;
    return res;
}

int argmax(const std::array<double, 4>& s) {
    return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

EvalResult evaluate(const PathModel& model, std::span<const PreparedSample> data) {
    EvalResult r;
    std::size_t correct = 0;
    for (const auto& ps : data) {
        Prediction p;
        p.id = ps.id;
        p.scores = model.probabilities(ps);
        p.pred = argmax(p.scores);
        p.label = ps.label;
        if (ps.label) {
            ++r.labeled;
            if (p.pred == *ps.label) ++correct;
        }
        r.predictions.push_back(std::move(p));
    }
    r.accuracy = r.labeled ? static_cast<double>(correct) / static_cast<double>(r.labeled) : 0.0;
    return r;
}

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> preds, const std::string& header) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write predictions file " + path.string());
    if (!header.empty()) out << header << '\n';
    for (const auto& p : preds) {
        nlohmann::ordered_json j;
        j["id"] = p.id;
        j["scores"] = p.scores;
        j["pred"] = p.pred;
        j["label"] = p.label ? nlohmann::ordered_json(*p.label) : nlohmann::ordered_json(nullptr);
        out << j.dump() << '\n';
    }
}

std::array<double, 4> ModelScorer::score(const Sample& s) const { return model_.probabilities(model_.prepare(s, lex_)); }

std::vector<bool> perturbation_partition(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix(seed, 0x5eed));
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<bool> out(n, false);
    for (std::size_t i = 0; i < n / 2 + n % 2; ++i) out[idx[i]] = true;
    return out;
}

namespace {

template <class Perturb>
PerturbEvalResult perturb_eval(const ConfidenceScorer& scorer, std::span<const Sample> data, std::uint64_t seed,
                               bool want_consistency, Perturb perturb) {
    const auto part = perturbation_partition(data.size(), seed);
    PerturbEvalResult r;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (part[i] != want_consistency) continue;
        const Perturbation pt = perturb(data[i], mix(seed, i));
        if (want_consistency ? pt.kind == "none" : !pt.changed) {
            ++r.skipped;
            continue;
        }
        int before = 0, after = 0;
        try {
            before = argmax(scorer.score(data[i]));
            after = argmax(scorer.score(pt.sample));
        } catch (const ValidationError&) {
            ++r.skipped;
            continue;
        }
        ++r.evaluated;
        if (before != after) ++r.changed_predictions;
        r.records.push_back({data[i].id, pt.kind, before, after});
    }
    r.rate = r.evaluated ? static_cast<double>(r.changed_predictions) / static_cast<double>(r.evaluated) : 0.0;
    return r;
}

} // namespace

PerturbEvalResult consistency_eval(const ConfidenceScorer& scorer, std::span<const Sample> data, const Lexicon& lex,
                                   std::uint64_t seed) {
    return perturb_eval(scorer, data, seed, true,
                        [&](const Sample& s, std::uint64_t k) { return perturb_equivalent(s, lex, k); });
}

PerturbEvalResult perception_eval(const ConfidenceScorer& scorer, std::span<const Sample> data, const Lexicon& lex,
                                  std::uint64_t seed) {
    return perturb_eval(scorer, data, seed, false,
                        [&](const Sample& s, std::uint64_t k) { return perturb_adversarial(s, lex, k); });
}

double CategoryStats::atom_ratio(FunctionCategory c) const {
    return atoms ? static_cast<double>(atoms_by_category[static_cast<std::size_t>(c)]) / static_cast<double>(atoms) : 0.0;
}

double CategoryStats::sample_ratio(FunctionCategory c) const {
    return samples ? static_cast<double>(samples_with[static_cast<std::size_t>(c)]) / static_cast<double>(samples) : 0.0;
}

double CategoryStats::logic_ratio() const {
    return samples ? static_cast<double>(samples_with_logic) / static_cast<double>(samples) : 0.0;
}

std::string CategoryStats::to_json() const {
    nlohmann::ordered_json j;
    j["samples"] = samples;
    j["failed"] = failed;
    j["atoms"] = atoms;
    for (auto c : kAllCategories) {
        const std::string n(category_name(c));
        j["atom_counts"][n] = atoms_by_category[static_cast<std::size_t>(c)];
        j["atom_ratios"][n] = atom_ratio(c);
        j["sample_counts"][n] = samples_with[static_cast<std::size_t>(c)];
        j["sample_ratios"][n] = sample_ratio(c);
    }
    j["has_logic"] = samples_with_logic;
    j["has_logic_ratio"] = logic_ratio();
    return j.dump();
}

std::string CategoryStats::to_table() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "category  atoms   atom_ratio  samples  sample_ratio\n";
    for (auto c : kAllCategories) {
        const auto i = static_cast<std::size_t>(c);
        std::string n(category_name(c));
        n.resize(8, ' ');
        os << n << "  " << atoms_by_category[i] << "\t  " << atom_ratio(c) << "\t" << samples_with[i] << "\t "
           << sample_ratio(c) << '\n';
    }
    os << "has logic: " << samples_with_logic << " / " << samples << " (" << logic_ratio() << ")\n";
    os << "atoms: " << atoms << ", unparsed contexts: " << failed << '\n';
    return os.str();
}

CategoryStats stats(std::span<const Sample> data, const Lexicon& lex) {
    CategoryStats st;
    for (const auto& s : data) {
        ++st.samples;
        std::vector<Atom> atoms;
        try {
            VariableTable table;
            atoms = extract_text(s.context, lex, table);
        } catch (const ValidationError&) {
            ++st.failed;
            continue;
        }
        std::array<bool, 4> seen{};
        for (const auto& a : atoms) {
            const auto i = static_cast<std::size_t>(a.category());
            ++st.atoms_by_category[i];
            ++st.atoms;
            seen[i] = true;
        }
        for (std::size_t i = 0; i < 4; ++i) st.samples_with[i] += seen[i];
        if (seen[0] || seen[1] || seen[2]) ++st.samples_with_logic;
    }
    return st;
}

} // namespace logipath
