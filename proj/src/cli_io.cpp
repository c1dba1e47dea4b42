#include "logipath/cli_io.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "logipath/engine.hpp"
#include "logipath/error.hpp"
#include "logipath/extraction.hpp"
#include "logipath/model_instances.hpp"
#include "logipath/path_engine.hpp"
#include "logipath/train_eval.hpp"

namespace logipath {

namespace {

using json = nlohmann::ordered_json;

std::string record_error(const std::string& origin, std::size_t index, const std::string& what) {
    return origin + ": record " + std::to_string(index) + ": " + what;
}

Sample sample_from_json(const nlohmann::json& j, const std::string& origin, std::size_t index) {
    if (!j.is_object()) throw ValidationError(record_error(origin, index, "not an object"));
    for (const char* key : {"id_string", "context", "question", "answers"})
        if (!j.contains(key)) throw ValidationError(record_error(origin, index, std::string("missing field ") + key));
    Sample s;
    try {
        s.id = j["id_string"].get<std::string>();
        s.context = j["context"].get<std::string>();
        s.question = j["question"].get<std::string>();
        const auto answers = j["answers"].get<std::vector<std::string>>();
        if (answers.size() != 4)
            throw ValidationError(record_error(origin, index, "expected 4 answers, got " + std::to_string(answers.size())));
        std::copy(answers.begin(), answers.end(), s.options.begin());
        if (j.contains("label") && !j["label"].is_null()) s.label = j["label"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(record_error(origin, index, e.what()));
    }
    try {
        s.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(record_error(origin, index, e.what()));
    }
    return s;
}

bool is_header(const nlohmann::json& j) { return j.is_object() && j.size() == 1 && j.contains("config"); }

json config_json(const ConfigEcho& c) {
    json j = json::object();
    for (const auto& [k, v] : c) j[k] = v;
    return j;
}

std::string config_header_line(const ConfigEcho& c) {
    json j;
    j["config"] = config_json(c);
    return j.dump();
}

std::string text_header(const ConfigEcho& c) {
    std::string out;
    for (const auto& [k, v] : c) out += "# " + k + "=" + v + "\n";
    return out;
}

// Text artifacts go to --out, or to stdout when it is empty.
void emit_text(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + path);
    f << text;
}

std::string join_atoms(std::span<const Atom> atoms) {
    std::string s;
    for (const auto& a : atoms) s += (s.empty() ? "" : "; ") + to_string(a);
    return s;
}

json derivation_json(const DerivationStep& d) {
    json j;
    j["rule"] = d.rule;
    j["inputs"] = json::array();
    for (const auto& a : d.inputs) j["inputs"].push_back(to_string(a));
    j["output"] = to_string(d.output);
    return j;
}

struct Options {
    std::uint64_t seed = 0;
    std::string lexicon;
    std::size_t jobs = 1;
    std::string in, out, model, train_path, dev_path, history, predictions, mode;
    double epsilon_star = 0.9;
    std::string scorer = "overlap";
    std::size_t max_size = 0, max_candidates = 20, max_rounds = 8, max_atoms = 256;
    SynthConfig synth;
    TrainConfig train;
    ModelConfig model_cfg;
    std::size_t max_units = 12, instances = 5;
    bool json_out = false;
};

void require(const std::string& value, const char* flag, const std::string& cmd) {
    if (value.empty()) throw ValidationError(cmd + " needs " + flag);
}

std::vector<PreparedSample> prepare_all(const PathModel& m, std::span<const Sample> data, const Lexicon& lex) {
    std::vector<PreparedSample> out;
    out.reserve(data.size());
    for (const auto& s : data) out.push_back(m.prepare(s, lex));
    return out;
}

json perturb_records_json(const PerturbEvalResult& r) {
    json arr = json::array();
    for (const auto& x : r.records) {
        json j;
        j["id"] = x.id;
        j["kind"] = x.kind;
        j["before"] = x.before;
        j["after"] = x.after;
        arr.push_back(j);
    }
    return arr;
}

void write_perturb_records(const std::string& path, const PerturbEvalResult& r, const ConfigEcho& echo) {
    if (path.empty()) return;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + path);
    f << config_header_line(echo) << '\n';
    for (const auto& j : perturb_records_json(r)) f << j.dump() << '\n';
}

ConfigEcho echo_from(const CLI::App& app) {
    ConfigEcho c;
    std::istringstream in(app.config_to_str(true, false));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos || line.empty() || line[0] == '#' || line[0] == '[') continue;
        std::string v = line.substr(eq + 1);
        if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
        c[line.substr(0, eq)] = v;
    }
    return c;
}

int dispatch(const std::string& cmd, Options& o, const ConfigEcho& echo, bool token_scale_set, std::ostream& out,
             std::ostream& err) {
    const Lexicon lex = load_lexicon(o.lexicon.empty() ? std::nullopt : std::optional<std::filesystem::path>(o.lexicon));
    o.model_cfg.seed = o.seed;
    o.model_cfg.validate();

    if (cmd == "extract" || cmd == "closure") {
        require(o.in, "--in", cmd);
        const auto data = read_dataset(o.in);
        ClosureConfig cc;
        cc.max_rounds = o.max_rounds;
        cc.max_atoms = o.max_atoms;
        std::string text = text_header(echo);
        std::size_t failed = 0;
        for (const auto& s : data) {
            text += "sample " + s.id + "\n";
            try {
                const auto paths = build_paths(s, lex);
                if (cmd == "extract") {
                    text += "  body: " + join_atoms(paths[0].body) + "\n";
                    for (std::size_t i = 0; i < 4; ++i)
                        text += "  option " + std::to_string(i) + ": " + join_atoms(paths[i].head) + "\n";
                } else {
                    const auto base = closure(paths[0].body, cc);
                    text += "  atoms " + std::to_string(base.size()) + " rounds " + std::to_string(base.rounds) +
                            (base.truncated ? " truncated" : "") + "\n";
                    for (const auto& a : base.sorted_atoms()) text += "    " + to_string(a) + "\n";
                    std::istringstream traces(base.export_traces());
                    std::string line;
                    text += "  traces:\n";
                    while (std::getline(traces, line)) text += "    " + line + "\n";
                }
            } catch (const ValidationError& e) {
                ++failed;
                text += "  error: " + std::string(e.what()) + "\n";
            }
        }
        emit_text(o.out, text, out);
        if (failed) err << failed << " of " << data.size() << " samples did not extract\n";
        return 0;
    }

    if (cmd == "augment") {
        require(o.in, "--in", cmd);
        require(o.out, "--out", cmd);
        const auto data = read_dataset(o.in);
        std::optional<PathModel> model;
        std::unique_ptr<ConfidenceScorer> scorer;
        if (o.scorer == "overlap") {
            scorer = std::make_unique<OverlapScorer>();
        } else if (o.scorer == "model") {
            require(o.model, "--model", "augment --scorer model");
            model.emplace(PathModel::from_checkpoint(o.model, lex));
            scorer = std::make_unique<ModelScorer>(*model, lex);
        } else if (o.scorer != "none") {
            throw ValidationError("unknown scorer " + o.scorer + " (overlap, model, none)");
        }
        EpeConfig epe;
        epe.closure.max_rounds = o.max_rounds;
        epe.closure.max_atoms = o.max_atoms;
        epe.limits.max_size = o.max_size;
        epe.limits.max_candidates = o.max_candidates;
        FilterConfig fc;
        fc.threshold = o.epsilon_star;
        fc.scorer = scorer.get();
        fc.warn = [&](const std::string& m) { err << "warning: " << m << "\n"; };
        fc.validate();
        const auto aug = augment(data, lex, epe, fc);
        std::vector<json> records;
        for (const auto& a : aug) {
            json j = sample_to_json(a.sample);
            j["source_id"] = a.source_id;
            j["confidence"] = a.confidence ? json(*a.confidence) : json(nullptr);
            j["provenance"] = json::array();
            for (const auto& d : a.provenance) j["provenance"].push_back(derivation_json(d));
            records.push_back(std::move(j));
        }
        write_records(o.out, records, echo);
        out << "augmented " << records.size() << " samples from " << data.size() << "\n";
        return 0;
    }

    if (cmd == "perturb") {
        require(o.in, "--in", cmd);
        require(o.out, "--out", cmd);
        if (o.mode != "equivalent" && o.mode != "adversarial")
            throw ValidationError("perturb --mode must be equivalent or adversarial");
        const auto data = read_dataset(o.in);
        std::vector<json> records;
        std::size_t changed = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto k = mix_seed(o.seed, i);
            Perturbation p;
            try {
                p = o.mode == "equivalent" ? perturb_equivalent(data[i], lex, k) : perturb_adversarial(data[i], lex, k);
            } catch (const ValidationError& e) {
                err << "warning: sample " << data[i].id << ": " << e.what() << "\n";
                continue;
            }
            json j = sample_to_json(p.sample);
            json pj;
            pj["kind"] = p.kind;
            pj["changed"] = p.changed;
            pj["sentence"] = p.sentence;
            pj["before"] = p.before ? json(to_string(*p.before)) : json(nullptr);
            pj["after"] = p.after ? json(to_string(*p.after)) : json(nullptr);
            j["perturbation"] = pj;
            changed += p.changed;
            records.push_back(std::move(j));
        }
        write_records(o.out, records, echo);
        out << "perturbed " << records.size() << " samples, changed " << changed << "\n";
        return 0;
    }

    if (cmd == "gen-synth") {
        require(o.out, "--out", cmd);
        o.synth.seed = o.seed;
        write_dataset(o.out, generate_synthetic(o.synth, lex), echo);
        out << "wrote " << o.synth.n_samples << " samples\n";
        return 0;
    }

    if (cmd == "train") {
        require(o.train_path, "--train", cmd);
        require(o.out, "--out", cmd);
        PathModel m(o.model_cfg, lex);
        const auto tr_data = read_dataset(o.train_path);
        const auto tr = prepare_all(m, tr_data, lex);
        std::vector<PreparedSample> dev;
        if (!o.dev_path.empty()) {
            const auto dev_data = read_dataset(o.dev_path);
            dev = prepare_all(m, dev_data, lex);
        }
        o.train.seed = o.seed;
        if (!o.history.empty()) {
            o.train.history_path = o.history;
            o.train.history_header = config_header_line(echo);
        }
        o.train.log = [&](const std::string& line) { out << line << "\n"; };
        const auto r = train(m, tr, dev, o.train);
        m.save(o.out);
        out << "epochs " << r.epochs_run << " steps " << r.steps;
        if (!dev.empty()) out << " best_dev_acc " << r.best_dev_acc << " at epoch " << r.best_epoch;
        out << "\n";
        return 0;
    }

    if (cmd == "eval" || cmd == "consistency" || cmd == "perception") {
        require(o.model, "--model", cmd);
        require(o.in, "--in", cmd);
        const auto m = PathModel::from_checkpoint(o.model, lex);
        const auto data = read_dataset(o.in);
        if (cmd == "eval") {
            const auto r = evaluate(m, prepare_all(m, data, lex));
            if (!o.predictions.empty()) write_predictions(o.predictions, r.predictions, config_header_line(echo));
            if (r.labeled) out << "accuracy " << r.accuracy << " (" << r.labeled << " labeled)\n";
            else out << "predictions only, " << r.predictions.size() << " unlabeled samples\n";
            return 0;
        }
        const ModelScorer scorer(m, lex);
        const auto r = cmd == "consistency" ? consistency_eval(scorer, data, lex, o.seed)
                                            : perception_eval(scorer, data, lex, o.seed);
        write_perturb_records(o.out, r, echo);
        out << (cmd == "consistency" ? "flip_rate " : "sensitivity ") << r.rate << " evaluated " << r.evaluated
            << " changed " << r.changed_predictions << " skipped " << r.skipped << "\n";
        return 0;
    }

    if (cmd == "stats") {
        require(o.in, "--in", cmd);
        const auto st = stats(read_dataset(o.in), lex);
        emit_text(o.out, o.json_out ? st.to_json() + "\n" : text_header(echo) + st.to_table(), out);
        return 0;
    }

    if (cmd == "gradcheck") {
        auto cfg = o.model_cfg;
        // Unit-scale tables throughout; see randomize_parameters.
        if (!token_scale_set) cfg.token_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
        cfg.max_positions = std::max(cfg.max_positions, o.max_units);
        double worst = 0.0;
        for (std::size_t k = 0; k < o.instances; ++k) {
            PathModel m(cfg, lex);
            const auto seed = mix_seed(o.seed, k);
            randomize_parameters(m, seed);
            const auto ps = random_instance(m, lex, seed, o.max_units);
            std::vector<Tensor> params;
            std::vector<std::string> names;
            for (auto& [name, t] : m.params().all()) {
                params.push_back(t);
                names.push_back(name);
            }
            const auto rep = finite_diff_check([&] { return m.loss(ps); }, params, 1e-3, 400, seed);
            out << "instance " << k << " checked " << rep.checked << " kinks " << rep.skipped_kinks << " scaled "
                << rep.max_scaled_error << " strict " << rep.max_rel_error << " at " << names[rep.worst_param] << "[" << rep.worst_index << "] analytic "
                << rep.worst_analytic << " numeric " << rep.worst_numeric << "\n";
            worst = std::max(worst, rep.max_scaled_error);
        }
        out << "max relative error " << worst << "\n";
        return worst <= 1e-4 ? 0 : 1;
    }
    throw ValidationError("unknown command " + cmd);
}

} // namespace

std::vector<Sample> parse_dataset(std::string_view text, const std::string& origin) {
    std::size_t first = 0;
    while (first < text.size() && std::isspace(static_cast<unsigned char>(text[first]))) ++first;
    std::vector<nlohmann::json> records;
    try {
        if (first < text.size() && text[first] == '[') {
            for (auto& r : nlohmann::json::parse(text)) records.push_back(std::move(r));
        } else {
            std::istringstream in{std::string(text)};
            std::string line;
            while (std::getline(in, line))
                if (line.find_first_not_of(" \t\r") != std::string::npos) records.push_back(nlohmann::json::parse(line));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(origin + ": " + e.what());
    }
    std::vector<Sample> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (i == 0 && is_header(records[i])) continue;
        out.push_back(sample_from_json(records[i], origin, i));
    }
    return out;
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open dataset " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str(), path.string());
}

json sample_to_json(const Sample& s) {
    json j;
    j["id_string"] = s.id;
    j["context"] = s.context;
    j["question"] = s.question;
    j["answers"] = s.options;
    j["label"] = s.label ? json(*s.label) : json(nullptr);
    return j;
}

void write_records(const std::filesystem::path& path, std::span<const json> records, const ConfigEcho& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    std::vector<json> all;
    if (!config.empty()) all.push_back(json{{"config", config_json(config)}});
    all.insert(all.end(), records.begin(), records.end());
    if (path.extension() == ".jsonl") {
        for (const auto& r : all) out << r.dump() << '\n';
    } else {
        out << json(all).dump(2) << '\n';
    }
}

void write_dataset(const std::filesystem::path& path, std::span<const Sample> samples, const ConfigEcho& config) {
    std::vector<json> records;
    records.reserve(samples.size());
    for (const auto& s : samples) records.push_back(sample_to_json(s));
    write_records(path, records, config);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Logic-path reasoning toolkit: extraction, rewriting, augmentation and a toy path-attention model"};
    app.fallthrough();
    app.option_defaults()->always_capture_default();
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.set_config("--config", "", "key=value file; flags override it");
    app.require_subcommand(1, 1);

    Options o;
    auto& m = o.model_cfg;
    app.add_option("--seed", o.seed, "Seed for every random choice");
    app.add_option("--lexicon", o.lexicon, "Extra connective entries (TSV), merged over the bundled list");
    app.add_option("--jobs", o.jobs, "Worker cap; work runs on one thread")->check(CLI::PositiveNumber);
    app.add_option("--in", o.in, "Input dataset (JSON array or JSON lines)");
    app.add_option("--out", o.out, "Output file");
    app.add_option("--mode", o.mode, "perturb: equivalent or adversarial");
    app.add_option("--model", o.model, "Checkpoint file");
    app.add_option("--train", o.train_path, "Training set");
    app.add_option("--dev", o.dev_path, "Dev set for early stopping");
    app.add_option("--history", o.history, "Loss history (JSON lines)");
    app.add_option("--predictions", o.predictions, "Prediction file (JSON lines)");
    app.add_option("--epsilon-star", o.epsilon_star, "Path filter threshold");
    app.add_option("--scorer", o.scorer, "augment filter scorer: overlap, model or none");
    app.add_option("--max-size", o.max_size, "Largest mined combination; 0 = body size + 2");
    app.add_option("--max-candidates", o.max_candidates, "Mined combinations kept per sample");
    app.add_option("--max-rounds", o.max_rounds, "Closure rounds");
    app.add_option("--max-atoms", o.max_atoms, "Closure size cap");
    app.add_option("--n", o.synth.n_samples, "gen-synth: samples");
    app.add_option("--n-vars", o.synth.n_vars, "gen-synth: variables per sample");
    app.add_option("--body-len", o.synth.body_len, "gen-synth: context atoms");
    app.add_option("--contrapositive-rate", o.synth.contrapositive_rate);
    app.add_option("--two-hop-rate", o.synth.two_hop_rate);
    app.add_option("--filler-fact-rate", o.synth.filler_fact_rate);
    app.add_option("--decoy-rate", o.synth.decoy_rate);
    app.add_option("--epochs", o.train.epochs);
    app.add_option("--batch-size", o.train.batch_size);
    app.add_option("--lr", o.train.lr);
    app.add_option("--patience", o.train.patience);
    app.add_option("--max-steps", o.train.max_steps, "0 = no limit");
    app.add_option("--d", m.d, "Hidden size");
    app.add_option("--layers", m.layers);
    app.add_option("--heads", m.heads);
    app.add_option("--alpha", m.alpha, "In-atom diffusion coefficients")->delimiter(',');
    app.add_option("--beta", m.beta, "Cross-atom diffusion coefficients")->delimiter(',');
    app.add_option("--leaky-slope", m.leaky_slope);
    app.add_option("--vocab-hash-dim", m.vocab_hash_dim);
    auto* token_scale = app.add_option("--token-scale", m.token_scale, "Std of hashed token vectors");
    app.add_option("--max-positions", m.max_positions);
    app.add_option("--strict-mask", m.strict_mask);
    app.add_option("--pre-norm", m.pre_norm);
    app.add_option("--use-positions", m.use_positions);
    app.add_option("--use-slots", m.use_slots);
    app.add_option("--use-self-attention", m.use_self_attention);
    app.add_option("--use-path-attention", m.use_path_attention);
    app.add_option("--use-in-atom", m.use_in_atom);
    app.add_option("--use-cross-atom", m.use_cross_atom);
    app.add_option("--use-diffusion", m.use_diffusion);
    app.add_option("--max-units", o.max_units, "gradcheck: positions per option");
    app.add_option("--instances", o.instances, "gradcheck: random instances");
    app.add_flag("--json", o.json_out, "stats: JSON instead of a table");

    const std::pair<const char*, const char*> commands[] = {
        {"extract", "Dump each sample's reasoning paths"},
        {"closure", "Atom base and derivation traces of each context"},
        {"augment", "Equivalent path extension with the confidence filter"},
        {"perturb", "Equivalent or adversarial rewrite of one sentence per sample"},
        {"gen-synth", "Synthetic entailment dataset"},
        {"train", "Train the path-attention model"},
        {"eval", "Accuracy and predictions of a checkpoint"},
        {"consistency", "Flip rate under equivalent rewrites"},
        {"perception", "Prediction-change rate under meaning-changing rewrites"},
        {"stats", "Connective category statistics"},
        {"gradcheck", "Analytic vs finite-difference gradients on random instances"},
    };
    for (const auto& [name, desc] : commands) app.add_subcommand(name, desc);

    // Options live on the root app; CLI11's help() would show only the subcommand.
    auto usage = [&app] { return app.get_formatter()->make_help(&app, "", CLI::AppFormatMode::Normal); };
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << usage();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << usage();
        return 1;
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        return dispatch(cmd, o, echo_from(app), token_scale->count() > 0, out, err);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const CapacityError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace logipath
