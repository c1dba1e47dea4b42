#include "logipath/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "logipath/error.hpp"
#include "logipath/extraction.hpp"

namespace logipath {

namespace {

constexpr double kMaskValue = -1e9;

std::vector<double> parse_list(const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

std::string join_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        std::ostringstream os;
        os.precision(17);
        os << v[i];
        out += os.str();
    }
    return out;
}

bool parse_bool(const std::string& k, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config key " + k + " expects true or false, got '" + v + "'");
}

Matrix gaussian(std::mt19937_64& rng, Index r, Index c, double stddev) {
    std::normal_distribution<double> n(0.0, stddev);
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

// FNV-1a; stable across platforms unlike std::hash.
std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string layer_key(std::size_t l, const char* name) { return "layer" + std::to_string(l) + "." + name; }

} // namespace

void ModelConfig::validate() const {
    if (d == 0 || heads == 0 || d % heads != 0)
        throw ValidationError("model d (" + std::to_string(d) + ") must be a positive multiple of heads (" +
                              std::to_string(heads) + ")");
    if (layers == 0) throw ValidationError("model needs at least one layer");
    if (alpha.empty() || alpha.size() != beta.size())
        throw ValidationError("alpha and beta must be non-empty and of equal length");
    auto sums_to_one = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return std::abs(s - 1.0) <= 1e-9;
    };
    if (!sums_to_one(alpha) || !sums_to_one(beta)) throw ValidationError("alpha and beta must each sum to 1");
    if (vocab_hash_dim == 0 || max_positions == 0) throw ValidationError("vocab_hash_dim and max_positions must be positive");
    if (!(token_scale >= 0.0)) throw ValidationError("token_scale must be non-negative");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
    auto b = [](bool x) { return std::string(x ? "true" : "false"); };
    std::ostringstream slope;
    slope.precision(17);
    slope << leaky_slope;
    std::ostringstream tscale;
    tscale.precision(17);
    tscale << token_scale;
    return {{"d", std::to_string(d)},
            {"layers", std::to_string(layers)},
            {"heads", std::to_string(heads)},
            {"alpha", join_list(alpha)},
            {"beta", join_list(beta)},
            {"leaky_slope", slope.str()},
            {"vocab_hash_dim", std::to_string(vocab_hash_dim)},
            {"token_scale", tscale.str()},
            {"max_positions", std::to_string(max_positions)},
            {"model_seed", std::to_string(seed)},
            {"strict_mask", b(strict_mask)},
            {"pre_norm", b(pre_norm)},
            {"use_positions", b(use_positions)},
            {"use_slots", b(use_slots)},
            {"use_self_attention", b(use_self_attention)},
            {"use_path_attention", b(use_path_attention)},
            {"use_in_atom", b(use_in_atom)},
            {"use_cross_atom", b(use_cross_atom)},
            {"use_diffusion", b(use_diffusion)}};
}

std::vector<std::string> ModelConfig::apply(const std::map<std::string, std::string>& kv) {
    std::vector<std::string> used;
    for (const auto& [k, v] : kv) {
        try {
            if (k == "d") d = std::stoul(v);
            else if (k == "layers") layers = std::stoul(v);
            else if (k == "heads") heads = std::stoul(v);
            else if (k == "alpha") alpha = parse_list(v);
            else if (k == "beta") beta = parse_list(v);
            else if (k == "leaky_slope") leaky_slope = std::stod(v);
            else if (k == "vocab_hash_dim") vocab_hash_dim = std::stoul(v);
            else if (k == "token_scale") token_scale = std::stod(v);
            else if (k == "max_positions") max_positions = std::stoul(v);
            else if (k == "model_seed") seed = std::stoull(v);
            else if (k == "strict_mask") strict_mask = parse_bool(k, v);
            else if (k == "pre_norm") pre_norm = parse_bool(k, v);
            else if (k == "use_positions") use_positions = parse_bool(k, v);
            else if (k == "use_slots") use_slots = parse_bool(k, v);
            else if (k == "use_self_attention") use_self_attention = parse_bool(k, v);
            else if (k == "use_path_attention") use_path_attention = parse_bool(k, v);
            else if (k == "use_in_atom") use_in_atom = parse_bool(k, v);
            else if (k == "use_cross_atom") use_cross_atom = parse_bool(k, v);
            else if (k == "use_diffusion") use_diffusion = parse_bool(k, v);
            else continue;
        } catch (const std::logic_error& e) {
            if (dynamic_cast<const ValidationError*>(&e)) throw;
            throw ValidationError("config key " + k + ": cannot parse '" + v + "'");
        }
        used.push_back(k);
    }
    return used;
}

PathModel::PathModel(ModelConfig cfg, const Lexicon& lex) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto d = static_cast<Index>(cfg_.d);

    // Symbol vocabulary: every lexicon connective, the bare fact, and one
    // fallback per category.
    for (const auto& e : lex.entries()) symbol_keys_.push_back(std::string(category_name(e.category)) + ":" + e.text());
    symbol_keys_.push_back(std::string(category_name(FunctionCategory::Fact)) + ":" + std::string(kBareFactSurface));
    for (auto c : kAllCategories) symbol_keys_.push_back(std::string(category_name(c)) + ":<unk>");
    std::sort(symbol_keys_.begin(), symbol_keys_.end());
    symbol_keys_.erase(std::unique(symbol_keys_.begin(), symbol_keys_.end()), symbol_keys_.end());
    for (std::size_t i = 0; i < symbol_keys_.size(); ++i) symbol_index_[symbol_keys_[i]] = static_cast<Index>(i);

    const double emb = 0.02;
    std::mt19937_64 rng(cfg_.seed);
    token_table_ = gaussian(rng, static_cast<Index>(cfg_.vocab_hash_dim), d, cfg_.token_scale);
    // A symbol's embedding is its category row plus its own surface row.
    params_.add("embed.symbol", gaussian(rng, static_cast<Index>(symbol_keys_.size()), d, emb));
    params_.add("embed.category", gaussian(rng, static_cast<Index>(kAllCategories.size()), d, emb));
    params_.add("embed.position", gaussian(rng, static_cast<Index>(cfg_.max_positions), d, emb));
    params_.add("embed.negation", gaussian(rng, 1, d, emb));
    params_.add("embed.slot", gaussian(rng, 2, d, emb));

    auto lecun = [&](Index in, Index out) { return gaussian(rng, in, out, 1.0 / std::sqrt(static_cast<double>(in))); };
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) params_.add(layer_key(l, w), lecun(d, d));
        params_.add(layer_key(l, "path.w_in"), lecun(2 * d, 1));
        params_.add(layer_key(l, "path.w_crs"), lecun(d, 1));
        params_.add(layer_key(l, "ln1.gain"), Matrix::Ones(1, d));
        params_.add(layer_key(l, "ln1.bias"), Matrix::Zero(1, d));
        params_.add(layer_key(l, "ln2.gain"), Matrix::Ones(1, d));
        params_.add(layer_key(l, "ln2.bias"), Matrix::Zero(1, d));
        params_.add(layer_key(l, "ffn.w1"), lecun(d, 4 * d));
        params_.add(layer_key(l, "ffn.b1"), Matrix::Zero(1, 4 * d));
        params_.add(layer_key(l, "ffn.w2"), lecun(4 * d, d));
        params_.add(layer_key(l, "ffn.b2"), Matrix::Zero(1, d));
    }
    if (cfg_.pre_norm) {
        params_.add("final_ln.gain", Matrix::Ones(1, d));
        params_.add("final_ln.bias", Matrix::Zero(1, d));
    }
    params_.add("out.w", lecun(3 * d, 1));
    params_.add("out.b", Matrix::Zero(1, 1));
}

Matrix PathModel::token_embedding(const std::string& token) const {
    return token_table_.row(static_cast<Index>(fnv1a(token) % cfg_.vocab_hash_dim));
}

Index PathModel::symbol_row(const Atom& a) const {
    const std::string cat(category_name(a.category()));
    if (auto it = symbol_index_.find(cat + ":" + a.surface()); it != symbol_index_.end()) return it->second;
    return symbol_index_.at(cat + ":<unk>");
}

SequenceState PathModel::encode(const ReasoningPath& path, const std::string& sample_text) const {
    if (path.body.empty() && path.head.empty()) throw ValidationError("cannot encode an empty path");
    const auto d = static_cast<Index>(cfg_.d);
    SequenceState s;

    std::vector<const Atom*> atoms;
    for (const auto& a : path.body) atoms.push_back(&a);
    for (const auto& a : path.head) atoms.push_back(&a);

    for (std::size_t i = 0; i < atoms.size(); ++i) {
        std::vector<Index> positions{static_cast<Index>(s.units.size())};
        s.units.push_back({true, i, {}, true});
        s.symbol_rows.push_back(symbol_row(*atoms[i]));
        ++s.M;
        for (const auto& l : atoms[i]->literals()) {
            positions.push_back(static_cast<Index>(s.units.size()));
            s.units.push_back({false, i, l.variable, l.positive, positions.size() - 2});
            s.symbol_rows.push_back(-1);
            ++s.K;
        }
        s.atom_positions.push_back(std::move(positions));
    }
    const auto n = static_cast<Index>(s.units.size());
    if (static_cast<std::size_t>(n) > cfg_.max_positions)
        throw ValidationError("path has " + std::to_string(n) + " positions, more than max_positions " +
                              std::to_string(cfg_.max_positions));

    s.var_rows = Matrix::Zero(n, d);
    s.negation = Matrix::Zero(n, 1);
    s.slots = Matrix::Zero(n, 2);
    s.categories = Matrix::Zero(n, static_cast<Index>(kAllCategories.size()));
    for (Index p = 0; p < n; ++p) {
        const auto& u = s.units[static_cast<std::size_t>(p)];
        if (u.is_symbol) {
            s.categories(p, static_cast<Index>(atoms[u.atom]->category())) = 1.0;
            continue;
        }
        const auto it = path.bindings.find(u.variable);
        if (it == path.bindings.end()) throw ValidationError("unbound variable " + variable_name(u.variable));
        const auto tokens = tokenize(it->second);
        Matrix sum = Matrix::Zero(1, d);
        std::size_t count = 0;
        for (const auto& t : tokens) {
            if (t == ",") continue;
            sum += token_embedding(t);
            ++count;
        }
        if (count == 0) throw ValidationError("clause of variable " + variable_name(u.variable) + " has no tokens");
        s.var_rows.row(p) = sum / static_cast<double>(count);
        if (!u.positive) s.negation(p, 0) = 1.0;
        s.slots(p, static_cast<Index>(u.slot)) = 1.0;
    }

    s.cls = Matrix::Zero(1, d);
    std::size_t count = 0;
    for (const auto& t : tokenize(sample_text)) {
        if (t == ",") continue;
        s.cls += token_embedding(t);
        ++count;
    }
    if (count) s.cls /= static_cast<double>(count);

    const auto m = static_cast<Index>(atoms.size());
    s.symbol_select = Matrix::Zero(m, n);
    s.var_mean = Matrix::Zero(m, n);
    s.atom_mean = Matrix::Zero(m, n);
    for (Index i = 0; i < m; ++i) {
        const auto& pos = s.atom_positions[static_cast<std::size_t>(i)];
        s.symbol_select(i, pos[0]) = 1.0;
        for (std::size_t j = 1; j < pos.size(); ++j) {
            s.var_mean(i, pos[j]) = 1.0 / static_cast<double>(pos.size() - 1);
            s.in_cells.push_back({pos[0], pos[j], i});
            s.in_cells.push_back({pos[j], pos[0], i});
        }
        for (auto p : pos) s.atom_mean(i, p) = 1.0 / static_cast<double>(pos.size());
    }

    // Same variable id, polarity ignored.
    std::vector<std::pair<Index, Index>> pairs;
    for (Index p = 0; p < n; ++p)
        for (Index q = p + 1; q < n; ++q) {
            const auto& a = s.units[static_cast<std::size_t>(p)];
            const auto& b = s.units[static_cast<std::size_t>(q)];
            if (!a.is_symbol && !b.is_symbol && a.variable == b.variable) pairs.emplace_back(p, q);
        }
    s.pair_mean = Matrix::Zero(static_cast<Index>(pairs.size()), n);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [p, q] = pairs[k];
        const auto row = static_cast<Index>(k);
        s.pair_mean(row, p) = 0.5;
        s.pair_mean(row, q) = 0.5;
        s.cross_cells.push_back({p, q, row});
        s.cross_cells.push_back({q, p, row});
    }

    // Strict mode keeps cells reachable within N structural hops, plus the diagonal.
    Matrix adj = Matrix::Identity(n, n);
    for (const auto& c : s.in_cells) adj(c.row, c.col) = 1.0;
    for (const auto& c : s.cross_cells) adj(c.row, c.col) = 1.0;
    Matrix reach = adj;
    for (std::size_t k = 1; k < cfg_.order(); ++k) reach = (reach * adj).unaryExpr([](double x) { return x > 0 ? 1.0 : 0.0; });
    s.strict_mask = reach.unaryExpr([](double x) { return x > 0 ? 0.0 : kMaskValue; });
    return s;
}

PreparedSample PathModel::prepare(const Sample& sample, const Lexicon& lex) const {
    PreparedSample out;
    out.id = sample.id;
    out.label = sample.label;
    try {
        const auto paths = build_paths(sample, lex);
        for (std::size_t i = 0; i < 4; ++i)
            out.options[i] = encode(paths[i], sample.context + " " + sample.question + " " + sample.options[i]);
    } catch (const ValidationError& e) {
        throw ValidationError("sample " + sample.id + ": " + e.what());
    }
    return out;
}

Tensor PathModel::embed(const SequenceState& s) const {
    const auto n = static_cast<Index>(s.size());
    Matrix select = Matrix::Zero(n, p("embed.symbol").rows());
    for (Index i = 0; i < n; ++i)
        if (s.symbol_rows[static_cast<std::size_t>(i)] >= 0) select(i, s.symbol_rows[static_cast<std::size_t>(i)]) = 1.0;
    Tensor h = add(matmul(Tensor(select), p("embed.symbol")), Tensor(s.var_rows));
    h = add(h, matmul(Tensor(s.categories), p("embed.category")));
    h = add(h, matmul(Tensor(s.negation), p("embed.negation")));
    if (cfg_.use_slots) h = add(h, matmul(Tensor(s.slots), p("embed.slot")));
    if (cfg_.use_positions) {
        std::vector<Index> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), Index{0});
        h = add(h, embedding_lookup(p("embed.position"), idx));
    }
    return h;
}

Tensor PathModel::self_attention(std::size_t layer, const Tensor& h) const {
    const auto dh = static_cast<Index>(cfg_.d / cfg_.heads);
    const Tensor q = matmul(h, p(layer_key(layer, "attn.wq")));
    const Tensor k = matmul(h, p(layer_key(layer, "attn.wk")));
    const Tensor v = matmul(h, p(layer_key(layer, "attn.wv")));
    const double scale_by = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> heads;
    for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
        const Index off = static_cast<Index>(hd) * dh;
        const Tensor qh = slice_cols(q, off, dh), kh = slice_cols(k, off, dh), vh = slice_cols(v, off, dh);
        heads.push_back(matmul(softmax_rows(scale(matmul(qh, transpose(kh)), scale_by)), vh));
    }
    return matmul(concat(heads, 1), p(layer_key(layer, "attn.wo")));
}

Tensor PathModel::in_atom_scores(std::size_t layer, const SequenceState& s, const Tensor& h) const {
    const auto n = static_cast<Index>(s.size());
    const Tensor parts[] = {matmul(Tensor(s.var_mean), h), matmul(Tensor(s.symbol_select), h)};
    const Tensor x = tanh(concat(parts, 1));
    const Tensor scores = leaky_relu(matmul(x, p(layer_key(layer, "path.w_in"))), cfg_.leaky_slope);
    return scatter_cells(scores, s.in_cells, n, n);
}

Tensor PathModel::cross_atom_scores(std::size_t layer, const SequenceState& s, const Tensor& h) const {
    const auto n = static_cast<Index>(s.size());
    if (s.cross_cells.empty()) return Tensor(Matrix::Zero(n, n));
    const Tensor scores =
        leaky_relu(matmul(matmul(Tensor(s.pair_mean), h), p(layer_key(layer, "path.w_crs"))), cfg_.leaky_slope);
    return scatter_cells(scores, s.cross_cells, n, n);
}

Tensor PathModel::diffuse(const Tensor& m, const std::vector<double>& coeffs) {
    Tensor out;
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        if (coeffs[i] == 0.0) continue;
        const Tensor term = scale(matrix_power(m, static_cast<int>(i + 1)), coeffs[i]);
        out = out.defined() ? add(out, term) : term;
    }
    return out.defined() ? out : Tensor(Matrix::Zero(m.rows(), m.cols()));
}

PathModel::PathOutput PathModel::path_attention(std::size_t layer, const SequenceState& s, const Tensor& h) const {
    const auto n = static_cast<Index>(s.size());
    const auto dh = static_cast<Index>(cfg_.d / cfg_.heads);
    Tensor bias(Matrix::Zero(n, n));
    auto spread = [&](const Tensor& m, const std::vector<double>& c) { return cfg_.use_diffusion ? diffuse(m, c) : m; };
    if (cfg_.use_in_atom) bias = add(bias, spread(in_atom_scores(layer, s, h), cfg_.alpha));
    if (cfg_.use_cross_atom) bias = add(bias, spread(cross_atom_scores(layer, s, h), cfg_.beta));
    if (cfg_.strict_mask) bias = add(bias, Tensor(s.strict_mask));

    PathOutput out;
    const double scale_by = 1.0 / std::sqrt(static_cast<double>(cfg_.d));
    std::vector<Tensor> heads;
    for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
        const Tensor hh = slice_cols(h, static_cast<Index>(hd) * dh, dh);
        const Tensor seq = scale(matmul(hh, transpose(hh)), scale_by);
        const Tensor w = softmax_rows(add(seq, bias));
        out.weights.push_back(w.value());
        heads.push_back(matmul(w, hh));
    }
    out.h_seq = concat(heads, 1);
    out.h_p = mean(matmul(Tensor(s.atom_mean), out.h_seq), 0);
    out.h_pa = repeat_rows(out.h_p, n);
    return out;
}

PathModel::BlockOutput PathModel::block_forward(std::size_t layer, const SequenceState& s, const Tensor& h) const {
    auto ln = [&](const Tensor& x, const char* which) {
        const std::string w(which);
        return layer_norm(x, p(layer_key(layer, (w + ".gain").c_str())), p(layer_key(layer, (w + ".bias").c_str())));
    };
    auto ffn = [&](const Tensor& x) {
        const auto rows = x.rows();
        Tensor y = add(matmul(x, p(layer_key(layer, "ffn.w1"))), repeat_rows(p(layer_key(layer, "ffn.b1")), rows));
        y = gelu(y);
        return add(matmul(y, p(layer_key(layer, "ffn.w2"))), repeat_rows(p(layer_key(layer, "ffn.b2")), rows));
    };
    const Tensor x = cfg_.pre_norm ? ln(h, "ln1") : h;
    Tensor sum = h;
    if (cfg_.use_self_attention) sum = add(sum, self_attention(layer, x));
    BlockOutput out;
    if (cfg_.use_path_attention) {
        auto pa = path_attention(layer, s, x);
        sum = add(sum, pa.h_pa);
        out.h_p = pa.h_p;
    } else {
        out.h_p = mean(matmul(Tensor(s.atom_mean), x), 0);
    }
    if (cfg_.pre_norm) {
        out.h = add(sum, ffn(ln(sum, "ln2")));
    } else {
        const Tensor h1 = ln(sum, "ln1");
        out.h = ln(add(h1, ffn(h1)), "ln2");
    }
    return out;
}

Tensor PathModel::option_score(const SequenceState& s) const {
    Tensor h = embed(s);
    Tensor h_p;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        auto b = block_forward(l, s, h);
        h = b.h;
        h_p = b.h_p;
    }
    if (cfg_.pre_norm) h = layer_norm(h, p("final_ln.gain"), p("final_ln.bias"));
    const Tensor parts[] = {Tensor(s.cls), mean(h, 0), h_p};
    return add(matmul(concat(parts, 1), p("out.w")), p("out.b"));
}

Tensor PathModel::logits(const PreparedSample& ps) const {
    std::vector<Tensor> scores;
    for (const auto& o : ps.options) scores.push_back(option_score(o));
    return transpose(concat(scores, 0));
}

std::array<double, 4> PathModel::probabilities(const PreparedSample& ps) const {
    const Matrix prob = softmax_rows(logits(ps)).value();
    return {prob(0, 0), prob(0, 1), prob(0, 2), prob(0, 3)};
}

Tensor PathModel::loss(const PreparedSample& ps) const {
    if (!ps.label) throw ValidationError("sample " + ps.id + " has no label");
    return cross_entropy(logits(ps), *ps.label);
}

std::string PathModel::model_card_json() const {
    nlohmann::ordered_json j;
    for (const auto& [k, v] : cfg_.to_map()) j["config"][k] = v;
    j["parameters"] = params_.scalar_count();
    j["symbols"] = symbol_keys_;
    return j.dump();
}

void PathModel::save(const std::filesystem::path& path) const { save_checkpoint(path, params_, model_card_json()); }

void PathModel::load(const std::filesystem::path& path) { load_checkpoint(path, params_); }

PathModel PathModel::from_checkpoint(const std::filesystem::path& path, const Lexicon& lex) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("checkpoint " + path.string() + ": " + e.what());
    }
    std::map<std::string, std::string> kv;
    if (j.contains("meta") && j["meta"].contains("config"))
        for (const auto& [k, v] : j["meta"]["config"].items()) kv[k] = v.get<std::string>();
    if (kv.empty()) throw ValidationError("checkpoint " + path.string() + " has no model config");
    ModelConfig cfg;
    cfg.apply(kv);
    PathModel m(cfg, lex);
    m.load(path);
    return m;
}

} // namespace logipath
