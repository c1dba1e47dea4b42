#include "logipath/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "logipath/error.hpp"

namespace logipath {

namespace {

using NodePtr = std::shared_ptr<Tensor::Node>;

std::string shape_str(const Matrix& m) {
    return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void accumulate(Tensor::Node& n, const Matrix& g) {
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
}

// Builds the output node; the backward closure is only kept when a parent
// needs gradients.
Tensor make(Matrix value, const char* op, std::vector<NodePtr> parents, std::function<void(Tensor::Node&)> bw) {
    auto n = std::make_shared<Tensor::Node>();
    n->value = std::move(value);
    n->op = op;
    n->requires_grad = std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward = std::move(bw);
    }
    return Tensor::from_node(std::move(n));
}

thread_local KinkRecorder* g_recorder = nullptr;

} // namespace

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
    return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
}

double Tensor::item() const {
    if (value().size() != 1) throw ShapeError("item() on a tensor of shape " + shape_str(value()));
    return value()(0, 0);
}

void backward(const Tensor& loss) {
    if (loss.value().rows() != 1 || loss.value().cols() != 1)
        throw ShapeError("backward needs a scalar loss, got " + shape_str(loss.value()));
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Tensor::Node*> order;
    std::unordered_set<Tensor::Node*> seen;
    std::vector<std::pair<Tensor::Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior gradients are rebuilt on every call; leaves accumulate.
    for (auto* n : order)
        if (!n->parents.empty()) n->grad.resize(0, 0);
    accumulate(*loss.node(), Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor::Node* n = *it;
        if (n->backward && n->grad.size() != 0) n->backward(*n);
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
    auto pa = a.node(), pb = b.node();
    return make(a.value() * b.value(), "matmul", {pa, pb}, [pa, pb](Tensor::Node& out) {
        if (pa->requires_grad) accumulate(*pa, out.grad * pb->value.transpose());
        if (pb->requires_grad) accumulate(*pb, pa->value.transpose() * out.grad);
    });
}

Tensor transpose(const Tensor& a) {
    auto pa = a.node();
    return make(a.value().transpose(), "transpose", {pa},
                [pa](Tensor::Node& out) { accumulate(*pa, out.grad.transpose()); });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a.value(), b.value());
    auto pa = a.node(), pb = b.node();
    return make(a.value() + b.value(), "add", {pa, pb}, [pa, pb](Tensor::Node& out) {
        accumulate(*pa, out.grad);
        accumulate(*pb, out.grad);
    });
}

Tensor scale(const Tensor& a, double s) {
    auto pa = a.node();
    return make(a.value() * s, "scale", {pa}, [pa, s](Tensor::Node& out) { accumulate(*pa, out.grad * s); });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("hadamard", a.value(), b.value());
    auto pa = a.node(), pb = b.node();
    return make(a.value().cwiseProduct(b.value()), "hadamard", {pa, pb}, [pa, pb](Tensor::Node& out) {
        if (pa->requires_grad) accumulate(*pa, out.grad.cwiseProduct(pb->value));
        if (pb->requires_grad) accumulate(*pb, out.grad.cwiseProduct(pa->value));
    });
}

Tensor tanh(const Tensor& a) {
    auto pa = a.node();
    Matrix y = a.value().array().tanh().matrix();
    return make(y, "tanh", {pa}, [pa](Tensor::Node& out) {
        accumulate(*pa, out.grad.cwiseProduct((1.0 - out.value.array().square()).matrix()));
    });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    if (auto* rec = KinkRecorder::active()) {
        const auto& v = a.value();
        for (Index i = 0; i < v.size(); ++i) rec->signs.push_back(v.data()[i] >= 0.0);
    }
    auto pa = a.node();
    Matrix y = a.value().unaryExpr([slope](double x) { return x >= 0.0 ? x : slope * x; });
    return make(y, "leaky_relu", {pa}, [pa, slope](Tensor::Node& out) {
        Matrix d = pa->value.unaryExpr([slope](double x) { return x >= 0.0 ? 1.0 : slope; });
        accumulate(*pa, out.grad.cwiseProduct(d));
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
} // namespace

Tensor gelu(const Tensor& a) {
    auto pa = a.node();
    Matrix y = a.value().unaryExpr([](double x) {
        return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    });
    return make(y, "gelu", {pa}, [pa](Tensor::Node& out) {
        Matrix d = pa->value.unaryExpr([](double x) {
            const double u = kGeluC * (x + kGeluA * x * x * x);
            const double t = std::tanh(u);
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        });
        accumulate(*pa, out.grad.cwiseProduct(d));
    });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    if (axis != 0 && axis != 1) throw ShapeError("concat axis must be 0 or 1");
    Index rows = 0, cols = 0;
    for (const auto& p : parts) {
        if (axis == 0) {
            if (rows && p.cols() != parts[0].cols()) shape_error("concat", parts[0].value(), p.value());
            rows += p.rows();
            cols = p.cols();
        } else {
            if (cols && p.rows() != parts[0].rows()) shape_error("concat", parts[0].value(), p.value());
            cols += p.cols();
            rows = p.rows();
        }
    }
    Matrix y(rows, cols);
    std::vector<NodePtr> parents;
    Index off = 0;
    for (const auto& p : parts) {
        if (axis == 0) y.middleRows(off, p.rows()) = p.value();
        else y.middleCols(off, p.cols()) = p.value();
        off += axis == 0 ? p.rows() : p.cols();
        parents.push_back(p.node());
    }
    auto ps = parents;
    return make(std::move(y), "concat", std::move(parents), [ps, axis](Tensor::Node& out) {
        Index o = 0;
        for (const auto& p : ps) {
            const Index n = axis == 0 ? p->value.rows() : p->value.cols();
            if (p->requires_grad) {
                if (axis == 0) accumulate(*p, out.grad.middleRows(o, n));
                else accumulate(*p, out.grad.middleCols(o, n));
            }
            o += n;
        }
    });
}

Tensor mean(const Tensor& a, int axis) {
    auto pa = a.node();
    if (axis == 0) {
        const double n = static_cast<double>(a.rows());
        return make(a.value().colwise().mean(), "mean0", {pa}, [pa, n](Tensor::Node& out) {
            accumulate(*pa, out.grad.replicate(pa->value.rows(), 1) / n);
        });
    }
    if (axis == 1) {
        const double n = static_cast<double>(a.cols());
        return make(a.value().rowwise().mean(), "mean1", {pa}, [pa, n](Tensor::Node& out) {
            accumulate(*pa, out.grad.replicate(1, pa->value.cols()) / n);
        });
    }
    throw ShapeError("mean axis must be 0 or 1");
}

Tensor sum(const Tensor& a) {
    auto pa = a.node();
    return make(Matrix::Constant(1, 1, a.value().sum()), "sum", {pa}, [pa](Tensor::Node& out) {
        accumulate(*pa, Matrix::Constant(pa->value.rows(), pa->value.cols(), out.grad(0, 0)));
    });
}

Tensor softmax_rows(const Tensor& a) {
    auto pa = a.node();
    Matrix y(a.rows(), a.cols());
    for (Index r = 0; r < a.rows(); ++r) {
        const double m = a.value().row(r).maxCoeff();
        y.row(r) = (a.value().row(r).array() - m).exp().matrix();
        y.row(r) /= y.row(r).sum();
    }
    return make(std::move(y), "softmax_rows", {pa}, [pa](Tensor::Node& out) {
        const Matrix& s = out.value;
        Matrix gs = out.grad.cwiseProduct(s);
        Eigen::VectorXd dot = gs.rowwise().sum();
        Matrix d = gs - s.cwiseProduct(dot.replicate(1, s.cols()));
        accumulate(*pa, d);
    });
}

Tensor matrix_power(const Tensor& m, int n) {
    if (m.rows() != m.cols()) throw ShapeError("matrix_power needs a square matrix, got " + shape_str(m.value()));
    if (n < 1) throw ShapeError("matrix_power exponent must be >= 1");
    auto pm = m.node();
    // powers[k] = M^k
    auto powers = std::make_shared<std::vector<Matrix>>();
    powers->push_back(Matrix::Identity(m.rows(), m.cols()));
    powers->push_back(m.value());
    for (int k = 2; k <= n; ++k) powers->push_back(powers->back() * m.value());
    Matrix y = (*powers)[static_cast<std::size_t>(n)];
    return make(std::move(y), "matrix_power", {pm}, [pm, powers, n](Tensor::Node& out) {
        // d(M^n) = sum_k M^k dM M^(n-1-k)
        Matrix g = Matrix::Zero(pm->value.rows(), pm->value.cols());
        for (int k = 0; k < n; ++k)
            g += (*powers)[static_cast<std::size_t>(k)].transpose() * out.grad *
                 (*powers)[static_cast<std::size_t>(n - 1 - k)].transpose();
        accumulate(*pm, g);
    });
}

Tensor embedding_lookup(const Tensor& table, std::span<const Index> indices) {
    Matrix y(static_cast<Index>(indices.size()), table.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= table.rows())
            throw ShapeError("embedding_lookup: index " + std::to_string(indices[i]) + " outside table " +
                             shape_str(table.value()));
        y.row(static_cast<Index>(i)) = table.value().row(indices[i]);
    }
    auto pt = table.node();
    std::vector<Index> idx(indices.begin(), indices.end());
    return make(std::move(y), "embedding_lookup", {pt}, [pt, idx](Tensor::Node& out) {
        Matrix g = Matrix::Zero(pt->value.rows(), pt->value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += out.grad.row(static_cast<Index>(i));
        accumulate(*pt, g);
    });
}

Tensor repeat_rows(const Tensor& row, Index n) {
    if (row.rows() != 1) throw ShapeError("repeat_rows needs a single row, got " + shape_str(row.value()));
    auto pr = row.node();
    return make(row.value().replicate(n, 1), "repeat_rows", {pr},
                [pr](Tensor::Node& out) { accumulate(*pr, out.grad.colwise().sum()); });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.cols())
        throw ShapeError("slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) + ") outside " +
                         shape_str(a.value()));
    auto pa = a.node();
    return make(a.value().middleCols(start, count), "slice_cols", {pa}, [pa, start, count](Tensor::Node& out) {
        Matrix g = Matrix::Zero(pa->value.rows(), pa->value.cols());
        g.middleCols(start, count) = out.grad;
        accumulate(*pa, g);
    });
}

Tensor scatter_cells(const Tensor& values, std::span<const Cell> cells, Index rows, Index cols) {
    if (values.cols() != 1) throw ShapeError("scatter_cells needs a column of values, got " + shape_str(values.value()));
    Matrix y = Matrix::Zero(rows, cols);
    for (const auto& c : cells) {
        if (c.row < 0 || c.row >= rows || c.col < 0 || c.col >= cols || c.source < 0 || c.source >= values.rows())
            throw ShapeError("scatter_cells: cell out of range");
        y(c.row, c.col) = values.value()(c.source, 0);
    }
    auto pv = values.node();
    std::vector<Cell> cs(cells.begin(), cells.end());
    return make(std::move(y), "scatter_cells", {pv}, [pv, cs](Tensor::Node& out) {
        Matrix g = Matrix::Zero(pv->value.rows(), 1);
        for (const auto& c : cs) g(c.source, 0) += out.grad(c.row, c.col);
        accumulate(*pv, g);
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (gain.rows() != 1 || gain.cols() != x.cols()) shape_error("layer_norm", x.value(), gain.value());
    if (bias.rows() != 1 || bias.cols() != x.cols()) shape_error("layer_norm", x.value(), bias.value());
    const Index n = x.rows(), d = x.cols();
    Matrix xhat(n, d);
    Eigen::VectorXd inv_std(n);
    for (Index r = 0; r < n; ++r) {
        const double mu = x.value().row(r).mean();
        const auto centered = (x.value().row(r).array() - mu).matrix();
        const double var = centered.squaredNorm() / static_cast<double>(d);
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = centered * inv_std(r);
    }
    Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
    y.rowwise() += bias.value().row(0);
    auto px = x.node(), pg = gain.node(), pb = bias.node();
    return make(std::move(y), "layer_norm", {px, pg, pb}, [px, pg, pb, xhat, inv_std](Tensor::Node& out) {
        const Index rows = xhat.rows();
        const double dd = static_cast<double>(xhat.cols());
        if (pg->requires_grad) accumulate(*pg, out.grad.cwiseProduct(xhat).colwise().sum());
        if (pb->requires_grad) accumulate(*pb, out.grad.colwise().sum());
        if (px->requires_grad) {
            Matrix gx(rows, xhat.cols());
            for (Index r = 0; r < rows; ++r) {
                const Eigen::RowVectorXd gh = out.grad.row(r).cwiseProduct(pg->value.row(0));
                const double m1 = gh.mean();
                const double m2 = gh.cwiseProduct(xhat.row(r)).sum() / dd;
                gx.row(r) = inv_std(r) * (gh.array() - m1 - xhat.row(r).array() * m2).matrix();
            }
            accumulate(*px, gx);
        }
    });
}

Tensor cross_entropy(const Tensor& logits, Index label) {
    if (logits.rows() != 1) throw ShapeError("cross_entropy needs 1 x k logits, got " + shape_str(logits.value()));
    if (label < 0 || label >= logits.cols()) throw ShapeError("cross_entropy label out of range");
    const auto& z = logits.value();
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    auto pl = logits.node();
    return make(Matrix::Constant(1, 1, lse - z(0, label)), "cross_entropy", {pl}, [pl, lse, label](Tensor::Node& out) {
        Matrix g = (pl->value.array() - lse).exp().matrix();
        g(0, label) -= 1.0;
        accumulate(*pl, g * out.grad(0, 0));
    });
}

KinkRecorder::KinkRecorder() : previous_(g_recorder) { g_recorder = this; }
KinkRecorder::~KinkRecorder() { g_recorder = previous_; }
KinkRecorder* KinkRecorder::active() { return g_recorder; }

Tensor& ParameterStore::add(const std::string& name, Matrix init) {
    auto [it, inserted] = params_.insert_or_assign(name, Tensor(std::move(init), true));
    return it->second;
}

Tensor& ParameterStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValidationError("unknown parameter " + name);
    return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValidationError("unknown parameter " + name);
    return it->second;
}

void ParameterStore::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += static_cast<std::size_t>(t.value().size());
    return n;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params, const std::string& meta_json) {
    nlohmann::ordered_json j;
    j["format"] = "logipath-checkpoint";
    j["version"] = 1;
    j["meta"] = nlohmann::ordered_json::parse(meta_json);
    auto& ps = j["params"] = nlohmann::ordered_json::object();
    for (const auto& [name, t] : params.all()) {
        const auto& v = t.value();
        ps[name]["shape"] = {v.rows(), v.cols()};
        ps[name]["data"] = std::vector<double>(v.data(), v.data() + v.size());
    }
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write checkpoint " + path.string());
    out << j.dump(1) << '\n';
}

void load_checkpoint(const std::filesystem::path& path, ParameterStore& params) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("checkpoint " + path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "logipath-checkpoint" || j.value("version", 0) != 1)
        throw ValidationError("checkpoint " + path.string() + ": unsupported format");
    for (auto& [name, t] : params.all()) {
        if (!j["params"].contains(name)) throw ValidationError("checkpoint lacks parameter " + name);
        const auto& e = j["params"][name];
        const auto shape = e["shape"].get<std::vector<Index>>();
        const auto data = e["data"].get<std::vector<double>>();
        if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols() ||
            data.size() != static_cast<std::size_t>(t.value().size()))
            throw ValidationError("checkpoint parameter " + name + " has the wrong shape");
        std::copy(data.begin(), data.end(), t.mutable_value().data());
    }
}

FiniteDiffReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params, double eps,
                                   std::size_t min_coords, std::uint64_t seed) {
    for (auto& p : params) p.zero_grad();
    backward(loss_fn());

    std::vector<std::pair<std::size_t, Index>> coords;
    for (std::size_t p = 0; p < params.size(); ++p)
        for (Index i = 0; i < params[p].value().size(); ++i) coords.emplace_back(p, i);
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    if (coords.size() > min_coords) coords.resize(min_coords);

    FiniteDiffReport report;
    for (auto& t : params)
        if (t.grad().size()) report.grad_scale = std::max(report.grad_scale, t.grad().cwiseAbs().maxCoeff());
    for (const auto& [p, i] : coords) {
        auto& t = params[p];
        const double analytic = t.grad().size() ? t.grad().data()[i] : 0.0;
        double* x = t.mutable_value().data() + i;
        const double orig = *x;

        std::vector<bool> plus_signs, minus_signs;
        *x = orig + eps;
        double fp, fm;
        {
            KinkRecorder rec;
            fp = loss_fn().item();
            plus_signs = std::move(rec.signs);
        }
        *x = orig - eps;
        {
            KinkRecorder rec;
            fm = loss_fn().item();
            minus_signs = std::move(rec.signs);
        }
        *x = orig;
        if (plus_signs != minus_signs) {
            ++report.skipped_kinks;
            continue;
        }
        const double numeric = (fp - fm) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic - numeric) / denom;
        report.max_scaled_error = std::max(report.max_scaled_error,
                                           std::abs(analytic - numeric) / std::max(denom, kScaleFloor * report.grad_scale));
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_param = p;
            report.worst_index = i;
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
        ++report.checked;
    }
    return report;
}

} // namespace logipath
