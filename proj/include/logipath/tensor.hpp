#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// Every tensor is rank 2 (vectors are 1 x d rows, scalars 1 x 1); that covers
// all operations the path-attention model needs. Ops are free functions that
// record a backward closure when any input requires a gradient.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace logipath {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Tensor {
public:
    struct Node {
        Matrix value;
        Matrix grad; // empty until something flows into it
        bool requires_grad = false;
        const char* op = "leaf";
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward;
    };

    Tensor() = default;
    explicit Tensor(Matrix value, bool requires_grad = false);

    static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
    static Tensor scalar(double v) { return Tensor(Matrix::Constant(1, 1, v)); }

    bool defined() const { return node_ != nullptr; }
    const Matrix& value() const { return node_->value; }
    /// Leaf values may be edited in place (optimizers, finite differences).
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    void zero_grad() { node_->grad.resize(0, 0); }
    bool requires_grad() const { return node_->requires_grad; }

    Index rows() const { return node_->value.rows(); }
    Index cols() const { return node_->value.cols(); }
    std::array<Index, 2> shape() const { return {rows(), cols()}; }
    double item() const;

    const std::shared_ptr<Node>& node() const { return node_; }
    static Tensor from_node(std::shared_ptr<Node> n);

private:
    std::shared_ptr<Node> node_;
};

/// Accumulates d(loss)/d(leaf) into every leaf that requires a gradient.
/// Throws ShapeError unless `loss` is 1 x 1.
void backward(const Tensor& loss);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
/// tanh approximation of GELU; smooth, so it adds no kinks to gradient checks.
Tensor gelu(const Tensor& a);
/// axis 0 stacks rows, axis 1 stacks columns.
Tensor concat(std::span<const Tensor> parts, int axis);
/// axis 0 averages over rows (-> 1 x cols), axis 1 over columns (-> rows x 1).
Tensor mean(const Tensor& a, int axis);
Tensor sum(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
/// M^n for square M and n >= 1; n == 1 returns M unchanged.
Tensor matrix_power(const Tensor& m, int n);
/// Rows `indices` of `table`.
Tensor embedding_lookup(const Tensor& table, std::span<const Index> indices);
/// 1 x c -> n x c
Tensor repeat_rows(const Tensor& row, Index n);
Tensor slice_cols(const Tensor& a, Index start, Index count);

/// (row, col, source) triples: out(row, col) = values(source, 0); zero elsewhere.
struct Cell {
    Index row, col, source;
};
Tensor scatter_cells(const Tensor& values, std::span<const Cell> cells, Index rows, Index cols);

/// Row-wise layer normalization with 1 x c gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// -log softmax(logits)[label] for 1 x k logits.
Tensor cross_entropy(const Tensor& logits, Index label);

/// While alive on a thread, records the sign of every leaky_relu input so
/// finite-difference checks can skip coordinates that straddle the kink.
class KinkRecorder {
public:
    KinkRecorder();
    ~KinkRecorder();
    KinkRecorder(const KinkRecorder&) = delete;
    KinkRecorder& operator=(const KinkRecorder&) = delete;

    std::vector<bool> signs;
    static KinkRecorder* active();

private:
    KinkRecorder* previous_;
};

/// Named trainable leaves, iterated in name order.
class ParameterStore {
public:
    Tensor& add(const std::string& name, Matrix init);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.contains(name); }
    std::map<std::string, Tensor>& all() { return params_; }
    const std::map<std::string, Tensor>& all() const { return params_; }
    void zero_grad();
    std::size_t scalar_count() const;

private:
    std::map<std::string, Tensor> params_;
};

/// JSON checkpoint: {"format", "version", "meta", "params": {name: {"shape", "data"}}}.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const std::string& meta_json = "{}");
/// Overwrites values of existing parameters; throws ValidationError on a
/// missing name or shape mismatch.
void load_checkpoint(const std::filesystem::path& path, ParameterStore& params);

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    // Same, with the denominator floored at kScaleFloor * grad_scale.
    double max_scaled_error = 0.0;
    double grad_scale = 0.0; // largest |analytic| over all coordinates
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
    // Coordinate behind max_rel_error.
    std::size_t worst_param = 0;
    Index worst_index = 0;
    double worst_analytic = 0.0, worst_numeric = 0.0;
};

/// Central differences on a seeded sample of at least `min_coords`
/// coordinates (all of them when fewer exist). Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as denominator. Coordinates whose +/-eps
/// evaluations see a different leaky_relu sign pattern are skipped.
///
/// The scaled error floors the denominator at a fraction of the largest
/// gradient entry. At fixed eps the truncation error follows the loss
/// curvature, not the coordinate's own gradient, so entries far below the
/// gradient's scale can miss a pure relative bound while being correct.
inline constexpr double kScaleFloor = 1e-3;
FiniteDiffReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                                   double eps = 1e-3, std::size_t min_coords = 200,
                                   std::uint64_t seed = 0);

} // namespace logipath
