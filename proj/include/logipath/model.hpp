#pragma once

// Path-attention reasoning model at toy scale.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "logipath/lexicon.hpp"
#include "logipath/logic.hpp"
#include "logipath/tensor.hpp"

namespace logipath {

struct ModelConfig {
    std::size_t d = 64;
    std::size_t layers = 3;
    std::size_t heads = 4;
    std::vector<double> alpha{0.2, 0.8}; // in-atom diffusion, one per order
    std::vector<double> beta{0.0, 1.0};  // cross-atom diffusion
    double leaky_slope = 0.02;
    std::size_t vocab_hash_dim = 4096;
    // Std of the hashed token vectors. Kept at the learned tables' scale: at
    // unit norm they swamp the symbol and negation rows and training fits
    // clause wording instead.
    double token_scale = 0.02;
    std::size_t max_positions = 64;
    std::uint64_t seed = 0;

    bool strict_mask = false;   // -1e9 on structurally unconnected cells
    bool pre_norm = false;
    bool use_positions = true;
    bool use_slots = true; // argument-slot embedding for variables
    bool use_self_attention = true;
    bool use_path_attention = true;
    bool use_in_atom = true;
    bool use_cross_atom = true;
    bool use_diffusion = true; // false: first-order scores as the bias, no powers

    std::size_t order() const { return alpha.size(); }
    void validate() const;
    /// key=value pairs, used for config echo and model cards.
    std::map<std::string, std::string> to_map() const;
    /// Applies recognized `model.*`-free keys (d, layers, heads, alpha, ...);
    /// unknown keys are left for the caller. Returns the keys consumed.
    std::vector<std::string> apply(const std::map<std::string, std::string>& kv);
};

/// One option's path, flattened into positions with everything the forward
/// pass needs precomputed as constants.
struct SequenceState {
    struct Unit {
        bool is_symbol = false;
        std::size_t atom = 0;
        VariableId variable{};
        bool positive = true;
        std::size_t slot = 0; // argument index within the atom
    };
    std::vector<Unit> units;
    std::size_t M = 0; // function-symbol positions
    std::size_t K = 0; // variable positions
    std::vector<std::vector<Index>> atom_positions; // symbol position first

    std::vector<Index> symbol_rows; // per position, symbol table row or -1
    Matrix var_rows;                // n x d, token means at variable positions
    Matrix negation;                // n x 1, 1 at negative variables
    Matrix slots;                   // n x 2, one-hot argument index at variables
    Matrix categories;              // n x 4, one-hot category at symbols
    Matrix cls;                     // 1 x d

    Matrix symbol_select; // atoms x n
    Matrix var_mean;      // atoms x n
    Matrix atom_mean;     // atoms x n
    Matrix pair_mean;     // pairs x n, 0.5 at each end
    std::vector<Cell> in_cells, cross_cells;
    Matrix strict_mask; // n x n, 0 or -1e9

    std::size_t size() const { return units.size(); }
};

struct PreparedSample {
    std::string id;
    std::array<SequenceState, 4> options;
    std::optional<int> label;
};

class PathModel {
public:
    PathModel(ModelConfig cfg, const Lexicon& lex);

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    /// Fixed hashed token embedding (not trained).
    Matrix token_embedding(const std::string& token) const;
    SequenceState encode(const ReasoningPath& path, const std::string& sample_text) const;
    /// Extracts the four option paths and encodes them. Errors carry the sample id.
    PreparedSample prepare(const Sample& sample, const Lexicon& lex) const;

    Tensor embed(const SequenceState& s) const;
    Tensor self_attention(std::size_t layer, const Tensor& h) const;
    Tensor in_atom_scores(std::size_t layer, const SequenceState& s, const Tensor& h) const;
    Tensor cross_atom_scores(std::size_t layer, const SequenceState& s, const Tensor& h) const;
    static Tensor diffuse(const Tensor& m, const std::vector<double>& coeffs);

    struct PathOutput {
        Tensor h_pa;   // n x d, identical rows
        Tensor h_p;    // 1 x d
        Tensor h_seq;  // n x d
        std::vector<Matrix> weights; // per head, combined attention rows
    };
    PathOutput path_attention(std::size_t layer, const SequenceState& s, const Tensor& h) const;

    struct BlockOutput {
        Tensor h;
        Tensor h_p;
    };
    BlockOutput block_forward(std::size_t layer, const SequenceState& s, const Tensor& h) const;

    /// Scalar score of one option (1 x 1).
    Tensor option_score(const SequenceState& s) const;
    /// 1 x 4 scores; softmax gives option probabilities.
    Tensor logits(const PreparedSample& p) const;
    std::array<double, 4> probabilities(const PreparedSample& p) const;
    Tensor loss(const PreparedSample& p) const;

    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);
    /// Rebuilds the model from the config stored in a checkpoint's card.
    static PathModel from_checkpoint(const std::filesystem::path& path, const Lexicon& lex);
    std::string model_card_json() const;

    const std::vector<std::string>& symbol_keys() const { return symbol_keys_; }

private:
    Index symbol_row(const Atom& a) const;
    const Tensor& p(const std::string& name) const { return params_.get(name); }

    ModelConfig cfg_;
    ParameterStore params_;
    Matrix token_table_;
    std::vector<std::string> symbol_keys_;
    std::map<std::string, Index> symbol_index_;
};

} // namespace logipath
