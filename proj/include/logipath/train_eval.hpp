#pragma once

// Synthetic task, training loop, evaluation and perturbation protocols.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "logipath/lexicon.hpp"
#include "logipath/logic.hpp"
#include "logipath/model.hpp"
#include "logipath/path_engine.hpp"

namespace logipath {

inline constexpr const char* kSyntheticQuestion = "Which one of the following can be inferred?";

/// Splitmix-style combination; derives per-item seeds from one run seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

struct SynthConfig {
    std::size_t n_samples = 0;
    std::size_t n_vars = 6;
    std::size_t body_len = 4;
    std::uint64_t seed = 0;
    // Difficulty knobs.
    double contrapositive_rate = 0.3; // implications written in contrapositive form
    double two_hop_rate = 0.5;        // chains of two implications instead of one
    double filler_fact_rate = 0.75;   // filler atoms that are facts
    double decoy_rate = 0.0;          // one filler implication fired by the negated fact

    void validate() const;
};

/// Each context is a shuffled body: one fact, a chain of one or two
/// implications leading from it, and filler atoms. The gold option is the
/// chain's last literal as a fact; distractors are facts the body does not
/// entail. Rendered text is re-extracted and the sample regenerated unless
/// the atoms survive the round trip.
std::vector<Sample> generate_synthetic(const SynthConfig& cfg, const Lexicon& lex);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t patience = 5; // epochs without dev improvement
    std::size_t max_steps = 0; // 0 = no limit
    std::uint64_t seed = 0;    // shuffling
    std::optional<std::filesystem::path> history_path;
    std::string history_header; // first history line when non-empty
    std::function<void(const std::string&)> log;

    void validate() const;
};

struct HistoryEntry {
    std::size_t step = 0;
    double loss = 0.0;
    std::optional<double> dev_acc;
    std::optional<std::size_t> epoch;
};

struct TrainResult {
    std::vector<HistoryEntry> history;
    double best_dev_acc = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::size_t steps = 0;
};

/// Adam over option cross-entropy. The model ends up holding the parameters
/// of the best dev epoch (the last epoch when `dev` is empty). Throws
/// TrainingDiverged on a non-finite loss.
TrainResult train(PathModel& model, std::span<const PreparedSample> train_set, std::span<const PreparedSample> dev,
                  const TrainConfig& cfg);

std::string history_line(const HistoryEntry& e);

struct Prediction {
    std::string id;
    std::array<double, 4> scores{};
    int pred = 0;
    std::optional<int> label;
};

struct EvalResult {
    double accuracy = 0.0; // over labeled samples
    std::size_t labeled = 0;
    std::vector<Prediction> predictions;
};

int argmax(const std::array<double, 4>& s);
EvalResult evaluate(const PathModel& model, std::span<const PreparedSample> data);
/// JSONL; `header`, when non-empty, is written as the first line.
void write_predictions(const std::filesystem::path& path, std::span<const Prediction> preds,
                       const std::string& header = "");

/// Model probabilities as a filter scorer.
class ModelScorer : public ConfidenceScorer {
public:
    ModelScorer(const PathModel& model, const Lexicon& lex) : model_(model), lex_(lex) {}
    std::string name() const override { return "model"; }
    std::array<double, 4> score(const Sample& s) const override;

private:
    const PathModel& model_;
    const Lexicon& lex_;
};

/// True for samples used by the consistency protocol, false for perception.
/// The two protocols never share a sample.
std::vector<bool> perturbation_partition(std::size_t n, std::uint64_t seed);

struct PerturbRecord {
    std::string id;
    std::string kind;
    int before = 0;
    int after = 0;
};

struct PerturbEvalResult {
    double rate = 0.0; // changed predictions / evaluated
    std::size_t evaluated = 0;
    std::size_t changed_predictions = 0;
    std::size_t skipped = 0; // ineligible or unparsable
    std::vector<PerturbRecord> records;
};

/// Flip rate under equivalent rewrites, on the consistency half of the partition.
PerturbEvalResult consistency_eval(const ConfidenceScorer& scorer, std::span<const Sample> data, const Lexicon& lex,
                                   std::uint64_t seed);
/// Prediction-change rate under meaning-changing rewrites, on the other half.
PerturbEvalResult perception_eval(const ConfidenceScorer& scorer, std::span<const Sample> data, const Lexicon& lex,
                                  std::uint64_t seed);

struct CategoryStats {
    std::size_t samples = 0;
    std::size_t atoms = 0;
    std::size_t failed = 0; // contexts that did not extract
    std::array<std::size_t, 4> atoms_by_category{};
    std::array<std::size_t, 4> samples_with{};
    std::size_t samples_with_logic = 0;

    double atom_ratio(FunctionCategory c) const;
    double sample_ratio(FunctionCategory c) const;
    double logic_ratio() const;
    std::string to_json() const;
    std::string to_table() const;
};

/// Function-symbol counts over the extracted contexts.
CategoryStats stats(std::span<const Sample> data, const Lexicon& lex);

} // namespace logipath
