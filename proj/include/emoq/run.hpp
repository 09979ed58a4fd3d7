#pragma once

#include "emoq/config.hpp"
#include "emoq/examples.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace emoq {

struct RunData {
    std::vector<Example> train;
    std::vector<Example> val;
    Vocab vocab;
    std::vector<std::string> class_names;
};

/// Synthetic corpora use `seed` for the training split and `seed + 1` for validation.
std::vector<SynthItem> synth_split(const SyntheticSpec& spec, std::size_t num_samples, std::uint64_t seed);

/// Builds examples and the vocabulary (from training descriptions unless
/// `vocab` is given); sets cfg.model.vocab_size.
RunData prepare_run_data(RunConfig& cfg, const std::optional<Vocab>& vocab = std::nullopt);

struct TrainOutcome {
    FitResult fit;
    std::filesystem::path checkpoint;       // best parameters
    std::filesystem::path last_checkpoint;  // live parameters + optimizer state, for resuming
    std::filesystem::path history;
};

/// Trains per `cfg`, writing history.csv row by row, last.ckpt after every
/// epoch and model.ckpt (best epoch) at the end under cfg.output_dir.
/// `resume` points at a last.ckpt; epochs continue from its count.
TrainOutcome run_training(RunConfig cfg, const std::optional<std::filesystem::path>& resume = std::nullopt,
                          std::ostream* log = nullptr);

/// Data options and vocabulary are read back from the checkpoint manifest.
struct EvalOutcome {
    MetricReport report;
    PredictionSet predictions;
};

EvalOutcome run_eval(const Checkpoint& ckpt, const std::filesystem::path& manifest, const std::string& split,
                     const std::vector<double>& iou_thresholds);

std::string history_header();
std::string history_row(const EpochRecord& r);

}  // namespace emoq
