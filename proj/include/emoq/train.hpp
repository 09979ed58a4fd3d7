#pragma once

#include "emoq/metrics.hpp"
#include "emoq/model.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace emoq {

struct OptimConfig {
    double base_lr = 1e-4;
    double backbone_multiplier = 0.1;
    double vision_multiplier = 0.1;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    std::size_t batch_size = 64;
    bool freeze_vision = false;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const OptimConfig& c);
void from_json(const nlohmann::json& j, OptimConfig& c);

/// Ground truth for a batch: `targets` rows for multi-label, `classes` for
/// single-label.
struct LabelBatch {
    std::vector<std::vector<double>> targets;
    std::vector<std::size_t> classes;
};

/// Mean BCE-with-logits (multi-label) or mean cross-entropy (single-label)
/// over a [B, C] logit matrix.
Tensor compute_loss(const Tensor& logits, const LabelBatch& labels, TaskKind task);

struct ParamGroup {
    std::string name;
    double lr = 0.0;
    std::vector<std::string> params;
};

/// classifier at base_lr, Q-Former and text embeddings at
/// base_lr * backbone_multiplier, vision encoder at base_lr * vision_multiplier.
/// Frozen vision parameters are left out of every group.
std::vector<ParamGroup> make_param_groups(const ParameterStore& params, const OptimConfig& cfg);

struct Moments {
    std::vector<double> first;
    std::vector<double> second;
};

struct TrainState {
    std::size_t epoch = 0;  // last completed epoch, 1-based
    std::size_t step = 0;   // optimizer steps taken
    std::map<std::string, Moments> moments;
    double best_metric = -1.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_since_improvement = 0;
    std::map<std::string, Tensor> best_params;  // empty until an epoch improves
};

class NonFiniteGradient : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One AdamW update of every grouped parameter from its accumulated gradient.
/// Decay is decoupled: θ ← θ − lr·wd·θ, then the bias-corrected Adam step.
/// Throws NonFiniteGradient (leaving parameters untouched) on NaN/inf grads.
void adamw_step(const std::vector<ParamGroup>& groups, ParameterStore& params, TrainState& state,
                const OptimConfig& cfg, double lr_scale);

/// 1 - step/total, floored at 1/total.
double linear_schedule(std::size_t step, std::size_t total_steps);

/// Tracks the best metric; reports when `patience` epochs pass without improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience, double best = -1.0, std::size_t stale = 0)
        : patience_(patience), best_(best), stale_(stale) {}

    /// Returns true when the new metric is a strict improvement.
    bool update(double metric);
    bool should_stop() const { return stale_ >= patience_; }
    double best() const { return best_; }
    std::size_t stale_epochs() const { return stale_; }

private:
    std::size_t patience_;
    double best_;
    std::size_t stale_;
};

struct Example {
    ModelInput input;
    std::vector<double> targets;  // multi-label
    std::size_t label = 0;        // single-label
    std::string sample_id;
    std::string image_id;
    std::optional<Box> box;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double lr = 0.0;  // classifier-group lr at the epoch's last step
    double val_metric = 0.0;
};

struct StepRecord {
    std::size_t step = 0;
    double schedule_scale = 1.0;
    std::map<std::string, double> group_lr;
};

struct FitResult {
    std::map<std::string, Tensor> best_params;
    std::size_t best_epoch = 0;
    double best_metric = -1.0;
    std::vector<EpochRecord> history;
    std::vector<StepRecord> steps;
    TrainState state;
};

struct FitHooks {
    std::function<void(const EpochRecord&)> on_epoch;
    /// After each epoch, with the live (not best) parameters still in place.
    std::function<void(const TrainState&)> on_state;
    std::function<void(const StepRecord&)> on_step;
    /// Overrides the validation metric (testing hook); receives the epoch number.
    std::function<double(std::size_t)> metric_override;
};

/// Validation predictions of `model` on `data` (eval mode).
PredictionSet predict_all(const EmotionModel& model, const std::vector<Example>& data);
/// mAP for multi-label, accuracy for single-label.
double validation_metric(const EmotionModel& model, const std::vector<Example>& data);

/// Trains with AdamW, per-group learning rates, a linear schedule and early
/// stopping; `model` ends holding the best epoch's parameters.
FitResult fit(EmotionModel& model, const std::vector<Example>& train, const std::vector<Example>& val,
              const OptimConfig& cfg, const FitHooks& hooks = {}, std::optional<TrainState> resume = std::nullopt);

/// Checkpoint carrying model parameters, optimizer moments and train state
/// (including the best parameters so far, as `best.<name>`).
Checkpoint make_training_checkpoint(const EmotionModel& model, const std::map<std::string, Tensor>& params,
                                    const TrainState& state, const OptimConfig& cfg);
TrainState train_state_from_checkpoint(const Checkpoint& ckpt);

}  // namespace emoq
