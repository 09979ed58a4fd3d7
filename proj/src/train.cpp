#include "emoq/train.hpp"

#include "emoq/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace emoq {

void OptimConfig::validate() const {
    auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!(base_lr > 0.0)) throw ConfigError("optim: base_lr must be positive");
    if (!in_unit(backbone_multiplier)) throw ConfigError("optim: backbone_multiplier must lie in (0, 1]");
    if (!in_unit(vision_multiplier)) throw ConfigError("optim: vision_multiplier must lie in (0, 1]");
    if (weight_decay < 0.0) throw ConfigError("optim: weight_decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("optim: betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("optim: eps must be positive");
    if (patience < 1) throw ConfigError("optim: patience must be at least 1");
    if (max_epochs < 1) throw ConfigError("optim: max_epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("optim: batch_size must be at least 1");
}

void to_json(nlohmann::json& j, const OptimConfig& c) {
    j = {{"base_lr", c.base_lr},       {"backbone_multiplier", c.backbone_multiplier},
         {"vision_multiplier", c.vision_multiplier}, {"weight_decay", c.weight_decay},
         {"beta1", c.beta1},           {"beta2", c.beta2},
         {"eps", c.eps},               {"max_epochs", c.max_epochs},
         {"patience", c.patience},     {"batch_size", c.batch_size},
         {"freeze_vision", c.freeze_vision}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, OptimConfig& c) {
    j.at("base_lr").get_to(c.base_lr);
    j.at("backbone_multiplier").get_to(c.backbone_multiplier);
    j.at("vision_multiplier").get_to(c.vision_multiplier);
    j.at("weight_decay").get_to(c.weight_decay);
    j.at("beta1").get_to(c.beta1);
    j.at("beta2").get_to(c.beta2);
    j.at("eps").get_to(c.eps);
    j.at("max_epochs").get_to(c.max_epochs);
    j.at("patience").get_to(c.patience);
    j.at("batch_size").get_to(c.batch_size);
    j.at("freeze_vision").get_to(c.freeze_vision);
    j.at("seed").get_to(c.seed);
}

Tensor compute_loss(const Tensor& logits, const LabelBatch& labels, TaskKind task) {
    if (logits.rank() != 2) throw DimensionError("compute_loss: logits must be [B, C], got " + shape_str(logits.shape()));
    const std::size_t rows = logits.dim(0), classes = logits.dim(1);
    if (task == TaskKind::single_label) return cross_entropy(logits, labels.classes);
    if (labels.targets.size() != rows) {
        throw DimensionError("compute_loss: " + std::to_string(labels.targets.size()) + " target rows for " +
                             std::to_string(rows) + " logit rows");
    }
    std::vector<double> flat;
    flat.reserve(rows * classes);
    for (const auto& row : labels.targets) {
        if (row.size() != classes) throw DimensionError("compute_loss: target row width differs from class count");
        for (double v : row) {
            if (v != 0.0 && v != 1.0) throw std::out_of_range("compute_loss: multi-label targets must be 0 or 1");
            flat.push_back(v);
        }
    }
    return bce_with_logits(logits, Tensor({rows, classes}, std::move(flat)));
}

std::vector<ParamGroup> make_param_groups(const ParameterStore& params, const OptimConfig& cfg) {
    cfg.validate();
    ParamGroup classifier{"classifier", cfg.base_lr, {}};
    ParamGroup backbone{"backbone", cfg.base_lr * cfg.backbone_multiplier, {}};
    ParamGroup vision{"vision", cfg.base_lr * cfg.vision_multiplier, {}};
    std::vector<std::string> unassigned;
    for (const auto& [name, _] : params) {
        try {
            switch (EmotionModel::group_of(name)) {
                case ParamGroupKind::classifier: classifier.params.push_back(name); break;
                case ParamGroupKind::backbone: backbone.params.push_back(name); break;
                case ParamGroupKind::vision:
                    if (!cfg.freeze_vision) vision.params.push_back(name);
                    break;
            }
        } catch (const std::invalid_argument&) {
            unassigned.push_back(name);
        }
    }
    if (!unassigned.empty()) {
        std::string list;
        for (const auto& n : unassigned) list += (list.empty() ? "" : ", ") + n;
        throw std::invalid_argument("parameters without a learning-rate group: " + list);
    }
    std::vector<ParamGroup> groups{classifier, backbone};
    if (!cfg.freeze_vision) groups.push_back(vision);
    return groups;
}

void adamw_step(const std::vector<ParamGroup>& groups, ParameterStore& params, TrainState& state,
                const OptimConfig& cfg, double lr_scale) {
    for (const auto& g : groups) {
        for (const auto& name : g.params) {
            const Tensor& p = params.get(name);
            if (!p.has_grad()) continue;
            auto grad = p.grad();
            for (std::size_t i = 0; i < grad.size(); ++i) {
                if (!std::isfinite(grad[i])) {
                    throw NonFiniteGradient("non-finite gradient in " + name + "[" + std::to_string(i) +
                                            "] at step " + std::to_string(state.step + 1));
                }
            }
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    for (const auto& g : groups) {
        const double lr = g.lr * lr_scale;
        for (const auto& name : g.params) {
            Tensor p = params.get(name);
            auto values = p.mutable_data();
            Moments& mom = state.moments[name];
            if (mom.first.size() != values.size()) {
                mom.first.assign(values.size(), 0.0);
                mom.second.assign(values.size(), 0.0);
            }
            const bool has_grad = p.has_grad();
            auto grad = p.grad();
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double gi = has_grad ? grad[i] : 0.0;
                values[i] -= lr * cfg.weight_decay * values[i];
                mom.first[i] = cfg.beta1 * mom.first[i] + (1.0 - cfg.beta1) * gi;
                mom.second[i] = cfg.beta2 * mom.second[i] + (1.0 - cfg.beta2) * gi * gi;
                const double m_hat = mom.first[i] / correction1;
                const double v_hat = mom.second[i] / correction2;
                values[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
            }
        }
    }
}

double linear_schedule(std::size_t step, std::size_t total_steps) {
    if (total_steps == 0) throw std::invalid_argument("linear_schedule: total_steps must be positive");
    if (step > total_steps) throw std::invalid_argument("linear_schedule: step beyond total_steps");
    const double total = static_cast<double>(total_steps);
    return std::max(1.0 - static_cast<double>(step) / total, 1.0 / total);
}

bool EarlyStopping::update(double metric) {
    if (metric > best_) {
        best_ = metric;
        stale_ = 0;
        return true;
    }
    ++stale_;
    return false;
}

PredictionSet predict_all(const EmotionModel& model, const std::vector<Example>& data) {
    const auto& qc = model.config().qformer;
    PredictionSet pred;
    pred.task = qc.task;
    pred.num_classes = qc.num_classes;
    bool any_box = false;
    for (const Example& ex : data) {
        Tensor probs = model.predict(ex.input);
        pred.scores.emplace_back(probs.data().begin(), probs.data().end());
        if (qc.task == TaskKind::multi_label) {
            std::vector<int> row;
            for (double v : ex.targets) row.push_back(v > 0.5 ? 1 : 0);
            pred.labels.push_back(std::move(row));
        } else {
            pred.classes.push_back(ex.label);
        }
        pred.sample_ids.push_back(ex.sample_id);
        pred.image_ids.push_back(ex.image_id);
        pred.boxes.push_back(ex.box);
        any_box = any_box || ex.box.has_value();
    }
    if (!any_box) pred.boxes.clear();
    return pred;
}

double validation_metric(const EmotionModel& model, const std::vector<Example>& data) {
    PredictionSet pred = predict_all(model, data);
    if (pred.task == TaskKind::single_label) return accuracy(pred);
    const double m = mean_average_precision(pred).mean;
    return std::isnan(m) ? 0.0 : m;
}

namespace {

std::map<std::string, Tensor> optimizer_tensors(const TrainState& state) {
    std::map<std::string, Tensor> out;
    for (const auto& [name, m] : state.moments) {
        out.emplace("optim.first." + name, Tensor({m.first.size()}, m.first));
        out.emplace("optim.second." + name, Tensor({m.second.size()}, m.second));
    }
    return out;
}

}  // namespace

Checkpoint make_training_checkpoint(const EmotionModel& model, const std::map<std::string, Tensor>& params,
                                    const TrainState& state, const OptimConfig& cfg) {
    Checkpoint ckpt;
    ckpt.manifest["model"] = model.config();
    ckpt.manifest["optim"] = cfg;
    ckpt.manifest["train_state"] = {{"epoch", state.epoch},
                                    {"step", state.step},
                                    {"best_metric", state.best_metric},
                                    {"best_epoch", state.best_epoch},
                                    {"epochs_since_improvement", state.epochs_since_improvement}};
    ckpt.tensors = params;
    for (auto& [k, v] : optimizer_tensors(state)) ckpt.tensors.emplace(k, v);
    for (const auto& [k, v] : state.best_params) ckpt.tensors.emplace("best." + k, v);
    return ckpt;
}

TrainState train_state_from_checkpoint(const Checkpoint& ckpt) {
    TrainState state;
    const auto& ts = ckpt.manifest.at("train_state");
    ts.at("epoch").get_to(state.epoch);
    ts.at("step").get_to(state.step);
    ts.at("best_metric").get_to(state.best_metric);
    ts.at("best_epoch").get_to(state.best_epoch);
    ts.at("epochs_since_improvement").get_to(state.epochs_since_improvement);
    const std::string first = "optim.first.", second = "optim.second.";
    for (const auto& [k, t] : ckpt.tensors) {
        if (k.starts_with(first)) {
            state.moments[k.substr(first.size())].first.assign(t.data().begin(), t.data().end());
        } else if (k.starts_with(second)) {
            state.moments[k.substr(second.size())].second.assign(t.data().begin(), t.data().end());
        } else if (k.starts_with("best.")) {
            state.best_params.emplace(k.substr(5), t.clone());
        }
    }
    return state;
}

FitResult fit(EmotionModel& model, const std::vector<Example>& train, const std::vector<Example>& val,
              const OptimConfig& cfg, const FitHooks& hooks, std::optional<TrainState> resume) {
    cfg.validate();
    if (train.empty() || val.empty()) throw std::invalid_argument("fit: training and validation splits must be nonempty");
    const TaskKind task = model.config().qformer.task;
    const auto groups = make_param_groups(model.params(), cfg);
    const std::size_t batches_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = cfg.max_epochs * batches_per_epoch;

    FitResult result;
    result.state = resume.value_or(TrainState{});
    TrainState& state = result.state;
    EarlyStopping stopper(cfg.patience, state.best_metric, state.epochs_since_improvement);
    result.best_metric = state.best_metric;
    if (state.best_params.empty()) state.best_params = model.params().snapshot();
    result.best_epoch = state.best_epoch;

    // Frozen parameters need no gradients at all.
    std::vector<Tensor> frozen;
    if (cfg.freeze_vision) {
        for (const auto& [name, t] : model.params()) {
            if (EmotionModel::group_of(name) == ParamGroupKind::vision) frozen.push_back(t);
        }
    }
    for (Tensor& t : frozen) t.set_requires_grad(false);

    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), 0);

    for (std::size_t epoch = state.epoch + 1; epoch <= cfg.max_epochs; ++epoch) {
        if (stopper.should_stop()) break;
        RngState shuffle_rng = derive_rng(cfg.seed ^ 0x5EEDULL, epoch);
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        double last_lr = 0.0;
        for (const auto& batch : make_batches(all, cfg.batch_size, shuffle_rng)) {
            if (batch.empty()) throw std::invalid_argument("fit: empty batch");
            model.params().zero_grad();
            std::vector<Tensor> rows;
            LabelBatch labels;
            for (std::size_t k = 0; k < batch.size(); ++k) {
                const Example& ex = train[batch[k]];
                ForwardContext ctx{Mode::train, derive_rng(cfg.seed, (state.step << 20) | k)};
                Tensor z = model.logits(ex.input, ctx);
                rows.push_back(reshape(z, {1, z.numel()}));
                if (task == TaskKind::multi_label) {
                    labels.targets.push_back(ex.targets);
                } else {
                    labels.classes.push_back(ex.label);
                }
            }
            Tensor loss = compute_loss(concat_rows(rows), labels, task);
            loss.backward();
            const double scale = linear_schedule(std::min(state.step, total_steps), total_steps);
            StepRecord rec{state.step, scale, {}};
            for (const auto& g : groups) rec.group_lr[g.name] = g.lr * scale;
            adamw_step(groups, model.params(), state, cfg, scale);
            last_lr = rec.group_lr.at("classifier");
            if (hooks.on_step) hooks.on_step(rec);
            result.steps.push_back(std::move(rec));
            loss_sum += loss.item() * static_cast<double>(batch.size());
            loss_count += batch.size();
        }
        model.params().zero_grad();

        const double metric = hooks.metric_override ? hooks.metric_override(epoch) : validation_metric(model, val);
        EpochRecord record{epoch, loss_sum / static_cast<double>(loss_count), last_lr, metric};
        if (stopper.update(metric)) {
            state.best_params = model.params().snapshot();
            state.best_epoch = epoch;
            result.best_epoch = epoch;
            result.best_metric = metric;
        }
        state.epoch = epoch;
        state.best_metric = stopper.best();
        state.epochs_since_improvement = stopper.stale_epochs();
        result.history.push_back(record);
        if (hooks.on_epoch) hooks.on_epoch(record);
        if (hooks.on_state) hooks.on_state(state);
    }
    for (Tensor& t : frozen) t.set_requires_grad(true);
    result.best_params = state.best_params;
    model.params().assign_from(result.best_params);
    return result;
}

}  // namespace emoq
