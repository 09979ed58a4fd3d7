#include "emoq/run.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

namespace emoq {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<SynthItem> synth_split(const SyntheticSpec& spec, std::size_t num_samples, std::uint64_t seed) {
    SyntheticSpec s = spec;
    s.num_samples = num_samples;
    s.seed = seed;
    return synth_generate(s);
}

RunData prepare_run_data(RunConfig& cfg, const std::optional<Vocab>& vocab) {
    cfg.validate();
    RunData data;
    const std::size_t L = cfg.model.text_len;
    if (cfg.synthetic) {
        const auto train_items = synth_split(cfg.synth, cfg.synth.num_samples, cfg.synth.seed);
        const auto val_items = synth_split(cfg.synth, cfg.synth_val, cfg.synth.seed + 1);
        data.vocab = vocab ? *vocab : build_vocab(descriptions_of(train_items), cfg.min_word_freq);
        data.train = synth_examples(train_items, data.vocab, L);
        data.val = synth_examples(val_items, data.vocab, L);
        data.class_names = synth_class_names(cfg.synth.num_classes);
    } else {
        const Manifest m = load_manifest(cfg.manifest);
        if (m.task != cfg.model.qformer.task || m.num_classes != cfg.model.qformer.num_classes) {
            throw ConfigError("config keys 'task'/'num_classes' disagree with manifest " + cfg.manifest.string());
        }
        const auto train_samples = m.split(cfg.train_split);
        std::vector<Sample> val_samples;
        Manifest val_manifest = m;
        if (cfg.val_manifest.empty()) {
            val_samples = m.split(cfg.val_split);
        } else {
            val_manifest = load_manifest(cfg.val_manifest);
            val_samples = val_manifest.samples;
        }
        data.vocab = vocab ? *vocab : build_vocab(descriptions_of(train_samples), cfg.min_word_freq);
        ExampleOptions opt{cfg.model.vision.height, cfg.model.vision.width, cfg.frames, L, cfg.render_box,
                           cfg.box_stroke};
        data.train = make_examples(m, train_samples, data.vocab, opt);
        data.val = make_examples(val_manifest, val_samples, data.vocab, opt);
        data.class_names = m.class_names;
    }
    cfg.model.vocab_size = data.vocab.size();
    return data;
}

std::string history_header() { return "epoch,train_loss,lr,val_metric"; }

std::string history_row(const EpochRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g", r.epoch, r.train_loss, r.lr, r.val_metric);
    return buf;
}

namespace {

void annotate(Checkpoint& ckpt, const RunConfig& cfg, const RunData& data) {
    ckpt.manifest["vocab"] = data.vocab.tokens();
    ckpt.manifest["class_names"] = data.class_names;
    ckpt.manifest["data"] = {{"frames", cfg.frames}, {"render_box", cfg.render_box}, {"box_stroke", cfg.box_stroke}};
}

}  // namespace

TrainOutcome run_training(RunConfig cfg, const std::optional<fs::path>& resume, std::ostream* log) {
    std::optional<Checkpoint> resumed;
    std::optional<Vocab> vocab;
    if (resume) {
        resumed = load_checkpoint(*resume);
        vocab = Vocab(resumed->manifest.at("vocab").get<std::vector<std::string>>());
    }
    RunData data = prepare_run_data(cfg, vocab);

    std::unique_ptr<EmotionModel> model;
    std::optional<TrainState> state;
    if (resumed) {
        model = EmotionModel::from_checkpoint(*resumed);
        state = train_state_from_checkpoint(*resumed);
    } else {
        model = std::make_unique<EmotionModel>(cfg.model);
    }

    fs::create_directories(cfg.output_dir);
    TrainOutcome out;
    out.checkpoint = cfg.checkpoint_path();
    out.last_checkpoint = cfg.output_dir / "last.ckpt";
    out.history = cfg.history_path();
    data.vocab.save(cfg.vocab_path());

    std::ofstream history(out.history, resumed ? std::ios::app : std::ios::trunc);
    if (!history) throw std::runtime_error("cannot write " + out.history.string());
    if (!resumed) history << history_header() << '\n' << std::flush;

    FitHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r) {
        history << history_row(r) << '\n' << std::flush;
        if (log) *log << "epoch " << r.epoch << " loss " << r.train_loss << " val " << r.val_metric << '\n';
    };
    hooks.on_state = [&](const TrainState& s) {
        Checkpoint ckpt = make_training_checkpoint(*model, model->params().snapshot(), s, cfg.optim);
        annotate(ckpt, cfg, data);
        save_checkpoint(out.last_checkpoint, ckpt);
    };
    out.fit = fit(*model, data.train, data.val, cfg.optim, hooks, state);

    Checkpoint best = model->to_checkpoint();
    best.manifest["optim"] = cfg.optim;
    best.manifest["best_epoch"] = out.fit.best_epoch;
    best.manifest["best_metric"] = out.fit.best_metric;
    annotate(best, cfg, data);
    save_checkpoint(out.checkpoint, best);
    return out;
}

EvalOutcome run_eval(const Checkpoint& ckpt, const fs::path& manifest_path, const std::string& split,
                     const std::vector<double>& iou_thresholds) {
    auto model = EmotionModel::from_checkpoint(ckpt);
    const Vocab vocab(ckpt.manifest.at("vocab").get<std::vector<std::string>>());
    const Manifest m = load_manifest(manifest_path);
    const auto& qc = model->config().qformer;
    if (m.task != qc.task || m.num_classes != qc.num_classes) {
        throw ConfigError("manifest task/classes do not match the checkpoint");
    }
    const json d = ckpt.manifest.value("data", json::object());
    ExampleOptions opt{model->config().vision.height,
                       model->config().vision.width,
                       d.value("frames", std::size_t{1}),
                       model->config().text_len,
                       d.value("render_box", true),
                       d.value("box_stroke", std::size_t{3})};
    const auto samples = split.empty() ? m.samples : m.split(split);
    const auto examples = make_examples(m, samples, vocab, opt);
    EvalOutcome out;
    out.predictions = predict_all(*model, examples);
    out.report = evaluate(out.predictions, iou_thresholds);
    return out;
}

}  // namespace emoq
