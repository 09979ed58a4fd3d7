#include "emoq/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace emoq {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used == v.size()) return out;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto size_key = [&](const char* name, auto member) {
            t[name] = [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_size(k, v); };
        };
        auto real_key = [&](const char* name, auto member) {
            t[name] = [member](RunConfig& c, const std::string& k, const std::string& v) {
                member(c) = to_double(k, v);
            };
        };
        auto bool_key = [&](const char* name, auto member) {
            t[name] = [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_bool(k, v); };
        };
        t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const std::uint64_t s = to_size(k, v);
            c.model.seed = s;
            c.optim.seed = s;
            c.synth.seed = s;
        };
        t["task"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            try {
                c.model.qformer.task = parse_task_kind(v);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("config key '" + k + "': " + e.what());
            }
        };
        t["image_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const std::size_t n = to_size(k, v);
            c.model.vision.height = n;
            c.model.vision.width = n;
            c.synth.image_size = n;
        };
        t["num_classes"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const std::size_t n = to_size(k, v);
            c.model.qformer.num_classes = n;
            c.synth.num_classes = n;
        };
        size_key("patch", [](RunConfig& c) -> std::size_t& { return c.model.vision.patch; });
        size_key("vision_dim", [](RunConfig& c) -> std::size_t& { return c.model.vision.dim; });
        size_key("vision_depth", [](RunConfig& c) -> std::size_t& { return c.model.vision.depth; });
        size_key("vision_heads", [](RunConfig& c) -> std::size_t& { return c.model.vision.heads; });
        real_key("vision_attn_dropout", [](RunConfig& c) -> double& { return c.model.vision.attn_dropout; });
        size_key("queries", [](RunConfig& c) -> std::size_t& { return c.model.qformer.num_queries; });
        size_key("dim", [](RunConfig& c) -> std::size_t& { return c.model.qformer.dim; });
        size_key("layers", [](RunConfig& c) -> std::size_t& { return c.model.qformer.layers; });
        size_key("heads", [](RunConfig& c) -> std::size_t& { return c.model.qformer.heads; });
        size_key("ffn_dim", [](RunConfig& c) -> std::size_t& { return c.model.qformer.ffn_dim; });
        real_key("qformer_attn_dropout", [](RunConfig& c) -> double& { return c.model.qformer.attn_dropout; });
        size_key("cross_attention_parity",
                 [](RunConfig& c) -> std::size_t& { return c.model.qformer.cross_attention_parity; });
        size_key("text_len", [](RunConfig& c) -> std::size_t& { return c.model.text_len; });
        size_key("min_word_freq", [](RunConfig& c) -> std::size_t& { return c.min_word_freq; });
        real_key("base_lr", [](RunConfig& c) -> double& { return c.optim.base_lr; });
        real_key("backbone_multiplier", [](RunConfig& c) -> double& { return c.optim.backbone_multiplier; });
        real_key("vision_multiplier", [](RunConfig& c) -> double& { return c.optim.vision_multiplier; });
        real_key("weight_decay", [](RunConfig& c) -> double& { return c.optim.weight_decay; });
        real_key("beta1", [](RunConfig& c) -> double& { return c.optim.beta1; });
        real_key("beta2", [](RunConfig& c) -> double& { return c.optim.beta2; });
        real_key("eps", [](RunConfig& c) -> double& { return c.optim.eps; });
        size_key("max_epochs", [](RunConfig& c) -> std::size_t& { return c.optim.max_epochs; });
        size_key("patience", [](RunConfig& c) -> std::size_t& { return c.optim.patience; });
        size_key("batch_size", [](RunConfig& c) -> std::size_t& { return c.optim.batch_size; });
        bool_key("freeze_vision", [](RunConfig& c) -> bool& { return c.optim.freeze_vision; });
        size_key("frames", [](RunConfig& c) -> std::size_t& { return c.frames; });
        bool_key("render_box", [](RunConfig& c) -> bool& { return c.render_box; });
        size_key("box_stroke", [](RunConfig& c) -> std::size_t& { return c.box_stroke; });
        t["manifest"] = [](RunConfig& c, const std::string&, const std::string& v) {
            c.manifest = v;
            c.synthetic = false;
        };
        t["val_manifest"] = [](RunConfig& c, const std::string&, const std::string& v) { c.val_manifest = v; };
        t["train_split"] = [](RunConfig& c, const std::string&, const std::string& v) { c.train_split = v; };
        t["val_split"] = [](RunConfig& c, const std::string&, const std::string& v) { c.val_split = v; };
        t["output_dir"] = [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; };
        bool_key("synthetic", [](RunConfig& c) -> bool& { return c.synthetic; });
        size_key("synth_train", [](RunConfig& c) -> std::size_t& { return c.synth.num_samples; });
        size_key("synth_val", [](RunConfig& c) -> std::size_t& { return c.synth_val; });
        real_key("synth_informativeness",
                 [](RunConfig& c) -> double& { return c.synth.modality_informativeness; });
        real_key("synth_noise", [](RunConfig& c) -> double& { return c.synth.noise; });
        size_key("synth_distractors", [](RunConfig& c) -> std::size_t& { return c.synth.distractors; });
        return t;
    }();
    return table;
}

RunConfig dataset_profile(TaskKind task, std::size_t classes) {
    RunConfig c;
    c.synthetic = false;
    c.model.qformer.task = task;
    c.model.qformer.num_classes = classes;
    c.model.vision.height = 224;
    c.model.vision.width = 224;
    c.model.vision.patch = 16;
    c.model.vision.dim = 768;
    c.model.vision.depth = 12;
    c.model.vision.heads = 12;
    c.model.vision.attn_dropout = 0.3;
    c.model.qformer.num_queries = 32;
    c.model.qformer.dim = 768;
    c.model.qformer.layers = 12;
    c.model.qformer.heads = 12;
    c.model.qformer.attn_dropout = 0.4;
    c.model.text_len = 128;
    return c;
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    optim.validate();
    if (frames == 0) throw ConfigError("config key 'frames' must be positive");
    if (box_stroke == 0) throw ConfigError("config key 'box_stroke' must be positive");
    if (synthetic) {
        synth.validate();
        if (model.qformer.task != TaskKind::single_label) {
            throw ConfigError("config key 'task': synthetic corpus is single_label");
        }
        if (synth.image_size != model.vision.height || synth.image_size != model.vision.width) {
            throw ConfigError("config key 'image_size': synthetic images must match the encoder input");
        }
    } else if (manifest.empty()) {
        throw ConfigError("config key 'manifest' is required when synthetic = false");
    }
}

const std::vector<std::string>& profile_names() {
    static const std::vector<std::string> names{"bold-like", "emotic-like", "caers-like", "synthetic"};
    return names;
}

RunConfig profile_preset(const std::string& name) {
    if (name == "bold-like") {
        RunConfig c = dataset_profile(TaskKind::multi_label, 26);
        c.profile = name;
        c.optim.base_lr = 1e-4;
        c.optim.backbone_multiplier = 0.1;
        c.optim.vision_multiplier = 0.01;
        c.optim.weight_decay = 0.1;
        c.optim.batch_size = 4;
        c.frames = 8;
        return c;
    }
    if (name == "emotic-like") {
        RunConfig c = dataset_profile(TaskKind::multi_label, 26);
        c.profile = name;
        c.optim.base_lr = 1e-4;
        c.optim.backbone_multiplier = 0.1;
        c.optim.vision_multiplier = 0.1;
        c.optim.weight_decay = 0.0005;
        c.optim.freeze_vision = true;
        c.optim.batch_size = 64;
        return c;
    }
    if (name == "caers-like") {
        RunConfig c = dataset_profile(TaskKind::single_label, 7);
        c.profile = name;
        c.optim.base_lr = 1e-3;
        c.optim.backbone_multiplier = 0.1;
        c.optim.vision_multiplier = 0.1;
        c.optim.weight_decay = 0.1;
        c.optim.batch_size = 64;
        return c;
    }
    if (name == "synthetic") {
        RunConfig c;
        c.profile = name;
        c.synthetic = true;
        c.synth = SyntheticSpec{};
        c.synth_val = 200;
        c.model.vision = VisionConfig{16, 16, 3, 4, 32, 1, 2, 0.0};
        c.model.qformer.num_queries = 4;
        c.model.qformer.dim = 32;
        c.model.qformer.layers = 2;
        c.model.qformer.heads = 2;
        c.model.qformer.attn_dropout = 0.0;
        c.model.qformer.num_classes = c.synth.num_classes;
        c.model.qformer.task = TaskKind::single_label;
        c.model.text_len = 8;
        c.optim.base_lr = 3e-3;
        c.optim.backbone_multiplier = 1.0;
        c.optim.vision_multiplier = 1.0;
        c.optim.weight_decay = 0.01;
        c.optim.max_epochs = 30;
        c.optim.patience = 30;
        c.optim.batch_size = 16;
        return c;
    }
    throw ConfigError("config key 'profile': unknown profile '" + name + "'");
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = setters();
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, key, value);
}

RunConfig parse_run_config(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::string profile = "synthetic";
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key == "profile") {
            profile = value;
        } else {
            entries.emplace_back(std::move(key), std::move(value));
        }
    }
    RunConfig cfg = profile_preset(profile);
    for (const auto& [k, v] : entries) apply_setting(cfg, k, v);
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace emoq
