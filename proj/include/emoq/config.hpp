#pragma once

#include "emoq/model.hpp"
#include "emoq/synth.hpp"
#include "emoq/train.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace emoq {

/// Everything `train` needs, read from a flat `key = value` file. A `profile`
/// key loads a preset before the remaining keys apply.
struct RunConfig {
    std::string profile = "synthetic";
    ModelConfig model;
    OptimConfig optim;
    std::size_t min_word_freq = 1;
    std::size_t frames = 1;
    bool render_box = true;
    std::size_t box_stroke = 3;

    std::filesystem::path manifest;
    std::filesystem::path val_manifest;  // empty: use split tags of `manifest`
    std::string train_split = "train";
    std::string val_split = "val";
    std::filesystem::path output_dir = "run";

    bool synthetic = true;
    SyntheticSpec synth;
    std::size_t synth_val = 200;

    std::filesystem::path checkpoint_path() const { return output_dir / "model.ckpt"; }
    std::filesystem::path history_path() const { return output_dir / "history.csv"; }
    std::filesystem::path vocab_path() const { return output_dir / "vocab.txt"; }

    void validate() const;
};

const std::vector<std::string>& profile_names();
RunConfig profile_preset(const std::string& name);

/// Throws ConfigError naming the offending key.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace emoq
