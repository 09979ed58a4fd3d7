#include "emoq/config.hpp"
#include "emoq/describe.hpp"
#include "emoq/gradsuite.hpp"
#include "emoq/run.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <sstream>

namespace {

using namespace emoq;

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

std::vector<double> parse_thresholds(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("--iou-strata: not a number: '" + item + "'");
        }
    }
    return out;
}

int cmd_train(const std::string& config, const std::optional<std::uint64_t>& seed, const std::string& resume,
              const std::string& output) {
    RunConfig cfg = config.empty() ? profile_preset("synthetic") : load_run_config(config);
    if (seed) apply_setting(cfg, "seed", std::to_string(*seed));
    if (!output.empty()) cfg.output_dir = output;
    std::optional<std::filesystem::path> from;
    if (!resume.empty()) from = resume;
    const TrainOutcome out = run_training(cfg, from, &std::cerr);
    std::cout << "best_epoch=" << out.fit.best_epoch << "\n"
              << "best_metric=" << out.fit.best_metric << "\n"
              << "checkpoint=" << out.checkpoint.string() << "\n"
              << "history=" << out.history.string() << "\n";
    return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest, const std::string& split,
             const std::string& strata, const std::string& predictions) {
    if (checkpoint.empty() || manifest.empty()) throw ConfigError("eval needs --checkpoint and --manifest");
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const EvalOutcome out = run_eval(ckpt, manifest, split, strata.empty() ? std::vector<double>{}
                                                                           : parse_thresholds(strata));
    if (!predictions.empty()) write_predictions(predictions, out.predictions);
    std::cout << out.report.to_text();
    return kOk;
}

int cmd_describe(const std::string& manifest_path, const std::string& output, const std::string& cache_path,
                 Endpoint endpoint, const RetryPolicy& retry, std::size_t jobs, std::size_t frames) {
    if (manifest_path.empty()) throw ConfigError("describe needs --manifest");
    Manifest manifest = load_manifest(manifest_path);
    DescriptionCache cache(cache_path);
    DescribeOptions opt;
    opt.endpoint = std::move(endpoint);
    opt.retry = retry;
    opt.max_in_flight = jobs;
    opt.frames = frames;
    Describer describer(opt, cache);
    const DescribeStats stats = describe_manifest(manifest, describer, opt);
    const std::filesystem::path out = output.empty() ? std::filesystem::path(manifest_path) : std::filesystem::path(output);
    // Media paths stay relative to the input manifest's directory.
    Manifest written = manifest;
    if (out.parent_path() != std::filesystem::path(manifest_path).parent_path()) {
        for (Sample& s : written.samples) s.media = std::filesystem::absolute(manifest.media_path(s)).string();
    }
    save_manifest(out, written);
    std::cout << "described=" << stats.described << "\n"
              << "already_present=" << stats.skipped << "\n"
              << "failed=" << stats.failed << "\n"
              << "http_calls=" << describer.http_calls() << "\n";
    if (stats.failed > 0) {
        std::cerr << "describe: " << stats.first_error << "\n";
        return kRuntimeError;
    }
    return kOk;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& corrupt_op) {
    if (!corrupt_op.empty()) testing::inject_backward_fault(corrupt_op, 1.01);
    const GradSuiteReport report = run_gradient_suite(seed);
    testing::clear_backward_fault();
    std::cout << report.to_text();
    if (!report.passed()) {
        std::cout << "gradcheck FAILED:";
        for (const auto& f : report.failures()) std::cout << " " << f;
        if (!corrupt_op.empty()) std::cout << " (corrupted op: " << corrupt_op << ")";
        std::cout << "\n";
        return kRuntimeError;
    }
    std::cout << "gradcheck passed\n";
    return kOk;
}

int cmd_synth(const std::string& config, const std::optional<std::uint64_t>& seed, const std::string& out) {
    if (out.empty()) throw ConfigError("synth needs --out");
    RunConfig cfg = config.empty() ? profile_preset("synthetic") : load_run_config(config);
    if (seed) apply_setting(cfg, "seed", std::to_string(*seed));
    const auto train = synth_split(cfg.synth, cfg.synth.num_samples, cfg.synth.seed);
    const auto val = synth_split(cfg.synth, cfg.synth_val, cfg.synth.seed + 1);
    const Manifest m = write_synthetic(out, train, val, cfg.synth.num_classes);
    const ModalityCeiling ceil = single_modality_ceiling(cfg.synth);
    std::cout << "manifest=" << (std::filesystem::path(out) / "manifest.jsonl").string() << "\n"
              << "samples=" << m.samples.size() << "\n"
              << "vision_ceiling=" << ceil.vision << "\n"
              << "text_ceiling=" << ceil.text << "\n"
              << "chance=" << ceil.chance << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"In-context emotion recognition: descriptions, training and evaluation"};
    app.require_subcommand(1);

    std::string config, manifest, checkpoint, output, split, strata, predictions, cache = "descriptions.jsonl";
    std::string corrupt_op;
    std::optional<std::uint64_t> seed;
    Endpoint endpoint = Endpoint::from_env();
    RetryPolicy retry;
    std::size_t jobs = 4, frames = 8;

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config, "key = value config file (profile = bold-like|emotic-like|caers-like|synthetic)");
    train->add_option("--seed", seed, "override the seed");
    train->add_option("--checkpoint", checkpoint, "resume from a last.ckpt written by an earlier run");
    train->add_option("--output", output, "output directory");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--manifest", manifest)->required();
    eval->add_option("--split", split, "only samples with this split tag");
    eval->add_option("--iou-strata", strata, "comma-separated IoU thresholds, e.g. 0.2,0.3,0.4,0.5,0.7");
    eval->add_option("--predictions", predictions, "also write predictions as JSONL");

    auto* describe = app.add_subcommand("describe", "fill missing descriptions through a chat-completion endpoint");
    describe->add_option("--manifest", manifest)->required();
    describe->add_option("--output", output, "output manifest (default: rewrite input)");
    describe->add_option("--cache", cache, "JSONL description cache");
    describe->add_option("--endpoint", endpoint.url, "chat-completion URL (env EMOQ_VLLM_ENDPOINT)");
    describe->add_option("--model", endpoint.model, "model name sent to the endpoint (env EMOQ_VLLM_MODEL)");
    describe->add_option("--api-key", endpoint.api_key, "bearer token (env EMOQ_VLLM_API_KEY)");
    describe->add_option("--timeout", endpoint.timeout_seconds, "per-request timeout in seconds");
    describe->add_option("--retries", retry.max_retries, "retries after the first attempt");
    describe->add_option("--backoff-ms", retry.base_delay_ms, "initial backoff delay");
    describe->add_option("--jobs", jobs, "requests in flight")->check(CLI::PositiveNumber);
    describe->add_option("--frames", frames, "frames sampled per video clip")->check(CLI::PositiveNumber);

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every layer and the full model");
    grad->add_option("--seed", seed);
    grad->add_option("--config", config, "accepted for symmetry; the suite uses its own small shapes");
    grad->add_option("--corrupt-op", corrupt_op)->group("");

    auto* synth = app.add_subcommand("synth", "write the synthetic corpus");
    synth->add_option("--config", config);
    synth->add_option("--seed", seed);
    synth->add_option("--out", output)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*train) return cmd_train(config, seed, checkpoint, output);
        if (*eval) return cmd_eval(checkpoint, manifest, split, strata, predictions);
        if (*describe) return cmd_describe(manifest, output, cache, endpoint, retry, jobs, frames);
        if (*grad) return cmd_gradcheck(seed.value_or(7), corrupt_op);
        if (*synth) return cmd_synth(config, seed, output);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kRuntimeError;
}
