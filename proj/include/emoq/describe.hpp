#pragma once

#include "emoq/data.hpp"
#include "emoq/image.hpp"
#include "emoq/metrics.hpp"

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace emoq {

const std::vector<std::string>& emotic_class_names();
const std::vector<std::string>& caers_class_names();

struct PromptSpec {
    std::vector<std::string> class_names;
    bool has_bbox = true;

    void validate() const;
};

/// Canonical prompt bytes: "USER: <image>\n" followed by the instruction line.
std::string build_prompt(const PromptSpec& spec);
/// Instruction line alone; this is the text part sent over the wire, since the
/// chat message carries the role and the image separately.
std::string build_instruction(const PromptSpec& spec);

/// Burns a pure red outline of `stroke` pixels into a copy of the image.
/// Boxes reaching outside the image are clamped (reported through `clamped`).
Image render_bbox(const Image& image, const Box& box, std::size_t stroke = 3, bool* clamped = nullptr);

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::string sha256_hex(const std::string& bytes);
std::string image_digest(const Image& image);
std::string frames_digest(const std::vector<Image>& frames);

struct Endpoint {
    std::string url;  // e.g. http://host:port/v1/chat/completions
    std::string model = "llava-1.5-13b";
    std::string api_key;
    double timeout_seconds = 120.0;

    /// EMOQ_VLLM_ENDPOINT, EMOQ_VLLM_API_KEY, EMOQ_VLLM_MODEL.
    static Endpoint from_env();
};

struct RetryPolicy {
    std::size_t max_retries = 4;
    double base_delay_ms = 500.0;
    double max_delay_ms = 16000.0;
    double jitter = 0.5;  // delay *= 1 + jitter * U[0,1)
    std::uint64_t seed = 0;
};

struct RetryEvent {
    std::size_t attempt = 0;
    int status = 0;  // 0 for transport errors
    std::string error;
    double delay_ms = 0.0;
};

class DescriptionError : public std::runtime_error {
public:
    DescriptionError(const std::string& what, int status) : std::runtime_error(what), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

struct DescriptionResponse {
    std::string text;
    std::vector<RetryEvent> retries;
};

/// JSON request body for one image + instruction.
std::string chat_request_body(const Endpoint& endpoint, const Image& image, const std::string& text);

/// POSTs the image and text; retries transport failures, 429 and 5xx.
DescriptionResponse request_description(const Endpoint& endpoint, const Image& image, const std::string& text,
                                        const RetryPolicy& policy, std::atomic<std::size_t>* http_calls = nullptr);

struct DescriptionRecord {
    std::string image_digest;
    std::optional<Box> box;
    std::string prompt_digest;
    std::string description;
    std::string model;
    std::string timestamp;

    std::string key() const;
};

std::string description_key(const std::string& image_digest, const std::optional<Box>& box,
                            const std::string& prompt_digest);

/// Append-only JSONL cache keyed by (image digest, box, prompt digest).
class DescriptionCache {
public:
    explicit DescriptionCache(std::filesystem::path path);

    std::optional<DescriptionRecord> find(const std::string& key) const;
    void put(const DescriptionRecord& record);
    std::size_t size() const;

private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::map<std::string, DescriptionRecord> records_;
};

struct DescribeOptions {
    Endpoint endpoint;
    RetryPolicy retry;
    std::size_t stroke = 3;
    std::size_t max_in_flight = 4;
    std::size_t frames = 8;
};

class Describer {
public:
    Describer(DescribeOptions options, DescriptionCache& cache);

    DescriptionRecord describe_image(const Image& image, const std::optional<Box>& box,
                                     const std::vector<std::string>& class_names);
    /// Sends the temporally middle frame (index T/2) and tags the record's model.
    DescriptionRecord describe_video(const std::vector<Image>& frames, const std::optional<Box>& box,
                                     const std::vector<std::string>& class_names);

    std::size_t http_calls() const { return http_calls_.load(); }
    const std::vector<RetryEvent>& last_retries() const { return last_retries_; }

private:
    DescriptionRecord describe(const std::string& digest, const Image& frame, const std::optional<Box>& box,
                               const std::vector<std::string>& class_names, const std::string& model_tag);

    DescribeOptions options_;
    DescriptionCache& cache_;
    std::atomic<std::size_t> http_calls_{0};
    std::mutex inflight_mutex_;
    std::condition_variable inflight_cv_;
    std::set<std::string> inflight_;
    std::vector<RetryEvent> last_retries_;
};

std::size_t middle_frame_index(std::size_t count);

struct DescribeStats {
    std::size_t described = 0;  // samples that gained a description
    std::size_t skipped = 0;    // already had one
    std::size_t failed = 0;
    std::string first_error;
};

/// Fills missing descriptions in place with up to `max_in_flight` concurrent
/// requests. Samples that fail keep no description.
DescribeStats describe_manifest(Manifest& manifest, Describer& describer, const DescribeOptions& options);

}  // namespace emoq
