#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "emoq/describe.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

namespace emoq {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& emotic_class_names() {
    static const std::vector<std::string> names{
        "Affection",   "Anger",         "Annoyance",  "Anticipation", "Aversion",     "Confidence", "Disapproval",
        "Disconnection", "Disquietment", "Doubt/Confusion", "Embarrassment", "Engagement", "Esteem", "Excitement",
        "Fatigue",     "Fear",          "Happiness",  "Pain",         "Peace",        "Pleasure",   "Sadness",
        "Sensitivity", "Suffering",     "Surprise",   "Sympathy",     "Yearning"};
    return names;
}

const std::vector<std::string>& caers_class_names() {
    static const std::vector<std::string> names{"Anger", "Disgust", "Fear", "Happiness",
                                                "Sadness", "Surprise", "Neutral"};
    return names;
}

void PromptSpec::validate() const {
    if (class_names.empty()) throw std::invalid_argument("prompt: class list is empty");
    std::set<std::string> seen;
    for (const auto& name : class_names) {
        if (name.empty()) throw std::invalid_argument("prompt: empty class name");
        if (!seen.insert(name).second) throw std::invalid_argument("prompt: duplicate class name '" + name + "'");
    }
}

std::string build_instruction(const PromptSpec& spec) {
    spec.validate();
    std::string names;
    for (std::size_t i = 0; i < spec.class_names.size(); ++i) {
        if (i) names += ", ";
        names += spec.class_names[i];
    }
    std::string out = "Given the following list of emotions: " + names +
                      ", please explain in detail which emotions are more suitable for describing how the person";
    if (spec.has_bbox) out += " in the red box";
    out += " feels based on the image context.";
    return out;
}

std::string build_prompt(const PromptSpec& spec) { return "USER: <image>\n" + build_instruction(spec); }

Image render_bbox(const Image& image, const Box& box, std::size_t stroke, bool* clamped) {
    if (!(box.x2 > box.x1) || !(box.y2 > box.y1)) throw std::invalid_argument("render_bbox: degenerate box");
    if (stroke == 0) throw std::invalid_argument("render_bbox: stroke must be positive");
    Image out = image;
    if (out.channels == 1) {
        out = Image(image.height, image.width, 3);
        for (std::size_t i = 0; i < image.height * image.width; ++i) {
            for (std::size_t c = 0; c < 3; ++c) out.pixels[i * 3 + c] = image.pixels[i];
        }
    } else if (out.channels != 3) {
        throw std::invalid_argument("render_bbox: expected 1 or 3 channels");
    }
    const double w = static_cast<double>(image.width);
    const double h = static_cast<double>(image.height);
    const bool outside = box.x1 < 0 || box.y1 < 0 || box.x2 > w || box.y2 > h;
    if (clamped) *clamped = outside;
    if (outside) {
        std::cerr << "render_bbox: box [" << box.x1 << ", " << box.y1 << ", " << box.x2 << ", " << box.y2
                  << "] clamped to " << image.width << "x" << image.height << " image\n";
    }
    const auto x1 = static_cast<long>(std::clamp(std::floor(box.x1), 0.0, w));
    const auto y1 = static_cast<long>(std::clamp(std::floor(box.y1), 0.0, h));
    const auto x2 = static_cast<long>(std::clamp(std::ceil(box.x2), 0.0, w));
    const auto y2 = static_cast<long>(std::clamp(std::ceil(box.y2), 0.0, h));
    if (x2 <= x1 || y2 <= y1) throw std::invalid_argument("render_bbox: box lies outside the image");
    const long s = static_cast<long>(stroke);
    for (long y = y1; y < y2; ++y) {
        for (long x = x1; x < x2; ++x) {
            const bool edge = x < x1 + s || x >= x2 - s || y < y1 + s || y >= y2 - s;
            if (!edge) continue;
            const auto uy = static_cast<std::size_t>(y);
            const auto ux = static_cast<std::size_t>(x);
            out.at(uy, ux, 0) = 1.0;
            out.at(uy, ux, 1) = 0.0;
            out.at(uy, ux, 2) = 0.0;
        }
    }
    return out;
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr)) {
        throw std::runtime_error("SHA-256 failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

std::string image_digest(const Image& image) {
    std::string bytes = std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                        std::to_string(image.channels) + ":";
    bytes.reserve(bytes.size() + image.pixels.size());
    for (double v : image.pixels) bytes.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    return sha256_hex(bytes);
}

std::string frames_digest(const std::vector<Image>& frames) {
    if (frames.size() == 1) return image_digest(frames.front());
    std::string joined = "frames:" + std::to_string(frames.size());
    for (const auto& f : frames) joined += ":" + image_digest(f);
    return sha256_hex(joined);
}

Endpoint Endpoint::from_env() {
    Endpoint e;
    if (const char* v = std::getenv("EMOQ_VLLM_ENDPOINT")) e.url = v;
    if (const char* v = std::getenv("EMOQ_VLLM_API_KEY")) e.api_key = v;
    if (const char* v = std::getenv("EMOQ_VLLM_MODEL")) e.model = v;
    return e;
}

std::string chat_request_body(const Endpoint& endpoint, const Image& image, const std::string& text) {
    const std::string data_url = "data:image/png;base64," + base64_encode(encode_png(image));
    json content = json::array();
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_url}}}});
    content.push_back({{"type", "text"}, {"text", text}});
    json body{{"model", endpoint.model},
              {"messages", json::array({json{{"role", "user"}, {"content", content}}})}};
    return body.dump();
}

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw DescriptionError("endpoint URL lacks a scheme: " + url, 0);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

DescriptionResponse request_description(const Endpoint& endpoint, const Image& image, const std::string& text,
                                        const RetryPolicy& policy, std::atomic<std::size_t>* http_calls) {
    if (endpoint.url.empty()) throw DescriptionError("no description endpoint configured", 0);
    const ParsedUrl url = parse_url(endpoint.url);
    const std::string body = chat_request_body(endpoint, image, text);
    httplib::Client client(url.origin);
    const auto timeout = std::chrono::duration<double>(endpoint.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    httplib::Headers headers;
    if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

    RngState jitter_rng{policy.seed, 0};
    DescriptionResponse response;
    for (std::size_t attempt = 0;; ++attempt) {
        if (http_calls) ++*http_calls;
        auto result = client.Post(url.path, headers, body, "application/json");
        int status = 0;
        std::string error;
        if (!result) {
            error = "transport error: " + httplib::to_string(result.error());
        } else {
            status = result->status;
            if (status >= 200 && status < 300) {
                json parsed;
                try {
                    parsed = json::parse(result->body);
                } catch (const json::exception& e) {
                    throw DescriptionError(std::string("malformed response body: ") + e.what(), status);
                }
                const auto& choices = parsed.value("choices", json::array());
                if (choices.empty()) throw DescriptionError("response has no choices", status);
                const json& message = choices.at(0).value("message", json::object());
                std::string content;
                if (message.contains("content") && message.at("content").is_string()) {
                    content = message.at("content").get<std::string>();
                }
                if (content.empty()) throw DescriptionError("empty description in response", status);
                response.text = content;
                return response;
            }
            error = "HTTP " + std::to_string(status);
            if (!retryable(status)) throw DescriptionError(error + ": " + result->body, status);
        }
        if (attempt >= policy.max_retries) {
            throw DescriptionError(error + " after " + std::to_string(attempt) + " retries", status);
        }
        double delay = std::min(policy.max_delay_ms, policy.base_delay_ms * std::pow(2.0, double(attempt)));
        delay *= 1.0 + policy.jitter * jitter_rng.uniform();
        response.retries.push_back({attempt + 1, status, error, delay});
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
    }
}

std::string description_key(const std::string& digest, const std::optional<Box>& box,
                            const std::string& prompt_digest) {
    const json b = box ? json{box->x1, box->y1, box->x2, box->y2} : json(nullptr);
    return digest + "|" + b.dump() + "|" + prompt_digest;
}

std::string DescriptionRecord::key() const { return description_key(image_digest, box, prompt_digest); }

namespace {

json record_json(const DescriptionRecord& r) {
    json j{{"image_digest", r.image_digest},
           {"prompt_digest", r.prompt_digest},
           {"description", r.description},
           {"model", r.model},
           {"timestamp", r.timestamp}};
    j["box"] = r.box ? json{r.box->x1, r.box->y1, r.box->x2, r.box->y2} : json(nullptr);
    return j;
}

DescriptionRecord record_from_json(const json& j) {
    DescriptionRecord r;
    r.image_digest = j.at("image_digest").get<std::string>();
    r.prompt_digest = j.at("prompt_digest").get<std::string>();
    r.description = j.at("description").get<std::string>();
    r.model = j.value("model", std::string());
    r.timestamp = j.value("timestamp", std::string());
    if (j.contains("box") && !j.at("box").is_null()) {
        const auto b = j.at("box").get<std::vector<double>>();
        if (b.size() != 4) throw std::invalid_argument("box must have 4 coordinates");
        r.box = Box{b[0], b[1], b[2], b[3]};
    }
    return r;
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

DescriptionCache::DescriptionCache(fs::path path) : path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            DescriptionRecord r = record_from_json(json::parse(line));
            records_[r.key()] = std::move(r);
        } catch (const std::exception& e) {
            throw std::runtime_error(path_.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

std::optional<DescriptionRecord> DescriptionCache::find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = records_.find(key);
    if (it == records_.end()) return std::nullopt;
    return it->second;
}

void DescriptionCache::put(const DescriptionRecord& record) {
    std::lock_guard lock(mutex_);
    if (!path_.empty()) {
        if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        if (!out) throw std::runtime_error("cannot append to description cache " + path_.string());
        out << record_json(record).dump() << '\n';
    }
    records_[record.key()] = record;
}

std::size_t DescriptionCache::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

Describer::Describer(DescribeOptions options, DescriptionCache& cache) : options_(std::move(options)), cache_(cache) {}

std::size_t middle_frame_index(std::size_t count) {
    if (count == 0) throw std::invalid_argument("describe_video: no frames");
    return count / 2;
}

DescriptionRecord Describer::describe(const std::string& digest, const Image& frame, const std::optional<Box>& box,
                                      const std::vector<std::string>& class_names, const std::string& model_tag) {
    const PromptSpec spec{class_names, box.has_value()};
    const std::string prompt_digest = sha256_hex(build_prompt(spec));
    const std::string key = description_key(digest, box, prompt_digest);

    std::unique_lock lock(inflight_mutex_);
    inflight_cv_.wait(lock, [&] { return !inflight_.contains(key); });
    if (auto hit = cache_.find(key)) return *hit;
    inflight_.insert(key);
    lock.unlock();

    auto release = [&] {
        std::lock_guard guard(inflight_mutex_);
        inflight_.erase(key);
        inflight_cv_.notify_all();
    };
    try {
        const Image rendered = box ? render_bbox(frame, *box, options_.stroke) : frame;
        RetryPolicy policy = options_.retry;
        policy.seed ^= std::hash<std::string>{}(key);
        DescriptionResponse resp =
            request_description(options_.endpoint, rendered, build_instruction(spec), policy, &http_calls_);
        DescriptionRecord record{digest, box, prompt_digest, resp.text, options_.endpoint.model + model_tag,
                                 utc_timestamp()};
        cache_.put(record);
        {
            std::lock_guard guard(inflight_mutex_);
            last_retries_ = std::move(resp.retries);
        }
        release();
        return record;
    } catch (...) {
        release();
        throw;
    }
}

DescriptionRecord Describer::describe_image(const Image& image, const std::optional<Box>& box,
                                            const std::vector<std::string>& class_names) {
    return describe(image_digest(image), image, box, class_names, "");
}

DescriptionRecord Describer::describe_video(const std::vector<Image>& frames, const std::optional<Box>& box,
                                            const std::vector<std::string>& class_names) {
    const std::size_t mid = middle_frame_index(frames.size());
    if (frames.size() == 1) return describe_image(frames[0], box, class_names);
    return describe(frames_digest(frames), frames[mid], box, class_names, " (middle-frame substitute)");
}

DescribeStats describe_manifest(Manifest& manifest, Describer& describer, const DescribeOptions& options) {
    if (manifest.class_names.empty()) throw std::invalid_argument("describe: manifest header lacks class_names");
    DescribeStats stats;
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        if (manifest.samples[i].description) {
            ++stats.skipped;
        } else {
            pending.push_back(i);
        }
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex stats_mutex;
    auto worker = [&] {
        while (!stop.load()) {
            const std::size_t slot = next.fetch_add(1);
            if (slot >= pending.size()) return;
            Sample& s = manifest.samples[pending[slot]];
            try {
                const auto path = manifest.media_path(s);
                DescriptionRecord r = s.video ? describer.describe_video(sample_frames(path, options.frames), s.box,
                                                                         manifest.class_names)
                                              : describer.describe_image(read_png(path), s.box, manifest.class_names);
                s.description = r.description;
                std::lock_guard guard(stats_mutex);
                ++stats.described;
            } catch (const std::exception& e) {
                std::lock_guard guard(stats_mutex);
                ++stats.failed;
                if (stats.first_error.empty()) stats.first_error = s.id + ": " + e.what();
                stop.store(true);
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(options.max_in_flight, pending.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    }
    return stats;
}

}  // namespace emoq
