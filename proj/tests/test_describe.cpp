#include "emoq/describe.hpp"

#include "golden_prompts.hpp"
#include "httplib.h"

#include <nlohmann/json.hpp>
#include <gtest/gtest.h>

#include <functional>
#include <thread>

using namespace emoq;
using nlohmann::json;

TEST(Prompt, GoldenBytes) {
    EXPECT_EQ(build_prompt({caers_class_names(), true}), golden::kCaersBox);
    EXPECT_EQ(build_prompt({caers_class_names(), false}), golden::kCaersNoBox);
    EXPECT_EQ(build_prompt({emotic_class_names(), true}), golden::kEmoticBox);
    EXPECT_EQ(build_prompt({emotic_class_names(), false}), golden::kEmoticNoBox);
    EXPECT_EQ(emotic_class_names().size(), 26u);
}

TEST(Prompt, RejectsBadClassLists) {
    EXPECT_THROW(build_prompt({{}, true}), std::invalid_argument);
    EXPECT_THROW(build_prompt({{"Fear", "Fear"}, true}), std::invalid_argument);
}

TEST(RenderBox, OutlineOnlyInsideBox) {
    Image im(10, 10, 3, 0.5);
    Image out = render_bbox(im, Box{2, 2, 8, 8}, 2);
    for (std::size_t y = 0; y < 10; ++y) {
        for (std::size_t x = 0; x < 10; ++x) {
            const bool inside = x >= 2 && x < 8 && y >= 2 && y < 8;
            const bool edge = inside && (x < 4 || x >= 6 || y < 4 || y >= 6);
            if (edge) {
                EXPECT_EQ(out.at(y, x, 0), 1.0);
                EXPECT_EQ(out.at(y, x, 1), 0.0);
                EXPECT_EQ(out.at(y, x, 2), 0.0);
            } else {
                EXPECT_EQ(out.at(y, x, 0), 0.5) << y << "," << x;
            }
        }
    }
}

TEST(RenderBox, GrayBecomesRgbAndClamps) {
    Image im(4, 4, 1, 0.25);
    bool clamped = false;
    Image out = render_bbox(im, Box{-2, -2, 2, 2}, 1, &clamped);
    EXPECT_TRUE(clamped);
    EXPECT_EQ(out.channels, 3u);
    EXPECT_EQ(out.at(0, 0, 0), 1.0);
    EXPECT_EQ(out.at(3, 3, 1), 0.25);
    EXPECT_THROW(render_bbox(im, Box{2, 2, 2, 3}), std::invalid_argument);
}

TEST(Encoding, KnownVectors) {
    EXPECT_EQ(base64_encode({'h', 'e', 'l', 'l', 'o'}), "aGVsbG8=");
    EXPECT_EQ(base64_encode({}), "");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Digest, SingleFrameVideoMatchesImage) {
    Image im(3, 3, 3, 0.2);
    EXPECT_EQ(frames_digest({im}), image_digest(im));
    Image other = im;
    other.pixels[4] = 0.9;
    EXPECT_NE(image_digest(other), image_digest(im));
}

namespace {

struct MockServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;
    std::atomic<int> hits{0};
    std::function<void(const httplib::Request&, httplib::Response&, int)> handler;
    std::string last_body;
    std::mutex mutex;

    MockServer() {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int n = hits.fetch_add(1);
            {
                std::lock_guard g(mutex);
                last_body = req.body;
            }
            handler(req, res, n);
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~MockServer() {
        server.stop();
        thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions"; }
};

void reply(httplib::Response& res, const std::string& content) {
    json j{{"choices", json::array({json{{"message", json{{"role", "assistant"}, {"content", content}}}}})}};
    res.set_content(j.dump(), "application/json");
}

std::string echo_text(const httplib::Request& req) {
    const json body = json::parse(req.body);
    return body["messages"][0]["content"][1]["text"].get<std::string>();
}

RetryPolicy fast_retry() {
    RetryPolicy p;
    p.base_delay_ms = 1.0;
    p.max_delay_ms = 4.0;
    return p;
}

DescribeOptions options_for(const MockServer& srv) {
    DescribeOptions o;
    o.endpoint.url = srv.url();
    o.endpoint.timeout_seconds = 5;
    o.retry = fast_retry();
    return o;
}

std::filesystem::path cache_path(const std::string& name) {
    auto p = std::filesystem::path(EMOQ_TEST_TMP) / ("describe_" + name + ".jsonl");
    std::filesystem::remove(p);
    return p;
}

}  // namespace

TEST(Request, SendsImageAndInstruction) {
    MockServer srv;
    srv.handler = [](const httplib::Request& req, httplib::Response& res, int) { reply(res, echo_text(req)); };
    Endpoint ep;
    ep.url = srv.url();
    const std::string instr = build_instruction({caers_class_names(), true});
    auto r = request_description(ep, Image(4, 4, 3, 0.1), instr, fast_retry());
    EXPECT_EQ(r.text, instr);
    EXPECT_TRUE(r.retries.empty());
    const json body = json::parse(srv.last_body);
    EXPECT_EQ(body["model"], "llava-1.5-13b");
    EXPECT_EQ(body["messages"][0]["role"], "user");
    const std::string url = body["messages"][0]["content"][0]["image_url"]["url"];
    EXPECT_EQ(url.rfind("data:image/png;base64,", 0), 0u);
}

TEST(Request, RetriesServerErrorsThenSucceeds) {
    MockServer srv;
    srv.handler = [](const httplib::Request&, httplib::Response& res, int n) {
        if (n < 3) {
            res.status = 500;
            res.set_content("busy", "text/plain");
        } else {
            reply(res, "calm");
        }
    };
    Endpoint ep;
    ep.url = srv.url();
    auto r = request_description(ep, Image(2, 2, 3), "x", fast_retry());
    EXPECT_EQ(r.text, "calm");
    ASSERT_EQ(r.retries.size(), 3u);
    for (const auto& e : r.retries) EXPECT_EQ(e.status, 500);
    EXPECT_LE(r.retries[2].delay_ms, 4.0 * 1.5);
    EXPECT_EQ(srv.hits.load(), 4);
}

TEST(Request, ClientErrorIsNotRetried) {
    MockServer srv;
    srv.handler = [](const httplib::Request&, httplib::Response& res, int) {
        res.status = 400;
        res.set_content("bad", "text/plain");
    };
    Endpoint ep;
    ep.url = srv.url();
    try {
        request_description(ep, Image(2, 2, 3), "x", fast_retry());
        FAIL();
    } catch (const DescriptionError& e) {
        EXPECT_EQ(e.status(), 400);
    }
    EXPECT_EQ(srv.hits.load(), 1);
}

TEST(Request, EmptyDescriptionIsAnError) {
    MockServer srv;
    srv.handler = [](const httplib::Request&, httplib::Response& res, int) { reply(res, ""); };
    Endpoint ep;
    ep.url = srv.url();
    EXPECT_THROW(request_description(ep, Image(2, 2, 3), "x", fast_retry()), DescriptionError);
}

TEST(Request, GivesUpAfterMaxRetries) {
    MockServer srv;
    srv.handler = [](const httplib::Request&, httplib::Response& res, int) { res.status = 429; };
    Endpoint ep;
    ep.url = srv.url();
    RetryPolicy p = fast_retry();
    p.max_retries = 2;
    EXPECT_THROW(request_description(ep, Image(2, 2, 3), "x", p), DescriptionError);
    EXPECT_EQ(srv.hits.load(), 3);
}

TEST(Describer, CacheHitMakesNoCall) {
    MockServer srv;
    srv.handler = [](const httplib::Request&, httplib::Response& res, int) { reply(res, "joyful"); };
    const auto path = cache_path("hit");
    Image im(6, 6, 3, 0.3);
    {
        DescriptionCache cache(path);
        Describer d(options_for(srv), cache);
        EXPECT_EQ(d.describe_image(im, Box{1, 1, 5, 5}, caers_class_names()).description, "joyful");
        EXPECT_EQ(d.http_calls(), 1u);
    }
    DescriptionCache reloaded(path);
    EXPECT_EQ(reloaded.size(), 1u);
    Describer d(options_for(srv), reloaded);
    EXPECT_EQ(d.describe_image(im, Box{1, 1, 5, 5}, caers_class_names()).description, "joyful");
    EXPECT_EQ(d.http_calls(), 0u);
    d.describe_image(im, std::nullopt, caers_class_names());
    EXPECT_EQ(d.http_calls(), 1u);
}

TEST(Describer, VideoUsesMiddleFrameAndTagsModel) {
    MockServer srv;
    srv.handler = [](const httplib::Request&, httplib::Response& res, int) { reply(res, "tense"); };
    EXPECT_EQ(middle_frame_index(8), 4u);
    std::vector<Image> frames;
    for (int i = 0; i < 8; ++i) frames.emplace_back(4, 4, 3, i / 255.0);
    DescriptionCache cache(cache_path("video"));
    Describer d(options_for(srv), cache);
    auto rec = d.describe_video(frames, std::nullopt, caers_class_names());
    EXPECT_NE(rec.model.find("middle-frame substitute"), std::string::npos);
    const json body = json::parse(srv.last_body);
    const std::string url = body["messages"][0]["content"][0]["image_url"]["url"];
    EXPECT_EQ(url, "data:image/png;base64," + base64_encode(encode_png(frames[4])));

    auto single = d.describe_video({frames[2]}, std::nullopt, caers_class_names());
    DescriptionCache cache2(cache_path("video2"));
    Describer d2(options_for(srv), cache2);
    auto as_image = d2.describe_image(frames[2], std::nullopt, caers_class_names());
    EXPECT_EQ(single.image_digest, as_image.image_digest);
    EXPECT_EQ(single.model, as_image.model);
}

TEST(Describer, ManifestWithUnreachableEndpointFails) {
    auto dir = std::filesystem::path(EMOQ_TEST_TMP) / "describe_unreach";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_png(dir / "a.png", Image(4, 4, 3, 0.5));
    Manifest m;
    m.task = TaskKind::single_label;
    m.num_classes = 7;
    m.class_names = caers_class_names();
    m.base_dir = dir;
    Sample s;
    s.id = "a";
    s.media = "a.png";
    m.samples.push_back(s);
    Sample done = s;
    done.id = "b";
    done.description = "already";
    m.samples.push_back(done);
    DescribeOptions o;
    o.endpoint.url = "http://127.0.0.1:1/v1/chat/completions";
    o.endpoint.timeout_seconds = 1;
    o.retry = fast_retry();
    o.retry.max_retries = 1;
    DescriptionCache cache(cache_path("unreach"));
    Describer d(o, cache);
    DescribeStats st = describe_manifest(m, d, o);
    EXPECT_EQ(st.failed, 1u);
    EXPECT_EQ(st.skipped, 1u);
    EXPECT_FALSE(m.samples[0].description.has_value());
    EXPECT_NE(st.first_error.find("a:"), std::string::npos);
}
