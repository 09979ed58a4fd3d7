#include "emoq/metrics.hpp"
#include "emoq/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace emoq;

namespace {

double brute_ap(const std::vector<double>& s, const std::vector<int>& y) {
    double total = 0;
    int positives = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        ++positives;
        int at_or_above = 0, pos_at_or_above = 0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (s[j] > s[i] || (s[j] == s[i] && j <= i)) {
                ++at_or_above;
                pos_at_or_above += y[j];
            }
        }
        total += static_cast<double>(pos_at_or_above) / at_or_above;
    }
    return total / positives;
}

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0;
    double pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
    }
    return wins / pairs;
}

}  // namespace

TEST(AveragePrecision, HandCases) {
    const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
    EXPECT_DOUBLE_EQ(average_precision(s, std::vector<int>{1, 0, 1, 0}), (1.0 + 2.0 / 3.0) / 2.0);
    EXPECT_DOUBLE_EQ(average_precision(s, std::vector<int>{1, 1, 0, 0}), 1.0);
    EXPECT_THROW(average_precision(s, std::vector<int>{0, 0, 0, 0}), std::domain_error);
}

TEST(RocAuc, HandCasesAndTies) {
    EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), 0.5);
    EXPECT_THROW(roc_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 1}), std::domain_error);
}

TEST(Metrics, MatchBruteForceOnRandomInstances) {
    RngState rng{77, 0};
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t m = 2 + rng.below(9);
        std::vector<double> s(m);
        std::vector<int> y(m);
        for (std::size_t i = 0; i < m; ++i) {
            s[i] = static_cast<double>(rng.below(4)) / 4.0;
            y[i] = static_cast<int>(rng.below(2));
        }
        y[0] = 1;
        EXPECT_NEAR(average_precision(s, y), brute_ap(s, y), 1e-12);
        y[1] = 0;
        EXPECT_NEAR(roc_auc(s, y), brute_auc(s, y), 1e-12);
    }
}

TEST(Accuracy, TiesGoToLowestIndex) {
    PredictionSet p;
    p.task = TaskKind::single_label;
    p.num_classes = 3;
    p.scores = {{0.4, 0.4, 0.2}, {0.1, 0.2, 0.7}, {0.3, 0.3, 0.3}};
    p.classes = {0, 1, 0};
    p.sample_ids = {"a", "b", "c"};
    p.image_ids = {"a", "b", "c"};
    EXPECT_DOUBLE_EQ(accuracy(p), 2.0 / 3.0);
}

TEST(Iou, HandCases) {
    EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
    EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {10, 0, 20, 10}), 0.0);
    EXPECT_THROW(iou({0, 0, 0, 10}, {0, 0, 1, 1}), std::invalid_argument);
}

TEST(MeanAveragePrecision, SkipsClassesWithoutPositives) {
    PredictionSet p;
    p.num_classes = 2;
    p.scores = {{0.9, 0.1}, {0.2, 0.3}};
    p.labels = {{1, 0}, {0, 0}};
    p.sample_ids = {"a", "b"};
    p.image_ids = {"a", "b"};
    ClassAggregate m = mean_average_precision(p);
    EXPECT_DOUBLE_EQ(m.mean, 1.0);
    EXPECT_EQ(m.skipped, (std::vector<std::size_t>{1}));
    EXPECT_FALSE(m.per_class[1].has_value());
}

TEST(Overlap, SameImageStrictThreshold) {
    PredictionSet p;
    p.num_classes = 1;
    p.scores = {{0.1}, {0.2}, {0.3}, {0.4}};
    p.labels = {{1}, {0}, {1}, {0}};
    p.sample_ids = {"a", "b", "c", "d"};
    p.image_ids = {"img1", "img1", "img2", "img3"};
    p.boxes = {Box{0, 0, 10, 10}, Box{5, 0, 15, 10}, Box{0, 0, 10, 10}, Box{0, 0, 10, 10}};
    EXPECT_EQ(overlapping_at(p, 0.2), (std::vector<bool>{true, true, false, false}));
    // IoU is exactly 1/3, and the comparison is strict.
    EXPECT_EQ(overlapping_at(p, 1.0 / 3.0), (std::vector<bool>{false, false, false, false}));
    auto strata = stratified_map_at_iou(p, {0.2, 0.5});
    EXPECT_EQ(strata[0].overlapping, 2u);
    EXPECT_EQ(strata[0].remaining, 2u);
    EXPECT_EQ(strata[1].overlapping, 0u);
    EXPECT_FALSE(strata[1].map_overlapping.has_value());
}

TEST(Report, FieldsPerTask) {
    PredictionSet p;
    p.num_classes = 2;
    p.scores = {{0.9, 0.1}, {0.2, 0.3}};
    p.labels = {{1, 0}, {0, 1}};
    p.sample_ids = {"a", "b"};
    p.image_ids = {"a", "b"};
    const std::string text = evaluate(p).to_text();
    EXPECT_NE(text.find("mAP="), std::string::npos);
    EXPECT_NE(text.find("AUC="), std::string::npos);
    p.task = TaskKind::single_label;
    p.labels.clear();
    p.classes = {0, 1};
    EXPECT_NE(evaluate(p).to_text().find("accuracy="), std::string::npos);
}

TEST(Predictions, FileRoundTripAndLineErrors) {
    const auto dir = std::filesystem::path(EMOQ_TEST_TMP) / "metrics";
    std::filesystem::create_directories(dir);
    PredictionSet p;
    p.num_classes = 2;
    p.scores = {{0.9, 0.1}, {0.2, 0.3}};
    p.labels = {{1, 0}, {0, 1}};
    p.sample_ids = {"a", "b"};
    p.image_ids = {"i", "i"};
    p.boxes = {Box{0, 0, 1, 1}, std::nullopt};
    write_predictions(dir / "p.jsonl", p);
    PredictionSet q = read_predictions(dir / "p.jsonl");
    EXPECT_EQ(q.scores, p.scores);
    EXPECT_EQ(q.labels, p.labels);
    EXPECT_EQ(q.boxes, p.boxes);
    std::ofstream(dir / "bad.jsonl") << "{\"task\":\"multi_label\",\"num_classes\":2}\n{\"sample_id\":\"a\"}\n";
    try {
        read_predictions(dir / "bad.jsonl");
        FAIL();
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
    }
}
