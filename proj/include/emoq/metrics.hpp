#pragma once

#include "emoq/task.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace emoq {

/// Axis-aligned box in pixels; requires x2 > x1 and y2 > y1.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    void validate() const;
    double area() const { return (x2 - x1) * (y2 - y1); }
    bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

/// Scores and ground truth for M samples over C classes. Multi-label sets use
/// `labels` (0/1 rows); single-label sets use `classes`.
struct PredictionSet {
    TaskKind task = TaskKind::multi_label;
    std::size_t num_classes = 0;
    std::vector<std::string> sample_ids;
    std::vector<std::string> image_ids;
    std::vector<std::optional<Box>> boxes;
    std::vector<std::vector<double>> scores;
    std::vector<std::vector<int>> labels;
    std::vector<std::size_t> classes;

    std::size_t size() const { return scores.size(); }
    void validate() const;
    /// 0/1 ground truth for class `c` across samples (one-hot for single-label).
    std::vector<int> label_column(std::size_t c) const;
    std::vector<double> score_column(std::size_t c) const;
    PredictionSet subset(const std::vector<std::size_t>& rows) const;
};

/// All-points average precision: samples ranked by descending score (ties by
/// original index); mean of precision at each positive's rank.
/// Throws std::domain_error when there are no positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);

/// Probability that a positive outscores a negative, ties counted as 1/2.
/// Throws std::domain_error unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct ClassAggregate {
    double mean = 0.0;  // NaN when every class was skipped
    std::vector<std::optional<double>> per_class;
    std::vector<std::size_t> skipped;
};

/// Unweighted mean of per-class AP over classes with at least one positive.
ClassAggregate mean_average_precision(const PredictionSet& pred);
/// Macro-averaged ROC-AUC over classes with both positives and negatives.
ClassAggregate macro_roc_auc(const PredictionSet& pred);

/// Fraction of samples whose argmax score equals the label; ties go to the
/// lowest class index.
double accuracy(const PredictionSet& pred);

struct IouStratum {
    double threshold = 0.0;
    std::optional<double> map_overlapping;
    std::optional<double> map_remaining;
    std::size_t overlapping = 0;
    std::size_t remaining = 0;
};

/// Flags sample i as overlapping at threshold t when its box has IoU > t with
/// some other sample's box from the same image.
std::vector<bool> overlapping_at(const PredictionSet& pred, double threshold);

/// mAP of the overlapping and remaining partitions at each threshold.
std::vector<IouStratum> stratified_map_at_iou(const PredictionSet& pred, const std::vector<double>& thresholds);

struct MetricReport {
    TaskKind task = TaskKind::multi_label;
    std::size_t samples = 0;
    std::optional<ClassAggregate> map;
    std::optional<ClassAggregate> auc;
    std::optional<double> accuracy;
    std::vector<IouStratum> strata;

    /// `key=value` lines, stable order and formatting.
    std::string to_text() const;
};

MetricReport evaluate(const PredictionSet& pred, const std::vector<double>& iou_thresholds = {});

/// Line-delimited JSON: {sample_id, image_id, box?, scores, labels}; the
/// first line is a header {"task": ..., "num_classes": ...}.
void write_predictions(const std::filesystem::path& path, const PredictionSet& pred);
PredictionSet read_predictions(const std::filesystem::path& path);

}  // namespace emoq
