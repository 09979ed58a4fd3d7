#include "emoq/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace emoq {

namespace {

std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : "nan"; }

}  // namespace

void Box::validate() const {
    if (!(x2 > x1) || !(y2 > y1)) {
        throw std::invalid_argument("degenerate box (" + fmt_double(x1) + ", " + fmt_double(y1) + ", " +
                                    fmt_double(x2) + ", " + fmt_double(y2) + ")");
    }
}

double iou(const Box& a, const Box& b) {
    a.validate();
    b.validate();
    const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (w <= 0 || h <= 0) return 0.0;
    const double inter = w * h;
    return inter / (a.area() + b.area() - inter);
}

void PredictionSet::validate() const {
    const std::size_t m = scores.size();
    for (const auto& row : scores) {
        if (row.size() != num_classes) throw std::invalid_argument("prediction row width differs from num_classes");
        for (double v : row) {
            if (!std::isfinite(v)) throw std::invalid_argument("prediction scores must be finite");
        }
    }
    if (task == TaskKind::multi_label) {
        if (labels.size() != m) throw std::invalid_argument("label rows do not match score rows");
        for (const auto& row : labels) {
            if (row.size() != num_classes) throw std::invalid_argument("label row width differs from num_classes");
            for (int v : row) {
                if (v != 0 && v != 1) throw std::invalid_argument("multi-label targets must be 0 or 1");
            }
        }
    } else {
        if (classes.size() != m) throw std::invalid_argument("class labels do not match score rows");
        for (std::size_t c : classes) {
            if (c >= num_classes) throw std::out_of_range("class label " + std::to_string(c) + " out of range");
        }
    }
    if (!boxes.empty() && boxes.size() != m) throw std::invalid_argument("box list does not match score rows");
    if (!image_ids.empty() && image_ids.size() != m) throw std::invalid_argument("image ids do not match score rows");
}

std::vector<int> PredictionSet::label_column(std::size_t c) const {
    std::vector<int> out(size());
    for (std::size_t i = 0; i < size(); ++i) {
        out[i] = task == TaskKind::multi_label ? labels[i][c] : (classes[i] == c ? 1 : 0);
    }
    return out;
}

std::vector<double> PredictionSet::score_column(std::size_t c) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = scores[i][c];
    return out;
}

PredictionSet PredictionSet::subset(const std::vector<std::size_t>& rows) const {
    PredictionSet out;
    out.task = task;
    out.num_classes = num_classes;
    for (std::size_t r : rows) {
        out.scores.push_back(scores.at(r));
        if (task == TaskKind::multi_label) {
            out.labels.push_back(labels.at(r));
        } else {
            out.classes.push_back(classes.at(r));
        }
        if (!sample_ids.empty()) out.sample_ids.push_back(sample_ids.at(r));
        if (!image_ids.empty()) out.image_ids.push_back(image_ids.at(r));
        if (!boxes.empty()) out.boxes.push_back(boxes.at(r));
    }
    return out;
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("average_precision: length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t hits = 0;
    double total = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]] == 1) {
            ++hits;
            total += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    if (hits == 0) throw std::domain_error("average_precision: no positive labels");
    return total / static_cast<double>(hits);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: length mismatch");
    const std::size_t m = scores.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Rank-sum with averaged ranks for tied scores.
    double pos_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < m;) {
        std::size_t j = i;
        while (j < m && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                pos_rank_sum += avg_rank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = m - positives;
    if (positives == 0 || negatives == 0) throw std::domain_error("roc_auc: need both positive and negative labels");
    const double p = static_cast<double>(positives), n = static_cast<double>(negatives);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

namespace {

template <typename Metric>
ClassAggregate aggregate(const PredictionSet& pred, Metric metric) {
    pred.validate();
    ClassAggregate out;
    out.per_class.resize(pred.num_classes);
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < pred.num_classes; ++c) {
        const auto labels = pred.label_column(c);
        const auto scores = pred.score_column(c);
        try {
            const double v = metric(scores, labels);
            out.per_class[c] = v;
            total += v;
            ++used;
        } catch (const std::domain_error&) {
            out.skipped.push_back(c);
        }
    }
    out.mean = used ? total / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
    return out;
}

}  // namespace

ClassAggregate mean_average_precision(const PredictionSet& pred) {
    return aggregate(pred, [](const auto& s, const auto& l) { return average_precision(s, l); });
}

ClassAggregate macro_roc_auc(const PredictionSet& pred) {
    return aggregate(pred, [](const auto& s, const auto& l) { return roc_auc(s, l); });
}

double accuracy(const PredictionSet& pred) {
    if (pred.task != TaskKind::single_label) throw std::invalid_argument("accuracy needs single-label predictions");
    pred.validate();
    if (pred.size() == 0) throw std::invalid_argument("accuracy: no samples");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto& row = pred.scores[i];
        // max_element returns the first maximum, i.e. the lowest tied index.
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best == pred.classes[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

std::vector<bool> overlapping_at(const PredictionSet& pred, double threshold) {
    const std::size_t m = pred.size();
    if (pred.boxes.size() != m || pred.image_ids.size() != m) {
        throw std::invalid_argument("IoU stratification needs a box and image id for every sample");
    }
    std::map<std::string, std::vector<std::size_t>> by_image;
    for (std::size_t i = 0; i < m; ++i) {
        if (!pred.boxes[i]) {
            const std::string id = pred.sample_ids.empty() ? std::to_string(i) : pred.sample_ids[i];
            throw std::invalid_argument("sample " + id + " has no bounding box");
        }
        by_image[pred.image_ids[i]].push_back(i);
    }
    std::vector<bool> flags(m, false);
    for (const auto& [_, members] : by_image) {
        for (std::size_t a = 0; a < members.size(); ++a) {
            for (std::size_t b = a + 1; b < members.size(); ++b) {
                if (iou(*pred.boxes[members[a]], *pred.boxes[members[b]]) > threshold) {
                    flags[members[a]] = true;
                    flags[members[b]] = true;
                }
            }
        }
    }
    return flags;
}

std::vector<IouStratum> stratified_map_at_iou(const PredictionSet& pred, const std::vector<double>& thresholds) {
    pred.validate();
    std::vector<IouStratum> out;
    for (double t : thresholds) {
        const auto flags = overlapping_at(pred, t);
        std::vector<std::size_t> over, rest;
        for (std::size_t i = 0; i < flags.size(); ++i) (flags[i] ? over : rest).push_back(i);
        IouStratum row;
        row.threshold = t;
        row.overlapping = over.size();
        row.remaining = rest.size();
        auto part_map = [&](const std::vector<std::size_t>& rows) -> std::optional<double> {
            if (rows.empty()) return std::nullopt;
            const double v = mean_average_precision(pred.subset(rows)).mean;
            return std::isnan(v) ? std::nullopt : std::optional<double>(v);
        };
        row.map_overlapping = part_map(over);
        row.map_remaining = part_map(rest);
        out.push_back(row);
    }
    return out;
}

MetricReport evaluate(const PredictionSet& pred, const std::vector<double>& iou_thresholds) {
    pred.validate();
    MetricReport report;
    report.task = pred.task;
    report.samples = pred.size();
    if (pred.task == TaskKind::multi_label) {
        report.map = mean_average_precision(pred);
        report.auc = macro_roc_auc(pred);
    } else {
        report.accuracy = accuracy(pred);
    }
    if (!iou_thresholds.empty()) report.strata = stratified_map_at_iou(pred, iou_thresholds);
    return report;
}

std::string MetricReport::to_text() const {
    std::ostringstream os;
    os << "task=" << to_string(task) << '\n';
    os << "samples=" << samples << '\n';
    auto emit = [&](const std::string& key, const ClassAggregate& agg) {
        os << key << '=' << fmt_double(agg.mean) << '\n';
        for (std::size_t c = 0; c < agg.per_class.size(); ++c) {
            os << key << ".class" << c << '=' << fmt_opt(agg.per_class[c]) << '\n';
        }
        os << key << ".skipped=";
        for (std::size_t i = 0; i < agg.skipped.size(); ++i) os << (i ? "," : "") << agg.skipped[i];
        os << '\n';
    };
    if (map) emit("mAP", *map);
    if (auc) emit("AUC", *auc);
    if (accuracy) os << "accuracy=" << fmt_double(*accuracy) << '\n';
    for (const auto& s : strata) {
        const std::string key = "iou@" + fmt_double(s.threshold).substr(0, 4);
        os << key << ".mAP_overlapping=" << fmt_opt(s.map_overlapping) << '\n';
        os << key << ".mAP_remaining=" << fmt_opt(s.map_remaining) << '\n';
        os << key << ".count_overlapping=" << s.overlapping << '\n';
        os << key << ".count_remaining=" << s.remaining << '\n';
    }
    return os.str();
}

void write_predictions(const std::filesystem::path& path, const PredictionSet& pred) {
    pred.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write predictions " + path.string());
    out << nlohmann::json{{"task", to_string(pred.task)}, {"num_classes", pred.num_classes}}.dump() << '\n';
    for (std::size_t i = 0; i < pred.size(); ++i) {
        nlohmann::json rec;
        rec["sample_id"] = pred.sample_ids.empty() ? std::to_string(i) : pred.sample_ids[i];
        rec["image_id"] = pred.image_ids.empty() ? rec["sample_id"].get<std::string>() : pred.image_ids[i];
        if (!pred.boxes.empty() && pred.boxes[i]) {
            const Box& b = *pred.boxes[i];
            rec["box"] = {b.x1, b.y1, b.x2, b.y2};
        }
        rec["scores"] = pred.scores[i];
        if (pred.task == TaskKind::multi_label) {
            rec["labels"] = pred.labels[i];
        } else {
            rec["labels"] = pred.classes[i];
        }
        out << rec.dump() << '\n';
    }
}

PredictionSet read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read predictions " + path.string());
    PredictionSet pred;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    bool any_box = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto rec = nlohmann::json::parse(line);
            if (!header) {
                pred.task = parse_task_kind(rec.at("task").get<std::string>());
                pred.num_classes = rec.at("num_classes").get<std::size_t>();
                header = true;
                continue;
            }
            pred.sample_ids.push_back(rec.at("sample_id").get<std::string>());
            pred.image_ids.push_back(rec.value("image_id", pred.sample_ids.back()));
            if (rec.contains("box")) {
                const auto b = rec.at("box").get<std::vector<double>>();
                if (b.size() != 4) throw std::invalid_argument("box needs 4 numbers");
                pred.boxes.push_back(Box{b[0], b[1], b[2], b[3]});
                any_box = true;
            } else {
                pred.boxes.push_back(std::nullopt);
            }
            pred.scores.push_back(rec.at("scores").get<std::vector<double>>());
            if (pred.task == TaskKind::multi_label) {
                pred.labels.push_back(rec.at("labels").get<std::vector<int>>());
            } else {
                pred.classes.push_back(rec.at("labels").get<std::size_t>());
            }
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!any_box) pred.boxes.clear();
    pred.validate();
    return pred;
}

}  // namespace emoq
