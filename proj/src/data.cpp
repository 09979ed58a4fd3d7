#include "emoq/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>

namespace emoq {

namespace fs = std::filesystem;

fs::path Manifest::media_path(const Sample& s) const {
    fs::path p(s.media);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

std::vector<Sample> Manifest::split(const std::string& tag) const {
    std::vector<Sample> out;
    for (const auto& s : samples) {
        if (s.split == tag) out.push_back(s);
    }
    return out;
}

namespace {

Sample parse_sample(const nlohmann::json& rec, const Manifest& m) {
    Sample s;
    s.id = rec.at("id").get<std::string>();
    s.media = rec.at("media").get<std::string>();
    s.video = rec.value("video", false);
    s.image_id = rec.value("image_id", s.id);
    s.split = rec.value("split", std::string("train"));
    if (rec.contains("box") && !rec.at("box").is_null()) {
        const auto b = rec.at("box").get<std::vector<double>>();
        if (b.size() != 4) throw std::invalid_argument("box must have 4 coordinates");
        s.box = Box{b[0], b[1], b[2], b[3]};
        s.box->validate();
    }
    if (rec.contains("description") && !rec.at("description").is_null()) {
        s.description = rec.at("description").get<std::string>();
    }
    if (m.task == TaskKind::multi_label) {
        s.labels = rec.at("labels").get<std::vector<int>>();
        if (s.labels.size() != m.num_classes) {
            throw std::invalid_argument("expected " + std::to_string(m.num_classes) + " labels, got " +
                                        std::to_string(s.labels.size()));
        }
        for (int v : s.labels) {
            if (v != 0 && v != 1) throw std::invalid_argument("multi-label entries must be 0 or 1");
        }
    } else {
        s.label = rec.at("label").get<std::size_t>();
        if (s.label >= m.num_classes) {
            throw std::invalid_argument("label " + std::to_string(s.label) + " outside " +
                                        std::to_string(m.num_classes) + " classes");
        }
    }
    return s;
}

nlohmann::json sample_json(const Sample& s, TaskKind task) {
    nlohmann::json rec;
    rec["id"] = s.id;
    rec["media"] = s.media;
    if (s.video) rec["video"] = true;
    rec["image_id"] = s.image_id;
    if (s.box) rec["box"] = {s.box->x1, s.box->y1, s.box->x2, s.box->y2};
    if (s.description) rec["description"] = *s.description;
    if (task == TaskKind::multi_label) {
        rec["labels"] = s.labels;
    } else {
        rec["label"] = s.label;
    }
    rec["split"] = s.split;
    return rec;
}

}  // namespace

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ManifestError("cannot open manifest " + path.string());
    Manifest m;
    m.base_dir = path.parent_path();
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto rec = nlohmann::json::parse(line);
            if (!rec.is_object()) throw std::invalid_argument("record is not a JSON object");
            if (!header) {
                m.task = parse_task_kind(rec.at("task").get<std::string>());
                m.num_classes = rec.at("num_classes").get<std::size_t>();
                m.class_names = rec.value("class_names", std::vector<std::string>{});
                if (!m.class_names.empty() && m.class_names.size() != m.num_classes) {
                    throw std::invalid_argument("class_names length differs from num_classes");
                }
                header = true;
                continue;
            }
            m.samples.push_back(parse_sample(rec, m));
        } catch (const std::exception& e) {
            throw ManifestError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return m;
}

void save_manifest(const fs::path& path, const Manifest& m) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ManifestError("cannot write manifest " + path.string());
    nlohmann::json header{{"task", to_string(m.task)}, {"num_classes", m.num_classes}};
    if (!m.class_names.empty()) header["class_names"] = m.class_names;
    out << header.dump() << '\n';
    for (const auto& s : m.samples) out << sample_json(s, m.task).dump() << '\n';
}

std::vector<std::size_t> frame_indices(std::size_t available, std::size_t count) {
    if (available == 0) throw std::invalid_argument("frame sampling: no frames available");
    if (count == 0) throw std::invalid_argument("frame sampling: count must be positive");
    std::vector<std::size_t> idx(count);
    if (available >= count) {
        for (std::size_t i = 0; i < count; ++i) idx[i] = i * available / count;
    } else {
        for (std::size_t i = 0; i < count; ++i) idx[i] = std::min(i, available - 1);
    }
    return idx;
}

std::vector<fs::path> list_frames(const fs::path& frame_dir) {
    if (!fs::is_directory(frame_dir)) throw std::runtime_error("frame directory not found: " + frame_dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(frame_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

std::vector<Image> sample_frames(const fs::path& frame_dir, std::size_t count) {
    const auto files = list_frames(frame_dir);
    std::vector<Image> frames;
    for (std::size_t i : frame_indices(files.size(), count)) frames.push_back(read_png(files[i]));
    return frames;
}

Image resize_nearest(const Image& image, std::size_t height, std::size_t width) {
    if (image.height == height && image.width == width) return image;
    Image out(height, width, image.channels);
    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = y * image.height / height;
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t sx = x * image.width / width;
            for (std::size_t c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(sy, sx, c);
        }
    }
    return out;
}

}  // namespace emoq
