#include "emoq/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace emoq {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'E', 'M', 'O', 'Q', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string take(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated data");
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

Tensor ParameterStore::add(const std::string& name, Tensor value) {
    if (tensors_.contains(name)) throw std::invalid_argument("parameter registered twice: " + name);
    value.set_requires_grad(true);
    tensors_.emplace(name, value);
    return value;
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(tensors_.size());
    for (const auto& [name, _] : tensors_) out.push_back(name);
    return out;
}

std::size_t ParameterStore::total_elements() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& [_, t] : tensors_) {
        Tensor handle = t;
        handle.zero_grad();
    }
}

void ParameterStore::assign_from(const std::map<std::string, Tensor>& other) {
    for (const auto& [name, t] : tensors_) {
        auto it = other.find(name);
        if (it == other.end()) throw std::runtime_error("checkpoint is missing parameter " + name);
        if (it->second.shape() != t.shape()) {
            throw DimensionError("parameter " + name + ": checkpoint shape " + shape_str(it->second.shape()) +
                                 " vs model " + shape_str(t.shape()));
        }
        Tensor handle = t;
        std::copy(it->second.data().begin(), it->second.data().end(), handle.mutable_data().begin());
    }
}

std::map<std::string, Tensor> ParameterStore::snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, t] : tensors_) out.emplace(name, t.detach());
    return out;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    const std::string manifest = ckpt.manifest.dump();
    put<std::uint64_t>(out, manifest.size());
    out += manifest;
    put<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
        for (double v : t.data()) put<double>(out, v);
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (in.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
        throw std::runtime_error("checkpoint: bad magic");
    }
    const auto version = in.get<std::uint32_t>();
    if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.manifest = nlohmann::json::parse(in.take(in.get<std::uint64_t>()));
    const auto count = in.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = in.take(in.get<std::uint32_t>());
        Shape shape(in.get<std::uint32_t>());
        for (std::size_t& d : shape) d = in.get<std::uint64_t>();
        std::vector<double> data(shape_numel(shape));
        for (double& v : data) v = in.get<double>();
        ckpt.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    const std::string bytes = encode_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_checkpoint(buf.str());
}

}  // namespace emoq
