#pragma once

#include "emoq/tensor.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace emoq {

/// Named trainable tensors, iterated in lexicographic name order.
class ParameterStore {
public:
    /// Registers `value` under `name` and marks it trainable.
    Tensor add(const std::string& name, Tensor value);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return tensors_.contains(name); }
    std::vector<std::string> names() const;
    std::size_t size() const { return tensors_.size(); }
    std::size_t total_elements() const;

    void zero_grad();
    /// Copies values (not handles) from `other`; names and shapes must match.
    void assign_from(const std::map<std::string, Tensor>& other);
    /// Deep copy of every tensor's values.
    std::map<std::string, Tensor> snapshot() const;

    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

private:
    std::map<std::string, Tensor> tensors_;
};

/// Flat named-tensor container plus a JSON manifest of config values.
///
/// Layout (little-endian): "EMOQCKPT", u32 version, u64 manifest length,
/// manifest bytes (compact JSON, sorted keys), u64 tensor count, then per
/// tensor: u32 name length, name, u32 rank, u64 dims[rank], f64 payload.
struct Checkpoint {
    nlohmann::json manifest = nlohmann::json::object();
    std::map<std::string, Tensor> tensors;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace emoq
