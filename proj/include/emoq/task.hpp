#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emoq {

enum class TaskKind { multi_label, single_label };

inline std::string_view to_string(TaskKind kind) {
    return kind == TaskKind::multi_label ? "multi_label" : "single_label";
}

inline TaskKind parse_task_kind(std::string_view s) {
    if (s == "multi_label") return TaskKind::multi_label;
    if (s == "single_label") return TaskKind::single_label;
    throw std::invalid_argument("unknown task kind '" + std::string(s) + "'");
}

}  // namespace emoq
