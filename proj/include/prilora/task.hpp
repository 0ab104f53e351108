#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prilora {

enum class TaskKind { majority, regression, parity };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

struct TaskConfig {
    TaskKind kind = TaskKind::majority;
    int vocab = 8;
    int seq_len = 9;
    int classes = 2;
    int train_samples = 2000;
    int eval_samples = 500;
    std::uint64_t seed = 1;

    void validate() const;
};

struct Sample {
    std::vector<int> tokens;
    int label = 0;       // classification tasks
    double target = 0;   // regression task
};

/// Generated train/eval splits. Regeneration from the same config is exact
/// and no token sequence appears in both splits.
///
///  - majority: token t belongs to class t % classes; the label is the class
///    with most tokens in the sequence, lowest class on ties.
///  - parity: label is the parity of the number of marker tokens (token 0).
///  - regression: every vocabulary entry carries a hidden N(0, 1) value and
///    the target is the mean value over the sequence.
struct SyntheticTask {
    TaskConfig config;
    std::vector<Sample> train;
    std::vector<Sample> eval;

    bool is_classification() const noexcept { return config.kind != TaskKind::regression; }
    int output_width() const noexcept { return is_classification() ? config.classes : 1; }
};

SyntheticTask make_task(const TaskConfig& config);

}  // namespace prilora
