#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace fedcme {

struct MetricsRecord {
    int round = 0;  // 1-based
    double test_acc = 0.0;
    double mean_train_loss = 0.0;
    long wall_ms = 0;
    std::string strategy;
    std::uint64_t seed = 0;
};

// CSV with header `round,test_acc,mean_train_loss,wall_ms,strategy,seed`.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

// Per-strategy aggregate over one or more runs: final-round accuracy and
// the four intermediate checkpoints at 1/5, 2/5, 3/5, 4/5 of the horizon.
struct StrategySummary {
    std::string strategy;
    int runs = 0;
    double final_mean = 0.0;
    double final_std = 0.0;                       // population std
    std::array<int, 4> checkpoint_rounds{};       // 0 = checkpoint not available
    std::array<double, 4> checkpoint_mean{};
    std::array<double, 4> checkpoint_std{};
};

// All files must share the same horizon T; mismatch is a validation error.
std::vector<StrategySummary> compare_metrics(const std::vector<std::string>& paths);

std::string format_compare_table(const std::vector<StrategySummary>& summaries);

}  // namespace fedcme
