#include "fedcme/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "fedcme/errors.hpp"

namespace fedcme {

namespace {

constexpr const char* kHeader = "round,test_acc,mean_train_loss,wall_ms,strategy,seed";

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
    std::ofstream f(path);
    if (!f) throw FormatError("metrics: cannot write " + path);
    f << kHeader << "\n";
    for (const auto& r : records) {
        f << r.round << ',' << format_double(r.test_acc) << ',' << format_double(r.mean_train_loss)
          << ',' << r.wall_ms << ',' << r.strategy << ',' << r.seed << "\n";
    }
    if (!f) throw FormatError("metrics: write failure on " + path);
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("metrics: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != kHeader) {
        throw FormatError("metrics: bad header in " + path);
    }
    std::vector<MetricsRecord> records;
    int last_round = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != 6) throw FormatError("metrics: malformed row in " + path);
        MetricsRecord r;
        try {
            r.round = std::stoi(fields[0]);
            r.test_acc = std::stod(fields[1]);
            r.mean_train_loss = std::stod(fields[2]);
            r.wall_ms = std::stol(fields[3]);
            r.strategy = fields[4];
            r.seed = std::stoull(fields[5]);
        } catch (const std::exception&) {
            throw FormatError("metrics: malformed row in " + path);
        }
        if (r.round <= last_round) {
            throw ValidationError("metrics: rounds not strictly increasing in " + path);
        }
        last_round = r.round;
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<StrategySummary> compare_metrics(const std::vector<std::string>& paths) {
    if (paths.empty()) throw ValidationError("compare: need at least one metrics file");

    struct RunData {
        std::string strategy;
        std::vector<double> acc_by_round;
    };
    std::vector<RunData> runs;
    std::size_t horizon = 0;
    for (const auto& path : paths) {
        const auto records = read_metrics_csv(path);
        if (records.empty()) throw ValidationError("compare: empty metrics file " + path);
        if (horizon == 0) horizon = records.size();
        if (records.size() != horizon) {
            throw ValidationError("compare: inconsistent round count in " + path);
        }
        RunData run;
        run.strategy = records.front().strategy;
        for (const auto& r : records) run.acc_by_round.push_back(r.test_acc);
        runs.push_back(std::move(run));
    }

    std::array<int, 4> checkpoints{};
    for (int j = 1; j <= 4; ++j) {
        const std::size_t round = j * horizon / 5;
        checkpoints[static_cast<std::size_t>(j - 1)] = round >= 1 ? static_cast<int>(round) : 0;
    }

    auto mean_std = [](const std::vector<double>& xs) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= static_cast<double>(xs.size());
        return std::pair<double, double>(mean, std::sqrt(var));
    };

    std::map<std::string, std::vector<const RunData*>> by_strategy;
    for (const auto& run : runs) by_strategy[run.strategy].push_back(&run);

    std::vector<StrategySummary> out;
    for (const auto& [strategy, group] : by_strategy) {
        StrategySummary s;
        s.strategy = strategy;
        s.runs = static_cast<int>(group.size());
        s.checkpoint_rounds = checkpoints;
        std::vector<double> finals;
        for (const RunData* run : group) finals.push_back(run->acc_by_round.back());
        std::tie(s.final_mean, s.final_std) = mean_std(finals);
        for (std::size_t j = 0; j < 4; ++j) {
            if (checkpoints[j] == 0) continue;
            std::vector<double> accs;
            for (const RunData* run : group) {
                accs.push_back(run->acc_by_round[static_cast<std::size_t>(checkpoints[j] - 1)]);
            }
            std::tie(s.checkpoint_mean[j], s.checkpoint_std[j]) = mean_std(accs);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::string format_compare_table(const std::vector<StrategySummary>& summaries) {
    std::ostringstream os;
    os << "strategy        runs  final acc";
    if (!summaries.empty()) {
        for (std::size_t j = 0; j < 4; ++j) {
            if (summaries.front().checkpoint_rounds[j] > 0) {
                os << "        @r" << summaries.front().checkpoint_rounds[j];
            }
        }
    }
    os << "\n";
    char buf[64];
    for (const auto& s : summaries) {
        std::snprintf(buf, sizeof(buf), "%-15s %-5d %.4f+-%.4f", s.strategy.c_str(), s.runs,
                      s.final_mean, s.final_std);
        os << buf;
        for (std::size_t j = 0; j < 4; ++j) {
            if (s.checkpoint_rounds[j] == 0) continue;
            std::snprintf(buf, sizeof(buf), "  %.4f+-%.4f", s.checkpoint_mean[j],
                          s.checkpoint_std[j]);
            os << buf;
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace fedcme
