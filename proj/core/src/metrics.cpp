#include "roadtagger/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "roadtagger/errors.hpp"

namespace roadtagger {

namespace {

void check_sizes(std::size_t a, std::size_t b, std::size_t m, const char* what) {
    if (a != b || a != m)
        throw DataError(std::string(what) + ": size mismatch (" + std::to_string(a) + ", " +
                        std::to_string(b) + ", " + std::to_string(m) + ")");
}

}  // namespace

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth,
                const std::vector<bool>& mask) {
    check_sizes(predicted.size(), truth.size(), mask.size(), "accuracy");
    int total = 0, correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (!mask[i]) continue;
        ++total;
        if (predicted[i] == truth[i]) ++correct;
    }
    if (total == 0) throw DataError("accuracy: empty mask");
    return static_cast<double>(correct) / total;
}

double absolute_lane_error(const std::vector<int>& predicted_lanes,
                           const std::vector<int>& true_lanes, const std::vector<bool>& mask) {
    check_sizes(predicted_lanes.size(), true_lanes.size(), mask.size(), "ale");
    int total = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < predicted_lanes.size(); ++i) {
        if (!mask[i]) continue;
        ++total;
        sum += std::abs(predicted_lanes[i] - true_lanes[i]);
    }
    if (total == 0) throw DataError("ale: empty mask");
    return sum / total;
}

int Confusion::total() const { return std::accumulate(counts.begin(), counts.end(), 0); }

int Confusion::trace() const {
    int t = 0;
    for (int c = 0; c < classes; ++c) t += at(c, c);
    return t;
}

EvalReport evaluate(const PredictionSet& predictions, const LabelSet& labels,
                    const Subsets& subsets) {
    const int n = labels.size();
    if (predictions.vertex_count() != n)
        throw DataError("evaluate: prediction count " + std::to_string(predictions.vertex_count()) +
                        " != label count " + std::to_string(n));
    const auto lane_pred = predictions.lane_argmax();
    const auto type_pred = predictions.type_argmax();

    EvalReport report;
    report.lane_confusion = Confusion(predictions.lane_probs.cols());
    report.type_confusion = Confusion(predictions.type_probs.cols());
    for (int v = 0; v < n; ++v) {
        if (labels.lane_mask[v])
            report.lane_confusion.at(labels.lanes[v] - 1, lane_pred[v] - 1)++;
        if (labels.type_mask[v]) report.type_confusion.at(labels.types[v], type_pred[v])++;
    }
    report.lane_accuracy = accuracy(lane_pred, labels.lanes, labels.lane_mask);
    report.type_accuracy = accuracy(type_pred, labels.types, labels.type_mask);
    report.ale = absolute_lane_error(lane_pred, labels.lanes, labels.lane_mask);

    for (const auto& [name, member] : subsets) {
        if (static_cast<int>(member.size()) != n)
            throw DataError("evaluate: subset '" + name + "' size mismatch");
        SubsetStats stats;
        stats.name = name;
        std::vector<bool> lane_mask(n), type_mask(n);
        for (int v = 0; v < n; ++v) {
            lane_mask[v] = member[v] && labels.lane_mask[v];
            type_mask[v] = member[v] && labels.type_mask[v];
            if (member[v]) ++stats.count;
        }
        const bool any_lane = std::find(lane_mask.begin(), lane_mask.end(), true) != lane_mask.end();
        const bool any_type = std::find(type_mask.begin(), type_mask.end(), true) != type_mask.end();
        stats.lane_accuracy = any_lane ? accuracy(lane_pred, labels.lanes, lane_mask) : 0.0;
        stats.ale = any_lane ? absolute_lane_error(lane_pred, labels.lanes, lane_mask) : 0.0;
        stats.type_accuracy = any_type ? accuracy(type_pred, labels.types, type_mask) : 0.0;
        report.subsets.push_back(std::move(stats));
    }
    return report;
}

double reduction_fraction(double base, double value) {
    if (base == 0.0) return 0.0;
    return (base - value) / base;
}

ComparisonTable compare_report(const std::vector<std::pair<std::string, PredictionSet>>& schemes,
                               const LabelSet& labels, const Subsets& subsets) {
    if (schemes.empty()) throw DataError("compare_report: no schemes");
    ComparisonTable table;
    for (const auto& [name, preds] : schemes) {
        if (preds.vertex_count() != labels.size() ||
            preds.type_probs.rows() != labels.size())
            throw DataError("compare_report: scheme '" + name + "' does not cover the vertex set");
        ComparisonRow row;
        row.scheme = name;
        row.report = evaluate(preds, labels, subsets);
        table.rows.push_back(std::move(row));
    }
    const EvalReport& base = table.rows.front().report;
    for (auto& row : table.rows) {
        row.lane_gain = (row.report.lane_accuracy - base.lane_accuracy) * 100.0;
        row.type_gain = (row.report.type_accuracy - base.type_accuracy) * 100.0;
        row.ale_reduction = reduction_fraction(base.ale, row.report.ale) * 100.0;
    }
    return table;
}

namespace {

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

std::string ComparisonTable::to_text() const {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-28s %10s %7s %10s %7s %8s %10s\n", "scheme", "lane_acc",
                  "gain", "type_acc", "gain", "ale", "reduction");
    out << line;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const bool first = i == 0;
        std::snprintf(line, sizeof(line), "%-28s %9.1f%% %7s %9.1f%% %7s %8.3f %10s\n",
                      r.scheme.c_str(), r.report.lane_accuracy * 100.0,
                      first ? "-" : fmt("%+.1f", r.lane_gain).c_str(),
                      r.report.type_accuracy * 100.0,
                      first ? "-" : fmt("%+.1f", r.type_gain).c_str(), r.report.ale,
                      first ? "-" : fmt("%.1f%%", r.ale_reduction).c_str());
        out << line;
        for (const auto& s : r.report.subsets) {
            std::snprintf(line, sizeof(line),
                          "  subset %-19s %9.1f%% %7s %9.1f%% %7s %8.3f %10s\n", s.name.c_str(),
                          s.lane_accuracy * 100.0, "", s.type_accuracy * 100.0, "", s.ale, "");
            out << line;
        }
    }
    return out.str();
}

std::string ComparisonTable::to_csv() const {
    std::ostringstream out;
    out << "scheme,subset,count,lane_accuracy,lane_gain,type_accuracy,type_gain,ale,"
           "ale_reduction\n";
    char line[256];
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        std::snprintf(line, sizeof(line), "%s,all,%d,%.6f,%.3f,%.6f,%.3f,%.6f,%.3f\n",
                      r.scheme.c_str(), r.report.lane_confusion.total(),
                      r.report.lane_accuracy, i == 0 ? 0.0 : r.lane_gain, r.report.type_accuracy,
                      i == 0 ? 0.0 : r.type_gain, r.report.ale, i == 0 ? 0.0 : r.ale_reduction);
        out << line;
        for (const auto& s : r.report.subsets) {
            std::snprintf(line, sizeof(line), "%s,%s,%d,%.6f,,%.6f,,%.6f,\n", r.scheme.c_str(),
                          s.name.c_str(), s.count, s.lane_accuracy, s.type_accuracy, s.ale);
            out << line;
        }
    }
    return out.str();
}

}  // namespace roadtagger
