#pragma once

#include <string>
#include <vector>

#include "roadtagger/ingest.hpp"
#include "roadtagger/predictions.hpp"

namespace roadtagger {

// Exact-match fraction over unmasked entries.
double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth,
                const std::vector<bool>& mask);

// Mean |predicted - true| lane count over unmasked entries.
double absolute_lane_error(const std::vector<int>& predicted_lanes,
                           const std::vector<int>& true_lanes,
                           const std::vector<bool>& mask);

struct Confusion {
    int classes = 0;
    std::vector<int> counts;  // row = truth, col = prediction

    explicit Confusion(int n = 0) : classes(n), counts(static_cast<std::size_t>(n) * n, 0) {}
    int& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth) * classes + pred]; }
    int at(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth) * classes + pred];
    }
    int total() const;
    int trace() const;
};

struct SubsetStats {
    std::string name;
    int count = 0;
    double lane_accuracy = 0.0, type_accuracy = 0.0, ale = 0.0;
};

struct EvalReport {
    double lane_accuracy = 0.0;
    double type_accuracy = 0.0;
    double ale = 0.0;
    Confusion lane_confusion;
    Confusion type_confusion;
    std::vector<SubsetStats> subsets;
};

using Subsets = std::vector<std::pair<std::string, std::vector<bool>>>;

EvalReport evaluate(const PredictionSet& predictions, const LabelSet& labels,
                    const Subsets& subsets = {});

struct ComparisonRow {
    std::string scheme;
    EvalReport report;
    // versus the first scheme: accuracy gains in points, ALE reduction as a
    // fraction of the baseline ALE
    double lane_gain = 0.0, type_gain = 0.0, ale_reduction = 0.0;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;
    std::string to_text() const;
    std::string to_csv() const;
};

// Rows in scheme order; gains computed against the first scheme. All
// schemes must cover the same vertex set as the labels.
ComparisonTable compare_report(const std::vector<std::pair<std::string, PredictionSet>>& schemes,
                               const LabelSet& labels, const Subsets& subsets = {});

// (base - new) / base, as used for ALE reduction columns.
double reduction_fraction(double base, double value);

}  // namespace roadtagger
