#include <doctest.h>

#include <cmath>
#include <random>

#include "roadtagger/errors.hpp"
#include "roadtagger/metrics.hpp"

using namespace roadtagger;

namespace {

PredictionSet one_hot(const std::vector<int>& lanes, const std::vector<int>& types) {
    const int n = static_cast<int>(lanes.size());
    PredictionSet p;
    p.lane_probs = Tensor({n, 6});
    p.type_probs = Tensor({n, 2});
    for (int v = 0; v < n; ++v) {
        p.lane_probs.at(v, lanes[v] - 1) = 1.0;
        p.type_probs.at(v, types[v]) = 1.0;
    }
    return p;
}

}  // namespace

TEST_CASE("accuracy counts exact matches over unmasked entries") {
    CHECK(accuracy({1, 2, 3}, {1, 2, 3}, {true, true, true}) == 1.0);
    std::vector<int> pred(10, 1), truth(10, 1);
    for (int i = 5; i < 10; ++i) truth[i] = 2;
    CHECK(accuracy(pred, truth, std::vector<bool>(10, true)) == 0.5);
    // masked vertices leave the denominator
    std::vector<bool> mask(10, true);
    for (int i = 5; i < 10; ++i) mask[i] = false;
    CHECK(accuracy(pred, truth, mask) == 1.0);
    CHECK_THROWS_AS(accuracy(pred, truth, std::vector<bool>(10, false)), DataError);
}

TEST_CASE("absolute lane error averages the magnitude of mistakes") {
    CHECK(absolute_lane_error({2}, {2}, {true}) == 0.0);
    CHECK(absolute_lane_error({6}, {2}, {true}) == 4.0);
    CHECK(absolute_lane_error({2, 3}, {3, 3}, {true, true}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(absolute_lane_error({1}, {1}, {false}), DataError);
}

TEST_CASE("ale is zero exactly when lane accuracy is one") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> lane(1, 6);
    for (int round = 0; round < 50; ++round) {
        std::vector<int> pred(12), truth(12);
        for (int i = 0; i < 12; ++i) {
            pred[i] = lane(rng);
            truth[i] = lane(rng);
        }
        const std::vector<bool> mask(12, true);
        const double acc = accuracy(pred, truth, mask);
        const double ale = absolute_lane_error(pred, truth, mask);
        CHECK((ale == 0.0) == (acc == 1.0));
    }
}

TEST_CASE("accuracy is invariant under a consistent permutation") {
    const std::vector<int> pred = {1, 2, 3, 4}, truth = {1, 2, 2, 4};
    const std::vector<bool> mask = {true, true, true, false};
    const double base = accuracy(pred, truth, mask);
    const int pi[4] = {2, 0, 3, 1};
    std::vector<int> ppred(4), ptruth(4);
    std::vector<bool> pmask(4);
    for (int i = 0; i < 4; ++i) {
        ppred[pi[i]] = pred[i];
        ptruth[pi[i]] = truth[i];
        pmask[pi[i]] = mask[i];
    }
    CHECK(accuracy(ppred, ptruth, pmask) == base);
}

TEST_CASE("evaluate fills confusions consistent with the headline numbers") {
    LabelSet labels;
    labels.resize(4);
    labels.lanes = {1, 2, 3, 4};
    labels.types = {0, 0, 1, 1};
    std::fill(labels.lane_mask.begin(), labels.lane_mask.end(), true);
    std::fill(labels.type_mask.begin(), labels.type_mask.end(), true);
    const PredictionSet p = one_hot({1, 2, 2, 4}, {0, 1, 1, 1});
    const EvalReport report = evaluate(p, labels);
    CHECK(report.lane_accuracy == doctest::Approx(0.75));
    CHECK(report.type_accuracy == doctest::Approx(0.75));
    CHECK(report.lane_confusion.trace() == 3);
    CHECK(report.lane_confusion.total() == 4);
    CHECK(report.lane_confusion.at(2, 1) == 1);  // true 3 predicted 2
    CHECK(report.ale == doctest::Approx(0.25));
}

TEST_CASE("subset breakdowns evaluate the masked slices") {
    LabelSet labels;
    labels.resize(4);
    labels.lanes = {2, 2, 2, 2};
    labels.types = {0, 0, 0, 0};
    std::fill(labels.lane_mask.begin(), labels.lane_mask.end(), true);
    std::fill(labels.type_mask.begin(), labels.type_mask.end(), true);
    const PredictionSet p = one_hot({2, 2, 3, 3}, {0, 0, 0, 0});
    const Subsets subsets = {{"first_half", {true, true, false, false}},
                             {"second_half", {false, false, true, true}}};
    const EvalReport report = evaluate(p, labels, subsets);
    REQUIRE(report.subsets.size() == 2);
    CHECK(report.subsets[0].lane_accuracy == 1.0);
    CHECK(report.subsets[1].lane_accuracy == 0.0);
    CHECK(report.subsets[1].count == 2);
}

TEST_CASE("the reduction formula reproduces the published ALE triple") {
    // 0.374 -> 0.291 must report as a 22.2% reduction
    const double fraction = reduction_fraction(0.374, 0.291);
    CHECK(std::round(fraction * 1000.0) / 10.0 == doctest::Approx(22.2));
}

TEST_CASE("compare_report computes gains against the first scheme") {
    LabelSet labels;
    labels.resize(4);
    labels.lanes = {1, 2, 3, 4};
    labels.types = {0, 1, 0, 1};
    std::fill(labels.lane_mask.begin(), labels.lane_mask.end(), true);
    std::fill(labels.type_mask.begin(), labels.type_mask.end(), true);

    const PredictionSet base = one_hot({1, 2, 2, 2}, {0, 1, 0, 1});  // lane acc 0.5
    const PredictionSet better = one_hot({1, 2, 3, 2}, {0, 1, 0, 1});  // lane acc 0.75
    const ComparisonTable table =
        compare_report({{"base", base}, {"better", better}, {"same", base}}, labels);
    REQUIRE(table.rows.size() == 3);
    CHECK(table.rows[0].lane_gain == 0.0);
    CHECK(table.rows[1].lane_gain == doctest::Approx(25.0));
    CHECK(table.rows[2].lane_gain == 0.0);
    CHECK(table.rows[1].ale_reduction > 0.0);

    const std::string csv = table.to_csv();
    CHECK(csv.find("scheme,subset,count,lane_accuracy") == 0);
    CHECK(csv.find("better") != std::string::npos);
    const std::string text = table.to_text();
    CHECK(text.find("base") != std::string::npos);

    // single scheme: a one-row table
    const ComparisonTable single = compare_report({{"only", base}}, labels);
    CHECK(single.rows.size() == 1);
}

TEST_CASE("schemes with mismatched vertex sets are rejected") {
    LabelSet labels;
    labels.resize(3);
    std::fill(labels.lane_mask.begin(), labels.lane_mask.end(), true);
    std::fill(labels.type_mask.begin(), labels.type_mask.end(), true);
    const PredictionSet wrong = one_hot({1, 2}, {0, 1});
    CHECK_THROWS_AS(compare_report({{"bad", wrong}}, labels), DataError);
}
