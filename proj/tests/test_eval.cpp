#include "semdetect/eval.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "semdetect/common.hpp"

using namespace semdetect;

namespace {

// Brute-force pair counting, the independent AUC definition.
double auc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0, pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i)
        for (size_t j = 0; j < scores.size(); ++j) {
            if (!(labels[i] == 1 && labels[j] == 0)) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    return wins / pairs;
}

TEST(RocAuc, HandComputedFixture) {
    std::vector<double> scores = {0.1, 0.4, 0.35, 0.8};
    std::vector<int> labels = {0, 0, 1, 1};
    EXPECT_NEAR(roc_auc(scores, labels), 0.75, 1e-12);
    EXPECT_NEAR(auc_oracle(scores, labels), 0.75, 1e-12);
}

TEST(RocAuc, AllScoresTiedGivesHalf) {
    EXPECT_NEAR(roc_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5, 1e-12);
}

TEST(RocAuc, PerfectAndInverted) {
    EXPECT_NEAR(roc_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0, 1e-12);
    EXPECT_NEAR(roc_auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}), 0.0, 1e-12);
}

TEST(RocAuc, MatchesPairCountingOracleOnRandomData) {
    DetRng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        size_t n = 5 + rng.next_below(30);
        std::vector<double> scores;
        std::vector<int> labels;
        int pos = 0;
        for (size_t i = 0; i < n; ++i) {
            // Coarse quantization forces plenty of ties.
            scores.push_back(static_cast<double>(rng.next_below(6)) / 5.0);
            labels.push_back(static_cast<int>(rng.next_below(2)));
            pos += labels.back();
        }
        if (pos == 0 || pos == static_cast<int>(n)) continue;
        EXPECT_NEAR(roc_auc(scores, labels), auc_oracle(scores, labels), 1e-12)
            << "trial " << trial;
    }
}

TEST(RocAuc, ComplementSymmetry) {
    std::vector<double> scores = {0.3, 0.7, 0.7, 0.1, 0.9};
    std::vector<int> labels = {0, 1, 0, 0, 1};
    std::vector<int> flipped;
    std::vector<double> negated;
    for (size_t i = 0; i < labels.size(); ++i) {
        flipped.push_back(1 - labels[i]);
        negated.push_back(-scores[i]);
    }
    EXPECT_NEAR(roc_auc(scores, labels) + roc_auc(scores, flipped), 1.0, 1e-12);
    EXPECT_NEAR(roc_auc(scores, labels), roc_auc(negated, flipped), 1e-12);
}

TEST(RocAuc, DegenerateInputsRejected) {
    EXPECT_THROW(roc_auc({0.5, 0.6}, {1, 1}), DataError);
    EXPECT_THROW(roc_auc({0.5, 0.6}, {0, 0}), DataError);
    EXPECT_THROW(roc_auc({0.5}, {0, 1}), DataError);
}

TEST(RocPoints, StartsAtOriginEndsAtOne) {
    auto pts = roc_points({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1});
    ASSERT_GE(pts.size(), 2u);
    EXPECT_EQ(pts.front().fpr, 0.0);
    EXPECT_EQ(pts.front().tpr, 0.0);
    EXPECT_EQ(pts.back().fpr, 1.0);
    EXPECT_EQ(pts.back().tpr, 1.0);
    for (size_t i = 1; i < pts.size(); ++i) {
        EXPECT_LE(pts[i - 1].fpr, pts[i].fpr);
        EXPECT_LE(pts[i - 1].tpr, pts[i].tpr);
        EXPECT_GE(pts[i - 1].threshold, pts[i].threshold);
    }
}

// Exhaustive oracle: try every observed score as a threshold directly.
double tpr_at_fpr_oracle(const std::vector<double>& scores, const std::vector<int>& labels,
                         double target) {
    size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l ? n_pos : n_neg)++;
    double best = 0;
    for (double t : scores) {
        size_t tp = 0, fp = 0;
        for (size_t i = 0; i < scores.size(); ++i)
            if (scores[i] >= t) (labels[i] ? tp : fp)++;
        double fpr = static_cast<double>(fp) / n_neg;
        if (fpr <= target) best = std::max(best, static_cast<double>(tp) / n_pos);
    }
    return best;
}

TEST(TprAtFpr, HandFixtureAtZeroFpr) {
    std::vector<double> scores = {0.9, 0.8, 0.7, 0.2, 0.6, 0.5, 0.4, 0.1};
    std::vector<int> labels = {1, 1, 1, 1, 0, 0, 0, 0};
    EXPECT_NEAR(tpr_at_fpr(scores, labels, 0.0), 0.75, 1e-12);
    EXPECT_NEAR(tpr_at_fpr_oracle(scores, labels, 0.0), 0.75, 1e-12);
    EXPECT_NEAR(tpr_at_fpr(scores, labels, 1.0), 1.0, 1e-12);
}

TEST(TprAtFpr, MatchesExhaustiveOracleOnRandomData) {
    DetRng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        size_t n = 6 + rng.next_below(20);
        std::vector<double> scores;
        std::vector<int> labels;
        int pos = 0;
        for (size_t i = 0; i < n; ++i) {
            scores.push_back(static_cast<double>(rng.next_below(8)) / 7.0);
            labels.push_back(static_cast<int>(rng.next_below(2)));
            pos += labels.back();
        }
        if (pos == 0 || pos == static_cast<int>(n)) continue;
        for (double target : {0.0, 0.05, 0.1, 0.3, 0.5}) {
            EXPECT_NEAR(tpr_at_fpr(scores, labels, target),
                        tpr_at_fpr_oracle(scores, labels, target), 1e-12)
                << "trial " << trial << " target " << target;
        }
    }
}

TEST(TprAtFpr, TargetOutOfRangeRejected) {
    EXPECT_THROW(tpr_at_fpr({0.5, 0.6}, {0, 1}, -0.1), DataError);
    EXPECT_THROW(tpr_at_fpr({0.5, 0.6}, {0, 1}, 1.1), DataError);
}

TEST(MacroF1, HandComputedOneSixth) {
    // Class 0: tp=1 fp=2 fn=0 -> F1 = 2/4 = 0.5. Classes 1, 2 never
    // predicted correctly -> 0. Macro = 0.5 / 3 = 1/6.
    std::vector<int> preds = {0, 0, 0};
    std::vector<int> labels = {0, 1, 2};
    EXPECT_NEAR(macro_f1(preds, labels), 1.0 / 6.0, 1e-12);
}

TEST(MacroF1, PerfectPredictionsGiveOne) {
    std::vector<int> v = {0, 1, 2, 0, 1, 2};
    EXPECT_NEAR(macro_f1(v, v), 1.0, 1e-12);
}

TEST(MacroF1, AbsentClassReportedAndDividesByThree) {
    std::vector<int> preds = {0, 1, 0, 1};
    std::vector<int> labels = {0, 1, 0, 1};
    std::vector<int> absent;
    EXPECT_NEAR(macro_f1(preds, labels, &absent), 2.0 / 3.0, 1e-12);
    ASSERT_EQ(absent.size(), 1u);
    EXPECT_EQ(absent[0], 2);
}

TEST(MacroF1, EmptyInputRejected) {
    EXPECT_THROW(macro_f1({}, {}), DataError);
    EXPECT_THROW(macro_f1({0, 1}, {0}), DataError);
}

TEST(Confusion, CountsAndRowPercents) {
    std::vector<int> labels = {0, 0, 0, 1, 1, 2};
    std::vector<int> preds = {0, 0, 1, 1, 1, 0};
    ConfusionMatrix cm = confusion_matrix(preds, labels);
    EXPECT_EQ(cm.counts[0][0], 2u);
    EXPECT_EQ(cm.counts[0][1], 1u);
    EXPECT_EQ(cm.counts[1][1], 2u);
    EXPECT_EQ(cm.counts[2][0], 1u);
    EXPECT_NEAR(cm.percents[0][0], 200.0 / 3, 1e-9);
    EXPECT_NEAR(cm.percents[0][1], 100.0 / 3, 1e-9);
    for (int t = 0; t < 2; ++t) {
        double row = cm.percents[t][0] + cm.percents[t][1] + cm.percents[t][2];
        EXPECT_NEAR(row, 100.0, 1e-9);
    }
}

TEST(Confusion, OutOfRangeClassRejected) {
    EXPECT_THROW(confusion_matrix({3}, {0}), DataError);
    EXPECT_THROW(confusion_matrix({0}, {-1}), DataError);
}

TEST(Bootstrap, DeterministicForFixedSeed) {
    auto metric = [](const std::vector<size_t>& idx) {
        double s = 0;
        for (size_t i : idx) s += static_cast<double>(i);
        return s / idx.size();
    };
    BootstrapResult a = bootstrap(metric, 50, 200, 7);
    BootstrapResult b = bootstrap(metric, 50, 200, 7);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.std_dev, b.std_dev);
    EXPECT_EQ(a.ci_low, b.ci_low);
    EXPECT_EQ(a.ci_high, b.ci_high);
}

TEST(Bootstrap, ConstantMetricHasZeroSpread) {
    BootstrapResult r = bootstrap([](const std::vector<size_t>&) { return 0.42; }, 20, 100, 1);
    EXPECT_NEAR(r.mean, 0.42, 1e-12);
    EXPECT_NEAR(r.std_dev, 0.0, 1e-12);
    EXPECT_NEAR(r.ci_low, 0.42, 1e-12);
    EXPECT_NEAR(r.ci_high, 0.42, 1e-12);
}

TEST(Bootstrap, ResampleMeanConcentratesAroundTruth) {
    // Data 0..99: the resampled index mean should straddle 49.5 and the CI
    // should bracket it comfortably.
    auto metric = [](const std::vector<size_t>& idx) {
        double s = 0;
        for (size_t i : idx) s += static_cast<double>(i);
        return s / idx.size();
    };
    BootstrapResult r = bootstrap(metric, 100, 500, 3);
    EXPECT_NEAR(r.mean, 49.5, 1.0);
    EXPECT_LT(r.ci_low, 49.5);
    EXPECT_GT(r.ci_high, 49.5);
    EXPECT_GT(r.std_dev, 0.0);
}

TEST(Bootstrap, DegenerateArgumentsRejected) {
    auto metric = [](const std::vector<size_t>&) { return 0.0; };
    EXPECT_THROW(bootstrap(metric, 0, 10, 1), DataError);
    EXPECT_THROW(bootstrap(metric, 10, 0, 1), DataError);
}

Prediction pred(int label, double confidence) {
    Prediction p;
    p.label = static_cast<Label>(label);
    p.confidence = confidence;
    p.probs[label] = confidence;
    return p;
}

TEST(ThresholdSweep, CoverageAndSelectiveAccuracy) {
    std::vector<Prediction> preds = {pred(0, 0.9), pred(1, 0.6), pred(2, 0.4), pred(0, 0.8)};
    std::vector<int> labels = {0, 2, 2, 1};
    auto curve = threshold_sweep(preds, labels, {0.0, 0.5, 0.7, 0.95});
    ASSERT_EQ(curve.size(), 4u);
    EXPECT_NEAR(curve[0].coverage, 1.0, 1e-12);
    EXPECT_NEAR(*curve[0].selective_accuracy, 0.5, 1e-12);  // rows 0 and 2 correct
    EXPECT_NEAR(curve[1].coverage, 0.75, 1e-12);
    EXPECT_NEAR(*curve[1].selective_accuracy, 1.0 / 3, 1e-12);  // only row 0 correct
    EXPECT_NEAR(curve[2].coverage, 0.5, 1e-12);
    EXPECT_NEAR(*curve[2].selective_accuracy, 0.5, 1e-12);
    EXPECT_NEAR(curve[3].coverage, 0.0, 1e-12);
    EXPECT_FALSE(curve[3].selective_accuracy.has_value());
}

TEST(ThresholdSweep, DefaultGridSpansThirtyFourToNinetyNine) {
    auto grid = default_theta_grid();
    ASSERT_EQ(grid.size(), 66u);
    EXPECT_NEAR(grid.front(), 0.34, 1e-12);
    EXPECT_NEAR(grid.back(), 0.99, 1e-12);
}

TEST(ThresholdSweep, UnsortedGridRejected) {
    std::vector<Prediction> preds = {pred(0, 0.9)};
    EXPECT_THROW(threshold_sweep(preds, {0}, {0.9, 0.5}), DataError);
}

TEST(CollapseBinary, AiVsRestKeepsEverything) {
    std::vector<Prediction> preds = {pred(0, 0.9), pred(2, 0.8), pred(1, 0.7)};
    preds[0].probs = {0.9, 0.05, 0.05};
    preds[1].probs = {0.1, 0.1, 0.8};
    preds[2].probs = {0.2, 0.7, 0.1};
    std::vector<int> labels = {0, 2, 1};
    auto [scores, binary] = collapse_binary(preds, labels, BinaryMode::AiVsRest);
    EXPECT_EQ(scores, (std::vector<double>{0.05, 0.8, 0.1}));
    EXPECT_EQ(binary, (std::vector<int>{0, 1, 0}));
}

TEST(CollapseBinary, AiVsHumanOnlyDropsRefinedRows) {
    std::vector<Prediction> preds = {pred(0, 0.9), pred(2, 0.8), pred(1, 0.7)};
    preds[0].probs = {0.9, 0.05, 0.05};
    preds[1].probs = {0.1, 0.1, 0.8};
    preds[2].probs = {0.2, 0.7, 0.1};
    std::vector<int> labels = {0, 2, 1};
    auto [scores, binary] = collapse_binary(preds, labels, BinaryMode::AiVsHumanOnly);
    EXPECT_EQ(scores, (std::vector<double>{0.05, 0.8}));
    EXPECT_EQ(binary, (std::vector<int>{0, 1}));
}

TEST(CollapseBinary, NothingLeftRejected) {
    std::vector<Prediction> preds = {pred(1, 0.9)};
    EXPECT_THROW(collapse_binary(preds, {1}, BinaryMode::AiVsHumanOnly), DataError);
    EXPECT_THROW(collapse_binary({}, {}, BinaryMode::AiVsRest), DataError);
}

}  // namespace
