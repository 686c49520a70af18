#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "semdetect/common.hpp"
#include "semdetect/corpus.hpp"
#include "semdetect/gbdt.hpp"

namespace semdetect {

// Rank-based AUC: P(score_pos > score_neg) + half credit for ties.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DataError("roc_auc: length mismatch");
    size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw DataError("roc_auc: both classes must be present");

    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    // Average ranks across tie groups.
    double rank_sum_pos = 0;
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (size_t k = i; k < j; ++k)
            if (labels[idx[k]]) rank_sum_pos += avg_rank;
        i = j;
    }
    double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1) / 2.0) / (np * nn);
}

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

// ROC polyline from the exhaustive threshold sweep, (0,0) to (1,1),
// thresholds descending.
inline std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                        const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DataError("roc_points: length mismatch");
    size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw DataError("roc_points: both classes must be present");

    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    std::vector<RocPoint> points;
    points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    size_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        for (size_t k = i; k < j; ++k) (labels[idx[k]] ? tp : fp)++;
        points.push_back({scores[idx[i]], static_cast<double>(fp) / static_cast<double>(n_neg),
                          static_cast<double>(tp) / static_cast<double>(n_pos)});
        i = j;
    }
    return points;
}

// Maximum TPR over thresholds whose FPR does not exceed the target.
inline double tpr_at_fpr(const std::vector<double>& scores, const std::vector<int>& labels,
                         double fpr_target) {
    if (!(fpr_target >= 0.0 && fpr_target <= 1.0))
        throw DataError("tpr_at_fpr: target must lie in [0,1]");
    double best = 0.0;
    for (const auto& p : roc_points(scores, labels))
        if (p.fpr <= fpr_target) best = std::max(best, p.tpr);
    return best;
}

// Unweighted mean of per-class F1 over the three classes. A class absent
// from both sides contributes 0 and is reported through `absent_classes`.
inline double macro_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                       std::vector<int>* absent_classes = nullptr) {
    if (predictions.size() != labels.size() || labels.empty())
        throw DataError("macro_f1: inputs must be non-empty and of equal length");
    double total = 0;
    for (int k = 0; k < kNumClasses; ++k) {
        size_t tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < labels.size(); ++i) {
            bool p = predictions[i] == k, l = labels[i] == k;
            if (p && l)
                ++tp;
            else if (p)
                ++fp;
            else if (l)
                ++fn;
        }
        if (tp + fp + fn == 0) {
            if (absent_classes) absent_classes->push_back(k);
            continue;  // contributes 0
        }
        if (tp > 0) total += 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    }
    return total / kNumClasses;
}

struct ConfusionMatrix {
    std::array<std::array<size_t, kNumClasses>, kNumClasses> counts{};   // [true][pred]
    std::array<std::array<double, kNumClasses>, kNumClasses> percents{};  // rows sum to 100
};

inline ConfusionMatrix confusion_matrix(const std::vector<int>& predictions,
                                        const std::vector<int>& labels) {
    if (predictions.size() != labels.size() || labels.empty())
        throw DataError("confusion_matrix: inputs must be non-empty and of equal length");
    ConfusionMatrix cm;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= kNumClasses || predictions[i] < 0 ||
            predictions[i] >= kNumClasses)
            throw DataError("confusion_matrix: class out of range at row " + std::to_string(i));
        cm.counts[labels[i]][predictions[i]]++;
    }
    for (int t = 0; t < kNumClasses; ++t) {
        size_t row = 0;
        for (int p = 0; p < kNumClasses; ++p) row += cm.counts[t][p];
        for (int p = 0; p < kNumClasses; ++p)
            cm.percents[t][p] =
                row == 0 ? 0.0 : 100.0 * static_cast<double>(cm.counts[t][p]) / static_cast<double>(row);
    }
    return cm;
}

struct BootstrapResult {
    double mean = 0;
    double std_dev = 0;
    double ci_low = 0;
    double ci_high = 0;
};

// `metric` receives resampled indices into the original data. Iteration
// seeds derive from the master seed, so the whole run is reproducible.
inline BootstrapResult bootstrap(const std::function<double(const std::vector<size_t>&)>& metric,
                                 size_t data_size, int iterations, uint64_t seed) {
    if (data_size == 0) throw DataError("bootstrap: empty data");
    if (iterations < 1) throw DataError("bootstrap: iterations must be >= 1");
    DetRng master(seed);
    std::vector<double> values;
    values.reserve(iterations);
    std::vector<size_t> sample(data_size);
    for (int it = 0; it < iterations; ++it) {
        DetRng rng = master.derive("bootstrap:" + std::to_string(it));
        for (size_t i = 0; i < data_size; ++i) sample[i] = rng.next_below(data_size);
        values.push_back(metric(sample));
    }
    BootstrapResult r;
    for (double v : values) r.mean += v;
    r.mean /= values.size();
    for (double v : values) r.std_dev += (v - r.mean) * (v - r.mean);
    r.std_dev = values.size() > 1 ? std::sqrt(r.std_dev / (values.size() - 1)) : 0.0;

    std::sort(values.begin(), values.end());
    auto percentile = [&](double q) {
        double pos = q * (values.size() - 1);
        size_t lo = static_cast<size_t>(std::floor(pos));
        size_t hi = std::min(lo + 1, values.size() - 1);
        double frac = pos - static_cast<double>(lo);
        return values[lo] * (1 - frac) + values[hi] * frac;
    };
    r.ci_low = percentile(0.025);
    r.ci_high = percentile(0.975);
    return r;
}

struct ThresholdPoint {
    double theta;
    double coverage;
    std::optional<double> selective_accuracy;  // absent when coverage is 0
};

inline std::vector<double> default_theta_grid() {
    std::vector<double> grid;
    for (int i = 34; i <= 99; ++i) grid.push_back(i / 100.0);
    return grid;
}

// Selective prediction: per threshold, the fraction auto-classified at
// confidence >= theta and the accuracy on that subset.
inline std::vector<ThresholdPoint> threshold_sweep(const std::vector<Prediction>& predictions,
                                                   const std::vector<int>& labels,
                                                   const std::vector<double>& theta_grid) {
    if (predictions.size() != labels.size() || labels.empty())
        throw DataError("threshold_sweep: inputs must be non-empty and of equal length");
    for (size_t i = 1; i < theta_grid.size(); ++i)
        if (theta_grid[i] < theta_grid[i - 1])
            throw DataError("threshold_sweep: theta grid must be sorted ascending");
    std::vector<ThresholdPoint> curve;
    for (double theta : theta_grid) {
        size_t kept = 0, correct = 0;
        for (size_t i = 0; i < predictions.size(); ++i) {
            if (predictions[i].confidence >= theta) {
                ++kept;
                if (static_cast<int>(predictions[i].label) == labels[i]) ++correct;
            }
        }
        ThresholdPoint pt;
        pt.theta = theta;
        pt.coverage = static_cast<double>(kept) / static_cast<double>(predictions.size());
        if (kept > 0) pt.selective_accuracy = static_cast<double>(correct) / static_cast<double>(kept);
        curve.push_back(pt);
    }
    return curve;
}

enum class BinaryMode { AiVsRest, AiVsHumanOnly };

// Binary framing: score is P(AI); AiVsHumanOnly drops refined rows first.
inline std::pair<std::vector<double>, std::vector<int>> collapse_binary(
    const std::vector<Prediction>& predictions, const std::vector<int>& labels, BinaryMode mode) {
    if (predictions.size() != labels.size())
        throw DataError("collapse_binary: length mismatch");
    std::vector<double> scores;
    std::vector<int> binary;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (mode == BinaryMode::AiVsHumanOnly && labels[i] == static_cast<int>(Label::Refined))
            continue;
        scores.push_back(predictions[i].probs[static_cast<int>(Label::Ai)]);
        binary.push_back(labels[i] == static_cast<int>(Label::Ai) ? 1 : 0);
    }
    if (scores.empty()) throw DataError("collapse_binary: no rows left after filtering");
    return {std::move(scores), std::move(binary)};
}

struct EvalReport {
    std::optional<double> auc_ai_vs_rest;
    std::optional<double> auc_ai_vs_human;
    std::map<double, double> tpr_at;  // fpr target -> tpr (ai_vs_rest framing)
    double macro_f1_score = 0;
    ConfusionMatrix confusion;
    std::map<std::string, double> bootstrap_std;
    std::vector<ThresholdPoint> threshold_curve;
    std::vector<RocPoint> roc;
};

}  // namespace semdetect
