#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "semdetect/common.hpp"
#include "semdetect/eval.hpp"
#include "semdetect/features.hpp"
#include "semdetect/gbdt.hpp"

namespace semdetect {

// Randomized-search ranges; the published best configuration sits inside
// every one of them.
struct SearchSpace {
    int num_rounds_min = 50, num_rounds_max = 300;
    double learning_rate_min = 0.01, learning_rate_max = 0.3;  // log-uniform
    int max_depth_min = 3, max_depth_max = 9;
    int num_leaves_min = 7, num_leaves_max = 63;
    double subsample_min = 0.5, subsample_max = 1.0;
    int min_samples_leaf_min = 10, min_samples_leaf_max = 60;
    double min_split_gain_min = 0.0, min_split_gain_max = 0.5;
    double l1_min = 0.01, l1_max = 10.0;  // log-uniform
    double l2_min = 0.01, l2_max = 10.0;  // log-uniform

    static SearchSpace singleton(const GbdtHyperparams& hp) {
        SearchSpace s;
        s.num_rounds_min = s.num_rounds_max = hp.num_rounds;
        s.learning_rate_min = s.learning_rate_max = hp.learning_rate;
        s.max_depth_min = s.max_depth_max = hp.max_depth;
        s.num_leaves_min = s.num_leaves_max = hp.num_leaves;
        s.subsample_min = s.subsample_max = hp.subsample;
        s.min_samples_leaf_min = s.min_samples_leaf_max = hp.min_samples_leaf;
        s.min_split_gain_min = s.min_split_gain_max = hp.min_split_gain;
        s.l1_min = s.l1_max = hp.l1;
        s.l2_min = s.l2_max = hp.l2;
        return s;
    }

    GbdtHyperparams draw(DetRng& rng) const {
        auto uni_int = [&](int lo, int hi) {
            return lo + static_cast<int>(rng.next_below(static_cast<uint64_t>(hi - lo + 1)));
        };
        auto uni = [&](double lo, double hi) { return lo + rng.next_double() * (hi - lo); };
        auto log_uni = [&](double lo, double hi) {
            return lo == hi ? lo : std::exp(uni(std::log(lo), std::log(hi)));
        };
        GbdtHyperparams hp;
        hp.num_rounds = uni_int(num_rounds_min, num_rounds_max);
        hp.learning_rate = log_uni(learning_rate_min, learning_rate_max);
        hp.max_depth = uni_int(max_depth_min, max_depth_max);
        hp.num_leaves = uni_int(num_leaves_min, num_leaves_max);
        if (hp.max_depth < 31) hp.num_leaves = std::min(hp.num_leaves, 1 << hp.max_depth);
        hp.subsample = uni(subsample_min, subsample_max);
        hp.min_samples_leaf = uni_int(min_samples_leaf_min, min_samples_leaf_max);
        hp.min_split_gain = uni(min_split_gain_min, min_split_gain_max);
        hp.l1 = log_uni(l1_min, l1_max);
        hp.l2 = log_uni(l2_min, l2_max);
        return hp;
    }
};

inline std::vector<double> tau_grid() { return {0.70, 0.75, 0.80, 0.85, 0.90}; }

// Fold assignment per row: papers stay whole, class proportions per fold
// track the global ones greedily. Deterministic under the rng.
inline std::vector<int> grouped_stratified_folds(const std::vector<std::string>& paper_ids,
                                                 const std::vector<int>& labels, int n_folds,
                                                 DetRng rng) {
    if (paper_ids.size() != labels.size()) throw DataError("folds: length mismatch");
    std::vector<std::string> papers;
    std::map<std::string, std::array<double, kNumClasses>> counts;
    for (size_t i = 0; i < paper_ids.size(); ++i) {
        auto [it, fresh] = counts.try_emplace(paper_ids[i], std::array<double, kNumClasses>{});
        if (fresh) papers.push_back(paper_ids[i]);
        it->second[labels[i]] += 1.0;
    }
    if (papers.size() < static_cast<size_t>(n_folds))
        throw DataError("folds: " + std::to_string(papers.size()) + " papers cannot fill " +
                        std::to_string(n_folds) + " folds");
    std::sort(papers.begin(), papers.end());
    rng.shuffle(papers);

    std::array<double, kNumClasses> global{0, 0, 0};
    for (const auto& [id, c] : counts)
        for (int k = 0; k < kNumClasses; ++k) global[k] += c[k];
    const double g_total = global[0] + global[1] + global[2];

    std::vector<std::array<double, kNumClasses>> fold_counts(n_folds, {0, 0, 0});
    std::vector<double> fold_sizes(n_folds, 0);
    std::map<std::string, int> fold_of;
    const double avg_rows = static_cast<double>(paper_ids.size()) / n_folds;
    for (const auto& pid : papers) {
        const auto& pc = counts[pid];
        double pn = pc[0] + pc[1] + pc[2];
        int best = 0;
        double best_score = 1e300;
        for (int f = 0; f < n_folds; ++f) {
            double total = fold_sizes[f] + pn;
            double dev = 0;
            for (int k = 0; k < kNumClasses; ++k)
                dev += std::abs((fold_counts[f][k] + pc[k]) / total - global[k] / g_total);
            // Monotone size term: the emptiest fold always looks cheapest,
            // so no fold can starve.
            double score = fold_sizes[f] / avg_rows + dev;
            if (score < best_score) {
                best_score = score;
                best = f;
            }
        }
        fold_of[pid] = best;
        fold_sizes[best] += pn;
        for (int k = 0; k < kNumClasses; ++k) fold_counts[best][k] += pc[k];
    }
    std::vector<int> out(paper_ids.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = fold_of[paper_ids[i]];
    return out;
}

struct CvResult {
    GbdtHyperparams hyperparams;
    double tau = 0.8;
    double macro_f1 = 0;
    std::vector<double> taus_evaluated;
};

// Randomized hyperparameter search, five-fold grouped-stratified CV on
// macro-F1, jointly sweeping tau. The two threshold-dependent features are
// refeaturized per tau from the cached best-match matrices; rows without a
// cache keep their stored values.
inline CvResult cv_search(const std::vector<std::array<double, kNumFeatures>>& x,
                          const std::vector<int>& labels,
                          const std::vector<std::string>& paper_ids,
                          const std::vector<const SimilarityCache*>& caches,
                          const SearchSpace& space, int n_trials, uint64_t seed,
                          int n_folds = 5) {
    if (n_trials < 1) throw ConfigError("cv_search: n_trials must be >= 1");
    if (x.size() != labels.size() || x.size() != paper_ids.size())
        throw DataError("cv_search: input length mismatch");
    if (!caches.empty() && caches.size() != x.size())
        throw DataError("cv_search: cache length mismatch");

    DetRng master(seed);
    std::vector<int> folds =
        grouped_stratified_folds(paper_ids, labels, n_folds, master.derive("folds"));

    CvResult best;
    best.macro_f1 = -1;
    best.taus_evaluated = tau_grid();

    for (int trial = 0; trial < n_trials; ++trial) {
        DetRng trial_rng = master.derive("trial:" + std::to_string(trial));
        GbdtHyperparams hp = space.draw(trial_rng);
        hp.seed = trial_rng.next_u64();

        for (double tau : tau_grid()) {
            std::vector<std::array<double, kNumFeatures>> xt = x;
            if (!caches.empty()) {
                for (size_t i = 0; i < xt.size(); ++i) {
                    if (!caches[i] || caches[i]->s.empty()) continue;
                    auto [f1, f2] = threshold_features(*caches[i], tau);
                    xt[i][0] = f1;
                    xt[i][1] = f2;
                }
            }
            double f1_sum = 0;
            for (int fold = 0; fold < n_folds; ++fold) {
                std::vector<std::array<double, kNumFeatures>> train_x, test_x;
                std::vector<int> train_y, test_y;
                for (size_t i = 0; i < xt.size(); ++i) {
                    if (folds[i] == fold) {
                        test_x.push_back(xt[i]);
                        test_y.push_back(labels[i]);
                    } else {
                        train_x.push_back(xt[i]);
                        train_y.push_back(labels[i]);
                    }
                }
                GbdtModel model = train(train_x, train_y, hp);
                std::vector<int> preds;
                preds.reserve(test_x.size());
                for (const auto& row : test_x)
                    preds.push_back(static_cast<int>(predict(model, row).label));
                f1_sum += macro_f1(preds, test_y);
            }
            double score = f1_sum / n_folds;
            if (score > best.macro_f1) {
                best.macro_f1 = score;
                best.hyperparams = hp;
                best.tau = tau;
            }
        }
    }
    return best;
}

}  // namespace semdetect
