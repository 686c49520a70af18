#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "semdetect/common.hpp"
#include "semdetect/features.hpp"

namespace semdetect {

constexpr int kNumClasses = 3;

struct GbdtHyperparams {
    int num_rounds = 100;
    double learning_rate = 0.1;
    int max_depth = 7;
    int num_leaves = 15;
    double subsample = 0.6;
    double feature_subsample = 1.0;
    int min_samples_leaf = 30;
    double min_split_gain = 0.2;
    double l1 = 1.0;
    double l2 = 1.0;
    uint64_t seed = 0;

    void validate() const {
        if (num_rounds < 0) throw ConfigError("num_rounds must be >= 0");
        if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
        if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
        if (num_leaves < 2) throw ConfigError("num_leaves must be >= 2");
        if (max_depth < 63 && num_leaves > (1 << max_depth))
            throw ConfigError("num_leaves must be <= 2^max_depth");
        if (!(subsample > 0 && subsample <= 1)) throw ConfigError("subsample must be in (0,1]");
        if (!(feature_subsample > 0 && feature_subsample <= 1))
            throw ConfigError("feature_subsample must be in (0,1]");
        if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
        if (min_split_gain < 0) throw ConfigError("min_split_gain must be >= 0");
        if (l1 < 0 || l2 < 0) throw ConfigError("l1/l2 must be >= 0");
    }
};

struct TreeNode {
    bool is_leaf = true;
    int feature = -1;
    double threshold = 0;
    int left = -1;
    int right = -1;
    double value = 0;  // leaf output, shrinkage already applied
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double predict(const std::array<double, kNumFeatures>& x) const {
        int idx = 0;
        while (!nodes[idx].is_leaf)
            idx = x[nodes[idx].feature] <= nodes[idx].threshold ? nodes[idx].left
                                                                : nodes[idx].right;
        return nodes[idx].value;
    }
};

struct GbdtModel {
    GbdtHyperparams hyperparams;
    std::array<bool, kNumFeatures> feature_mask{true, true, true, true, true,
                                                true, true, true, true};
    // trees[r][k]: round r, class k.
    std::vector<std::array<Tree, kNumClasses>> trees;
    std::vector<double> train_loss_curve;  // multiclass log-loss per round
};

struct Prediction {
    std::array<double, kNumClasses> probs{};
    Label label = Label::Human;
    double confidence = 0;
};

namespace detail {

inline std::array<double, kNumClasses> softmax3(const std::array<double, kNumClasses>& f) {
    double m = std::max({f[0], f[1], f[2]});
    std::array<double, kNumClasses> p;
    double z = 0;
    for (int k = 0; k < kNumClasses; ++k) {
        p[k] = std::exp(f[k] - m);
        z += p[k];
    }
    for (int k = 0; k < kNumClasses; ++k) p[k] /= z;
    return p;
}

inline double soft_threshold(double g, double l1) {
    if (g > l1) return g - l1;
    if (g < -l1) return g + l1;
    return 0.0;
}

struct SplitCandidate {
    double gain = -1;
    int feature = -1;
    double threshold = 0;
};

// Exact greedy scan over sorted feature values.
class TreeBuilder {
public:
    TreeBuilder(const std::vector<std::array<double, kNumFeatures>>& x,
                const std::vector<double>& grad, const std::vector<double>& hess,
                const GbdtHyperparams& hp, const std::vector<int>& features)
        : x_(x), grad_(grad), hess_(hess), hp_(hp), features_(features) {}

    Tree build(const std::vector<int>& rows) {
        Tree tree;
        tree.nodes.push_back(make_leaf(rows));
        struct Pending {
            int node;
            std::vector<int> rows;
            int depth;
            SplitCandidate split;
        };
        std::vector<Pending> frontier;
        frontier.push_back({0, rows, 0, find_split(rows)});
        int leaves = 1;
        while (leaves < hp_.num_leaves) {
            // Best-gain leaf first; ties go to the earliest-created node.
            int best = -1;
            for (size_t i = 0; i < frontier.size(); ++i) {
                if (frontier[i].split.feature < 0) continue;
                if (best < 0 || frontier[i].split.gain > frontier[best].split.gain ||
                    (frontier[i].split.gain == frontier[best].split.gain &&
                     frontier[i].node < frontier[best].node))
                    best = static_cast<int>(i);
            }
            if (best < 0) break;
            Pending p = std::move(frontier[best]);
            frontier.erase(frontier.begin() + best);

            std::vector<int> left_rows, right_rows;
            for (int r : p.rows)
                (x_[r][p.split.feature] <= p.split.threshold ? left_rows : right_rows).push_back(r);

            int li = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(make_leaf(left_rows));
            int ri = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(make_leaf(right_rows));
            tree.nodes[p.node].is_leaf = false;
            tree.nodes[p.node].feature = p.split.feature;
            tree.nodes[p.node].threshold = p.split.threshold;
            tree.nodes[p.node].left = li;
            tree.nodes[p.node].right = ri;
            ++leaves;

            if (p.depth + 1 < hp_.max_depth) {
                frontier.push_back({li, std::move(left_rows), p.depth + 1, {}});
                frontier.back().split = find_split(frontier.back().rows);
                frontier.push_back({ri, std::move(right_rows), p.depth + 1, {}});
                frontier.back().split = find_split(frontier.back().rows);
            }
        }
        return tree;
    }

private:
    TreeNode make_leaf(const std::vector<int>& rows) const {
        double g = 0, h = 0;
        for (int r : rows) {
            g += grad_[r];
            h += hess_[r];
        }
        TreeNode leaf;
        leaf.value = -hp_.learning_rate * soft_threshold(g, hp_.l1) / (h + hp_.l2);
        return leaf;
    }

    double leaf_objective(double g, double h) const {
        double t = soft_threshold(g, hp_.l1);
        return t * t / (h + hp_.l2);
    }

    SplitCandidate find_split(const std::vector<int>& rows) const {
        SplitCandidate best;
        if (rows.size() < 2 * static_cast<size_t>(hp_.min_samples_leaf)) return best;
        double g_total = 0, h_total = 0;
        for (int r : rows) {
            g_total += grad_[r];
            h_total += hess_[r];
        }
        const double parent = leaf_objective(g_total, h_total);
        std::vector<std::pair<double, int>> sorted;
        sorted.reserve(rows.size());
        for (int f : features_) {
            sorted.clear();
            for (int r : rows) sorted.emplace_back(x_[r][f], r);
            std::sort(sorted.begin(), sorted.end());
            double gl = 0, hl = 0;
            for (size_t i = 0; i + 1 < sorted.size(); ++i) {
                gl += grad_[sorted[i].second];
                hl += hess_[sorted[i].second];
                if (sorted[i].first == sorted[i + 1].first) continue;
                size_t n_left = i + 1, n_right = sorted.size() - n_left;
                if (n_left < static_cast<size_t>(hp_.min_samples_leaf) ||
                    n_right < static_cast<size_t>(hp_.min_samples_leaf))
                    continue;
                double gain = 0.5 * (leaf_objective(gl, hl) +
                                     leaf_objective(g_total - gl, h_total - hl) - parent);
                if (gain < hp_.min_split_gain) continue;
                double threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
                // Ties: lowest feature index, then lowest threshold.
                if (gain > best.gain ||
                    (gain == best.gain &&
                     (f < best.feature || (f == best.feature && threshold < best.threshold)))) {
                    best.gain = gain;
                    best.feature = f;
                    best.threshold = threshold;
                }
            }
        }
        return best;
    }

    const std::vector<std::array<double, kNumFeatures>>& x_;
    const std::vector<double>& grad_;
    const std::vector<double>& hess_;
    const GbdtHyperparams& hp_;
    const std::vector<int>& features_;
};

}  // namespace detail

inline std::array<double, kNumClasses> raw_scores(const GbdtModel& model,
                                                  const std::array<double, kNumFeatures>& x) {
    std::array<double, kNumClasses> f{0, 0, 0};
    for (const auto& round : model.trees)
        for (int k = 0; k < kNumClasses; ++k) f[k] += round[k].predict(x);
    return f;
}

// Multiclass softmax boosting: one regression tree per class per round on
// the softmax gradients, deterministic for fixed inputs and hyperparams.
inline GbdtModel train(const std::vector<std::array<double, kNumFeatures>>& x,
                       const std::vector<int>& labels, const GbdtHyperparams& hp,
                       const std::array<bool, kNumFeatures>& mask = {true, true, true, true, true,
                                                                     true, true, true, true}) {
    hp.validate();
    const size_t n = x.size();
    if (labels.size() != n) throw DataError("train: feature/label length mismatch");
    if (n < 3 * static_cast<size_t>(hp.min_samples_leaf))
        throw DataError("train: need at least " + std::to_string(3 * hp.min_samples_leaf) +
                        " samples, got " + std::to_string(n));
    std::set<int> classes;
    for (size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= kNumClasses)
            throw DataError("train: label out of range at row " + std::to_string(i));
        classes.insert(labels[i]);
        for (size_t f = 0; f < kNumFeatures; ++f)
            if (!std::isfinite(x[i][f]))
                throw DataError("train: non-finite feature at row " + std::to_string(i));
    }
    if (classes.size() < 2) throw DataError("train: labels cover a single class");

    GbdtModel model;
    model.hyperparams = hp;
    model.feature_mask = mask;

    std::vector<int> active_features;
    for (size_t f = 0; f < kNumFeatures; ++f)
        if (mask[f]) active_features.push_back(static_cast<int>(f));
    if (active_features.empty()) throw ConfigError("train: feature mask disables every feature");

    std::vector<std::array<double, kNumClasses>> raw(n, {0, 0, 0});
    std::vector<double> grad(n), hess(n);
    DetRng rng(hp.seed);

    auto log_loss = [&] {
        double loss = 0;
        for (size_t i = 0; i < n; ++i) {
            auto p = detail::softmax3(raw[i]);
            loss -= std::log(std::max(p[labels[i]], 1e-15));
        }
        return loss / static_cast<double>(n);
    };

    for (int round = 0; round < hp.num_rounds; ++round) {
        // Bagging: one row sample per round, shared by the class trees.
        std::vector<int> rows(n);
        std::iota(rows.begin(), rows.end(), 0);
        if (hp.subsample < 1.0) {
            DetRng bag = rng.derive("bag:" + std::to_string(round));
            bag.shuffle(rows);
            size_t keep = std::max<size_t>(
                1, static_cast<size_t>(std::floor(hp.subsample * static_cast<double>(n))));
            rows.resize(keep);
            std::sort(rows.begin(), rows.end());
        }
        std::vector<int> feats = active_features;
        if (hp.feature_subsample < 1.0) {
            DetRng fs = rng.derive("feat:" + std::to_string(round));
            fs.shuffle(feats);
            size_t keep = std::max<size_t>(
                1, static_cast<size_t>(
                       std::ceil(hp.feature_subsample * static_cast<double>(feats.size()))));
            feats.resize(keep);
            std::sort(feats.begin(), feats.end());
        }

        std::array<Tree, kNumClasses> round_trees;
        for (int k = 0; k < kNumClasses; ++k) {
            for (size_t i = 0; i < n; ++i) {
                auto p = detail::softmax3(raw[i]);
                grad[i] = p[k] - (labels[i] == k ? 1.0 : 0.0);
                hess[i] = std::max(p[k] * (1.0 - p[k]), 1e-16);
            }
            detail::TreeBuilder builder(x, grad, hess, hp, feats);
            round_trees[k] = builder.build(rows);
        }
        for (size_t i = 0; i < n; ++i)
            for (int k = 0; k < kNumClasses; ++k) raw[i][k] += round_trees[k].predict(x[i]);
        model.trees.push_back(std::move(round_trees));
        model.train_loss_curve.push_back(log_loss());
    }
    return model;
}

inline Prediction predict(const GbdtModel& model, const FeatureVector& features) {
    FeatureVector masked = features;
    masked.apply_mask(model.feature_mask);
    auto a = masked.as_array();
    auto original = features.as_array();
    for (size_t f = 0; f < kNumFeatures; ++f)
        if (!model.feature_mask[f] && original[f] != 0.0)
            throw DataError("predict: feature " + std::to_string(f) +
                            " is nonzero but masked out in the model");
    Prediction p;
    p.probs = detail::softmax3(raw_scores(model, a));
    size_t best = 0;
    for (size_t k = 1; k < kNumClasses; ++k)
        if (p.probs[k] > p.probs[best]) best = k;  // ties toward the lowest class index
    p.label = static_cast<Label>(best);
    p.confidence = p.probs[best];
    return p;
}

inline Prediction predict(const GbdtModel& model, const std::array<double, kNumFeatures>& x) {
    FeatureVector fv;
    fv.set_from_array(x);
    fv.apply_mask(model.feature_mask);
    Prediction p;
    p.probs = detail::softmax3(raw_scores(model, fv.as_array()));
    size_t best = 0;
    for (size_t k = 1; k < kNumClasses; ++k)
        if (p.probs[k] > p.probs[best]) best = k;
    p.label = static_cast<Label>(best);
    p.confidence = p.probs[best];
    return p;
}

// ---- serialization ----------------------------------------------------

namespace detail {

constexpr uint32_t kModelMagic = 0x42474453;  // "SDGB"
constexpr uint32_t kModelVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw DataError("model file truncated");
    return v;
}

}  // namespace detail

inline void save_model(std::ostream& out, const GbdtModel& m) {
    using detail::put;
    put(out, detail::kModelMagic);
    put(out, detail::kModelVersion);
    const auto& hp = m.hyperparams;
    put(out, static_cast<int32_t>(hp.num_rounds));
    put(out, hp.learning_rate);
    put(out, static_cast<int32_t>(hp.max_depth));
    put(out, static_cast<int32_t>(hp.num_leaves));
    put(out, hp.subsample);
    put(out, hp.feature_subsample);
    put(out, static_cast<int32_t>(hp.min_samples_leaf));
    put(out, hp.min_split_gain);
    put(out, hp.l1);
    put(out, hp.l2);
    put(out, hp.seed);
    for (bool b : m.feature_mask) put(out, static_cast<uint8_t>(b));
    put(out, static_cast<uint32_t>(m.trees.size()));
    for (const auto& round : m.trees)
        for (const auto& tree : round) {
            put(out, static_cast<uint32_t>(tree.nodes.size()));
            for (const auto& nd : tree.nodes) {
                put(out, static_cast<uint8_t>(nd.is_leaf));
                put(out, static_cast<int32_t>(nd.feature));
                put(out, nd.threshold);
                put(out, static_cast<int32_t>(nd.left));
                put(out, static_cast<int32_t>(nd.right));
                put(out, nd.value);
            }
        }
    put(out, static_cast<uint32_t>(m.train_loss_curve.size()));
    for (double v : m.train_loss_curve) put(out, v);
}

inline void save_model(const std::string& path, const GbdtModel& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open model file for writing: " + path);
    save_model(out, m);
}

inline GbdtModel load_model(std::istream& in) {
    using detail::get;
    if (get<uint32_t>(in) != detail::kModelMagic) throw DataError("not a model file");
    uint32_t version = get<uint32_t>(in);
    if (version != detail::kModelVersion)
        throw DataError("unsupported model format version " + std::to_string(version));
    GbdtModel m;
    auto& hp = m.hyperparams;
    hp.num_rounds = get<int32_t>(in);
    hp.learning_rate = get<double>(in);
    hp.max_depth = get<int32_t>(in);
    hp.num_leaves = get<int32_t>(in);
    hp.subsample = get<double>(in);
    hp.feature_subsample = get<double>(in);
    hp.min_samples_leaf = get<int32_t>(in);
    hp.min_split_gain = get<double>(in);
    hp.l1 = get<double>(in);
    hp.l2 = get<double>(in);
    hp.seed = get<uint64_t>(in);
    for (bool& b : m.feature_mask) b = get<uint8_t>(in) != 0;
    uint32_t rounds = get<uint32_t>(in);
    m.trees.resize(rounds);
    for (auto& round : m.trees)
        for (auto& tree : round) {
            uint32_t count = get<uint32_t>(in);
            tree.nodes.resize(count);
            for (auto& nd : tree.nodes) {
                nd.is_leaf = get<uint8_t>(in) != 0;
                nd.feature = get<int32_t>(in);
                nd.threshold = get<double>(in);
                nd.left = get<int32_t>(in);
                nd.right = get<int32_t>(in);
                nd.value = get<double>(in);
            }
        }
    uint32_t curve = get<uint32_t>(in);
    m.train_loss_curve.resize(curve);
    for (double& v : m.train_loss_curve) v = get<double>(in);
    return m;
}

inline GbdtModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file: " + path);
    return load_model(in);
}

}  // namespace semdetect
