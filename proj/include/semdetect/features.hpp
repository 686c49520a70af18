#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "semdetect/claims.hpp"
#include "semdetect/common.hpp"
#include "semdetect/corpus.hpp"
#include "semdetect/providers.hpp"

namespace semdetect {

constexpr size_t kNumFeatures = 9;

struct FeatureConfig {
    double tau = 0.8;
    int k_refs = 3;
    int top_k = 200;
    std::array<bool, kNumFeatures> feature_mask{true, true, true, true, true,
                                                true, true, true, true};
    // Alternate reading of the above-threshold mean: per-claim best matches
    // instead of all claim-reference pairs.
    bool f2_per_claim_max = false;

    void validate() const {
        if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0,1]");
        if (k_refs < 1) throw ConfigError("k_refs must be >= 1");
        if (top_k < 1) throw ConfigError("top_k must be >= 1");
    }
};

struct FeatureVector {
    double prop_high_sim = 0;       // f1
    double mean_sim_above_tau = 0;  // f2
    double mean_best_match = 0;     // f3
    double intra_diversity = 0;     // f4
    double log_claim_count = 0;     // f5
    double perplexity = 0;          // f6
    double mean_entropy = 0;        // f7
    double top_k_rate = 0;          // f8
    double curvature_score = 0;     // f9
    bool valid_semantic = false;
    // Both claim counts are kept because f5 uses the pre-filter
    // count while f1-f4 use the filtered one.
    size_t total_extracted = 0;
    size_t filtered_count = 0;

    std::array<double, kNumFeatures> as_array() const {
        return {prop_high_sim,  mean_sim_above_tau, mean_best_match,
                intra_diversity, log_claim_count,   perplexity,
                mean_entropy,    top_k_rate,        curvature_score};
    }

    void set_from_array(const std::array<double, kNumFeatures>& a) {
        prop_high_sim = a[0];
        mean_sim_above_tau = a[1];
        mean_best_match = a[2];
        intra_diversity = a[3];
        log_claim_count = a[4];
        perplexity = a[5];
        mean_entropy = a[6];
        top_k_rate = a[7];
        curvature_score = a[8];
    }

    void apply_mask(const std::array<bool, kNumFeatures>& mask) {
        auto a = as_array();
        for (size_t i = 0; i < kNumFeatures; ++i)
            if (!mask[i]) a[i] = 0.0;
        set_from_array(a);
    }
};

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.values.size() != b.values.size())
        throw DataError("cosine: dimension mismatch " + std::to_string(a.values.size()) + " vs " +
                        std::to_string(b.values.size()));
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na <= 0 || nb <= 0) throw DataError("cosine: zero vector");
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

inline const EmbeddingVector& claim_embedding(const Claim& c) {
    if (!c.embedding) throw DataError("claim without embedding: \"" + c.text + "\"");
    return *c.embedding;
}

// s_{i,j} for one reference review: the best cosine between the target
// claim and any claim of that review.
inline double best_match_similarity(const Claim& claim, const std::vector<Claim>& reference_claims) {
    if (reference_claims.empty())
        throw DataError("best_match_similarity: empty reference claim list");
    double best = -1.0;
    for (const auto& rc : reference_claims)
        best = std::max(best, cosine(claim_embedding(claim), claim_embedding(rc)));
    return best;
}

// Best-match matrix: rows are target claims, columns are reference reviews.
struct SimilarityCache {
    std::vector<std::vector<double>> s;  // s[i][j] = s_{i,j}

    double best_overall(size_t i) const {
        double best = -1.0;
        for (double v : s[i]) best = std::max(best, v);
        return best;
    }
};

struct SemanticFeatures {
    double f1 = 0, f2 = 0, f3 = 0, f4 = 0, f5 = 0;
    bool valid = false;
    SimilarityCache cache;
};

// Recomputes the two threshold-dependent features from a cached best-match
// matrix; used by the tau sweep during cross-validation.
inline std::pair<double, double> threshold_features(const SimilarityCache& cache, double tau,
                                                    bool f2_per_claim_max = false) {
    const size_t n = cache.s.size();
    if (n == 0) return {0.0, 0.0};
    double f1 = 0;
    double sum_above = 0;
    size_t count_above = 0;
    for (size_t i = 0; i < n; ++i) {
        double s_i = cache.best_overall(i);
        if (s_i > tau) f1 += 1.0;
        if (f2_per_claim_max) {
            if (s_i > tau) {
                sum_above += s_i;
                ++count_above;
            }
        } else {
            for (double s_ij : cache.s[i]) {
                if (s_ij > tau) {
                    sum_above += s_ij;
                    ++count_above;
                }
            }
        }
    }
    f1 /= static_cast<double>(n);
    double f2 = count_above ? sum_above / static_cast<double>(count_above) : 0.0;
    return {f1, f2};
}

// The five claim-level features of a target review against its paired
// AI reference reviews. Inputs are filtered, embedded claim sets;
// total_extracted is the pre-filter claim count feeding the log-length.
inline SemanticFeatures semantic_features(const ClaimSet& target,
                                          const std::vector<ClaimSet>& references,
                                          size_t total_extracted, const FeatureConfig& config) {
    config.validate();
    if (references.size() != static_cast<size_t>(config.k_refs))
        throw DataError("semantic_features: expected " + std::to_string(config.k_refs) +
                        " references, got " + std::to_string(references.size()));
    for (const auto& ref : references)
        if (ref.claims.empty())
            throw DataError("semantic_features: reference claim set for review " + ref.review_id +
                            " is empty");

    SemanticFeatures out;
    out.f5 = std::log1p(static_cast<double>(total_extracted));
    const size_t n = target.claims.size();
    if (n == 0) return out;  // all-zero semantics, valid stays false
    out.valid = true;

    out.cache.s.assign(n, std::vector<double>(references.size(), 0.0));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < references.size(); ++j)
            out.cache.s[i][j] = best_match_similarity(target.claims[i], references[j].claims);

    auto [f1, f2] = threshold_features(out.cache, config.tau, config.f2_per_claim_max);
    out.f1 = f1;
    out.f2 = f2;

    double sum_best = 0;
    for (size_t i = 0; i < n; ++i) sum_best += out.cache.best_overall(i);
    out.f3 = sum_best / static_cast<double>(n);

    if (n >= 2) {
        double sum_pair = 0;
        size_t pairs = 0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j) {
                sum_pair += cosine(claim_embedding(target.claims[i]),
                                   claim_embedding(target.claims[j]));
                ++pairs;
            }
        out.f4 = 1.0 - sum_pair / static_cast<double>(pairs);
    }
    return out;
}

struct TextualFeatures {
    double perplexity = 0, mean_entropy = 0, top_k_rate = 0, curvature = 0;
};

// The four token-statistics features. Curvature is the standardized gap
// between actual and expected log-likelihood; a near-zero total variance
// (degenerate scorer) yields 0.
inline TextualFeatures textual_features(const std::vector<TokenScore>& scores,
                                        const FeatureConfig& config) {
    config.validate();
    if (scores.empty()) throw DataError("textual_features: empty token score sequence");
    const double t = static_cast<double>(scores.size());
    double sum_lp = 0, sum_ent = 0, sum_top = 0, sum_exp = 0, sum_var = 0;
    for (const auto& s : scores) {
        sum_lp += s.logprob_actual;
        sum_ent += s.entropy;
        sum_top += s.in_top_k ? 1.0 : 0.0;
        sum_exp += s.expected_logprob;
        sum_var += s.logprob_variance;
    }
    TextualFeatures out;
    out.perplexity = std::exp(-sum_lp / t);
    out.mean_entropy = sum_ent / t;
    out.top_k_rate = sum_top / t;
    out.curvature = sum_var < 1e-12 ? 0.0 : (sum_lp - sum_exp) / std::sqrt(sum_var);
    return out;
}

struct PairingError : DataError {
    using DataError::DataError;
};

// Selects k_refs AI reference reviews for the target. Exact rating matches
// come first, then nearest rating (ties toward the lower rating, then id
// order). For AI targets, references by the target's own generator are
// never eligible.
inline std::vector<ReviewRecord> pair_references(const ReviewRecord& target,
                                                 const std::vector<ReviewRecord>& candidates,
                                                 const FeatureConfig& config) {
    config.validate();
    std::vector<ReviewRecord> eligible;
    for (const auto& c : candidates) {
        if (c.label != Label::Ai)
            throw DataError("pair_references: candidate " + c.id + " is not AI-labeled");
        if (c.paper_id != target.paper_id)
            throw DataError("pair_references: candidate " + c.id + " is for a different paper");
        if (c.id == target.id) continue;
        if (target.label == Label::Ai && target.generator_model &&
            c.generator_model == target.generator_model)
            continue;
        eligible.push_back(c);
    }
    std::sort(eligible.begin(), eligible.end(),
              [&](const ReviewRecord& a, const ReviewRecord& b) {
                  int da = std::abs(a.rating - target.rating);
                  int db = std::abs(b.rating - target.rating);
                  if (da != db) return da < db;
                  if (a.rating != b.rating) return a.rating < b.rating;
                  return a.id < b.id;
              });
    if (eligible.size() < static_cast<size_t>(config.k_refs))
        throw PairingError("paper " + target.paper_id + " has " +
                           std::to_string(eligible.size()) + " usable AI reference reviews but " +
                           std::to_string(config.k_refs) +
                           " are required; generate references for this paper first");
    eligible.resize(static_cast<size_t>(config.k_refs));
    return eligible;
}

}  // namespace semdetect
