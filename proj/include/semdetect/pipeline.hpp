#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "semdetect/claims.hpp"
#include "semdetect/common.hpp"
#include "semdetect/corpus.hpp"
#include "semdetect/features.hpp"
#include "semdetect/genpipeline.hpp"
#include "semdetect/providers.hpp"
#include "semdetect/stubs.hpp"
#include "semdetect/templates.hpp"

namespace semdetect {

struct ProviderSet {
    std::shared_ptr<ChatProvider> chat;
    std::shared_ptr<EmbeddingProvider> embed;
    std::shared_ptr<TokenScorer> scorer;
};

inline ProviderSet make_stub_providers(uint64_t seed = 0, int dim = 64) {
    ProviderSet p;
    p.chat = std::make_shared<StubChatProvider>(seed);
    p.embed = std::make_shared<StubEmbeddingProvider>(dim, seed);
    p.scorer = std::make_shared<StubTokenScorer>(seed);
    return p;
}

// Runs fn(i) for i in [0, n) across threads; exceptions surface on the
// calling thread. Results must be written by index so ordering stays
// deterministic.
template <typename F>
void parallel_for(size_t n, F&& fn, unsigned threads = std::thread::hardware_concurrency()) {
    threads = std::max(1u, std::min<unsigned>(threads, n == 0 ? 1 : static_cast<unsigned>(n)));
    if (threads == 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                    next.store(n);
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// Rating to generate/pair references at when the target carries none:
// the paper's median human rating if known, else a venue-scale midpoint.
inline int choose_reference_rating(const ReviewRecord& target, const PaperRecord& paper) {
    if (target.rating > 0) return target.rating;
    if (!paper.human_ratings.empty()) {
        std::vector<int> sorted = paper.human_ratings;
        std::sort(sorted.begin(), sorted.end());
        return sorted[(sorted.size() - 1) / 2];
    }
    return 5;
}

struct FeaturizedRow {
    std::string review_id;
    std::string paper_id;
    Label label = Label::Unlabeled;
    FeatureVector features;
    SimilarityCache cache;  // best-match matrix, kept for the tau sweep
    FeatureConfig config;
};

// extract -> filter -> embed -> pair -> semantic + score -> textual.
// Stage failures are rethrown with the stage name and review id attached.
class Featurizer {
public:
    Featurizer(ProviderSet providers, FeatureConfig config, PromptTemplates templates = {},
               std::vector<std::string> generator_models = {"stub-model-a", "stub-model-b",
                                                            "stub-model-c", "stub-model-d"})
        : providers_(std::move(providers)),
          config_(std::move(config)),
          templates_(std::move(templates)),
          generator_models_(std::move(generator_models)) {
        config_.validate();
    }

    const FeatureConfig& config() const { return config_; }

    FeaturizedRow featurize(const ReviewRecord& target, const PaperRecord& paper,
                            std::vector<ReviewRecord> ai_candidates,
                            bool generate_missing_refs = false) const {
        FeaturizedRow row;
        row.review_id = target.id;
        row.paper_id = target.paper_id;
        row.label = target.label;
        row.config = config_;

        ClaimSet extracted = stage("extract", target.id, [&] {
            return extract_claims(target, *providers_.chat, templates_);
        });
        ClaimSet filtered = filter_evaluative(extracted);
        stage("embed", target.id, [&] {
            embed_claims(filtered);
            return 0;
        });

        std::vector<ReviewRecord> refs = stage("pair", target.id, [&] {
            return pair_with_fallback(target, paper, std::move(ai_candidates),
                                      generate_missing_refs);
        });

        std::vector<ClaimSet> ref_claims;
        for (const auto& ref : refs) {
            ClaimSet rc = stage("extract", ref.id, [&] {
                return filter_evaluative(extract_claims(ref, *providers_.chat, templates_));
            });
            stage("embed", ref.id, [&] {
                embed_claims(rc);
                return 0;
            });
            ref_claims.push_back(std::move(rc));
        }

        SemanticFeatures sem = stage("semantic", target.id, [&] {
            return semantic_features(filtered, ref_claims, extracted.claims.size(), config_);
        });
        TextualFeatures tex = stage("textual", target.id, [&] {
            return textual_features(providers_.scorer->score_tokens(target.text, config_.top_k),
                                    config_);
        });

        row.features.prop_high_sim = sem.f1;
        row.features.mean_sim_above_tau = sem.f2;
        row.features.mean_best_match = sem.f3;
        row.features.intra_diversity = sem.f4;
        row.features.log_claim_count = sem.f5;
        row.features.perplexity = tex.perplexity;
        row.features.mean_entropy = tex.mean_entropy;
        row.features.top_k_rate = tex.top_k_rate;
        row.features.curvature_score = tex.curvature;
        row.features.valid_semantic = sem.valid;
        row.features.total_extracted = extracted.claims.size();
        row.features.filtered_count = filtered.claims.size();
        row.features.apply_mask(config_.feature_mask);
        row.cache = std::move(sem.cache);
        return row;
    }

private:
    template <typename F>
    auto stage(const char* name, const std::string& id, F&& fn) const -> decltype(fn()) {
        try {
            return fn();
        } catch (const std::exception& e) {
            throw DataError("stage " + std::string(name) + " failed for review " + id + ": " +
                            e.what());
        }
    }

    void embed_claims(ClaimSet& set) const {
        if (set.claims.empty()) return;
        std::vector<std::string> texts;
        for (const auto& c : set.claims) texts.push_back(c.text);
        auto vectors = providers_.embed->embed_batch(texts);
        for (size_t i = 0; i < set.claims.size(); ++i)
            set.claims[i].embedding = std::move(vectors[i]);
    }

    std::vector<ReviewRecord> pair_with_fallback(const ReviewRecord& target,
                                                 const PaperRecord& paper,
                                                 std::vector<ReviewRecord> candidates,
                                                 bool generate_missing) const {
        try {
            return pair_references(target, candidates, config_);
        } catch (const PairingError&) {
            if (!generate_missing) throw;
        }
        const int rating = choose_reference_rating(target, paper);
        for (const auto& model : generator_models_) {
            if (target.label == Label::Ai && target.generator_model == model) continue;
            std::string id = ai_review_id(paper.paper_id, rating, model);
            bool exists = false;
            for (const auto& c : candidates) exists = exists || c.id == id;
            if (exists) continue;
            candidates.push_back(
                generate_ai_review(paper, rating, model, *providers_.chat, templates_));
        }
        return pair_references(target, candidates, config_);
    }

    ProviderSet providers_;
    FeatureConfig config_;
    PromptTemplates templates_;
    std::vector<std::string> generator_models_;
};

// ---- feature table persistence (features.jsonl) -----------------------

inline nlohmann::json row_to_json(const FeaturizedRow& row) {
    nlohmann::json j;
    j["review_id"] = row.review_id;
    j["paper_id"] = row.paper_id;
    j["label"] =
        row.label == Label::Unlabeled ? nlohmann::json{} : nlohmann::json(label_name(row.label));
    j["features"] = row.features.as_array();
    j["valid_semantic"] = row.features.valid_semantic;
    j["total_extracted"] = row.features.total_extracted;
    j["filtered_count"] = row.features.filtered_count;
    j["config"] = {{"tau", row.config.tau},
                   {"k_refs", row.config.k_refs},
                   {"top_k", row.config.top_k},
                   {"mask", row.config.feature_mask}};
    j["similarity_matrix"] = row.cache.s;
    return j;
}

inline FeaturizedRow row_from_json(const nlohmann::json& j) {
    FeaturizedRow row;
    row.review_id = j.at("review_id").get<std::string>();
    row.paper_id = j.value("paper_id", std::string{});
    row.label = parse_label(j.value("label", nlohmann::json{}));
    auto arr = j.at("features").get<std::array<double, kNumFeatures>>();
    row.features.set_from_array(arr);
    row.features.valid_semantic = j.value("valid_semantic", false);
    row.features.total_extracted = j.value("total_extracted", 0u);
    row.features.filtered_count = j.value("filtered_count", 0u);
    const auto& cfg = j.at("config");
    row.config.tau = cfg.at("tau").get<double>();
    row.config.k_refs = cfg.at("k_refs").get<int>();
    row.config.top_k = cfg.at("top_k").get<int>();
    row.config.feature_mask = cfg.at("mask").get<std::array<bool, kNumFeatures>>();
    row.cache.s = j.value("similarity_matrix", std::vector<std::vector<double>>{});
    return row;
}

inline void save_feature_table(const std::string& path, const std::vector<FeaturizedRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (const auto& row : rows) out << row_to_json(row).dump() << '\n';
}

inline std::vector<FeaturizedRow> load_feature_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open feature table: " + path);
    std::vector<FeaturizedRow> rows;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            rows.push_back(row_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

}  // namespace semdetect
