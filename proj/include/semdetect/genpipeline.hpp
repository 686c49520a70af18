#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "semdetect/common.hpp"
#include "semdetect/corpus.hpp"
#include "semdetect/providers.hpp"
#include "semdetect/templates.hpp"

namespace semdetect {

enum class JobKind { FullAi, Refine, Clean };

struct GenerationJob {
    std::string paper_id;
    int target_score = 0;
    std::string generator_model;
    JobKind kind = JobKind::FullAi;
    std::optional<std::string> source_review_id;
};

struct JobPlan {
    std::vector<GenerationJob> jobs;
    std::vector<std::string> warnings;  // papers skipped for having no ratings
};

// One FullAi job per (paper, distinct human score, model) and one Refine job
// per (human review, model).
inline JobPlan build_generation_jobs(const std::vector<PaperRecord>& papers,
                                     const std::vector<ReviewRecord>& reviews,
                                     const std::vector<std::string>& models) {
    JobPlan plan;
    for (const auto& p : papers) {
        std::set<int> scores(p.human_ratings.begin(), p.human_ratings.end());
        if (scores.empty()) {
            plan.warnings.push_back("paper " + p.paper_id + " has no human ratings, skipped");
            continue;
        }
        for (int s : scores)
            for (const auto& m : models)
                plan.jobs.push_back(GenerationJob{p.paper_id, s, m, JobKind::FullAi, std::nullopt});
    }
    for (const auto& r : reviews) {
        if (r.label != Label::Human) continue;
        for (const auto& m : models)
            plan.jobs.push_back(GenerationJob{r.paper_id, r.rating, m, JobKind::Refine, r.id});
    }
    return plan;
}

inline std::string ai_review_id(const std::string& paper_id, int score, const std::string& model) {
    return "ai:" + paper_id + ":s" + std::to_string(score) + ":" + model;
}

inline ReviewRecord generate_ai_review(const PaperRecord& paper, int score,
                                       const std::string& model, ChatProvider& chat,
                                       const PromptTemplates& templates = {}) {
    if (trim(paper.body_text).empty())
        throw ValidationError("generate_ai_review: paper " + paper.paper_id + " has no body text");
    if (count_slot(templates.ai_review_system, "score") != 1)
        throw ConfigError("ai review template must contain the {score} slot exactly once");
    ChatRequest req;
    req.system_prompt =
        render_template(templates.ai_review_system, {{"score", std::to_string(score)}});
    req.user_prompt = render_template(templates.ai_review_user,
                                      {{"title", paper.title}, {"body", paper.body_text}});
    req.temperature = 1.0;
    req.max_tokens = 3072;
    req.model_name = model;
    std::string text = chat.chat_complete(req);
    if (trim(text).empty())
        throw ProviderError("empty completion generating review for paper " + paper.paper_id);
    ReviewRecord r;
    r.id = ai_review_id(paper.paper_id, score, model);
    r.paper_id = paper.paper_id;
    r.venue = paper.venue;
    r.year = paper.year;
    r.rating = score;
    r.label = Label::Ai;
    r.text = text;
    r.generator_model = model;
    return r;
}

inline ReviewRecord refine_review(const ReviewRecord& human, const std::string& model,
                                  ChatProvider& chat, const PromptTemplates& templates = {}) {
    if (human.label != Label::Human)
        throw ValidationError("refine_review: source " + human.id + " is not human-labeled");
    ChatRequest req;
    req.system_prompt = templates.refine_system;
    req.user_prompt = render_template(templates.refine_user, {{"review", human.text}});
    req.temperature = 0.8;
    req.max_tokens = 3072;
    req.model_name = model;
    std::string text = chat.chat_complete(req);
    if (trim(text).empty())
        throw ProviderError("empty completion refining review " + human.id);
    ReviewRecord r = human;
    r.id = "ref:" + human.id + ":" + model;
    r.label = Label::Refined;
    r.text = text;
    r.generator_model = model;
    r.source_review_id = human.id;
    return r;
}

// Post-processing pass stripping generation artifacts; identity fields are
// preserved, only the text changes. Temperature/token settings are the
// configurable cleaning defaults.
inline ReviewRecord clean_review(const ReviewRecord& review, ChatProvider& chat,
                                 const PromptTemplates& templates = {},
                                 double temperature = 0.3, int max_tokens = 3072) {
    if (review.label != Label::Ai && review.label != Label::Refined)
        throw ValidationError("clean_review: " + review.id + " is not a generated review");
    ChatRequest req;
    req.system_prompt = templates.clean_system;
    req.user_prompt = render_template(templates.clean_user, {{"review", review.text}});
    req.temperature = temperature;
    req.max_tokens = max_tokens;
    req.model_name = review.generator_model.value_or("cleaner");
    std::string text = chat.chat_complete(req);
    if (trim(text).empty())
        throw ProviderError("empty completion cleaning review " + review.id);
    ReviewRecord r = review;
    r.text = text;
    return r;
}

}  // namespace semdetect
