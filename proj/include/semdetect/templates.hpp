#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "semdetect/common.hpp"

namespace semdetect {

// Renders named `{slot}` placeholders. Unresolved slots are an error so a
// template edit cannot silently ship a literal "{score}".
inline std::string render_template(const std::string& tmpl,
                                   const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(tmpl.size());
    for (size_t i = 0; i < tmpl.size();) {
        if (tmpl[i] == '{') {
            size_t close = tmpl.find('}', i);
            if (close == std::string::npos)
                throw ConfigError("template has unterminated '{' at offset " + std::to_string(i));
            std::string name = tmpl.substr(i + 1, close - i - 1);
            auto it = slots.find(name);
            if (it == slots.end()) throw ConfigError("template slot not provided: " + name);
            out += it->second;
            i = close + 1;
        } else {
            out += tmpl[i++];
        }
    }
    return out;
}

inline size_t count_slot(const std::string& tmpl, const std::string& name) {
    const std::string needle = "{" + name + "}";
    size_t n = 0;
    for (size_t p = tmpl.find(needle); p != std::string::npos; p = tmpl.find(needle, p + 1)) ++n;
    return n;
}

struct PromptTemplates {
    std::string ai_review_system =
        "Review the given paper for a top AI conference.\n"
        "\n"
        "Please be concise, critical, focused, and constructive so that the authors find the "
        "review convincing and improve their manuscript accordingly.\n"
        "\n"
        "Your final recommendation should be \"{score}\". Please write a review that includes:\n"
        "\n"
        "(1) Summary of the paper; (2) Strengths; (3) Weaknesses; (4) Questions for authors (if "
        "any) and (5) Final Judgement.\n";
    std::string ai_review_user = "Title: {title}\n\n{body}\n";

    std::string refine_system =
        "You are a professional writing assistant.\n"
        "\n"
        "Your task is to take user-provided text and rewrite it to be more polished, "
        "professional, and effective.\n"
        "\n"
        "Ensure the tone is appropriate for academic communication.\n"
        "\n"
        "Do not modify the content of the review or suggest any improvements.\n";
    std::string refine_user = "Here is the review to rewrite: {review}\n";

    std::string clean_system =
        "You are given the text of a peer review.\n"
        "\n"
        "Remove any artifacts that reveal how the text was produced: introductory preambles "
        "such as \"Here is the review of ...\", markdown scaffolding, and closing remarks "
        "addressed to the requester. Do not change the content of the review itself.\n"
        "\n"
        "Return only the cleaned plain-text review.\n";
    std::string clean_user = "{review}\n";

    std::string extract_claims_system =
        "You are given the full text of a peer review.\n"
        "\n"
        "Your task is to extract and organize the reviewer's comments into bullet points under "
        "the following categories:\n"
        "\n"
        "1. Factual Restatement - Summaries or descriptions of what the paper does, its "
        "methods, contributions, or results.\n"
        "2. Evaluation - Judgments of quality, including both strengths (positive evaluations) "
        "and weaknesses/limitations (negative evaluations).\n"
        "3. Constructive Input - Actionable suggestions or recommendations for improvement.\n"
        "4. Clarification Dialogue - Questions directed to the authors or requests for "
        "clarification.\n"
        "5. Meta-Commentary - Remarks about the broader context, such as fit for the venue, "
        "clarity of writing, novelty, or overall recommendation.\n";
    std::string extract_claims_user = "{review}\n";
};

// Override defaults with any `<name>.txt` files present under `dir`.
inline PromptTemplates load_templates(const std::filesystem::path& dir) {
    PromptTemplates t;
    auto maybe = [&](const char* name, std::string& slot) {
        auto p = dir / (std::string(name) + ".txt");
        if (std::filesystem::exists(p)) {
            std::ifstream in(p);
            std::ostringstream ss;
            ss << in.rdbuf();
            slot = ss.str();
        }
    };
    maybe("ai_review_system", t.ai_review_system);
    maybe("ai_review_user", t.ai_review_user);
    maybe("refine_system", t.refine_system);
    maybe("refine_user", t.refine_user);
    maybe("clean_system", t.clean_system);
    maybe("clean_user", t.clean_user);
    maybe("extract_claims_system", t.extract_claims_system);
    maybe("extract_claims_user", t.extract_claims_user);
    return t;
}

}  // namespace semdetect
