#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "semdetect/common.hpp"
#include "semdetect/corpus.hpp"
#include "semdetect/providers.hpp"
#include "semdetect/templates.hpp"

namespace semdetect {

enum class ClaimCategory {
    FactualRestatement = 0,
    Evaluation = 1,
    ConstructiveInput = 2,
    ClarificationDialogue = 3,
    MetaCommentary = 4,
};

inline const char* category_name(ClaimCategory c) {
    switch (c) {
        case ClaimCategory::FactualRestatement:
            return "Factual Restatement";
        case ClaimCategory::Evaluation:
            return "Evaluation";
        case ClaimCategory::ConstructiveInput:
            return "Constructive Input";
        case ClaimCategory::ClarificationDialogue:
            return "Clarification Dialogue";
        default:
            return "Meta-Commentary";
    }
}

inline bool is_evaluative(ClaimCategory c) {
    return c == ClaimCategory::Evaluation || c == ClaimCategory::ConstructiveInput ||
           c == ClaimCategory::ClarificationDialogue;
}

struct Claim {
    std::string text;
    ClaimCategory category = ClaimCategory::Evaluation;
    std::optional<EmbeddingVector> embedding;

    bool operator==(const Claim& o) const { return text == o.text && category == o.category; }
};

struct ClaimSet {
    std::string review_id;
    std::vector<Claim> claims;

    bool operator==(const ClaimSet& o) const {
        return review_id == o.review_id && claims == o.claims;
    }
};

namespace detail {

// Collapse runs of whitespace; used when normalizing candidate headings.
inline std::string collapse_spaces(const std::string& s) {
    std::string out;
    bool in_ws = false;
    for (char c : s) {
        if (c == ' ' || c == '\t') {
            in_ws = true;
        } else {
            if (in_ws && !out.empty()) out += ' ';
            in_ws = false;
            out += c;
        }
    }
    return out;
}

// Strips numbering ("1.", "2)"), bold/emphasis markers, and a trailing
// colon, then lowercases. Returns the matched category if the remainder is
// one of the five headings.
inline std::optional<ClaimCategory> match_heading(const std::string& raw) {
    std::string s = trim(raw);
    size_t b = 0;
    while (b < s.size() && (s[b] == '#' || s[b] == '*' || s[b] == '_' || s[b] == '(')) ++b;
    size_t digits = b;
    while (digits < s.size() && s[digits] >= '0' && s[digits] <= '9') ++digits;
    if (digits > b && digits < s.size() && (s[digits] == '.' || s[digits] == ')')) b = digits + 1;
    size_t e = s.size();
    while (e > b && (s[e - 1] == '*' || s[e - 1] == '_' || s[e - 1] == ':' || s[e - 1] == ' '))
        --e;
    std::string norm = to_lower(collapse_spaces(trim(s.substr(b, e - b))));
    // The headings sometimes carry the prompt's inline gloss ("Evaluation -
    // Judgments of quality ..."); keep only the part before a dash separator.
    size_t dash = norm.find(" - ");
    if (dash == std::string::npos) dash = norm.find(" \xe2\x80\x93 ");  // en dash
    if (dash != std::string::npos) norm = trim(norm.substr(0, dash));
    if (norm == "factual restatement") return ClaimCategory::FactualRestatement;
    if (norm == "evaluation") return ClaimCategory::Evaluation;
    if (norm == "constructive input") return ClaimCategory::ConstructiveInput;
    if (norm == "clarification dialogue") return ClaimCategory::ClarificationDialogue;
    if (norm == "meta-commentary" || norm == "meta commentary") return ClaimCategory::MetaCommentary;
    return std::nullopt;
}

// Returns the bullet body if the line starts with "-", "*", or "•".
inline std::optional<std::string> match_bullet(const std::string& raw) {
    std::string s = trim(raw);
    if (s.empty()) return std::nullopt;
    if (s[0] == '-' || (s[0] == '*' && !(s.size() > 1 && s[1] == '*')))
        return trim(s.substr(1));
    if (s.rfind("\xe2\x80\xa2", 0) == 0) return trim(s.substr(3));
    return std::nullopt;
}

}  // namespace detail

// Parses the extraction output grammar: five known headings, bullets under
// them, multi-line bullets joined with single spaces. Anything outside the
// grammar is rejected deterministically.
inline std::vector<Claim> parse_claim_output(const std::string& raw) {
    std::vector<Claim> claims;
    std::optional<ClaimCategory> current;
    bool bullet_open = false;
    std::istringstream in(raw);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty()) {
            bullet_open = false;
            continue;
        }
        if (auto head = detail::match_heading(t)) {
            current = *head;
            bullet_open = false;
            continue;
        }
        if (auto body = detail::match_bullet(t)) {
            if (!current)
                throw ParseError("line " + std::to_string(lineno) +
                                 ": bullet before any category heading");
            if (body->empty())
                throw ParseError("line " + std::to_string(lineno) + ": empty bullet");
            claims.push_back(Claim{*body, *current, std::nullopt});
            bullet_open = true;
            continue;
        }
        if (bullet_open) {
            claims.back().text += " " + t;
            continue;
        }
        throw ParseError("line " + std::to_string(lineno) + ": unknown heading \"" + t + "\"");
    }
    return claims;
}

// Inverse of parse_claim_output on well-formed claims: emits a heading for
// each run of consecutive same-category claims, then one bullet per claim.
inline std::string render_claims(const ClaimSet& set) {
    std::string out;
    const ClaimCategory* prev = nullptr;
    for (const auto& c : set.claims) {
        if (!prev || *prev != c.category) {
            out += "**" + std::string(category_name(c.category)) + "**\n";
            prev = &c.category;
        }
        out += "- " + c.text + "\n";
    }
    return out;
}

struct ExtractionError : ProviderError {
    std::string raw_output;
    ExtractionError(const std::string& msg, std::string raw)
        : ProviderError(msg), raw_output(std::move(raw)) {}
};

// One chat call with the extraction prompt; a malformed completion gets one
// retry with a format reminder before the extraction fails.
inline ClaimSet extract_claims(const ReviewRecord& review, ChatProvider& chat,
                               const PromptTemplates& templates = {},
                               const std::string& extractor_model = "stub-chat") {
    if (trim(review.text).empty())
        throw ValidationError("extract_claims: review " + review.id + " has empty text");
    ChatRequest req;
    req.system_prompt = templates.extract_claims_system;
    req.user_prompt = render_template(templates.extract_claims_user, {{"review", review.text}});
    req.temperature = 0.0;
    req.max_tokens = 3072;
    req.model_name = extractor_model;

    std::string raw = chat.chat_complete(req);
    for (int attempt = 0;; ++attempt) {
        try {
            ClaimSet set;
            set.review_id = review.id;
            set.claims = parse_claim_output(raw);
            return set;
        } catch (const ParseError& e) {
            if (attempt >= 1)
                throw ExtractionError(
                    "claim extraction for review " + review.id + " unparseable after retry: " +
                        e.what(),
                    raw);
            ChatRequest retry = req;
            retry.user_prompt +=
                "\n\nFormat reminder: respond only with the category headings and \"- \" "
                "bullet points, nothing else.";
            raw = chat.chat_complete(retry);
        }
    }
}

inline ClaimCategory category_from_name(const std::string& name) {
    auto c = detail::match_heading(name);
    if (!c) throw ValidationError("unknown claim category: " + name);
    return *c;
}

inline nlohmann::json claimset_to_json(const ClaimSet& set) {
    nlohmann::json claims = nlohmann::json::array();
    for (const auto& c : set.claims)
        claims.push_back({{"category", category_name(c.category)}, {"text", c.text}});
    return {{"review_id", set.review_id}, {"claims", std::move(claims)}};
}

inline ClaimSet claimset_from_json(const nlohmann::json& j) {
    ClaimSet set;
    set.review_id = j.at("review_id").get<std::string>();
    for (const auto& item : j.at("claims")) {
        Claim c;
        c.text = item.at("text").get<std::string>();
        c.category = category_from_name(item.at("category").get<std::string>());
        if (c.text.empty()) throw ValidationError("claim record with empty text");
        set.claims.push_back(std::move(c));
    }
    return set;
}

// Keeps the three evaluative categories, in input order.
inline ClaimSet filter_evaluative(const ClaimSet& set) {
    ClaimSet out;
    out.review_id = set.review_id;
    for (const auto& c : set.claims)
        if (is_evaluative(c.category)) out.claims.push_back(c);
    return out;
}

}  // namespace semdetect
