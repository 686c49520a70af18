#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "semdetect/common.hpp"
#include "semdetect/providers.hpp"

namespace semdetect {

struct HttpCall {
    std::string url;
    std::string path;
    std::string body;  // JSON
    std::string bearer_token;
    double timeout_seconds = 60;
};

struct HttpResult {
    int status = 0;
    std::string body;
};

using HttpTransport = std::function<HttpResult(const HttpCall&)>;

// Default transport backed by cpp-httplib; declared here, defined in the
// CLI translation unit so test binaries need not pull in the HTTP stack.
HttpTransport make_httplib_transport();

namespace detail {

inline bool is_transient(int status) { return status == 429 || (status >= 500 && status < 600); }

inline HttpResult dispatch(const HttpTransport& transport, const ProviderConfig& config,
                           RateLimiter* limiter, const RetryPolicy& policy,
                           const std::string& path, const std::string& body,
                           double token_estimate, int* attempts_out) {
    int attempts = 0;
    HttpResult result = with_retries(policy, [&] {
        if (limiter) limiter->acquire(token_estimate);
        ++attempts;
        HttpCall call;
        call.url = config.endpoint;
        call.path = path;
        call.body = body;
        call.bearer_token = config.credential_env.empty() ? std::string{} : config.credential();
        call.timeout_seconds = config.timeout_seconds;
        HttpResult r = transport(call);
        if (is_transient(r.status))
            throw RetryableError("transient HTTP " + std::to_string(r.status) + " from " + path);
        return r;
    });
    if (attempts_out) *attempts_out = attempts;
    if (result.status == 401 || result.status == 403)
        throw ProviderError("authentication failure (HTTP " + std::to_string(result.status) +
                            ") from " + path);
    if (result.status != 200)
        throw ProviderError("HTTP " + std::to_string(result.status) + " from " + path + ": " +
                            result.body);
    return result;
}

}  // namespace detail

// Chat completion against an OpenAI-style endpoint.
class HttpChatProvider : public ChatProvider {
public:
    HttpChatProvider(ProviderConfig config, HttpTransport transport,
                     std::shared_ptr<RateLimiter> limiter = nullptr)
        : config_(std::move(config)), transport_(std::move(transport)), limiter_(std::move(limiter)) {
        if (!limiter_)
            limiter_ = std::make_shared<RateLimiter>(config_.requests_per_minute,
                                                     config_.tokens_per_minute);
        policy_.max_attempts = config_.retry_count;
    }

    std::string chat_complete(const ChatRequest& request) override {
        validate_chat_request(request, max_tokens_limit());
        nlohmann::json body;
        body["model"] = request.model_name.empty() ? config_.model_name : request.model_name;
        body["temperature"] = request.temperature;
        body["max_tokens"] = request.max_tokens;
        body["messages"] = {{{"role", "system"}, {"content", request.system_prompt}},
                            {{"role", "user"}, {"content", request.user_prompt}}};
        HttpResult r =
            detail::dispatch(transport_, config_, limiter_.get(), policy_,
                             "/v1/chat/completions", body.dump(),
                             static_cast<double>(request.max_tokens), &last_attempts_);
        try {
            auto j = nlohmann::json::parse(r.body);
            std::string text = j.at("choices").at(0).at("message").at("content").get<std::string>();
            if (trim(text).empty()) throw ProviderError("empty completion from chat endpoint");
            return text;
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(std::string("malformed chat response: ") + e.what());
        }
    }

    int last_attempts() const { return last_attempts_; }

    RetryPolicy& retry_policy() { return policy_; }

private:
    ProviderConfig config_;
    HttpTransport transport_;
    std::shared_ptr<RateLimiter> limiter_;
    RetryPolicy policy_;
    int last_attempts_ = 0;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(ProviderConfig config, HttpTransport transport,
                          std::shared_ptr<RateLimiter> limiter = nullptr)
        : config_(std::move(config)), transport_(std::move(transport)), limiter_(std::move(limiter)) {
        if (!limiter_)
            limiter_ = std::make_shared<RateLimiter>(config_.requests_per_minute,
                                                     config_.tokens_per_minute);
        policy_.max_attempts = config_.retry_count;
    }

    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override {
        double tokens = 0;
        for (const auto& t : texts) {
            if (t.empty()) throw ProviderError("embed_batch: empty text");
            tokens += static_cast<double>(t.size()) / 4.0;
        }
        nlohmann::json body;
        body["model"] = config_.model_name;
        body["input"] = texts;
        HttpResult r = detail::dispatch(transport_, config_, limiter_.get(), policy_,
                                        "/v1/embeddings", body.dump(), tokens, nullptr);
        std::vector<EmbeddingVector> out;
        try {
            auto j = nlohmann::json::parse(r.body);
            for (const auto& item : j.at("data")) {
                EmbeddingVector v;
                v.model_name = config_.model_name;
                v.values = item.at("embedding").get<std::vector<double>>();
                normalize_embedding(v);
                out.push_back(std::move(v));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(std::string("malformed embedding response: ") + e.what());
        }
        if (out.size() != texts.size())
            throw ProviderError("embedding endpoint returned " + std::to_string(out.size()) +
                                " vectors for " + std::to_string(texts.size()) + " inputs");
        for (const auto& v : out)
            if (v.values.size() != out[0].values.size())
                throw ProviderError("embedding dimension mismatch within batch");
        return out;
    }

    RetryPolicy& retry_policy() { return policy_; }

private:
    ProviderConfig config_;
    HttpTransport transport_;
    std::shared_ptr<RateLimiter> limiter_;
    RetryPolicy policy_;
};

// Token scoring endpoint: {"text": ..., "top_k": k} in, one record of the
// five per-position statistics per scored token out.
class HttpTokenScorer : public TokenScorer {
public:
    HttpTokenScorer(ProviderConfig config, HttpTransport transport,
                    std::shared_ptr<RateLimiter> limiter = nullptr)
        : config_(std::move(config)), transport_(std::move(transport)), limiter_(std::move(limiter)) {
        if (!limiter_)
            limiter_ = std::make_shared<RateLimiter>(config_.requests_per_minute,
                                                     config_.tokens_per_minute);
        policy_.max_attempts = config_.retry_count;
    }

    std::vector<TokenScore> score_tokens(const std::string& text, int top_k) override {
        if (trim(text).empty()) throw ProviderError("score_tokens: empty text");
        if (top_k < 1) throw ProviderError("score_tokens: top_k must be >= 1");
        nlohmann::json body;
        body["model"] = config_.model_name;
        body["text"] = text;
        body["top_k"] = top_k;
        HttpResult r = detail::dispatch(transport_, config_, limiter_.get(), policy_,
                                        "/v1/token_scores", body.dump(),
                                        static_cast<double>(text.size()) / 4.0, nullptr);
        std::vector<TokenScore> out;
        try {
            auto j = nlohmann::json::parse(r.body);
            for (const auto& item : j.at("scores")) {
                TokenScore s;
                s.logprob_actual = item.at("logprob").get<double>();
                s.entropy = item.at("entropy").get<double>();
                s.in_top_k = item.at("in_top_k").get<bool>();
                s.expected_logprob = item.at("expected_logprob").get<double>();
                s.logprob_variance = item.at("logprob_variance").get<double>();
                out.push_back(s);
            }
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(std::string("malformed token score response: ") + e.what());
        }
        if (out.empty()) throw ProviderError("token score endpoint returned no positions");
        return out;
    }

    RetryPolicy& retry_policy() { return policy_; }

private:
    ProviderConfig config_;
    HttpTransport transport_;
    std::shared_ptr<RateLimiter> limiter_;
    RetryPolicy policy_;
};

}  // namespace semdetect
