#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "semdetect/common.hpp"

namespace semdetect {

struct ChatRequest {
    std::string system_prompt;
    std::string user_prompt;
    double temperature = 1.0;
    int max_tokens = 3072;
    std::string model_name;
};

struct EmbeddingVector {
    std::vector<double> values;
    std::string model_name;
};

// Per-position token statistics under the reference model. The
// expectation/variance of log p over the next-token distribution are what
// the curvature score needs; nothing else about the distribution crosses
// the provider boundary.
struct TokenScore {
    double logprob_actual = 0.0;   // <= 0
    double entropy = 0.0;          // nats, >= 0
    bool in_top_k = false;
    double expected_logprob = 0.0;
    double logprob_variance = 0.0;  // >= 0
};

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string chat_complete(const ChatRequest& request) = 0;
    virtual int max_tokens_limit() const { return 32768; }
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) = 0;
};

class TokenScorer {
public:
    virtual ~TokenScorer() = default;
    virtual std::vector<TokenScore> score_tokens(const std::string& text, int top_k) = 0;
};

inline void validate_chat_request(const ChatRequest& r, int provider_limit) {
    if (trim(r.system_prompt).empty() || trim(r.user_prompt).empty())
        throw ProviderError("chat request with empty prompt");
    if (r.max_tokens <= 0) throw ProviderError("chat request max_tokens must be positive");
    if (r.max_tokens > provider_limit)
        throw ProviderError("chat request max_tokens " + std::to_string(r.max_tokens) +
                            " exceeds provider limit " + std::to_string(provider_limit));
    if (r.temperature < 0) throw ProviderError("chat request temperature must be >= 0");
}

inline void normalize_embedding(EmbeddingVector& v) {
    double norm = 0.0;
    for (double x : v.values) norm += x * x;
    norm = std::sqrt(norm);
    if (norm <= 0.0) throw ProviderError("zero embedding vector from provider");
    for (double& x : v.values) x /= norm;
}

// Token-bucket admission on requests/minute and tokens/minute.
class RateLimiter {
public:
    RateLimiter(double requests_per_minute, double tokens_per_minute)
        : rpm_(requests_per_minute),
          tpm_(tokens_per_minute),
          req_budget_(requests_per_minute),
          tok_budget_(tokens_per_minute),
          last_(Clock::now()) {}

    // Blocks until one request worth `tokens` may be admitted.
    void acquire(double tokens) {
        std::unique_lock<std::mutex> lock(mu_);
        for (;;) {
            refill();
            if (req_budget_ >= 1.0 && tok_budget_ >= tokens) {
                req_budget_ -= 1.0;
                tok_budget_ -= tokens;
                return;
            }
            cv_.wait_for(lock, std::chrono::milliseconds(20));
        }
    }

private:
    using Clock = std::chrono::steady_clock;

    void refill() {
        auto now = Clock::now();
        double minutes = std::chrono::duration<double>(now - last_).count() / 60.0;
        last_ = now;
        req_budget_ = std::min(rpm_, req_budget_ + minutes * rpm_);
        tok_budget_ = std::min(tpm_, tok_budget_ + minutes * tpm_);
    }

    double rpm_, tpm_;
    double req_budget_, tok_budget_;
    Clock::time_point last_;
    std::mutex mu_;
    std::condition_variable cv_;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{200};
    std::chrono::milliseconds max_delay{10000};
    std::function<void(std::chrono::milliseconds)> sleeper =
        [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
};

// Runs `op` with bounded exponential backoff. `op` throws ProviderError with
// transient=true semantics via RetryableError; anything else propagates.
struct RetryableError : ProviderError {
    using ProviderError::ProviderError;
};

template <typename F>
auto with_retries(const RetryPolicy& policy, F&& op) -> decltype(op()) {
    std::chrono::milliseconds delay = policy.base_delay;
    for (int attempt = 1;; ++attempt) {
        try {
            return op();
        } catch (const RetryableError& e) {
            if (attempt >= policy.max_attempts)
                throw ProviderError("retries exhausted after " + std::to_string(attempt) +
                                    " attempts: " + e.what());
            policy.sleeper(delay);
            delay = std::min(policy.max_delay, delay * 2);
        }
    }
}

struct ProviderConfig {
    std::string backend = "stub";  // "stub" or "http"
    std::string endpoint;
    std::string model_name;
    std::string credential_env;  // credentials only ever come from the environment
    double requests_per_minute = 600;
    double tokens_per_minute = 1e6;
    double timeout_seconds = 60;
    int retry_count = 3;
    uint64_t stub_seed = 0;
    int stub_dim = 64;  // embedding backend only

    std::string credential() const {
        if (credential_env.empty()) return {};
        const char* v = std::getenv(credential_env.c_str());
        if (!v) throw ConfigError("credential environment variable not set: " + credential_env);
        return v;
    }
};

// key = value lines; '#' starts a comment. Keys are scoped by a prefix,
// e.g. "chat.endpoint".
inline std::map<std::string, std::string> parse_kv_file(std::istream& in,
                                                        const std::string& origin = "<config>") {
    std::map<std::string, std::string> kv;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

inline ProviderConfig provider_config_from_kv(const std::map<std::string, std::string>& kv,
                                              const std::string& prefix) {
    ProviderConfig c;
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(prefix + "." + key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto* v = get("backend")) c.backend = *v;
    if (auto* v = get("endpoint")) c.endpoint = *v;
    if (auto* v = get("model")) c.model_name = *v;
    if (auto* v = get("credential_env")) c.credential_env = *v;
    if (auto* v = get("requests_per_minute")) c.requests_per_minute = std::stod(*v);
    if (auto* v = get("tokens_per_minute")) c.tokens_per_minute = std::stod(*v);
    if (auto* v = get("timeout_seconds")) c.timeout_seconds = std::stod(*v);
    if (auto* v = get("retry_count")) c.retry_count = std::stoi(*v);
    if (auto* v = get("stub_seed")) c.stub_seed = std::stoull(*v);
    if (auto* v = get("stub_dim")) c.stub_dim = std::stoi(*v);
    if (c.backend != "stub" && c.backend != "http")
        throw ConfigError(prefix + ".backend must be 'stub' or 'http', got '" + c.backend + "'");
    if (c.backend == "http" && c.endpoint.empty())
        throw ConfigError(prefix + ": http backend requires an endpoint");
    return c;
}

}  // namespace semdetect
