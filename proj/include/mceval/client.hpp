#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mceval/backend.hpp"
#include "mceval/cache.hpp"
#include "mceval/common.hpp"

namespace mceval {

struct RetryPolicy {
    int attempts = 3;
    int initial_backoff_ms = 1000;
    double multiplier = 2.0;
};

struct UsageCounters {
    uint64_t cache_hits = 0;
    uint64_t cache_misses = 0;     // requests that reached the transport (counted once)
    uint64_t transport_retries = 0;
};

namespace detail {

// Bounded in-flight gate; shared across all workers using one client.
class ConcurrencyGate {
public:
    explicit ConcurrencyGate(int limit) : limit_(limit > 0 ? limit : 1) {}

    struct Ticket {
        ConcurrencyGate* gate;
        ~Ticket() { gate->release(); }
    };

    Ticket acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return in_flight_ < limit_; });
        ++in_flight_;
        return Ticket{this};
    }

private:
    void release() {
        {
            std::lock_guard lock(mu_);
            --in_flight_;
        }
        cv_.notify_one();
    }

    std::mutex mu_;
    std::condition_variable cv_;
    int limit_;
    int in_flight_ = 0;
};

inline nlohmann::json completion_to_json(const Completion& c) {
    nlohmann::json j;
    j["text"] = c.text;
    j["finish_reason"] = to_string(c.finish_reason);
    if (c.tokens) {
        nlohmann::json toks = nlohmann::json::array();
        for (const auto& e : c.tokens->entries) {
            nlohmann::json t = {e.token, e.logprob};
            if (!e.top_alternatives.empty()) t.push_back(e.top_alternatives);
            toks.push_back(std::move(t));
        }
        j["tokens"] = std::move(toks);
    }
    return j;
}

inline Completion completion_from_json(const nlohmann::json& j) {
    Completion c;
    c.text = j.value("text", "");
    std::string fr = j.value("finish_reason", "stop");
    c.finish_reason = fr == "length" ? FinishReason::length
                    : fr == "stop"   ? FinishReason::stop
                                     : FinishReason::error;
    if (j.contains("tokens")) {
        TokenLogProbs t;
        for (const auto& e : j["tokens"]) {
            TokenLogProb tok;
            tok.token = e.at(0).get<std::string>();
            tok.logprob = e.at(1).get<double>();
            if (e.size() > 2) tok.top_alternatives = e.at(2).get<std::map<std::string, double>>();
            t.entries.push_back(std::move(tok));
        }
        c.tokens = std::move(t);
    }
    return c;
}

inline nlohmann::json token_logprobs_to_json(const TokenLogProbs& t) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : t.entries) j.push_back({e.token, e.logprob});
    return j;
}

inline TokenLogProbs token_logprobs_from_json(const nlohmann::json& j) {
    TokenLogProbs t;
    for (const auto& e : j) t.entries.push_back({e.at(0).get<std::string>(), e.at(1).get<double>(), {}});
    return t;
}

} // namespace detail

// Front door for all model access. Routes every operation through the
// content-addressed cache, retries transport failures with exponential
// backoff, enforces capability flags before issuing a call, and bounds
// in-flight requests. Shareable across worker threads.
class BackendClient {
public:
    BackendClient(std::shared_ptr<Backend> backend, std::optional<ResponseCache> cache,
                  RetryPolicy retry = {})
        : backend_(std::move(backend)),
          cache_(std::move(cache)),
          retry_(retry),
          gate_(backend_->descriptor().concurrency) {}

    const BackendDescriptor& descriptor() const { return backend_->descriptor(); }

    Completion complete(const CompletionRequest& req, std::string* cache_key = nullptr) {
        nlohmann::json canon = {{"op", "complete"},
                                {"model", model_of(req)},
                                {"prompt", req.prompt},
                                {"max_tokens", req.max_tokens},
                                {"temperature", req.temperature},
                                {"want_logprobs", req.want_logprobs},
                                {"top_logprobs", req.top_logprobs},
                                {"stop", req.stop},
                                {"echo", req.echo}};
        auto res = cached(canon, cache_key, [&] { return detail::completion_to_json(backend_->complete(req)); });
        return detail::completion_from_json(res);
    }

    TokenLogProbs score_continuation(const std::string& prefix, const std::string& continuation,
                                     std::string* cache_key = nullptr) {
        require(descriptor().capabilities.score_continuation, "score_continuation");
        nlohmann::json canon = {{"op", "score"},
                                {"model", descriptor().model},
                                {"prefix", prefix},
                                {"continuation", continuation}};
        auto res = cached(canon, cache_key, [&] {
            return detail::token_logprobs_to_json(backend_->score_continuation(prefix, continuation));
        });
        return detail::token_logprobs_from_json(res);
    }

    // Raw (unnormalized) probabilities for each candidate at the first
    // generated position; absent candidates get 0 with the absent flag.
    FirstTokenDistribution first_token_distribution(const std::string& prompt,
                                                    const std::vector<std::string>& candidates,
                                                    int top_n = 20,
                                                    std::string* cache_key = nullptr) {
        require(descriptor().capabilities.first_token_distribution, "first_token_distribution");
        nlohmann::json canon = {{"op", "first_token"},
                                {"model", descriptor().model},
                                {"prompt", prompt},
                                {"top_n", top_n}};
        auto res = cached(canon, cache_key, [&] {
            nlohmann::json j = nlohmann::json::array();
            for (const auto& [tok, lp] : backend_->first_token_alternatives(prompt, top_n))
                j.push_back({tok, lp});
            return j;
        });
        FirstTokenDistribution dist;
        for (const auto& cand : candidates) {
            dist.raw[cand] = 0.0;
            dist.absent[cand] = true;
        }
        for (const auto& e : res) {
            // candidate matching tolerates the leading-space token variant
            std::string tok = e.at(0).get<std::string>();
            std::string trimmed = str::trim(tok);
            for (const auto& cand : candidates) {
                if (tok == cand || trimmed == cand) {
                    double p = std::exp(e.at(1).get<double>());
                    if (dist.absent[cand] || p > dist.raw[cand]) {
                        dist.raw[cand] = p;
                        dist.absent[cand] = false;
                    }
                }
            }
        }
        return dist;
    }

    std::vector<double> embed(const std::string& text, std::string* cache_key = nullptr) {
        require(descriptor().capabilities.embeddings, "embeddings");
        nlohmann::json canon = {{"op", "embed"}, {"model", descriptor().model}, {"text", text}};
        auto res = cached(canon, cache_key, [&] { return nlohmann::json(backend_->embed(text)); });
        return res.get<std::vector<double>>();
    }

    UsageCounters usage() const {
        return {cache_hits_.load(), cache_misses_.load(), transport_retries_.load()};
    }

    void reset_usage() {
        cache_hits_ = 0;
        cache_misses_ = 0;
        transport_retries_ = 0;
    }

private:
    std::string model_of(const CompletionRequest& req) const {
        return req.model.empty() ? descriptor().model : req.model;
    }

    void require(bool capability, const char* name) const {
        if (!capability)
            throw Error(std::string("backend '") + descriptor().model + "' lacks capability: " + name);
    }

    template <typename Fn>
    nlohmann::json cached(const nlohmann::json& canon, std::string* key_out, Fn&& transport) {
        std::string key = ResponseCache::key_for(canon);
        if (key_out) *key_out = key;
        if (cache_) {
            if (auto hit = cache_->get(key)) {
                ++cache_hits_;
                return *hit;
            }
        }
        ++cache_misses_;
        nlohmann::json res = with_retry(std::forward<Fn>(transport));
        if (cache_) cache_->put(key, res, descriptor().model);
        return res;
    }

    template <typename Fn>
    nlohmann::json with_retry(Fn&& transport) {
        auto ticket = gate_.acquire();
        int backoff_ms = retry_.initial_backoff_ms;
        for (int attempt = 1;; ++attempt) {
            try {
                return transport();
            } catch (const TransportError&) {
                if (attempt >= retry_.attempts) throw;
                ++transport_retries_;
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
                backoff_ms = static_cast<int>(backoff_ms * retry_.multiplier);
            }
        }
    }

    std::shared_ptr<Backend> backend_;
    std::optional<ResponseCache> cache_;
    RetryPolicy retry_;
    detail::ConcurrencyGate gate_;
    std::atomic<uint64_t> cache_hits_{0}, cache_misses_{0}, transport_retries_{0};
};

} // namespace mceval
