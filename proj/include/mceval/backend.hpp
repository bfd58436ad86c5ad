#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mceval/common.hpp"

namespace mceval {

struct TokenLogProb {
    std::string token;
    double logprob = 0.0;                            // <= 0
    std::map<std::string, double> top_alternatives;  // token text -> logprob
};

// Ordered per-token log-probabilities for a scored span, in scoring order.
struct TokenLogProbs {
    std::vector<TokenLogProb> entries;

    size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
    std::vector<double> logprobs() const {
        std::vector<double> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(e.logprob);
        return out;
    }
};

struct CompletionRequest {
    std::string model;
    std::string prompt;
    int max_tokens = 16;
    double temperature = 0.0;      // 0 = greedy; all reproducible runs use 0
    bool want_logprobs = false;
    int top_logprobs = 0;          // alternatives per position when > 0
    std::vector<std::string> stop;
    bool echo = false;             // echo-score the prompt tokens (scoring path)
};

enum class FinishReason { stop, length, error };

inline std::string to_string(FinishReason r) {
    switch (r) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        default: return "error";
    }
}

struct Completion {
    std::string text;
    std::optional<TokenLogProbs> tokens;
    FinishReason finish_reason = FinishReason::stop;
};

enum class BackendKind { http_completion, mock };

struct Capabilities {
    bool score_continuation = false;
    bool first_token_distribution = false;
    bool embeddings = false;
};

struct BackendDescriptor {
    BackendKind kind = BackendKind::mock;
    std::string endpoint;        // base URL for http kind
    std::string model;
    std::string auth_env;        // env var holding the bearer token; empty = none
    Capabilities capabilities;
    int concurrency = 8;
    int retries = 3;
    std::string script_path;     // mock kind: rule script file
};

// Raw first-position alternatives: token text -> logprob, as reported by the
// backend for the first generated token.
using FirstTokenAlternatives = std::vector<std::pair<std::string, double>>;

// Transport interface. Implementations: HttpBackend (completion service) and
// MockBackend (deterministic scripted). Callers go through BackendClient,
// which adds the cache, retries, and capability preflight.
class Backend {
public:
    virtual ~Backend() = default;
    virtual const BackendDescriptor& descriptor() const = 0;
    virtual Completion complete(const CompletionRequest& req) = 0;
    // Log-probs for exactly the continuation's tokens, conditioned on prefix.
    virtual TokenLogProbs score_continuation(const std::string& prefix,
                                             const std::string& continuation) = 0;
    virtual FirstTokenAlternatives first_token_alternatives(const std::string& prompt,
                                                            int top_n) = 0;
    virtual std::vector<double> embed(const std::string& text) = 0;
};

// Per-candidate first-token probabilities. Raw values are exp(logprob) of the
// candidate at position 1; candidates missing from the reported alternatives
// get probability 0 with the absent flag set.
struct FirstTokenDistribution {
    std::map<std::string, double> raw;
    std::map<std::string, bool> absent;

    std::map<std::string, double> renormalized() const {
        double sum = 0.0;
        for (const auto& [_, p] : raw) sum += p;
        std::map<std::string, double> out;
        for (const auto& [k, p] : raw) out[k] = sum > 0.0 ? p / sum : 0.0;
        return out;
    }

    bool all_absent() const {
        for (const auto& [_, a] : absent)
            if (!a) return false;
        return true;
    }
};

} // namespace mceval
