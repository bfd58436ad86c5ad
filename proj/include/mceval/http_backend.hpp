#pragma once

#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mceval/backend.hpp"
#include "mceval/common.hpp"

namespace mceval {

// JSON field names and paths of the completion service. Defaults mirror the
// de-facto completion-API shape; override per backend in the config file.
// See docs/wire_protocol.md.
struct WireSpec {
    std::string completions_path = "/v1/completions";
    std::string embeddings_path = "/v1/embeddings";

    std::string req_model = "model";
    std::string req_prompt = "prompt";
    std::string req_max_tokens = "max_tokens";
    std::string req_temperature = "temperature";
    std::string req_logprobs = "logprobs";
    std::string req_echo = "echo";
    std::string req_stop = "stop";
    std::string req_input = "input";

    std::string res_choices = "choices";
    std::string res_text = "text";
    std::string res_finish_reason = "finish_reason";
    std::string res_logprobs = "logprobs";
    std::string res_tokens = "tokens";
    std::string res_token_logprobs = "token_logprobs";
    std::string res_top_logprobs = "top_logprobs";
    std::string res_embedding_data = "data";
    std::string res_embedding = "embedding";
};

// Completion-service transport. Throws TransportError on connection failures
// and 5xx (retryable, handled by BackendClient) and Error on everything that
// retrying cannot fix (4xx, malformed bodies).
class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendDescriptor desc, WireSpec wire = {})
        : desc_(std::move(desc)), wire_(std::move(wire)) {
        if (desc_.endpoint.empty()) throw Error("http backend: endpoint not set");
    }

    const BackendDescriptor& descriptor() const override { return desc_; }

    Completion complete(const CompletionRequest& req) override {
        nlohmann::json body;
        body[wire_.req_model] = req.model.empty() ? desc_.model : req.model;
        body[wire_.req_prompt] = req.prompt;
        body[wire_.req_max_tokens] = req.max_tokens;
        body[wire_.req_temperature] = req.temperature;
        if (req.want_logprobs || req.top_logprobs > 0) body[wire_.req_logprobs] = req.top_logprobs;
        if (req.echo) body[wire_.req_echo] = true;
        if (!req.stop.empty()) body[wire_.req_stop] = req.stop;

        nlohmann::json res = post_json(wire_.completions_path, body);
        const nlohmann::json& choice = first_choice(res);

        Completion out;
        out.text = choice.value(wire_.res_text, "");
        std::string fr = choice.value(wire_.res_finish_reason, "stop");
        out.finish_reason = fr == "length" ? FinishReason::length
                          : fr == "stop"   ? FinishReason::stop
                                           : FinishReason::error;
        if (choice.contains(wire_.res_logprobs) && choice[wire_.res_logprobs].is_object())
            out.tokens = parse_logprobs(choice[wire_.res_logprobs]);
        return out;
    }

    TokenLogProbs score_continuation(const std::string& prefix, const std::string& continuation) override {
        if (continuation.empty()) return {};
        // Echo-score the concatenation, then isolate the continuation's token
        // suffix. Tokenizers merge across boundaries, so when no suffix of the
        // echoed tokens reproduces the continuation (whitespace-collapsed), a
        // sentinel newline between prefix and continuation forces a boundary
        // and the span is re-scored once.
        if (!prefix.empty()) {
            auto echoed = echo_score(prefix + continuation);
            if (auto t = isolate_suffix(echoed, continuation)) return *t;
        }
        auto echoed = echo_score(prefix + "\n" + continuation);
        if (auto t = isolate_suffix(echoed, continuation)) return *t;
        throw Error("score_continuation: cannot isolate continuation tokens (no clean boundary)");
    }

    FirstTokenAlternatives first_token_alternatives(const std::string& prompt, int top_n) override {
        nlohmann::json body;
        body[wire_.req_model] = desc_.model;
        body[wire_.req_prompt] = prompt;
        body[wire_.req_max_tokens] = 1;
        body[wire_.req_temperature] = 0.0;
        body[wire_.req_logprobs] = top_n;

        nlohmann::json res = post_json(wire_.completions_path, body);
        const nlohmann::json& choice = first_choice(res);
        if (!choice.contains(wire_.res_logprobs) || !choice[wire_.res_logprobs].is_object())
            throw Error("backend did not return logprobs for first token");
        const auto& lp = choice[wire_.res_logprobs];
        if (!lp.contains(wire_.res_top_logprobs) || lp[wire_.res_top_logprobs].empty())
            throw Error("backend did not return top alternatives for first token");
        const auto& top0 = lp[wire_.res_top_logprobs][0];
        FirstTokenAlternatives alts;
        for (auto it = top0.begin(); it != top0.end(); ++it)
            alts.emplace_back(it.key(), it.value().get<double>());
        return alts;
    }

    std::vector<double> embed(const std::string& text) override {
        nlohmann::json body;
        body[wire_.req_model] = desc_.model;
        body[wire_.req_input] = text;
        nlohmann::json res = post_json(wire_.embeddings_path, body);
        if (!res.contains(wire_.res_embedding_data) || res[wire_.res_embedding_data].empty())
            throw Error("embeddings response missing data");
        return res[wire_.res_embedding_data][0][wire_.res_embedding].get<std::vector<double>>();
    }

private:
    nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
        httplib::Client cli(desc_.endpoint);
        cli.set_read_timeout(600, 0);
        cli.set_connection_timeout(30, 0);
        httplib::Headers headers;
        if (!desc_.auth_env.empty()) {
            const char* tok = std::getenv(desc_.auth_env.c_str());
            if (tok && *tok) headers.emplace("Authorization", std::string("Bearer ") + tok);
        }
        auto res = cli.Post(path, headers, body.dump(), "application/json");
        if (!res) throw TransportError("http: " + httplib::to_string(res.error()) + " (" + desc_.endpoint + path + ")");
        if (res->status >= 500) throw TransportError("http: server error " + std::to_string(res->status));
        if (res->status != 200) throw Error("http: status " + std::to_string(res->status) + ": " + str::excerpt(res->body, 200));
        nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.is_discarded()) throw Error("http: malformed JSON response");
        return j;
    }

    const nlohmann::json& first_choice(const nlohmann::json& res) {
        if (!res.contains(wire_.res_choices) || !res[wire_.res_choices].is_array() ||
            res[wire_.res_choices].empty())
            throw Error("completion response has no choices");
        return res[wire_.res_choices][0];
    }

    TokenLogProbs parse_logprobs(const nlohmann::json& lp) {
        TokenLogProbs out;
        if (!lp.contains(wire_.res_tokens) || !lp.contains(wire_.res_token_logprobs)) return out;
        const auto& toks = lp[wire_.res_tokens];
        const auto& lps = lp[wire_.res_token_logprobs];
        for (size_t i = 0; i < toks.size() && i < lps.size(); ++i) {
            TokenLogProb e;
            e.token = toks[i].get<std::string>();
            // the very first prompt token has no conditioning context and
            // comes back null; carry it as NaN so suffix isolation can reject it
            e.logprob = lps[i].is_null() ? std::numeric_limits<double>::quiet_NaN()
                                         : lps[i].get<double>();
            if (lp.contains(wire_.res_top_logprobs) && lp[wire_.res_top_logprobs].is_array() &&
                i < lp[wire_.res_top_logprobs].size() && lp[wire_.res_top_logprobs][i].is_object()) {
                for (auto it = lp[wire_.res_top_logprobs][i].begin();
                     it != lp[wire_.res_top_logprobs][i].end(); ++it)
                    e.top_alternatives[it.key()] = it.value().get<double>();
            }
            out.entries.push_back(std::move(e));
        }
        return out;
    }

    TokenLogProbs echo_score(const std::string& text) {
        CompletionRequest req;
        req.model = desc_.model;
        req.prompt = text;
        req.max_tokens = 0;
        req.temperature = 0.0;
        req.want_logprobs = true;
        req.echo = true;
        Completion c = complete(req);
        if (!c.tokens || c.tokens->empty()) throw Error("echo scoring returned no token logprobs");
        return *c.tokens;
    }

    // Shortest token suffix whose concatenated text equals the continuation
    // after whitespace collapse; rejects suffixes containing a null logprob.
    static std::optional<TokenLogProbs> isolate_suffix(const TokenLogProbs& echoed,
                                                        const std::string& continuation) {
        std::string target = str::collapse_whitespace(continuation);
        std::string acc;
        const auto& e = echoed.entries;
        for (size_t take = 1; take <= e.size(); ++take) {
            acc = e[e.size() - take].token + acc;
            std::string collapsed = str::collapse_whitespace(acc);
            if (collapsed == target) {
                TokenLogProbs out;
                for (size_t i = e.size() - take; i < e.size(); ++i) {
                    if (std::isnan(e[i].logprob)) return std::nullopt;
                    out.entries.push_back(e[i]);
                }
                return out;
            }
            // collapsed length only grows as tokens are prepended
            if (collapsed.size() > target.size()) break;
        }
        return std::nullopt;
    }

    BackendDescriptor desc_;
    WireSpec wire_;
};

} // namespace mceval
