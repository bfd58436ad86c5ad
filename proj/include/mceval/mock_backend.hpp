#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mceval/backend.hpp"
#include "mceval/common.hpp"
#include "mceval/sha256.hpp"

namespace mceval {

// One scripted behavior. All specified match conditions must hold; rules are
// tried in order and the first match wins.
struct MockRule {
    enum class Op { any, complete, score, first_token, embed };
    Op op = Op::any;

    // match conditions (prompt means prefix for score rules)
    std::vector<std::string> prompt_contains;
    std::string prompt_ends_with;
    std::string continuation_equals;      // compared after whitespace collapse

    // responses
    std::string text;                                         // complete
    std::optional<FinishReason> finish_reason;
    std::vector<std::pair<std::string, double>> token_logprobs;   // score
    double logprob_shift = 0.0;                               // added to every scored logprob
    bool score_from_continuation = false;                     // synthesize logprobs from the span
    std::map<std::string, double> first_token;                // first_token: token -> logprob
    std::vector<double> embedding;                            // embed
    int hash_embedding_dim = 0;                               // embed: synthesize from text hash
    bool fail_transport = false;                              // raise TransportError instead
    int fail_times = 0;                                       // 0 = always; else fail first N matches
};

// Deterministic scriptable backend. A fixed script produces identical outputs
// across runs and platforms; call counters support the zero-network-call
// assertions in cache tests.
class MockBackend : public Backend {
public:
    explicit MockBackend(BackendDescriptor desc = default_descriptor()) : desc_(std::move(desc)) {}

    static BackendDescriptor default_descriptor() {
        BackendDescriptor d;
        d.kind = BackendKind::mock;
        d.model = "mock";
        d.capabilities = {true, true, true};
        return d;
    }

    void add_rule(MockRule rule) { rules_.push_back(std::move(rule)); }

    const BackendDescriptor& descriptor() const override { return desc_; }

    Completion complete(const CompletionRequest& req) override {
        ++calls_complete_;
        MockRule* r = match(MockRule::Op::complete, req.prompt, {});
        if (!r) throw Error("mock: no rule matches complete() prompt: " + str::excerpt(req.prompt));
        maybe_fail(*r);
        Completion c;
        c.text = r->text;
        c.finish_reason = r->finish_reason.value_or(FinishReason::stop);
        if (req.want_logprobs && !r->token_logprobs.empty()) {
            TokenLogProbs t;
            for (const auto& [tok, lp] : r->token_logprobs) t.entries.push_back({tok, lp + r->logprob_shift, {}});
            c.tokens = std::move(t);
        }
        return c;
    }

    TokenLogProbs score_continuation(const std::string& prefix, const std::string& continuation) override {
        ++calls_score_;
        if (continuation.empty()) return {};
        MockRule* r = match(MockRule::Op::score, prefix, continuation);
        if (!r) throw Error("mock: no rule matches score_continuation: " + str::excerpt(continuation));
        maybe_fail(*r);
        TokenLogProbs t;
        if (r->score_from_continuation) {
            // Hash-derived logprobs over whitespace tokens: stable across runs,
            // distinct across spans.
            auto words = split_words(continuation);
            for (size_t i = 0; i < words.size(); ++i) {
                double lp = -synth_unit(words[i], i) * 10.0 - 1e-3;
                t.entries.push_back({words[i], lp + r->logprob_shift, {}});
            }
        } else {
            for (const auto& [tok, lp] : r->token_logprobs) t.entries.push_back({tok, lp + r->logprob_shift, {}});
        }
        return t;
    }

    FirstTokenAlternatives first_token_alternatives(const std::string& prompt, int top_n) override {
        ++calls_first_token_;
        MockRule* r = match(MockRule::Op::first_token, prompt, {});
        if (!r) throw Error("mock: no rule matches first_token_alternatives: " + str::excerpt(prompt));
        maybe_fail(*r);
        FirstTokenAlternatives alts(r->first_token.begin(), r->first_token.end());
        if (top_n > 0 && alts.size() > static_cast<size_t>(top_n)) {
            std::sort(alts.begin(), alts.end(),
                      [](const auto& a, const auto& b) { return a.second > b.second; });
            alts.resize(static_cast<size_t>(top_n));
        }
        return alts;
    }

    std::vector<double> embed(const std::string& text) override {
        ++calls_embed_;
        MockRule* r = match(MockRule::Op::embed, text, {});
        if (!r) throw Error("mock: no rule matches embed: " + str::excerpt(text));
        maybe_fail(*r);
        if (r->hash_embedding_dim > 0) {
            std::vector<double> v(static_cast<size_t>(r->hash_embedding_dim));
            for (size_t i = 0; i < v.size(); ++i) v[i] = synth_unit(text, i) * 2.0 - 1.0;
            return v;
        }
        return r->embedding;
    }

    uint64_t total_calls() const {
        return calls_complete_ + calls_score_ + calls_first_token_ + calls_embed_;
    }
    uint64_t calls_complete() const { return calls_complete_; }
    uint64_t calls_score() const { return calls_score_; }
    uint64_t calls_first_token() const { return calls_first_token_; }
    uint64_t calls_embed() const { return calls_embed_; }

    // Script file: a JSON array of rule objects. Field names mirror MockRule;
    // see docs/mock_scripts.md.
    static std::shared_ptr<MockBackend> from_script_file(const std::filesystem::path& path,
                                                         BackendDescriptor desc) {
        std::ifstream in(path);
        if (!in) throw Error("mock: cannot open script: " + path.string());
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_array()) throw Error("mock: script must be a JSON array: " + path.string());
        auto backend = std::make_shared<MockBackend>(std::move(desc));
        for (const auto& rj : j) backend->add_rule(rule_from_json(rj));
        return backend;
    }

    static MockRule rule_from_json(const nlohmann::json& j) {
        MockRule r;
        std::string op = j.value("op", "any");
        if (op == "complete") r.op = MockRule::Op::complete;
        else if (op == "score") r.op = MockRule::Op::score;
        else if (op == "first_token") r.op = MockRule::Op::first_token;
        else if (op == "embed") r.op = MockRule::Op::embed;
        else if (op == "any") r.op = MockRule::Op::any;
        else throw Error("mock: unknown rule op: " + op);
        if (j.contains("prompt_contains")) {
            if (j["prompt_contains"].is_array())
                r.prompt_contains = j["prompt_contains"].get<std::vector<std::string>>();
            else
                r.prompt_contains = {j["prompt_contains"].get<std::string>()};
        }
        r.prompt_ends_with = j.value("prompt_ends_with", "");
        r.continuation_equals = j.value("continuation_equals", "");
        r.text = j.value("text", "");
        if (j.contains("token_logprobs"))
            for (const auto& e : j["token_logprobs"])
                r.token_logprobs.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
        r.logprob_shift = j.value("logprob_shift", 0.0);
        r.score_from_continuation = j.value("score_from_continuation", false);
        if (j.contains("first_token"))
            r.first_token = j["first_token"].get<std::map<std::string, double>>();
        if (j.contains("embedding")) r.embedding = j["embedding"].get<std::vector<double>>();
        r.hash_embedding_dim = j.value("hash_embedding_dim", 0);
        r.fail_transport = j.value("fail_transport", false);
        r.fail_times = j.value("fail_times", 0);
        return r;
    }

private:
    MockRule* match(MockRule::Op op, const std::string& prompt, const std::string& continuation) {
        std::string collapsed_cont =
            continuation.empty() ? std::string() : str::collapse_whitespace(continuation);
        for (auto& r : rules_) {
            if (r.op != MockRule::Op::any && r.op != op) continue;
            bool ok = true;
            for (const auto& needle : r.prompt_contains)
                if (!str::contains(prompt, needle)) { ok = false; break; }
            if (ok && !r.prompt_ends_with.empty() && !str::ends_with(prompt, r.prompt_ends_with)) ok = false;
            if (ok && !r.continuation_equals.empty() &&
                str::collapse_whitespace(r.continuation_equals) != collapsed_cont)
                ok = false;
            if (ok) return &r;
        }
        return nullptr;
    }

    // fail_times == 0 fails every match; N > 0 fails the first N then succeeds.
    void maybe_fail(MockRule& r) {
        if (!r.fail_transport) return;
        if (r.fail_times > 0 && --r.fail_times == 0) r.fail_transport = false;
        throw TransportError("mock: scripted transport failure");
    }

    static std::vector<std::string> split_words(const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (str::is_space(c)) {
                if (!cur.empty()) {
                    out.push_back(std::move(cur));
                    cur.clear();
                }
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) out.push_back(std::move(cur));
        return out;
    }

    // Deterministic value in [0,1) derived from (text, index).
    static double synth_unit(const std::string& text, size_t index) {
        std::string key = text + "#" + std::to_string(index);
        std::string h = sha256_hex(key);
        uint64_t v = 0;
        for (int i = 0; i < 13; ++i) {
            char c = h[static_cast<size_t>(i)];
            v = v * 16 + static_cast<uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
        }
        return static_cast<double>(v) / static_cast<double>(1ULL << 52);
    }

    BackendDescriptor desc_;
    std::vector<MockRule> rules_;
    std::atomic<uint64_t> calls_complete_{0}, calls_score_{0}, calls_first_token_{0}, calls_embed_{0};
};

} // namespace mceval
