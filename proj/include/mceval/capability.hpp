#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mceval/client.hpp"
#include "mceval/common.hpp"
#include "mceval/mcq.hpp"
#include "mceval/prompts.hpp"
#include "mceval/render.hpp"
#include "mceval/trinity_types.hpp"

namespace mceval {

struct CapabilityScore {
    std::string item_id;
    ItemFormat format = ItemFormat::trinity;
    double f_c = 0.0;                              // raw probability of the truth letter
    double f_c_renormalized = 0.0;
    std::map<std::string, double> option_probs;    // letter -> raw probability
    std::map<std::string, bool> absent;
    std::string ground_truth_letter;
    bool all_absent = false;                       // flagged for exclusion-sensitivity analysis
};

struct AnswerOutcome {
    std::string item_id;
    ItemFormat format = ItemFormat::original;
    std::string setting = "0s";                    // shot setting label, e.g. "0s"/"5s"
    std::optional<std::string> predicted_letter;
    bool correct = false;
    std::string raw_excerpt;
    bool ungradable = false;
};

// Zero-shot answer prompt in either format. Trinity needs the item's triplet.
inline std::string build_answer_prompt(const Mcq& mcq, ItemFormat format,
                                       const Triplet* triplet = nullptr) {
    std::string options = render_option_block(mcq.options);
    if (format == ItemFormat::original) {
        return prompts::fill_template(prompts::kAnswerOriginalTemplate,
                                      {{"[subject]", mcq.subject},
                                       {"[question]", mcq.question},
                                       {"[options]", options}});
    }
    if (!triplet) throw Error("build_answer_prompt: trinity format requires a triplet");
    return prompts::fill_template(prompts::kAnswerTrinityTemplate,
                                  {{"[subject]", mcq.subject},
                                   {"[entity]", triplet->entity},
                                   {"[attribute]", triplet->attribute},
                                   {"[context]", triplet->context ? *triplet->context : std::string("N/A")},
                                   {"[options]", options}});
}

// Few-shot answer prompt (answered examples, target question, option block,
// then "Answer:"), used for the memorized-vs-non-memorized accuracy runs.
inline std::string build_answer_prompt_fewshot(const Mcq& mcq, const std::vector<Mcq>& shots,
                                               const std::string& dataset_name) {
    return prompts::fill_template(prompts::kFewShotAnswerTemplate,
                                  {{"[dataset]", dataset_name},
                                   {"[subject]", mcq.subject},
                                   {"[examples]", render_examples_block(shots)},
                                   {"[question]", mcq.question},
                                   {"[options]", render_option_block(mcq.options)}});
}

inline std::vector<std::string> option_letters(int option_count) {
    std::vector<std::string> out;
    for (int i = 0; i < option_count; ++i) out.push_back(option_letter(i));
    return out;
}

// First-token probability of the ground-truth letter under the given prompt.
// The raw (unnormalized) value is the capability score; the renormalized view
// is recorded alongside. All letters absent is not an error: the score is 0
// with the all_absent flag set.
inline CapabilityScore score_first_token(const Mcq& mcq, BackendClient& backend,
                                         const std::string& prompt, ItemFormat format) {
    CapabilityScore s;
    s.item_id = mcq.id;
    s.format = format;
    s.ground_truth_letter = mcq.answer_letter();
    FirstTokenDistribution dist =
        backend.first_token_distribution(prompt, option_letters(mcq.option_count()));
    s.option_probs = dist.raw;
    s.absent = dist.absent;
    s.all_absent = dist.all_absent();
    s.f_c = dist.raw.at(s.ground_truth_letter);
    s.f_c_renormalized = dist.renormalized().at(s.ground_truth_letter);
    return s;
}

// Capability metric for a qualified item: probability of the truth letter as
// the first generated token of the trinity answer prompt.
inline CapabilityScore compute_f_c(const Mcq& mcq, const QualifiedItem& item,
                                   BackendClient& backend) {
    std::string prompt = build_answer_prompt(mcq, ItemFormat::trinity, &item.triplet);
    return score_first_token(mcq, backend, prompt, ItemFormat::trinity);
}

// ---------------------------------------------------------------------------
// Letter extraction for text-only backends
// ---------------------------------------------------------------------------

// Grading pattern, version 1: the predicted letter is the first standalone
// option letter in the response, where standalone means not embedded in a
// word. Leading "Answer:"-style prefixes, bullets, bold markers, parentheses
// and option restatements all resolve to that first letter. Anchored to the
// start of the response in the sense that scanning is left to right and the
// first hit wins.
inline std::optional<std::string> extract_predicted_letter(const std::string& response,
                                                           int option_count) {
    auto is_word_char = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0;
    };
    for (size_t i = 0; i < response.size(); ++i) {
        char c = response[i];
        if (c < 'A' || c >= static_cast<char>('A' + option_count)) continue;
        bool left_ok = i == 0 || !is_word_char(response[i - 1]);
        bool right_ok = i + 1 == response.size() || !is_word_char(response[i + 1]);
        if (left_ok && right_ok) return std::string(1, c);
    }
    return std::nullopt;
}

inline AnswerOutcome grade_answer(const Mcq& mcq, const std::string& response, ItemFormat format,
                                  const std::string& setting = "0s") {
    AnswerOutcome out;
    out.item_id = mcq.id;
    out.format = format;
    out.setting = setting;
    out.raw_excerpt = str::excerpt(response, 120);
    out.predicted_letter = extract_predicted_letter(response, mcq.option_count());
    if (!out.predicted_letter) {
        out.ungradable = true;
        out.correct = false;
        return out;
    }
    out.correct = *out.predicted_letter == mcq.answer_letter();
    return out;
}

// Greedy completion then regex-style grading of the predicted letter.
inline AnswerOutcome answer_and_grade(const Mcq& mcq, BackendClient& backend, ItemFormat format,
                                      const Triplet* triplet = nullptr,
                                      const std::string& setting = "0s", int max_tokens = 32,
                                      const std::string* prompt_override = nullptr) {
    std::string prompt =
        prompt_override ? *prompt_override : build_answer_prompt(mcq, format, triplet);
    CompletionRequest req;
    req.prompt = prompt;
    req.max_tokens = max_tokens;
    req.temperature = 0.0;
    Completion c = backend.complete(req);
    return grade_answer(mcq, c.text, format, setting);
}

// ---------------------------------------------------------------------------
// Knowledge-preservation overlap (original vs trinity outcomes)
// ---------------------------------------------------------------------------

struct OverlapReport {
    size_t n_items = 0;
    size_t correct_trinity = 0;
    size_t correct_original = 0;
    size_t intersection = 0;
    double p_original_given_trinity = 0.0;   // P(orig correct | trin correct)
    double p_trinity_given_original = 0.0;   // P(trin correct | orig correct)
};

// Both outcome lists must cover the same item ids (any order).
inline OverlapReport knowledge_preservation_stats(const std::vector<AnswerOutcome>& original,
                                                  const std::vector<AnswerOutcome>& trinity) {
    if (original.size() != trinity.size())
        throw Error("knowledge_preservation_stats: outcome lists differ in size");
    std::map<std::string, bool> orig_correct;
    for (const auto& o : original) orig_correct[o.item_id] = o.correct;
    if (orig_correct.size() != original.size())
        throw Error("knowledge_preservation_stats: duplicate ids in original outcomes");
    OverlapReport r;
    r.n_items = original.size();
    std::set<std::string> trin_ids;
    for (const auto& t : trinity) {
        auto it = orig_correct.find(t.item_id);
        if (it == orig_correct.end())
            throw Error("knowledge_preservation_stats: id mismatch: " + t.item_id);
        if (!trin_ids.insert(t.item_id).second)
            throw Error("knowledge_preservation_stats: duplicate ids in trinity outcomes");
        if (t.correct) ++r.correct_trinity;
        if (it->second) ++r.correct_original;
        if (t.correct && it->second) ++r.intersection;
    }
    if (r.correct_trinity > 0)
        r.p_original_given_trinity =
            static_cast<double>(r.intersection) / static_cast<double>(r.correct_trinity);
    if (r.correct_original > 0)
        r.p_trinity_given_original =
            static_cast<double>(r.intersection) / static_cast<double>(r.correct_original);
    return r;
}

} // namespace mceval
