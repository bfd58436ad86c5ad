#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "mceval/client.hpp"
#include "mceval/common.hpp"
#include "mceval/mcq.hpp"
#include "mceval/prompts.hpp"
#include "mceval/trinity_types.hpp"

namespace mceval {

// ---------------------------------------------------------------------------
// Prompt builders
// ---------------------------------------------------------------------------

// Builds the extract / validate / re-extract prompts. The few-shot examples
// block is editable fixture content; the built-in default ships two
// hand-written exemplars.
class TrinityPrompts {
public:
    TrinityPrompts() : examples_(default_examples()) {}
    explicit TrinityPrompts(std::string examples_block) : examples_(std::move(examples_block)) {}

    static TrinityPrompts from_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open trinity examples fixture: " + path.string());
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        while (!content.empty() && (content.back() == '\n' || content.back() == '\r')) content.pop_back();
        return TrinityPrompts(std::move(content));
    }

    std::string build_extract_prompt(const Mcq& mcq) const {
        return prompts::fill_template(prompts::kTrinityExtractTemplate,
                                      {{"[examples]", examples_},
                                       {"[fact]", prompts::render_fact_line(mcq)},
                                       {"[question]", mcq.question},
                                       {"[answer]", mcq.answer_option()}});
    }

    std::string build_validate_prompt(const Mcq& mcq, const Triplet& t) const {
        return prompts::fill_template(prompts::kTrinityValidateTemplate,
                                      {{"[subject]", mcq.subject},
                                       {"[question]", mcq.question},
                                       {"[answer]", mcq.answer_option()},
                                       {"[entity]", t.entity},
                                       {"[attribute]", t.attribute},
                                       {"[context]", t.context ? *t.context : std::string("N/A")}});
    }

    std::string build_reextract_prompt(const Mcq& mcq, const Triplet& previous,
                                       const std::string& rationale) const {
        return prompts::fill_template(
            prompts::kTrinityReextractTemplate,
            {{"[examples]", examples_},
             {"[fact]", prompts::render_fact_line(mcq)},
             {"[question]", mcq.question},
             {"[answer]", mcq.answer_option()},
             {"[previous entity]", previous.entity},
             {"[previous attribute]", previous.attribute},
             {"[previous context]", previous.context ? *previous.context : std::string("N/A")},
             {"[reflection]", rationale}});
    }

    static std::string default_examples();

private:
    std::string examples_;
};

inline std::string TrinityPrompts::default_examples() {
    return
        "**Question:** Which organ of the human body is primarily responsible for filtering "
        "blood and producing urine?\n"
        "\n"
        "**Answer:** The kidney\n"
        "\n"
        "- **Step-by-Step Reasoning:** The question asks about an organ of the human body. The "
        "questioned subject is the organ responsible for a specific function, so the Knowledge "
        "Keyword is the phrase naming that subject, \"organ of the human body\". The queried "
        "property is what the organ is \"primarily responsible for\", namely \"filtering blood "
        "and producing urine\". These two parts alone suffice to obtain the given Answer, so no "
        "further Context is required.\n"
        "- **Knowledge Keyword:** organ of the human body\n"
        "- **Attribute:** primarily responsible for filtering blood and producing urine\n"
        "- **Context:** N/A\n"
        "\n"
        "**Question:** Under standard atmospheric pressure, at what temperature in degrees "
        "Celsius does pure water boil?\n"
        "\n"
        "**Answer:** 100\n"
        "\n"
        "- **Step-by-Step Reasoning:** The question asks for the boiling temperature of pure "
        "water, so the Knowledge Keyword is \"pure water\" and the Attribute is the queried "
        "property, the temperature \"at what temperature in degrees Celsius does\" it boil. The "
        "answer depends on the stated pressure condition, so the Context \"Under standard "
        "atmospheric pressure\" is necessary to obtain the given Answer.\n"
        "- **Knowledge Keyword:** pure water\n"
        "- **Attribute:** at what temperature in degrees Celsius does it boil\n"
        "- **Context:** Under standard atmospheric pressure";
}

// ---------------------------------------------------------------------------
// Response parsers
// ---------------------------------------------------------------------------

struct TripletParse {
    bool ok = false;
    Triplet triplet;
    std::string error;
    std::string raw;
};

namespace detail {

enum class TripletLabel { reasoning, entity, attribute, context };

struct LabelHit {
    TripletLabel label;
    size_t line = 0;
    std::string inline_value;
};

// Matches a label line, tolerating dash/asterisk bullets, missing bold
// markers, label-case variation, and spaces before the colon.
inline std::optional<LabelHit> match_label_line(const std::string& line, size_t line_no) {
    static const std::pair<const char*, TripletLabel> kLabels[] = {
        {"step-by-step reasoning", TripletLabel::reasoning},
        {"knowledge keyword", TripletLabel::entity},
        {"knowledge entity", TripletLabel::entity},
        {"attribute", TripletLabel::attribute},
        {"context", TripletLabel::context},
    };
    size_t i = 0;
    while (i < line.size() && (str::is_space(line[i]) || line[i] == '-' || line[i] == '*' ||
                               line[i] == '+' || line[i] == '#'))
        ++i;
    std::string lower = str::to_lower(line.substr(i));
    for (const auto& [text, label] : kLabels) {
        std::string_view lab(text);
        if (!str::starts_with(lower, lab)) continue;
        size_t j = i + lab.size();
        while (j < line.size() && (line[j] == '*' || line[j] == '_' || line[j] == ' ')) ++j;
        if (j >= line.size() || line[j] != ':') continue;
        ++j;
        while (j < line.size() && (line[j] == '*' || line[j] == '_')) ++j;
        return LabelHit{label, line_no, str::trim(line.substr(j))};
    }
    return std::nullopt;
}

inline std::optional<std::string> normalize_context(const std::string& value) {
    std::string v = str::trim(value);
    while (!v.empty() && (v.back() == '.' || v.back() == '*')) v.pop_back();
    v = str::trim(v);
    if (v.empty()) return std::nullopt;
    std::string lower = str::to_lower(v);
    if (lower == "n/a" || lower == "na" || lower == "none") return std::nullopt;
    return str::trim(value);
}

} // namespace detail

// Extracts entity / attribute / context from an extractor response by
// scanning for the labeled lines. The last occurrence of each label wins;
// a field's value runs to the next label line or end of text.
inline TripletParse parse_triplet(const std::string& response) {
    TripletParse out;
    out.raw = response;
    auto lines = str::split_lines(response);
    std::vector<detail::LabelHit> hits;
    for (size_t i = 0; i < lines.size(); ++i)
        if (auto hit = detail::match_label_line(lines[i], i)) hits.push_back(*hit);

    auto value_of = [&](detail::TripletLabel want) -> std::optional<std::string> {
        const detail::LabelHit* last = nullptr;
        for (const auto& h : hits)
            if (h.label == want) last = &h;
        if (!last) return std::nullopt;
        size_t end_line = lines.size();
        for (const auto& h : hits)
            if (h.line > last->line) { end_line = h.line; break; }
        std::string value = last->inline_value;
        for (size_t i = last->line + 1; i < end_line; ++i) {
            value += "\n";
            value += lines[i];
        }
        return str::trim(value);
    };

    auto entity = value_of(detail::TripletLabel::entity);
    auto attribute = value_of(detail::TripletLabel::attribute);
    if (!entity || str::trim(*entity).empty()) {
        out.error = "missing Knowledge Keyword label";
        return out;
    }
    if (!attribute || str::trim(*attribute).empty()) {
        out.error = "missing Attribute label";
        return out;
    }
    out.ok = true;
    out.triplet.entity = *entity;
    out.triplet.attribute = *attribute;
    if (auto ctx = value_of(detail::TripletLabel::context))
        out.triplet.context = detail::normalize_context(*ctx);
    return out;
}

// Reads the validator's decision: the last standalone Yes/No after the last
// "Verdict" label wins. A response with no decodable Yes/No is treated as a
// rejection and flagged unparseable.
inline Verdict parse_verdict(const std::string& response) {
    Verdict v;
    std::string lower = str::to_lower(response);
    size_t label_pos = lower.rfind("verdict");
    size_t search_from = label_pos == std::string::npos ? 0 : label_pos;

    std::optional<bool> decision;
    for (size_t i = search_from; i < lower.size(); ++i) {
        if (std::isalpha(static_cast<unsigned char>(lower[i]))) {
            size_t j = i;
            while (j < lower.size() && std::isalpha(static_cast<unsigned char>(lower[j]))) ++j;
            std::string_view word(lower.data() + i, j - i);
            if (word == "yes") decision = true;
            else if (word == "no") decision = false;
            i = j;
        }
    }
    if (!decision) {
        v.accepted = false;
        v.unparseable = true;
        v.rationale = response;
        return v;
    }
    v.accepted = *decision;
    std::string reasoning =
        label_pos == std::string::npos ? response : response.substr(0, label_pos);
    // strip the trailing bullet/bold prefix of the verdict line itself
    while (!reasoning.empty() &&
           (reasoning.back() == '-' || reasoning.back() == '*' || str::is_space(reasoning.back())))
        reasoning.pop_back();
    v.rationale = str::trim(reasoning);
    if (!v.accepted && v.rationale.empty()) v.rationale = str::trim(response);
    return v;
}

// ---------------------------------------------------------------------------
// Verbatim span verification and answer-leakage check
// ---------------------------------------------------------------------------

struct FieldSpan {
    std::string field;               // "entity" / "attribute" / "context"
    bool matched = false;
    size_t begin = 0, end = 0;       // span in the whitespace-collapsed question
};

struct SpanReport {
    std::vector<FieldSpan> fields;
    bool all_matched = true;
};

// Reports, per triplet field, the match span in the whitespace-collapsed
// question, or no-match.
inline SpanReport verify_verbatim(const Triplet& t, const Mcq& mcq) {
    std::string question = str::collapse_whitespace(mcq.question);
    SpanReport report;
    auto check = [&](const std::string& name, const std::string& value) {
        FieldSpan fs;
        fs.field = name;
        std::string needle = str::collapse_whitespace(value);
        size_t pos = needle.empty() ? std::string::npos : question.find(needle);
        if (pos != std::string::npos) {
            fs.matched = true;
            fs.begin = pos;
            fs.end = pos + needle.size();
        } else {
            report.all_matched = false;
        }
        report.fields.push_back(fs);
    };
    check("entity", t.entity);
    check("attribute", t.attribute);
    if (t.context) check("context", *t.context);
    return report;
}

// True when any triplet field contains the full ground-truth option text
// (whitespace-collapsed substring).
inline bool answer_leakage(const Triplet& t, const Mcq& mcq) {
    std::string answer = str::collapse_whitespace(mcq.answer_option());
    if (answer.empty()) return false;
    auto leaks = [&](const std::string& field) {
        return str::contains(str::collapse_whitespace(field), answer);
    };
    return leaks(t.entity) || leaks(t.attribute) || (t.context && leaks(*t.context));
}

// ---------------------------------------------------------------------------
// Two-round extract -> validate -> reflect -> re-extract protocol
// ---------------------------------------------------------------------------

enum class VerbatimPolicy { off, warn, discard };

inline std::optional<VerbatimPolicy> verbatim_policy_from_string(const std::string& s) {
    if (s == "off") return VerbatimPolicy::off;
    if (s == "warn") return VerbatimPolicy::warn;
    if (s == "discard") return VerbatimPolicy::discard;
    return std::nullopt;
}

struct ReformulateOptions {
    VerbatimPolicy verify_verbatim = VerbatimPolicy::warn;
    int max_tokens = 2048;
};

struct ReformulateOutcome {
    std::optional<QualifiedItem> qualified;
    std::optional<Discarded> discarded;
    std::vector<std::string> warnings;   // verbatim no-match / answer leakage flags
    int backend_calls = 0;
};

// Runs the reformulation protocol for one item: extract, validate, and on
// rejection one reflective re-extract + re-validate. Two backend calls on
// round-1 acceptance, four otherwise; parse failures of the extractor
// discard immediately with reason "parse_failure".
inline ReformulateOutcome reformulate(const Mcq& mcq, BackendClient& backend,
                                      const TrinityPrompts& prompts,
                                      const ReformulateOptions& opts = {}) {
    ReformulateOutcome out;
    auto call = [&](const std::string& prompt) {
        CompletionRequest req;
        req.prompt = prompt;
        req.max_tokens = opts.max_tokens;
        req.temperature = 0.0;
        std::string key;
        Completion c = backend.complete(req, &key);
        ++out.backend_calls;
        return std::pair<std::string, std::string>(c.text, key);
    };
    std::vector<std::string> transcripts;

    auto finish_accept = [&](Triplet t, const std::string& rationale, int round) {
        t.rationale = rationale;
        t.round = round;
        if (opts.verify_verbatim != VerbatimPolicy::off) {
            SpanReport span = verify_verbatim(t, mcq);
            if (!span.all_matched) {
                if (opts.verify_verbatim == VerbatimPolicy::discard) {
                    out.discarded = Discarded{mcq.id, "verbatim_no_match", rationale, ""};
                    return;
                }
                for (const auto& f : span.fields)
                    if (!f.matched) out.warnings.push_back("verbatim_no_match:" + f.field);
            }
        }
        if (answer_leakage(t, mcq)) out.warnings.push_back("answer_leakage");
        QualifiedItem q;
        q.mcq_id = mcq.id;
        q.triplet = std::move(t);
        q.qualification = round == 1 ? Qualification::accepted_round_1 : Qualification::accepted_round_2;
        q.transcript_ids = transcripts;
        out.qualified = std::move(q);
    };

    // round 1
    auto [extract_text, extract_key] = call(prompts.build_extract_prompt(mcq));
    transcripts.push_back(extract_key);
    TripletParse p1 = parse_triplet(extract_text);
    if (!p1.ok) {
        out.discarded = Discarded{mcq.id, "parse_failure", p1.error, ""};
        return out;
    }
    auto [verdict1_text, verdict1_key] = call(prompts.build_validate_prompt(mcq, p1.triplet));
    transcripts.push_back(verdict1_key);
    Verdict v1 = parse_verdict(verdict1_text);
    if (v1.unparseable) out.warnings.push_back("unparseable_verdict:round_1");
    if (v1.accepted) {
        finish_accept(p1.triplet, v1.rationale, 1);
        return out;
    }

    // round 2: reflect and re-extract
    auto [reextract_text, reextract_key] =
        call(prompts.build_reextract_prompt(mcq, p1.triplet, v1.rationale));
    transcripts.push_back(reextract_key);
    TripletParse p2 = parse_triplet(reextract_text);
    if (!p2.ok) {
        out.discarded = Discarded{mcq.id, "parse_failure", v1.rationale, p2.error};
        return out;
    }
    auto [verdict2_text, verdict2_key] = call(prompts.build_validate_prompt(mcq, p2.triplet));
    transcripts.push_back(verdict2_key);
    Verdict v2 = parse_verdict(verdict2_text);
    if (v2.unparseable) out.warnings.push_back("unparseable_verdict:round_2");
    if (v2.accepted) {
        finish_accept(p2.triplet, v2.rationale, 2);
        return out;
    }
    out.discarded = Discarded{mcq.id, "validator_rejected", v1.rationale, v2.rationale};
    return out;
}

} // namespace mceval
