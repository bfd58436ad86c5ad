#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mceval/backend.hpp"
#include "mceval/client.hpp"
#include "mceval/common.hpp"
#include "mceval/mcq.hpp"
#include "mceval/parallel.hpp"
#include "mceval/prompts.hpp"
#include "mceval/render.hpp"
#include "mceval/trinity_types.hpp"

namespace mceval {

// Memorization-evocation context strength, weakest to strongest.
enum class EvocationLevel { clean, meta, dev_fsp, seq_fsp, meta_plus_fsp };

inline std::string to_string(EvocationLevel l) {
    switch (l) {
        case EvocationLevel::clean: return "clean";
        case EvocationLevel::meta: return "meta";
        case EvocationLevel::dev_fsp: return "dev_fsp";
        case EvocationLevel::seq_fsp: return "seq_fsp";
        default: return "meta_plus_fsp";
    }
}

inline std::optional<EvocationLevel> evocation_level_from_string(const std::string& s) {
    if (s == "clean") return EvocationLevel::clean;
    if (s == "meta") return EvocationLevel::meta;
    if (s == "dev_fsp" || s == "dev-fsp") return EvocationLevel::dev_fsp;
    if (s == "seq_fsp" || s == "seq-fsp") return EvocationLevel::seq_fsp;
    if (s == "meta_plus_fsp" || s == "meta+fsp") return EvocationLevel::meta_plus_fsp;
    return std::nullopt;
}

struct MemorizationScore {
    std::string item_id;
    double f_m = 0.0;
    double k_percent = 20.0;
    std::vector<size_t> selected_tokens;   // indices of the bottom-K set, ascending
    size_t total_tokens = 0;
    EvocationLevel level = EvocationLevel::clean;
    ItemFormat format = ItemFormat::original;
};

// Mean log-probability of the bottom-K% least-probable tokens. The selected
// set has max(1, floor(n*k/100)) members; ties break toward the earliest
// position.
inline MemorizationScore compute_f_m(const TokenLogProbs& tokens, double k_percent) {
    if (tokens.empty()) throw Error("compute_f_m: empty token list");
    if (!(k_percent > 0.0) || k_percent > 100.0)
        throw Error("compute_f_m: k_percent must be in (0, 100]");
    const size_t n = tokens.size();
    const size_t m = std::max<size_t>(1, static_cast<size_t>(std::floor(
                         static_cast<double>(n) * k_percent / 100.0)));

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return tokens.entries[a].logprob < tokens.entries[b].logprob;
    });

    MemorizationScore score;
    score.k_percent = k_percent;
    score.total_tokens = n;
    score.selected_tokens.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(score.selected_tokens.begin(), score.selected_tokens.end());
    double sum = 0.0;
    for (size_t idx : score.selected_tokens) sum += tokens.entries[idx].logprob;
    score.f_m = sum / static_cast<double>(m);
    return score;
}

// ---------------------------------------------------------------------------
// Extraction test (verbatim option reproduction)
// ---------------------------------------------------------------------------

struct OptionDivergence {
    int option_index = -1;          // -1 = structural failure
    size_t position = 0;            // first divergence offset in the collapsed strings
    std::string expected;
    std::string generated;
};

struct ExtractionVerdict {
    std::string item_id;
    bool memorized = false;
    std::string generated_options;   // raw continuation
    std::vector<OptionDivergence> diagnostics;
};

// Option-extraction prompt: meta header, answered examples, then the target
// MCQ cut at "Options:\nA. " so the continuation starts with option A's text.
inline std::string build_extraction_prompt(const Mcq& mcq, const std::vector<Mcq>& shots,
                                           const std::string& dataset_name,
                                           const std::string& subject) {
    return prompts::fill_template(prompts::kExtractionTemplate,
                                  {{"[dataset]", dataset_name},
                                   {"[subject]", subject},
                                   {"[examples]", render_examples_block(shots)},
                                   {"[question]", mcq.question}});
}

namespace detail {

// Splits a continuation that should read "<opt A>\nB. <opt B>\n...".
// Marker lines are "B."/"C."/... at line starts; an option's text may span
// lines up to the next marker, except the last option which ends at its
// line's end (the model keeps generating past the block).
inline std::optional<std::vector<std::string>> parse_option_block(const std::string& continuation,
                                                                  int option_count) {
    auto lines = str::split_lines(continuation);
    if (lines.empty()) return std::nullopt;
    auto is_marker = [](const std::string& line, int opt_idx) {
        std::string letter = option_letter(opt_idx);
        return str::starts_with(line, letter + ". ") || line == letter + "." ||
               str::starts_with(line, letter + ".\t");
    };
    std::vector<std::string> options;
    std::vector<std::string> current;   // lines of the option being accumulated
    int expecting = 1;                  // next marker to look for
    for (size_t li = 0; li < lines.size(); ++li) {
        if (expecting < option_count && is_marker(lines[li], expecting)) {
            options.push_back(str::join(current, "\n"));
            current.clear();
            current.push_back(lines[li].size() > 2 ? str::trim(lines[li].substr(2)) : "");
            ++expecting;
            if (expecting == option_count) {
                // final option: take only the marker line's remainder
                options.push_back(current[0]);
                return options;
            }
        } else {
            current.push_back(lines[li]);
        }
    }
    return std::nullopt;   // ran out of lines before the last marker
}

inline size_t first_divergence(const std::string& a, const std::string& b) {
    size_t n = std::min(a.size(), b.size());
    for (size_t i = 0; i < n; ++i)
        if (a[i] != b[i]) return i;
    return n;
}

} // namespace detail

// Whitespace-collapsed, case-sensitive option comparison. Symmetric.
inline bool extraction_match(const std::string& a, const std::string& b) {
    return str::collapse_whitespace(a) == str::collapse_whitespace(b);
}

inline ExtractionVerdict grade_extraction(const Mcq& mcq, const std::string& continuation) {
    ExtractionVerdict v;
    v.item_id = mcq.id;
    v.generated_options = continuation;
    auto parsed = detail::parse_option_block(continuation, mcq.option_count());
    if (!parsed) {
        v.memorized = false;
        v.diagnostics.push_back({-1, 0, "", "structure"});
        return v;
    }
    v.memorized = true;
    for (int i = 0; i < mcq.option_count(); ++i) {
        std::string expected = str::collapse_whitespace(mcq.options[static_cast<size_t>(i)]);
        std::string got = str::collapse_whitespace((*parsed)[static_cast<size_t>(i)]);
        if (expected != got) {
            v.memorized = false;
            v.diagnostics.push_back({i, detail::first_divergence(expected, got), expected, got});
        }
    }
    return v;
}

inline ExtractionVerdict test_extraction(const Mcq& mcq, BackendClient& backend,
                                         const std::string& prompt, int max_tokens = 256) {
    CompletionRequest req;
    req.prompt = prompt;
    req.max_tokens = max_tokens;
    req.temperature = 0.0;
    Completion c = backend.complete(req);
    return grade_extraction(mcq, c.text);
}

// ---------------------------------------------------------------------------
// Partition into memorized / non-memorized subsets
// ---------------------------------------------------------------------------

struct SubsetCounts {
    size_t memorized = 0;
    size_t non_memorized = 0;
    size_t failed = 0;
};

struct PartitionResult {
    std::vector<std::string> memorized;
    std::vector<std::string> non_memorized;
    std::vector<std::string> failed;              // backend failures, excluded from both
    std::map<std::string, SubsetCounts> by_subject;
    std::map<std::string, SubsetCounts> by_tag;   // "pro" / "simple"
    std::vector<ExtractionVerdict> verdicts;
};

struct PartitionOptions {
    std::string dataset_name = "MMLU";
    int shots = 5;
    int max_tokens = 256;
    EvocationLevel shot_source = EvocationLevel::dev_fsp;   // dev_fsp or seq_fsp
    int workers = 8;
};

// Runs the extraction test over the whole set. Every item lands in exactly
// one of memorized / non-memorized / failed.
inline PartitionResult partition(const McqSet& set, BackendClient& backend,
                                 const PartitionOptions& opts, const McqSet* dev = nullptr) {
    struct Slot {
        std::optional<ExtractionVerdict> verdict;
        std::string error;
    };
    std::vector<Slot> slots(set.items.size());

    parallel_for(set.items.size(), opts.workers, [&](size_t i) {
        const Mcq& mcq = set.items[i];
        try {
            std::vector<Mcq> shots;
            if (opts.shots > 0) {
                auto src = opts.shot_source == EvocationLevel::seq_fsp
                               ? FewShotSource::preceding_test_items
                               : FewShotSource::dev_split;
                shots = few_shot_examples(set, dev, mcq.subject, static_cast<size_t>(opts.shots),
                                          src, mcq.id)
                            .items;
            }
            std::string prompt = build_extraction_prompt(mcq, shots, opts.dataset_name, mcq.subject);
            slots[i].verdict = test_extraction(mcq, backend, prompt, opts.max_tokens);
        } catch (const std::exception& e) {
            slots[i].error = e.what();
            if (slots[i].error.empty()) slots[i].error = "unknown error";
        }
    });

    PartitionResult out;
    for (size_t i = 0; i < set.items.size(); ++i) {
        const Mcq& mcq = set.items[i];
        std::string tag = mcq.tags.count("pro") ? "pro" : "simple";
        auto& subj = out.by_subject[mcq.subject];
        auto& tagc = out.by_tag[tag];
        if (!slots[i].verdict) {
            out.failed.push_back(mcq.id);
            ++subj.failed;
            ++tagc.failed;
            continue;
        }
        out.verdicts.push_back(*slots[i].verdict);
        if (slots[i].verdict->memorized) {
            out.memorized.push_back(mcq.id);
            ++subj.memorized;
            ++tagc.memorized;
        } else {
            out.non_memorized.push_back(mcq.id);
            ++subj.non_memorized;
            ++tagc.non_memorized;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evocation contexts and the Delta F_m experiment
// ---------------------------------------------------------------------------

// Dataset meta sentence used by the meta and meta_plus_fsp levels; the same
// header that fronts the extraction prompt, so the dataset name appears
// exactly once.
inline std::string meta_header(const std::string& dataset_name, const std::string& subject) {
    return "You are an expert of multiple choice questions of " + dataset_name +
           " dataset. The following are multiple-choice questions (with answers) about " + subject +
           ".";
}

// Context text prepended before the scored span for a given evocation level.
// clean yields an empty context.
inline std::string evocation_context(const Mcq& mcq, const McqSet& set, const McqSet* dev,
                                     EvocationLevel level, const std::string& dataset_name,
                                     int shots = 5, bool* shortfall = nullptr) {
    if (shortfall) *shortfall = false;
    if (level == EvocationLevel::clean) return "";
    std::string header = meta_header(dataset_name, mcq.subject);
    if (level == EvocationLevel::meta) return header + "\n\n";

    auto src = level == EvocationLevel::seq_fsp ? FewShotSource::preceding_test_items
                                                : FewShotSource::dev_split;
    auto fs = few_shot_examples(set, dev, mcq.subject, static_cast<size_t>(shots), src, mcq.id);
    if (shortfall) *shortfall = fs.shortfall;
    std::string examples = render_examples_block(fs.items);
    if (level == EvocationLevel::meta_plus_fsp) return header + "\n\n" + examples + "\n\n";
    return examples + "\n\n";
}

// The span whose token log-probs feed F_m: the full MCQ rendering in the
// original format, the entity/attribute/context + options rendering in the
// trinity format.
inline std::string scored_span(const Mcq& mcq, ItemFormat format, const Triplet* triplet) {
    if (format == ItemFormat::original) return render_mcq_body(mcq);
    if (!triplet) throw Error("scored_span: trinity format requires a triplet");
    return render_triplet_body(*triplet, mcq.options);
}

struct MemorizationScorer {
    BackendClient& backend;
    const McqSet& set;
    const McqSet* dev = nullptr;
    std::string dataset_name = "MMLU";
    double k_percent = 20.0;
    int shots = 5;

    MemorizationScore score(const Mcq& mcq, EvocationLevel level, ItemFormat format,
                            const Triplet* triplet = nullptr) const {
        std::string context = evocation_context(mcq, set, dev, level, dataset_name, shots);
        std::string span = scored_span(mcq, format, triplet);
        TokenLogProbs tokens = backend.score_continuation(context, span);
        MemorizationScore s = compute_f_m(tokens, k_percent);
        s.item_id = mcq.id;
        s.level = level;
        s.format = format;
        return s;
    }

    // F_m(level) - F_m(clean) for one item; zero by definition at clean.
    double delta(const Mcq& mcq, EvocationLevel level, ItemFormat format,
                 const Triplet* triplet = nullptr) const {
        if (level == EvocationLevel::clean) return 0.0;
        double baseline = score(mcq, EvocationLevel::clean, format, triplet).f_m;
        return score(mcq, level, format, triplet).f_m - baseline;
    }
};

} // namespace mceval
