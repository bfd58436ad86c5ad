#pragma once

#include <cstddef>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "mceval/common.hpp"
#include "mceval/sha256.hpp"

namespace mceval {

// One multiple-choice question. `id` is a content hash of
// (subject, question, options), stable across re-loads of identical bytes.
struct Mcq {
    std::string id;
    std::string subject;
    std::string question;
    std::vector<std::string> options;
    int answer_index = -1;
    std::set<std::string> tags;

    int option_count() const { return static_cast<int>(options.size()); }
    const std::string& answer_option() const { return options.at(static_cast<size_t>(answer_index)); }
    std::string answer_letter() const { return option_letter(answer_index); }
};

inline std::string mcq_content_id(const std::string& subject, const std::string& question,
                                  const std::vector<std::string>& options) {
    Sha256 h;
    h.update(subject);
    h.update(std::string_view("\x1f", 1));
    h.update(question);
    for (const auto& opt : options) {
        h.update(std::string_view("\x1f", 1));
        h.update(opt);
    }
    auto d = h.digest();
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(32);
    for (int i = 0; i < 8; ++i) {
        out.push_back(digits[d[i] >> 4]);
        out.push_back(digits[d[i] & 0xf]);
    }
    return out;
}

struct LoadErrorRecord {
    size_t line = 0;           // 1-based line number in the source file
    std::string reason;
    std::string raw;           // offending row, truncated for readability
};

enum class DatasetFormat { delimited, record_per_line };

inline std::string to_string(DatasetFormat f) {
    return f == DatasetFormat::delimited ? "delimited" : "record-per-line";
}

// Ordered, immutable-after-load collection of MCQs. Item order preserves
// source file order; seq few-shot selection depends on it.
struct McqSet {
    std::vector<Mcq> items;
    std::map<std::string, std::vector<size_t>> by_subject;   // subject -> item indices, file order
    std::string source_path;
    std::string source_format;
    std::string load_timestamp;                               // provenance only, never serialized
    std::unordered_map<std::string, size_t> index_by_id;
    std::vector<LoadErrorRecord> load_errors;

    const Mcq* find(const std::string& id) const {
        auto it = index_by_id.find(id);
        return it == index_by_id.end() ? nullptr : &items[it->second];
    }

    void rebuild_indices() {
        by_subject.clear();
        index_by_id.clear();
        for (size_t i = 0; i < items.size(); ++i) {
            by_subject[items[i].subject].push_back(i);
            index_by_id.emplace(items[i].id, i);
        }
    }

    std::vector<std::string> subjects() const {
        std::vector<std::string> out;
        out.reserve(by_subject.size());
        for (const auto& [s, _] : by_subject) out.push_back(s);
        return out;
    }
};

namespace detail {

// RFC 4180-style CSV row reader: quoted fields, embedded commas, doubled
// quotes, and newlines inside quotes. Returns false at end of stream.
inline bool read_csv_row(std::istream& in, std::vector<std::string>& fields, size_t& line_no) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = in.get()) != EOF) {
        any = true;
        char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (ch == '\n') ++line_no;
                field.push_back(ch);
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n') {
            ++line_no;
            if (!field.empty() && field.back() == '\r') field.pop_back();
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(ch);
        }
    }
    if (!any) return false;
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(std::move(field));
    return true;
}

inline std::optional<int> parse_answer_field(const nlohmann::json& v, int option_count) {
    if (v.is_number_integer()) {
        int idx = v.get<int>();
        if (idx < 0 || idx >= option_count) return std::nullopt;
        return idx;
    }
    if (v.is_string()) {
        std::string s = str::trim(v.get<std::string>());
        // accept both a letter and a numeric index in string form
        if (auto idx = letter_to_index(s, option_count)) return idx;
        try {
            size_t pos = 0;
            int idx = std::stoi(s, &pos);
            if (pos == s.size() && idx >= 0 && idx < option_count) return idx;
        } catch (...) {}
        return std::nullopt;
    }
    return std::nullopt;
}

inline std::optional<std::string> validate_mcq(const Mcq& m, int expected_option_count) {
    if (expected_option_count > 0 && m.option_count() != expected_option_count)
        return "expected " + std::to_string(expected_option_count) + " options, got " +
               std::to_string(m.option_count());
    if (m.option_count() < 2) return "fewer than 2 options";
    if (m.answer_index < 0 || m.answer_index >= m.option_count()) return "answer outside option range";
    if (str::trim(m.question).empty()) return "empty question";
    for (const auto& o : m.options)
        if (str::trim(o).empty()) return "empty option";
    return std::nullopt;
}

inline std::string truncate_raw(const std::string& s, size_t n = 160) {
    return s.size() <= n ? s : s.substr(0, n) + "...";
}

inline std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

} // namespace detail

struct LoadOptions {
    int option_count = 4;      // expected option count; 0 disables the check
};

// Loads an MCQ benchmark file. Malformed rows go to set.load_errors, never
// silently dropped. Delimited header: subject,question,option_1..option_n,answer.
// Record-per-line: one JSON object per line with keys
// subject/question/options/answer (letter or index).
inline McqSet load_dataset(const std::filesystem::path& path, DatasetFormat format,
                           const LoadOptions& opts = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open dataset file: " + path.string());

    McqSet set;
    set.source_path = path.string();
    set.source_format = to_string(format);
    set.load_timestamp = detail::now_iso8601();

    if (format == DatasetFormat::delimited) {
        std::vector<std::string> fields;
        size_t line_no = 0;
        if (!detail::read_csv_row(in, fields, line_no)) throw Error("empty dataset file: " + path.string());
        if (fields.size() < 4 || fields[0] != "subject" || fields[1] != "question")
            throw Error("bad delimited header in " + path.string() +
                        " (expected subject,question,option_1,...,answer)");
        const size_t n_cols = fields.size();
        const int n_opts = static_cast<int>(n_cols) - 3;
        while (true) {
            size_t row_line = line_no + 1;
            if (!detail::read_csv_row(in, fields, line_no)) break;
            if (fields.size() == 1 && fields[0].empty()) continue;   // trailing blank line
            if (fields.size() != n_cols) {
                set.load_errors.push_back({row_line, "missing fields", detail::truncate_raw(str::join(fields, ","))});
                continue;
            }
            Mcq m;
            m.subject = fields[0];
            m.question = fields[1];
            m.options.assign(fields.begin() + 2, fields.end() - 1);
            auto idx = letter_to_index(str::trim(fields.back()), n_opts);
            if (!idx) {
                set.load_errors.push_back({row_line, "answer letter outside option range",
                                           detail::truncate_raw(str::join(fields, ","))});
                continue;
            }
            m.answer_index = *idx;
            if (auto err = detail::validate_mcq(m, opts.option_count)) {
                set.load_errors.push_back({row_line, *err, detail::truncate_raw(str::join(fields, ","))});
                continue;
            }
            m.id = mcq_content_id(m.subject, m.question, m.options);
            set.items.push_back(std::move(m));
        }
    } else {
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (str::trim(line).empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                set.load_errors.push_back({line_no, "unparseable record", detail::truncate_raw(line)});
                continue;
            }
            if (!j.contains("subject") || !j.contains("question") || !j.contains("options") ||
                !j.contains("answer")) {
                set.load_errors.push_back({line_no, "missing fields", detail::truncate_raw(line)});
                continue;
            }
            Mcq m;
            try {
                m.subject = j["subject"].get<std::string>();
                m.question = j["question"].get<std::string>();
                m.options = j["options"].get<std::vector<std::string>>();
            } catch (const nlohmann::json::exception&) {
                set.load_errors.push_back({line_no, "wrong field types", detail::truncate_raw(line)});
                continue;
            }
            auto idx = detail::parse_answer_field(j["answer"], m.option_count());
            if (!idx) {
                set.load_errors.push_back({line_no, "answer letter outside option range",
                                           detail::truncate_raw(line)});
                continue;
            }
            m.answer_index = *idx;
            if (auto err = detail::validate_mcq(m, opts.option_count)) {
                set.load_errors.push_back({line_no, *err, detail::truncate_raw(line)});
                continue;
            }
            if (j.contains("tags") && j["tags"].is_array())
                for (const auto& t : j["tags"]) m.tags.insert(t.get<std::string>());
            m.id = mcq_content_id(m.subject, m.question, m.options);
            set.items.push_back(std::move(m));
        }
    }
    set.rebuild_indices();
    return set;
}

// Tags every item whose id appears in the id-list file (one id per line,
// '#' comments allowed). Returns the number of items tagged.
inline size_t apply_tag_list(McqSet& set, const std::filesystem::path& id_list, const std::string& tag) {
    std::ifstream in(id_list);
    if (!in) throw Error("cannot open id list: " + id_list.string());
    size_t tagged = 0;
    std::string line;
    while (std::getline(in, line)) {
        std::string id = str::trim(line);
        if (id.empty() || id[0] == '#') continue;
        auto it = set.index_by_id.find(id);
        if (it != set.index_by_id.end()) {
            set.items[it->second].tags.insert(tag);
            ++tagged;
        }
    }
    return tagged;
}

struct RemovalRecord {
    std::string id;
    std::string reason;
    std::string duplicated_option;
};

// Removes every MCQ containing an option text that occurs (after whitespace
// collapse, case-sensitive) in two or more MCQs across the whole set.
// Counting is per-MCQ containment on the input set, so the pass is
// idempotent and the output has every option text in exactly one MCQ.
inline std::pair<McqSet, std::vector<RemovalRecord>> deduplicate(const McqSet& set) {
    std::unordered_map<std::string, size_t> mcq_count;   // normalized option -> #MCQs containing it
    std::vector<std::vector<std::string>> normalized(set.items.size());
    for (size_t i = 0; i < set.items.size(); ++i) {
        std::unordered_set<std::string> seen;   // count each text once per MCQ
        for (const auto& opt : set.items[i].options) {
            std::string norm = str::collapse_whitespace(opt);
            normalized[i].push_back(norm);
            if (seen.insert(norm).second) ++mcq_count[norm];
        }
    }
    McqSet out;
    out.source_path = set.source_path;
    out.source_format = set.source_format;
    out.load_timestamp = set.load_timestamp;
    std::vector<RemovalRecord> removed;
    for (size_t i = 0; i < set.items.size(); ++i) {
        const std::string* offending = nullptr;
        for (const auto& norm : normalized[i]) {
            if (mcq_count[norm] >= 2) {
                offending = &norm;
                break;
            }
        }
        if (offending) {
            removed.push_back({set.items[i].id, "duplicated_option", *offending});
        } else {
            out.items.push_back(set.items[i]);
        }
    }
    out.rebuild_indices();
    return {std::move(out), std::move(removed)};
}

enum class FewShotSource { dev_split, preceding_test_items };

struct FewShotResult {
    std::vector<Mcq> items;
    bool shortfall = false;    // fewer than n available (seq selection at subject start)
};

// Few-shot example selection. dev_split takes the first n dev items of the
// subject in file order; preceding_test_items takes the n items immediately
// before `anchor_id` within the same subject. Never returns the anchor.
inline FewShotResult few_shot_examples(const McqSet& set, const McqSet* dev,
                                       const std::string& subject, size_t n,
                                       FewShotSource source, const std::string& anchor_id = {}) {
    FewShotResult out;
    if (n == 0) return out;
    if (source == FewShotSource::dev_split) {
        if (!dev) throw Error("few_shot_examples: no dev split registered");
        auto it = dev->by_subject.find(subject);
        if (it == dev->by_subject.end()) throw Error("few_shot_examples: unknown subject: " + subject);
        for (size_t idx : it->second) {
            if (out.items.size() == n) break;
            out.items.push_back(dev->items[idx]);
        }
        out.shortfall = out.items.size() < n;
    } else {
        auto sit = set.by_subject.find(subject);
        if (sit == set.by_subject.end()) throw Error("few_shot_examples: unknown subject: " + subject);
        auto ait = set.index_by_id.find(anchor_id);
        if (ait == set.index_by_id.end()) throw Error("few_shot_examples: anchor not found: " + anchor_id);
        const auto& order = sit->second;
        auto pos = std::find(order.begin(), order.end(), ait->second);
        if (pos == order.end()) throw Error("few_shot_examples: anchor not in subject: " + subject);
        size_t rank = static_cast<size_t>(pos - order.begin());
        size_t take = std::min(n, rank);
        for (size_t i = rank - take; i < rank; ++i) out.items.push_back(set.items[order[i]]);
        out.shortfall = take < n;
    }
    return out;
}

} // namespace mceval
