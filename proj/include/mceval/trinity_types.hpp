#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mceval/common.hpp"
#include "mceval/render.hpp"

namespace mceval {

// Knowledge-centric reformulation of an MCQ: the questioned subject
// (entity), the queried property (attribute), and the conditions needed to
// answer (context, absent for self-contained questions).
struct Triplet {
    std::string entity;
    std::string attribute;
    std::optional<std::string> context;
    std::string rationale;    // validator reflection, filled by the protocol
    int round = 1;

    bool same_fields(const Triplet& o) const {
        return entity == o.entity && attribute == o.attribute && context == o.context;
    }
};

enum class Qualification { accepted_round_1, accepted_round_2 };

inline std::string to_string(Qualification q) {
    return q == Qualification::accepted_round_1 ? "accepted_round_1" : "accepted_round_2";
}

struct QualifiedItem {
    std::string mcq_id;
    Triplet triplet;
    Qualification qualification = Qualification::accepted_round_1;
    std::vector<std::string> transcript_ids;   // cache keys of the backend calls
};

struct Discarded {
    std::string mcq_id;
    std::string reason;        // "validator_rejected" or "parse_failure"
    std::string rationale_1;
    std::string rationale_2;
};

struct Verdict {
    bool accepted = false;
    std::string rationale;
    bool unparseable = false;
};

// Canonical triplet rendering in the extractor's output format; re-parsing
// this yields the same fields back.
inline std::string render_triplet(const Triplet& t) {
    std::string out = "- **Knowledge Keyword:** " + t.entity + "\n- **Attribute:** " + t.attribute +
                      "\n- **Context:** " + (t.context ? *t.context : std::string("N/A"));
    return out;
}

// Labeled entity/attribute/context + options block: the trinity-format item
// rendering (the span scored for F_m and the body of the trinity answer
// prompt).
inline std::string render_triplet_body(const Triplet& t, const std::vector<std::string>& options) {
    return "- **Knowledge Entity:**\n" + t.entity + "\n\n- **Attribute:**\n" + t.attribute +
           "\n\n- **Context:**\n" + (t.context ? *t.context : std::string("N/A")) +
           "\n\n- **Options:**\n" + render_option_block(options);
}

} // namespace mceval
