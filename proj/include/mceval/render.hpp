#pragma once

#include <string>
#include <vector>

#include "mceval/common.hpp"
#include "mceval/mcq.hpp"

namespace mceval {

enum class ItemFormat { original, trinity };

inline std::string to_string(ItemFormat f) {
    return f == ItemFormat::original ? "original" : "trinity";
}

// Canonical option block:
//   A. <option>
//   B. <option>
//   ...
// One option per line, no trailing newline.
inline std::string render_option_block(const std::vector<std::string>& options) {
    std::string out;
    for (size_t i = 0; i < options.size(); ++i) {
        if (i) out.push_back('\n');
        out += option_letter(static_cast<int>(i)) + ". " + options[i];
    }
    return out;
}

// Bare MCQ rendering, the span scored for memorization in the original
// format and the body of extraction few-shot examples:
//   <question>
//   Options:
//   A. ...
//   D. ...
inline std::string render_mcq_body(const Mcq& m) {
    return m.question + "\nOptions:\n" + render_option_block(m.options);
}

// Full MCQ rendering with the answer attached, used for answered few-shot
// examples.
inline std::string render_mcq_with_answer(const Mcq& m) {
    return render_mcq_body(m) + "\n\nAnswer: " + m.answer_letter();
}

inline std::string render_examples_block(const std::vector<Mcq>& shots) {
    std::vector<std::string> parts;
    parts.reserve(shots.size());
    for (const auto& s : shots) parts.push_back(render_mcq_with_answer(s));
    return str::join(parts, "\n\n");
}

} // namespace mceval
