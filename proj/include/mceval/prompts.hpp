#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mceval/common.hpp"
#include "mceval/mcq.hpp"
#include "mceval/render.hpp"

// Prompt template text and fill helpers. Template wording is fixed; the
// instantiation functions in memorization.hpp / trinity.hpp / capability.hpp
// are golden-file tested byte-for-byte, so edits here are format changes.

namespace mceval::prompts {

// ---------------------------------------------------------------------------
// Option-extraction prompt. The target MCQ is rendered up to and including
// "Options:\nA. " so the continuation starts with option A's text.
// ---------------------------------------------------------------------------
inline constexpr const char* kExtractionTemplate =
    "You are an expert of multiple choice questions of [dataset] dataset. The following are "
    "multiple-choice questions (with answers) about [subject].\n"
    "\n"
    "[examples]\n"
    "\n"
    "[question]\n"
    "Options:\n"
    "A. ";

// Answer prompt used for subset-accuracy runs; ends with "Answer:" and the
// model continues with the option letter.
inline constexpr const char* kFewShotAnswerTemplate =
    "You are an expert of multiple choice questions of [dataset] dataset. The following are "
    "multiple choice questions (with answers) about [subject].\n"
    "\n"
    "[examples]\n"
    "\n"
    "[question]\n"
    "Options:\n"
    "[options]\n"
    "\n"
    "Answer:";

// ---------------------------------------------------------------------------
// Trinity reformulation prompts (extract / validate / re-extract).
// ---------------------------------------------------------------------------
inline constexpr const char* kTrinityExtractTemplate =
    R"(You are an expert of Knowledge Keyword extraction. Analyze and summarize the Question based on the given Fact corpus and extract the Knowledge Keyword, the Attribute and the Context (if necessary) within the Question.

Given a Fact corpus, a Question about the Fact corpus, and the Answer to the Question, analyze the Question corpus as well as the given Answer. Applying the provided steps, extract the Knowledge Keyword, the Attribute of the Knowledge Keyword and the necessary Context to obtain the key information of the Question, ensuring they are sufficient for answering the given Question and obtaining the given Answer.

# Steps

1. **Review the Fact corpus:** Read through the entire Fact corpus to understand the context.

2. **Identify the Question:** Focus on the given Question to capture which part of the Fact corpus it is asking about.

3. **Understand the Answer to the Question:** Compare the given Answer and the identified questioned part within the Fact corpus and understand why this answer was chosen.

4. **Write Step-by-Step Reasoning:**
- Identify the asked Knowledge Keyword in the Question that is the subject of the most information in the Fact corpus and the asked Question is about the information among.
- Determine the asked Attribute of the Knowledge Keyword in the Question, which can be used to infer the given Answer.
- Review the identified Knowledge Keyword and Attribute to confirm that only these two parts can be used to obtain the given Answer to the given Question. If not, extract all the necessary Context from the Question that makes it enough to obtain the given Answer to the given Question.

5. **Determine Outcome:** Based on the reasoning, conclude and extract the Knowledge Keyword, the Attribute and the Context (if necessary) of the Question according to the Question corpus.

# Output Format

Provide the outcome in the following format:

- **Step-by-Step Reasoning:** [Detailed reasoning here]
- **Knowledge Keyword:** [Extracted Knowledge Keyword here]
- **Attribute:** [Extracted Attribute of the Knowledge Keyword here]
- **Context:** [Extracted Context within the Question to make up for the Knowledge Keyword and the Attribute here if necessary]

# Examples

[examples]

# Notes

- Strictly follow the format of the examples and give Knowledge Keywords, the Attribute and the Context (if necessary) anyway.
- The extracted Knowledge Keyword, Attribute and Context (if necessary) should be the original text within the Question and should not incorporate any phrases that cannot be exactly matched in the Question.
- Never include any information from the options of the multiple choice question, especially the content of the answer option.
- The extracted Knowledge Keyword, Attribute and Context (if necessary) should include all the necessary information only within the Question Corpus for answering the Question and obtaining the given Answer.

**Fact:** [fact]

**Question:** [question]

**Answer:** [answer])";

inline constexpr const char* kTrinityValidateTemplate =
    R"(You are an expert of [subject] and an advanced reasoning agent that can determine whether the given Knowledge Keyword, Attribute of the Knowledge Keyword and the Context present most of the necessary information of the Question for obtaining the given Answer. Suppose you have sufficient background knowledge about [subject]. Consider the given Knowledge Keyword, Attribute and the Context, then determine whether the given Answer can be directly obtained from them even without the Question.

# Steps

1. **Check the Semantic completeness:** Suppose you have sufficient background knowledge about [subject], and you can solve the given Question and obtain the given Answer. Read through the given Knowledge Keyword, Attribute, Context and the given Question. Check if the given Knowledge Keyword, Attribute, Context are the original text within the Question and contain the necessary queried information the Question itself provided (ignore the information the Question did not provided). If not so, check if the missed information is indeed incorporated in the Question (which is not acceptable, but if not, it is acceptable). Point out the information that is within the Question but they have missed. Then in a few sentences, diagnose the possible reason for failure or the phrasing discrepancy, and devise new, concise, high-level improvement suggestions to avoid the same failure.

2. **Check the Answer relevance:** Suppose you have sufficient background knowledge about [subject], and you can solve the given Question and obtain the given Answer. Read through the given Knowledge Keyword, Attribute, Context and the given Question. Read through the given Knowledge Keyword, Attribute, Context and the given Answer. Check if the Answer can be directly inferred with the given Knowledge Keyword, Attribute and the Context without seeing the Question. If not so, check if the missed information is indeed incorporated in the Question (which is not acceptable, but if not, it is acceptable). Point out the information that is within the Question but they have missed. Then in a few sentences, diagnose the possible reason for failure or the phrasing discrepancy, and devise new, concise, high-level improvement suggestions to avoid the same failure.

3. **Check the Semantic Redundancy:** Read through the given Knowledge Keyword, Attribute, Context, the given Question and the given corresponding Answer. Check if the Answer can be directly matched within the given Knowledge Keyword, Attribute and the Context. Check if there are any unnecessary information within the given Knowledge Keyword, Attribute and the Context for obtaining the given Answer to the Question. If not so, point out what is redundant. Then in a few sentences, diagnose the possible reason for failure or the phrasing discrepancy, and devise new, concise, high-level improvement suggestions to avoid the same failure.

# Output Format

Provide the outcome in the following format:

- **Step-by-Step Reasoning:** [Detailed reasoning here]
- **Verdict for the given Knowledge Keyword, Attribute and Context:** [Single verdict (Yes/No) here for whether the given Knowledge Keyword, Attribute and Context contain most of the asked information of the Question, can be used to infer the given Answer with only them without the whole Question, and do not contain redundant information for obtaining the given Answer.]

# Notes

- Do not deviate from the specified format. Do not generate anything else after the Verdict (only Yes/No) for the given Knowledge Keyword, Attribute and Context.
- Suppose you have sufficient background knowledge about [subject], and you can solve the given Question and obtain the given Answer. For Semantic completeness and Answer relevance, it is acceptable to miss information that is also not incorporated in the Question.
- Provide a detailed explanation following the given steps before arriving at the verdict (Yes/No). Provide a final verdict (only Yes/No) in order at the end in the given format.

- **Question:** [question]
- **Answer:** [answer]

- **Knowledge Keyword:** [entity]
- **Attribute:** [attribute]
- **Context:** [context])";

inline constexpr const char* kTrinityReextractTemplate =
    R"(You are an advanced reasoning agent that can improve through self-reflection and an expert of Knowledge Keyword extraction. Analyze and summarize the Question based on the given Fact corpus and extract the Knowledge Keyword, the Attribute and the Context (if necessary) within the Question.

Given a Fact corpus, a Question about the Fact corpus, and the Answer to the Question, analyze the Question corpus as well as the given Answer. Applying the provided steps, extract the Knowledge Keyword, the Attribute of the Knowledge Keyword and the necessary Context to rephrase the Question, ensuring they are sufficient for answering the given Question and obtaining the given Answer.

# Steps

1. **Review the Fact corpus:** Read through the entire Fact corpus to understand the context.

2. **Identify the Question:** Focus on the given Question to capture which part of the Fact corpus it is asking about.

3. **Understand the Answer to the Question:** Compare the given Answer and the identified questioned part within the Fact corpus and understand why this answer was chosen.

4. **Write Step-by-Step Reasoning:**
- Identify the asked Knowledge Keyword in the Question that is the subject of the most information in the Fact corpus and the asked Question is about the information among.
- Determine the asked Attribute of the Knowledge Keyword in the Question, which can be used to infer the given Answer.
- Review the identified Knowledge Keyword and Attribute to confirm that only these two parts can be used to obtain the given Answer to the given Question. If not, extract all the necessary Context from the Question that makes it enough to obtain the given Answer to the given Question.

5. **Determine Outcome:** Based on the reasoning, conclude and extract the Knowledge Keyword, the Attribute and the Context (if necessary) of the Question according to the Question corpus.

# Output Format

Provide the outcome in the following format:

- **Step-by-Step Reasoning:** [Detailed reasoning here]
- **Knowledge Keyword:** [Extracted Knowledge Keyword here]
- **Attribute:** [Extracted Attribute of the Knowledge Keyword here]
- **Context:** [Extracted Context within the Question to make up for the Knowledge Keyword and the Attribute here if necessary]

# Examples

[examples]

You will be given a previous trial. You were unsuccessful in extracting the Knowledge Keyword, Attribute and the necessary that meet the requirements in the previous trial. Given the Reflection below, improve the process. The process is as follows:

# Previous returns:

- **Fact:** [fact]

- **Question:** [question]

- **Answer:** [answer]

- **Knowledge Keyword:** [previous entity]

- **Attribute:** [previous attribute]

- **Context:** [previous context]

- **Reflection:**
[reflection]

# Notes

- Consider the Reflection given above. Improve the extraction of Knowledge Keyword, Attribute and Context (if necessary).
- Strictly follow the format of the examples and give Knowledge Keywords, the Attribute and the Context (if necessary) anyway.
- The extracted Knowledge Keyword should be phrases within the Question and should not incorporate any information of the Fact corpus or the given Answer that is not mentioned in the Question.
- The extracted Attribute and Context (if necessary) should only include information from the Question corpus. Never include information from the options of the multiple choice question, especially the content of the answer option.
- The extracted Knowledge Keyword, Attribute and Context (if necessary) should include all the necessary information only within the Question Corpus for answering the Question and obtaining the given Answer.

**Fact:** [fact]

**Question:** [question]

**Answer:** [answer])";

// ---------------------------------------------------------------------------
// Zero-shot answer prompts, original and trinity formats.
// ---------------------------------------------------------------------------
inline constexpr const char* kAnswerOriginalTemplate =
    R"(You are an expert on multiple choice questions of [subject]. Analyze the given question and the given options. Determine the correct answer option to the question.

Given a Question and the potential Answer options to the Question, analyze the Question as well as the given options. Generate the option ID of the correct option (answer).

- **Question:**
[question]

- **Options:**
[options])";

inline constexpr const char* kAnswerTrinityTemplate =
    R"(You are an expert on multiple choice questions of [subject]. Analyze the given Knowledge Entity, Attribute of the Knowledge Entity, the Context of a question, and the given options to the question. Determine the correct answer option to the question.

The Knowledge Entity is the questioned subject of the question. The Attribute is the questioned attribute of the Knowledge Entity, and the Context is the necessary context information for answering the question. Given a set of Knowledge Entity, Attribute, and Context (which three are extracted as the key information from a question), and the potential Answer options to the Question, analyze the given Knowledge Entity, Attribute, Context as well as the options. Generate the option ID of the correct option (answer).

- **Knowledge Entity:**
[entity]

- **Attribute:**
[attribute]

- **Context:**
[context]

- **Options:**
[options])";

// Dataset-site style row rendering used for the Fact slot:
// question <tab> option list <tab> subject <tab> 0-based index + letter.
inline std::string render_fact_line(const Mcq& m) {
    nlohmann::json opts = m.options;
    return m.question + "\t" + opts.dump() + "\t" + m.subject + "\t" +
           std::to_string(m.answer_index) + m.answer_letter();
}

struct Fill {
    std::string placeholder;
    std::string value;
};

inline std::string fill_template(std::string tpl, const std::vector<Fill>& fills) {
    for (const auto& f : fills) tpl = str::replace_all(std::move(tpl), f.placeholder, f.value);
    return tpl;
}

} // namespace mceval::prompts
