#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "mceval/capability.hpp"
#include "mceval/memorization.hpp"
#include "mceval/trinity.hpp"

using namespace mceval;
namespace fs = std::filesystem;

// Byte-exact golden renderings for every prompt builder, instantiated on the
// activation-record example item. Set MCEVAL_UPDATE_GOLDEN=1 to rewrite the
// files after an intentional template change.

namespace {

Mcq golden_item() {
    Mcq m;
    m.subject = "high school computer science";
    m.question = "Which of the following is usually NOT represented in a subroutine's activation "
                 "record frame for a stack-based programming language?";
    m.options = {"Values of local variables", "A heap area", "The return address",
                 "Stack pointer for the calling activation record"};
    m.answer_index = 1;
    m.id = mcq_content_id(m.subject, m.question, m.options);
    return m;
}

Triplet golden_triplet() {
    Triplet t;
    t.entity = "subroutine's activation record frame";
    t.attribute = "usually NOT represented";
    t.context = "for a stack-based programming language";
    return t;
}

std::vector<Mcq> golden_shots() {
    Mcq a;
    a.subject = "high school computer science";
    a.question = "In a binary search tree, which traversal visits the nodes in ascending order?";
    a.options = {"Pre-order", "In-order", "Post-order", "Level-order"};
    a.answer_index = 1;
    a.id = mcq_content_id(a.subject, a.question, a.options);
    Mcq b;
    b.subject = "high school computer science";
    b.question = "What is the worst-case time complexity of quicksort?";
    b.options = {"O(n)", "O(n log n)", "O(n^2)", "O(log n)"};
    b.answer_index = 2;
    b.id = mcq_content_id(b.subject, b.question, b.options);
    return {a, b};
}

std::map<std::string, std::string> golden_renderings() {
    Mcq item = golden_item();
    Triplet triplet = golden_triplet();
    TrinityPrompts prompts;
    std::map<std::string, std::string> out;
    out["extraction_prompt.txt"] =
        build_extraction_prompt(item, golden_shots(), "MMLU", item.subject);
    out["extraction_prompt_zeroshot.txt"] = build_extraction_prompt(item, {}, "MMLU", item.subject);
    out["trinity_extract_prompt.txt"] = prompts.build_extract_prompt(item);
    out["trinity_validate_prompt.txt"] = prompts.build_validate_prompt(item, triplet);
    out["trinity_reextract_prompt.txt"] = prompts.build_reextract_prompt(
        item, Triplet{"activation record frame", "NOT represented", std::nullopt, "", 1},
        "The Context condition naming the programming-language family was dropped, so the Answer "
        "cannot be inferred from the triplet alone. Re-extract and keep the condition.");
    out["answer_original.txt"] = build_answer_prompt(item, ItemFormat::original);
    out["answer_trinity.txt"] = build_answer_prompt(item, ItemFormat::trinity, &triplet);
    out["answer_fewshot.txt"] = build_answer_prompt_fewshot(item, golden_shots(), "MMLU");
    return out;
}

fs::path golden_dir() { return fs::path(MCEVAL_TEST_DIR) / "golden"; }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), "missing golden file: " << p.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_SUITE_BEGIN("prompts");

TEST_CASE("prompt builders reproduce the checked-in goldens byte-exactly") {
    auto renderings = golden_renderings();
    if (std::getenv("MCEVAL_UPDATE_GOLDEN")) {
        fs::create_directories(golden_dir());
        for (const auto& [name, text] : renderings) {
            std::ofstream out(golden_dir() / name, std::ios::binary | std::ios::trunc);
            out << text;
        }
    }
    for (const auto& [name, text] : renderings) {
        CAPTURE(name);
        std::string expected = read_file(golden_dir() / name);
        CHECK(text == expected);
    }
}

TEST_CASE("template anchors survive in the instantiated prompts") {
    auto r = golden_renderings();
    // extraction prompt cut
    CHECK(str::ends_with(r["extraction_prompt.txt"], "Options:\nA. "));
    CHECK(str::contains(r["extraction_prompt.txt"],
                        "You are an expert of multiple choice questions of MMLU dataset."));
    // reformulation wording anchors
    CHECK(str::contains(r["trinity_extract_prompt.txt"],
                        "Never include any information from the options"));
    CHECK(str::contains(r["trinity_validate_prompt.txt"], "final verdict (only Yes/No)"));
    CHECK(str::contains(r["trinity_validate_prompt.txt"],
                        "Verdict for the given Knowledge Keyword, Attribute and Context:"));
    CHECK(str::contains(r["trinity_reextract_prompt.txt"], "Given the Reflection below"));
    CHECK(str::contains(r["trinity_reextract_prompt.txt"], "- **Reflection:**"));
    // answer prompts
    CHECK(str::contains(r["answer_original.txt"],
                        "You are an expert on multiple choice questions of high school computer science."));
    CHECK(str::contains(r["answer_original.txt"], "Which of the following is usually NOT represented"));
    CHECK(str::contains(r["answer_trinity.txt"], "Analyze the given Knowledge Entity, Attribute"));
    CHECK(str::contains(r["answer_trinity.txt"],
                        "- **Knowledge Entity:**\nsubroutine's activation record frame"));
    CHECK(str::contains(r["answer_trinity.txt"], "- **Attribute:**\nusually NOT represented"));
    CHECK(str::ends_with(r["answer_fewshot.txt"], "Answer:"));
    CHECK(str::contains(r["answer_fewshot.txt"], "multiple choice questions (with answers)"));
    // zero-shot variant keeps an empty examples block
    CHECK(str::contains(r["extraction_prompt_zeroshot.txt"], "about high school computer science.\n\n\n\n"));
}

TEST_SUITE_END();
