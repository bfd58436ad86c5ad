#include <doctest.h>

#include "mceval/mock_backend.hpp"
#include "mceval/trinity.hpp"

using namespace mceval;

namespace {

Mcq table_example() {
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

Triplet example_triplet() {
    Triplet t;
    t.entity = "subroutine's activation record frame";
    t.attribute = "usually NOT represented";
    t.context = "for a stack-based programming language";
    return t;
}

} // namespace

TEST_SUITE_BEGIN("trinity");

TEST_CASE("canonical response parses verbatim") {
    std::string response =
        "- **Step-by-Step Reasoning:** The question asks about frames.\n"
        "- **Knowledge Keyword:** subroutine's activation record frame\n"
        "- **Attribute:** usually NOT represented\n"
        "- **Context:** for a stack-based programming language\n";
    auto p = parse_triplet(response);
    REQUIRE(p.ok);
    CHECK(p.triplet.entity == "subroutine's activation record frame");
    CHECK(p.triplet.attribute == "usually NOT represented");
    REQUIRE(p.triplet.context.has_value());
    CHECK(*p.triplet.context == "for a stack-based programming language");
}

TEST_CASE("parser tolerates missing bold, case variation, and bullets") {
    auto p1 = parse_triplet("- Knowledge Keyword: alpha\n- Attribute: beta\n- Context: gamma");
    REQUIRE(p1.ok);
    CHECK(p1.triplet.entity == "alpha");

    auto p2 = parse_triplet("KNOWLEDGE KEYWORD: alpha\nATTRIBUTE: beta");
    REQUIRE(p2.ok);
    CHECK(p2.triplet.attribute == "beta");
    CHECK_FALSE(p2.triplet.context.has_value());

    auto p3 = parse_triplet("* **Knowledge Entity:** alpha\n* **Attribute :** beta\n* Context: N/A");
    REQUIRE(p3.ok);
    CHECK(p3.triplet.entity == "alpha");
    CHECK(p3.triplet.attribute == "beta");
    CHECK_FALSE(p3.triplet.context.has_value());
}

TEST_CASE("context N/A variants map to none") {
    for (const char* ctx : {"N/A", "n/a", "N/A.", "none", "None.", ""}) {
        auto p = parse_triplet(std::string("- Knowledge Keyword: e\n- Attribute: a\n- Context: ") + ctx);
        REQUIRE(p.ok);
        CHECK_FALSE(p.triplet.context.has_value());
    }
}

TEST_CASE("missing labels fail with the raw text attached") {
    auto p = parse_triplet("I could not find anything of note here.");
    CHECK_FALSE(p.ok);
    CHECK(p.error == "missing Knowledge Keyword label");
    CHECK(p.raw == "I could not find anything of note here.");

    auto p2 = parse_triplet("- Knowledge Keyword: e\nno attribute line");
    CHECK_FALSE(p2.ok);
    CHECK(p2.error == "missing Attribute label");
}

TEST_CASE("multi-line field values run to the next label") {
    auto p = parse_triplet(
        "- Knowledge Keyword: first line\ncontinued second line\n- Attribute: attr\n- Context: N/A");
    REQUIRE(p.ok);
    CHECK(p.triplet.entity == "first line\ncontinued second line");
}

TEST_CASE("triplet render round-trip") {
    Triplet cases[] = {example_triplet(),
                       {"entity only", "attr", std::nullopt, "", 1},
                       {"e", "a with: colon", std::optional<std::string>("multi word context"), "", 2}};
    for (const auto& t : cases) {
        auto p = parse_triplet(render_triplet(t));
        REQUIRE(p.ok);
        CHECK(p.triplet.same_fields(t));
    }
}

TEST_CASE("verdict parses the final decision") {
    Verdict yes = parse_verdict("- **Step-by-Step Reasoning:** looks complete.\n"
                                "- **Verdict for the given Knowledge Keyword, Attribute and Context:** Yes");
    CHECK(yes.accepted);
    CHECK(str::contains(yes.rationale, "looks complete"));
    CHECK_FALSE(yes.unparseable);

    Verdict no = parse_verdict("- **Step-by-Step Reasoning:** the context is missing a condition.\n"
                               "- **Verdict for the given Knowledge Keyword, Attribute and Context:** No");
    CHECK_FALSE(no.accepted);
    CHECK(str::contains(no.rationale, "missing a condition"));
}

TEST_CASE("last decision after the verdict label wins") {
    // 'Yes' earlier in the reasoning must not override the final 'No'
    Verdict v = parse_verdict(
        "Yes, the keyword is plausible, and yes the attribute reads well.\n"
        "- **Verdict for the given Knowledge Keyword, Attribute and Context:** No");
    CHECK_FALSE(v.accepted);

    Verdict v2 = parse_verdict("Verdict: No... wait, on reflection: Yes");
    CHECK(v2.accepted);
}

TEST_CASE("undecodable verdict is a flagged rejection with the whole text") {
    Verdict v = parse_verdict("The triplet seems adequate and complete.");
    CHECK_FALSE(v.accepted);
    CHECK(v.unparseable);
    CHECK(v.rationale == "The triplet seems adequate and complete.");
}

TEST_CASE("verbatim spans found for the worked example") {
    auto report = verify_verbatim(example_triplet(), table_example());
    CHECK(report.all_matched);
    REQUIRE(report.fields.size() == 3);
    for (const auto& f : report.fields) CHECK(f.matched);
    CHECK(report.fields[0].begin < report.fields[0].end);
}

TEST_CASE("fabricated entity reports no-match") {
    Triplet t = example_triplet();
    t.entity = "garbage collector pause";
    auto report = verify_verbatim(t, table_example());
    CHECK_FALSE(report.all_matched);
    CHECK_FALSE(report.fields[0].matched);
    CHECK(report.fields[1].matched);
}

TEST_CASE("answer leakage detection") {
    Triplet t = example_triplet();
    CHECK_FALSE(answer_leakage(t, table_example()));
    t.attribute = "whether A heap area is present";
    CHECK(answer_leakage(t, table_example()));
}

TEST_CASE("reformulate accepts on round one with exactly two calls") {
    Mcq m = table_example();
    auto mock = std::make_shared<MockBackend>();
    MockRule extract;
    extract.op = MockRule::Op::complete;
    extract.prompt_contains = {"You are an expert of Knowledge Keyword extraction"};
    extract.text = render_triplet(example_triplet());
    mock->add_rule(extract);
    MockRule validate;
    validate.op = MockRule::Op::complete;
    validate.prompt_contains = {"advanced reasoning agent"};
    validate.text = "- **Step-by-Step Reasoning:** adequate.\n- **Verdict for the given Knowledge "
                    "Keyword, Attribute and Context:** Yes";
    mock->add_rule(validate);

    BackendClient client(mock, std::nullopt, {3, 1, 2.0});
    TrinityPrompts prompts;
    auto out = reformulate(m, client, prompts);
    REQUIRE(out.qualified.has_value());
    CHECK_FALSE(out.discarded.has_value());
    CHECK(out.backend_calls == 2);
    CHECK(mock->calls_complete() == 2);
    CHECK(out.qualified->qualification == Qualification::accepted_round_1);
    CHECK(out.qualified->triplet.round == 1);
    CHECK(out.qualified->triplet.same_fields(example_triplet()));
    CHECK(out.qualified->transcript_ids.size() == 2);
    CHECK(str::contains(out.qualified->triplet.rationale, "adequate"));
}

TEST_CASE("reformulate retries once after a rejection and accepts round two with four calls") {
    Mcq m = table_example();
    auto mock = std::make_shared<MockBackend>();
    MockRule reextract;   // listed first: the re-extract prompt also contains extraction wording
    reextract.op = MockRule::Op::complete;
    reextract.prompt_contains = {"improve through self-reflection"};
    reextract.text = "- Knowledge Keyword: subroutine's activation record frame\n"
                     "- Attribute: usually NOT represented\n"
                     "- Context: for a stack-based programming language";
    mock->add_rule(reextract);
    MockRule extract;
    extract.op = MockRule::Op::complete;
    extract.prompt_contains = {"You are an expert of Knowledge Keyword extraction"};
    extract.text = render_triplet({"bad entity", "bad attr", std::nullopt, "", 1});
    mock->add_rule(extract);
    MockRule validate_bad;
    validate_bad.op = MockRule::Op::complete;
    validate_bad.prompt_contains = {"advanced reasoning agent", "bad entity"};
    validate_bad.text = "- **Step-by-Step Reasoning:** entity not in question.\n- **Verdict for the "
                        "given Knowledge Keyword, Attribute and Context:** No";
    mock->add_rule(validate_bad);
    MockRule validate_good;
    validate_good.op = MockRule::Op::complete;
    validate_good.prompt_contains = {"advanced reasoning agent"};
    validate_good.text = "- **Step-by-Step Reasoning:** fixed.\n- **Verdict for the given Knowledge "
                         "Keyword, Attribute and Context:** Yes";
    mock->add_rule(validate_good);

    BackendClient client(mock, std::nullopt, {3, 1, 2.0});
    TrinityPrompts prompts;
    auto out = reformulate(m, client, prompts);
    REQUIRE(out.qualified.has_value());
    CHECK(out.backend_calls == 4);
    CHECK(mock->calls_complete() == 4);
    CHECK(out.qualified->qualification == Qualification::accepted_round_2);
    CHECK(out.qualified->triplet.round == 2);
    CHECK(out.qualified->transcript_ids.size() == 4);
}

TEST_CASE("reformulate discards after two rejections with both rationales") {
    Mcq m = table_example();
    auto mock = std::make_shared<MockBackend>();
    MockRule reextract;
    reextract.op = MockRule::Op::complete;
    reextract.prompt_contains = {"improve through self-reflection"};
    reextract.text = render_triplet({"second try", "attr two", std::nullopt, "", 1});
    mock->add_rule(reextract);
    MockRule extract;
    extract.op = MockRule::Op::complete;
    extract.prompt_contains = {"You are an expert of Knowledge Keyword extraction"};
    extract.text = render_triplet({"first try", "attr one", std::nullopt, "", 1});
    mock->add_rule(extract);
    MockRule validate1;
    validate1.op = MockRule::Op::complete;
    validate1.prompt_contains = {"advanced reasoning agent", "first try"};
    validate1.text = "first rationale.\n- **Verdict for the given Knowledge Keyword, Attribute and "
                     "Context:** No";
    mock->add_rule(validate1);
    MockRule validate2;
    validate2.op = MockRule::Op::complete;
    validate2.prompt_contains = {"advanced reasoning agent", "second try"};
    validate2.text = "second rationale.\n- **Verdict for the given Knowledge Keyword, Attribute and "
                     "Context:** No";
    mock->add_rule(validate2);

    BackendClient client(mock, std::nullopt, {3, 1, 2.0});
    TrinityPrompts prompts;
    auto out = reformulate(m, client, prompts);
    REQUIRE(out.discarded.has_value());
    CHECK_FALSE(out.qualified.has_value());
    CHECK(out.backend_calls == 4);
    CHECK(out.discarded->reason == "validator_rejected");
    CHECK(str::contains(out.discarded->rationale_1, "first rationale"));
    CHECK(str::contains(out.discarded->rationale_2, "second rationale"));
}

TEST_CASE("unparseable extractor output discards with reason parse_failure") {
    Mcq m = table_example();
    auto mock = std::make_shared<MockBackend>();
    MockRule any;
    any.op = MockRule::Op::complete;
    any.text = "nothing useful";
    mock->add_rule(any);
    BackendClient client(mock, std::nullopt, {3, 1, 2.0});
    TrinityPrompts prompts;
    auto out = reformulate(m, client, prompts);
    REQUIRE(out.discarded.has_value());
    CHECK(out.discarded->reason == "parse_failure");
    CHECK(out.backend_calls == 1);
}

TEST_CASE("verbatim discard policy rejects fabricated spans") {
    Mcq m = table_example();
    auto mock = std::make_shared<MockBackend>();
    MockRule extract;
    extract.op = MockRule::Op::complete;
    extract.prompt_contains = {"You are an expert of Knowledge Keyword extraction"};
    extract.text = render_triplet({"not from the question", "usually NOT represented", std::nullopt, "", 1});
    mock->add_rule(extract);
    MockRule validate;
    validate.op = MockRule::Op::complete;
    validate.text = "fine.\n- **Verdict for the given Knowledge Keyword, Attribute and Context:** Yes";
    mock->add_rule(validate);
    BackendClient client(mock, std::nullopt, {3, 1, 2.0});
    TrinityPrompts prompts;

    ReformulateOptions warn_opts;
    auto warned = reformulate(m, client, prompts, warn_opts);
    REQUIRE(warned.qualified.has_value());
    bool has_warning = false;
    for (const auto& w : warned.warnings) has_warning |= str::contains(w, "verbatim_no_match");
    CHECK(has_warning);

    ReformulateOptions discard_opts;
    discard_opts.verify_verbatim = VerbatimPolicy::discard;
    auto discarded = reformulate(m, client, prompts, discard_opts);
    REQUIRE(discarded.discarded.has_value());
    CHECK(discarded.discarded->reason == "verbatim_no_match");
}

TEST_SUITE_END();
