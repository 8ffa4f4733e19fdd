#include "autoresearch/protocol.hpp"
#include "autoresearch/text.hpp"

#include "support.hpp"

#include <random>
#include <sstream>

using namespace autoresearch;
using namespace autoresearch::protocol;
using testsupport::scripted;
using testsupport::gateway_for;
using nlohmann::json;

namespace {

std::string turn_text(const std::string& action, const std::string& input) {
    return "Reflection: Nothing to reflect on yet.\n"
           "Research Plan and Status: 1. Inspect train.py. 2. Run the baseline.\n"
           "Fact Check: None.\n"
           "Thought: Look at the training script first.\n"
           "Questions: None.\n"
           "Action: " + action + "\n"
           "Action Input: " + input + "\n";
}

std::size_t count_of(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

// counts whitespace-separated tokens, independent of text::word_count
std::size_t independent_words(const std::string& s) {
    std::istringstream in(s);
    std::size_t n = 0;
    std::string w;
    while (in >> w) ++n;
    return n;
}

std::string words(std::size_t n, const std::string& w = "word") {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) s += ' ';
        s += w;
    }
    return s;
}

AgentTurn sample_turn() {
    return parse_turn(turn_text("Execute Script", R"({"script_name": "train.py"})"), ToolRegistry::standard());
}

} // namespace

TEST(Catalog, FullRegistryNamesAllSixteenTools) {
    const std::vector<std::string> expected = {
        "List Files",       "Copy File",       "Undo Edit Script", "Execute Script",      "Request Help",
        "Final Answer",     "Understand File", "Inspect Script Lines", "Edit Script (AI)", "Reflection",
        "Retrieve Dataset", "Retrieve Model",  "Process Dataset",  "Train Model",         "Execute Model on Test Set",
        "Evaluate Model"};
    const auto& reg = ToolRegistry::standard();
    EXPECT_EQ(reg.names(), expected);
    const auto catalog = reg.catalog();
    for (const auto& n : expected) {
        EXPECT_EQ(count_of(catalog, "Action: " + n + "\n"), 1u) << n;
        EXPECT_NE(catalog.find("- " + n + ":\n"), std::string::npos) << n;
    }
    EXPECT_EQ(count_of(catalog, "Action Input: {"), 16u);
    EXPECT_EQ(count_of(catalog, "Observation: ["), 16u);
}

TEST(Catalog, SingletonHasOneUsageBlock) {
    const auto& std_tools = ToolRegistry::standard().tools();
    const auto catalog = render_tool_catalog({std_tools[0]});
    EXPECT_EQ(count_of(catalog, "Usage:"), 1u);
    EXPECT_EQ(count_of(catalog, "Action Input:"), 1u);
    EXPECT_EQ(catalog, std_tools[0].usage_block());
}

TEST(Catalog, DuplicateNameRejected) {
    const auto& t = ToolRegistry::standard().tools();
    EXPECT_AR_ERROR(render_tool_catalog({t[0], t[1], t[0]}), ErrorCode::DuplicateTool);
    EXPECT_AR_ERROR(ToolRegistry({t[3], t[3]}), ErrorCode::DuplicateTool);
    EXPECT_AR_ERROR(render_tool_catalog({}), ErrorCode::InvalidArgument);
}

TEST(Catalog, Deterministic) {
    ToolRegistry a(ToolRegistry::standard().tools());
    ToolRegistry b(ToolRegistry::standard().tools());
    EXPECT_EQ(a.catalog(), b.catalog());
    EXPECT_EQ(a.catalog(), ToolRegistry::standard().catalog());
}

TEST(Catalog, UsageBlockListsEveryField) {
    for (const auto& t : ToolRegistry::standard().tools()) {
        const auto block = t.usage_block();
        for (const auto& f : t.input_schema) EXPECT_NE(block.find("\"" + f.name + "\""), std::string::npos) << t.name;
    }
}

TEST(ParseTurn, LogTurnWithQuotedLineNumbers) {
    const auto turn = parse_turn(
        turn_text("Inspect Script Lines", R"({ "script_name": "train.py", "start_line_number": "1", "end_line_number": "74" })"),
        ToolRegistry::standard());
    EXPECT_EQ(turn.action.name, "Inspect Script Lines");
    const json expected = {{"script_name", "train.py"}, {"start_line_number", "1"}, {"end_line_number", "74"}};
    EXPECT_EQ(turn.action.input, expected);
    EXPECT_EQ(turn.action.integer("start_line_number"), 1);
    EXPECT_EQ(turn.action.integer("end_line_number"), 74);
    EXPECT_EQ(turn.reflection, "Nothing to reflect on yet.");
    EXPECT_EQ(turn.plan_status, "1. Inspect train.py. 2. Run the baseline.");
    EXPECT_EQ(turn.fact_check, "None.");
    EXPECT_EQ(turn.thought, "Look at the training script first.");
    EXPECT_EQ(turn.questions, "None.");
}

TEST(ParseTurn, EscapedUnderscoreKeyNormalized) {
    const auto turn = parse_turn(
        turn_text("Inspect Script Lines", R"({"script_name": "train.py", "start\_line\_number": "1", "end_line_number": "74"})"),
        ToolRegistry::standard());
    EXPECT_EQ(turn.action.input.at("start_line_number"), "1");
}

TEST(ParseTurn, MissingActionHeader) {
    const std::string raw = "Reflection: a\nResearch Plan and Status: b\nFact Check: c\nThought: d\nQuestions: e\n"
                            "Action Input: {\"script_name\": \"train.py\"}\n";
    try {
        parse_turn(raw, ToolRegistry::standard());
        FAIL() << "expected MissingHeader";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingHeader);
        EXPECT_NE(std::string(e.what()).find("Action"), std::string::npos);
    }
}

TEST(ParseTurn, EachMissingHeaderNamed) {
    const auto full = turn_text("Execute Script", R"({"script_name": "train.py"})");
    for (const auto h : kTurnHeaders) {
        std::string raw;
        for (const auto& line : text::split_lines(full))
            if (line.rfind(std::string(h) + ":", 0) != 0) raw += line + "\n";
        try {
            parse_turn(raw, ToolRegistry::standard());
            ADD_FAILURE() << "expected MissingHeader for " << h;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::MissingHeader) << h;
            EXPECT_EQ(std::string(e.what()).find(std::string(h)) != std::string::npos, true) << e.what();
        }
    }
}

TEST(ParseTurn, HeadersAreCaseSensitive) {
    auto raw = turn_text("Execute Script", R"({"script_name": "train.py"})");
    raw.replace(raw.find("Thought:"), 8, "thought:");
    EXPECT_AR_ERROR(parse_turn(raw, ToolRegistry::standard()), ErrorCode::MissingHeader);
}

TEST(ParseTurn, SingleQuotesAndTrailingCommaMatchCanonical) {
    const auto& reg = ToolRegistry::standard();
    const auto canonical =
        parse_turn(turn_text("Copy File", R"({"source": "train.py", "destination": "backup/train.py"})"), reg);
    const auto sloppy = parse_turn(turn_text("Copy File", "{'source': 'train.py', 'destination': 'backup/train.py',}"), reg);
    const json hand = {{"source", "train.py"}, {"destination", "backup/train.py"}};
    EXPECT_EQ(canonical.action.input, hand);
    EXPECT_EQ(sloppy.action.input, hand);
    EXPECT_EQ(sloppy, canonical);
}

TEST(ParseTurn, UnquotedNumeralsAccepted) {
    const auto turn = parse_turn(
        turn_text("Inspect Script Lines", "{script_name: 'train.py', start_line_number: 3, end_line_number: 9,}"),
        ToolRegistry::standard());
    EXPECT_EQ(turn.action.integer("start_line_number"), 3);
    EXPECT_EQ(turn.action.integer("end_line_number"), 9);
}

TEST(ParseTurn, UnknownTool) {
    EXPECT_AR_ERROR(parse_turn(turn_text("Launch Rocket", "{}"), ToolRegistry::standard()), ErrorCode::UnknownTool);
}

TEST(ParseTurn, MalformedInputs) {
    const auto& reg = ToolRegistry::standard();
    EXPECT_AR_ERROR(parse_turn(turn_text("Execute Script", "{}"), reg), ErrorCode::MalformedInput);
    EXPECT_AR_ERROR(parse_turn(turn_text("Execute Script", "not an object"), reg), ErrorCode::MalformedInput);
    EXPECT_AR_ERROR(parse_turn(turn_text("Execute Script", ""), reg), ErrorCode::MalformedInput);
    EXPECT_AR_ERROR(parse_turn(turn_text("Inspect Script Lines",
                                         R"({"script_name": "a.py", "start_line_number": "x", "end_line_number": 2})"),
                               reg),
                    ErrorCode::MalformedInput);
    EXPECT_AR_ERROR(parse_turn(turn_text("Inspect Script Lines",
                                         R"({"script_name": "a.py", "start_line_number": 1.5, "end_line_number": 2})"),
                               reg),
                    ErrorCode::MalformedInput);
}

TEST(ParseTurn, MultilineSectionsAndFencedInput) {
    const std::string raw = "Reflection: line one\nline two\n"
                            "Research Plan and Status:\n1. a\n2. b\n"
                            "Fact Check: none\nThought: go\nQuestions: none\n"
                            "Action: Execute Script\n"
                            "Action Input: ```json\n{\n  \"script_name\": \"train.py\"\n}\n```\n"
                            "Observation: the model should not write this\n";
    const auto turn = parse_turn(raw, ToolRegistry::standard());
    EXPECT_EQ(turn.reflection, "line one\nline two");
    EXPECT_EQ(turn.plan_status, "1. a\n2. b");
    EXPECT_EQ(turn.action.text("script_name"), "train.py");
}

TEST(ParseTurn, RenderRoundTripPreservesPayload) {
    const auto& reg = ToolRegistry::standard();
    const std::vector<std::pair<std::string, std::string>> fixtures = {
        {"Execute Script", R"({"script_name": "train.py"})"},
        {"Inspect Script Lines", R"({"script_name": "train.py", "start_line_number": "1", "end_line_number": "74"})"},
        {"Edit Script (AI)", R"({"script_name": "train.py", "edit_instruction": "set lr to 0.05\nand epochs to 5", "save_name": "train.py"})"},
        {"Train Model",
         R"({"model_name": "m", "load_dirs": "d", "result_dir": "r", "epochs": 3, "batch_size": 8, "warmup_steps": 0, "weight_decay": 0.01, "learning_rate": 0.001})"},
        {"Final Answer", R"({"final_answer": "done"})"},
    };
    for (const auto& [action, input] : fixtures) {
        const auto turn = parse_turn(turn_text(action, input), reg);
        const auto again = parse_turn(render_turn(turn), reg);
        EXPECT_EQ(again, turn) << action;
    }
}

TEST(ParseTurn, FuzzNeverEscapesTypedErrors) {
    std::mt19937 rng(7);
    const auto& reg = ToolRegistry::standard();
    const auto base = turn_text("Inspect Script Lines", R"({"script_name": "a.py", "start_line_number": 1, "end_line_number": 2})");
    const std::string alphabet = "{}[]:,'\"\\ \n\tabcAction Input:0123456789-.*`";
    for (int i = 0; i < 2000; ++i) {
        std::string raw;
        if (i % 2 == 0) {
            raw = base;
            const int edits = 1 + static_cast<int>(rng() % 8);
            for (int k = 0; k < edits && !raw.empty(); ++k) {
                const auto pos = rng() % raw.size();
                switch (rng() % 3) {
                case 0: raw.erase(pos, 1); break;
                case 1: raw.insert(raw.begin() + static_cast<std::ptrdiff_t>(pos), alphabet[rng() % alphabet.size()]); break;
                default: raw[pos] = static_cast<char>(rng() % 256); break;
                }
            }
        } else {
            const auto n = rng() % 300;
            for (std::size_t k = 0; k < n; ++k) raw += static_cast<char>(rng() % 256);
        }
        try {
            parse_turn(raw, reg);
        } catch (const Error& e) {
            const auto c = e.code();
            EXPECT_TRUE(c == ErrorCode::MissingHeader || c == ErrorCode::UnknownTool || c == ErrorCode::MalformedInput)
                << code_name(c);
        }
    }
}

TEST(Summary, ReasoningFromLogStyleReply) {
    auto gw = gateway_for(scripted({"[Reasoning]: The action aims to understand the current directory structure "
                                    "and available datasets in train.py and eval.py.\n"
                                    "[Action]: Inspect Script Lines on train.py\n"
                                    "[Observation]: The script defines constants.\n"
                                    "[Feedback]: continue"}));
    const auto s = summarize_step(sample_turn(), "obs", *gw);
    EXPECT_EQ(s.reasoning.rfind("The action aims to understand the current directory structure", 0), 0u);
    EXPECT_EQ(s.feedback, "continue");
    EXPECT_FALSE(s.truncated);
}

TEST(Summary, ShortSummaryCountsFiveWords) {
    auto gw = gateway_for(scripted({"[Reasoning]: one two\n[Action]: three\n[Observation]: four\n[Feedback]: five"}));
    const auto s = summarize_step(sample_turn(), "obs", *gw);
    EXPECT_EQ(s.word_count, 5u);
    EXPECT_FALSE(s.truncated);
    EXPECT_EQ(gw->calls(), 1u);
}

TEST(Summary, OverlongTwiceTruncatesToLimit) {
    const std::string longreply = "[Reasoning]: " + words(150, "r") + "\n[Action]: " + words(100, "a") +
                                  "\n[Observation]: " + words(150, "o") + "\n[Feedback]: " + words(50, "f");
    ASSERT_EQ(independent_words(longreply) - 4, 450u);
    auto gw = gateway_for(scripted({longreply, longreply}));
    const auto s = summarize_step(sample_turn(), "obs", *gw);
    EXPECT_EQ(gw->calls(), 2u);
    EXPECT_TRUE(s.truncated);
    EXPECT_EQ(s.word_count, 300u);
    const auto all = s.reasoning + " " + s.action + " " + s.observation + " " + s.feedback;
    EXPECT_EQ(count_of(all, std::string(kSummaryTruncationMarker)), 1u);
    // marker is one extra token on top of the kept words
    EXPECT_EQ(independent_words(all), 301u);
    EXPECT_EQ(independent_words(s.observation), 51u);
    EXPECT_TRUE(s.feedback.empty());
}

TEST(Summary, ReaskRecoversFromMissingLabels) {
    auto gw = gateway_for(scripted({"no labels here", "[Reasoning]: r\n[Action]: a\n[Observation]: o\n[Feedback]:"}));
    const auto s = summarize_step(sample_turn(), "obs", *gw);
    EXPECT_EQ(s.reasoning, "r");
    EXPECT_EQ(s.feedback, "");
    EXPECT_EQ(gw->calls(), 2u);
}

TEST(Summary, MissingLabelsTwiceIsParseError) {
    auto gw = gateway_for(scripted({"nothing", "[Reasoning]: only one"}));
    EXPECT_AR_ERROR(summarize_step(sample_turn(), "obs", *gw), ErrorCode::ParseError);
}

TEST(Summary, ParseLabelsWithDoubleColonAndBullets) {
    const auto s = parse_summary("- [Reasoning]: why\n**[Action]**: : Inspect Script\n[Observation]:he script\nmore\n[Feedback]:");
    EXPECT_EQ(s.reasoning, "why");
    EXPECT_EQ(s.action, "Inspect Script");
    EXPECT_EQ(s.observation, "he script\nmore");
    EXPECT_EQ(s.word_count, 6u);
}

TEST(Summary, EveryProducedSummaryWithinLimit) {
    std::mt19937 rng(3);
    for (int i = 0; i < 50; ++i) {
        StepSummary s;
        s.reasoning = words(rng() % 200);
        s.action = words(rng() % 200);
        s.observation = words(rng() % 200);
        s.feedback = words(rng() % 200);
        const auto t = truncate_summary(s);
        EXPECT_LE(t.word_count, kSummaryWordLimit);
        const auto kept = independent_words(t.reasoning + " " + t.action + " " + t.observation + " " + t.feedback);
        EXPECT_EQ(kept, t.truncated ? kSummaryWordLimit + 1 : t.word_count);
    }
}

TEST(Summary, LocalSummaryIsBoundedAndDeterministic) {
    const auto obs = words(1000, "line");
    const auto a = local_summary(sample_turn(), obs, "try a bigger lr");
    const auto b = local_summary(sample_turn(), obs, "try a bigger lr");
    EXPECT_EQ(a, b);
    EXPECT_LE(a.word_count, kSummaryWordLimit);
    EXPECT_EQ(a.feedback, "try a bigger lr");
    EXPECT_NE(a.action.find("Execute Script"), std::string::npos);
}

TEST(Summary, PromptCarriesLimitAndLabels) {
    const auto p = summary_prompt(sample_turn(), "stdout here", "");
    EXPECT_NE(p.find("300 words"), std::string::npos);
    for (const auto l : {"[Reasoning]", "[Action]", "[Observation]", "[Feedback]"}) EXPECT_NE(p.find(l), std::string::npos);
    EXPECT_NE(p.find("stdout here"), std::string::npos);
}
