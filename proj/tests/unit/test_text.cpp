#include "autoresearch/lenient_json.hpp"
#include "autoresearch/task.hpp"
#include "autoresearch/text.hpp"
#include "support.hpp"

using namespace autoresearch;
using namespace testsupport;
using nlohmann::json;

TEST(Text, TrimAndCase) {
    EXPECT_EQ(text::trim("  a b \n"), "a b");
    EXPECT_EQ(text::to_lower("AbC"), "abc");
    EXPECT_TRUE(text::starts_with_ci("Method: x", "method:"));
    EXPECT_TRUE(text::iequals("Keywords", "KEYWORDS"));
}

TEST(Text, SplitLinesKeepEndingsReassembles) {
    const std::string s = "a\r\nb\n\nc";
    std::string joined;
    for (const auto& l : text::split_lines_keep_endings(s)) joined += l;
    EXPECT_EQ(joined, s);
    EXPECT_EQ(text::split_lines(s).size(), 4u);
}

TEST(Text, AlnumTokensAndWords) {
    EXPECT_EQ(text::alnum_tokens("Aspect-level, SENTIMENT 2x!"),
              (std::vector<std::string>{"aspect", "level", "sentiment", "2x"}));
    EXPECT_EQ(text::word_count("  one two\tthree\n"), 3u);
    EXPECT_EQ(text::normalize_title("  Deep   Learning\tFor  X "), "deep learning for x");
}

TEST(Text, Utf8SafePrefixNeverSplitsSequence) {
    const std::string s = "ab\xC3\xA9z"; // a b e-acute z
    EXPECT_EQ(text::utf8_safe_prefix(s, 3), 2u);
    EXPECT_EQ(text::utf8_safe_prefix(s, 4), 4u);
    EXPECT_EQ(text::utf8_safe_prefix(s, 100), s.size());
}

TEST(Text, ParseNumber) {
    EXPECT_EQ(text::parse_number("1.5"), 1.5);
    EXPECT_EQ(text::parse_number(" -2 "), -2.0);
    EXPECT_FALSE(text::parse_number("abc"));
    EXPECT_FALSE(text::parse_number("1.5x"));
}

TEST(LenientJson, SloppyInputNormalizesToCanonicalObject) {
    const json canonical = {{"script_name", "train.py"}, {"start_line_number", 1}, {"end_line_number", 74}};
    const auto parsed =
        protocol::parse_lenient_object("{'script_name': 'train.py', start_line_number: 1, 'end_line_number': 74,}");
    EXPECT_EQ(parsed, canonical);
}

TEST(LenientJson, FencesLiteralsAndRawNewlines) {
    const auto parsed = protocol::parse_lenient_object("```json\n{\"a\": True, \"b\": None, \"c\": \"x\ny\"}\n```");
    EXPECT_EQ(parsed["a"], true);
    EXPECT_TRUE(parsed["b"].is_null());
    EXPECT_EQ(parsed["c"], "x\ny");
}

TEST(LenientJson, GarbageIsMalformedInput) {
    EXPECT_AR_ERROR(protocol::parse_lenient_object("no object here"), ErrorCode::MalformedInput);
    EXPECT_AR_ERROR(protocol::parse_lenient_object("{\"a\": "), ErrorCode::MalformedInput);
}

TEST(Task, LoadsToyPackage) {
    const auto t = TaskPackage::load(data_dir() / "tasks" / "toy_linear");
    EXPECT_EQ(t.name, "toy_linear");
    EXPECT_EQ(t.metric, "mse");
    EXPECT_EQ(t.direction, Direction::LowerBetter);
    EXPECT_EQ(t.baseline_command, "python3 train.py");
    EXPECT_EQ(t.eval_command, t.baseline_command);
    EXPECT_EQ(t.train_entrypoint, kBuiltinLinear);
    EXPECT_TRUE(fs::is_directory(t.prototype_dir()));
}

TEST(Task, MissingMetaAndMissingKey) {
    TempDir d;
    EXPECT_AR_ERROR(TaskPackage::load(d.path()), ErrorCode::FileMissing);
    fs::create_directories(d / "prototype");
    write(d / "task.meta", "name: x\nmetric: mse\n");
    EXPECT_AR_ERROR(TaskPackage::load(d.path()), ErrorCode::SchemaError);
}

TEST(Task, MetricFromOutputTakesLastOccurrence) {
    EXPECT_EQ(metric_from_output("MSE: 3\nother\nmse = 0.25\n", "mse"), 0.25);
    EXPECT_FALSE(metric_from_output("accuracy: 0.9", "mse"));
}

TEST(Task, DirectionNames) {
    EXPECT_EQ(parse_direction("higher_better"), Direction::HigherBetter);
    EXPECT_EQ(direction_name(Direction::LowerBetter), "lower_better");
    EXPECT_AR_ERROR(parse_direction("sideways"), ErrorCode::InvalidArgument);
}
