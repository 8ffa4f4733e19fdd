#pragma once
#include "autoresearch/gateway.hpp"

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace autoresearch::protocol {

enum class FieldKind { Text, Integer, Number };

struct FieldSpec {
    std::string name;
    std::string description;
    bool required = true;
    FieldKind kind = FieldKind::Text;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<FieldSpec> input_schema;
    std::string observation;

    // The Action / Action Input / Observation skeleton for this tool.
    std::string usage_block() const;
};

namespace tools {
inline constexpr std::string_view ListFiles = "List Files";
inline constexpr std::string_view CopyFile = "Copy File";
inline constexpr std::string_view UndoEditScript = "Undo Edit Script";
inline constexpr std::string_view ExecuteScript = "Execute Script";
inline constexpr std::string_view RequestHelp = "Request Help";
inline constexpr std::string_view FinalAnswer = "Final Answer";
inline constexpr std::string_view UnderstandFile = "Understand File";
inline constexpr std::string_view InspectScriptLines = "Inspect Script Lines";
inline constexpr std::string_view EditScriptAI = "Edit Script (AI)";
inline constexpr std::string_view Reflection = "Reflection";
inline constexpr std::string_view RetrieveDataset = "Retrieve Dataset";
inline constexpr std::string_view RetrieveModel = "Retrieve Model";
inline constexpr std::string_view ProcessDataset = "Process Dataset";
inline constexpr std::string_view TrainModel = "Train Model";
inline constexpr std::string_view ExecuteModelOnTestSet = "Execute Model on Test Set";
inline constexpr std::string_view EvaluateModel = "Evaluate Model";
} // namespace tools

class ToolRegistry {
public:
    // Throws DuplicateTool, InvalidArgument on an empty list.
    explicit ToolRegistry(std::vector<ToolSpec> tools);

    // All sixteen agent tools in catalog order.
    static const ToolRegistry& standard();

    const ToolSpec* find(std::string_view name) const;
    const std::vector<ToolSpec>& tools() const { return tools_; }
    std::vector<std::string> names() const;
    std::string catalog() const;

private:
    std::vector<ToolSpec> tools_;
};

// Throws DuplicateTool, InvalidArgument when empty.
std::string render_tool_catalog(const std::vector<ToolSpec>& tools);

struct Action {
    std::string name;
    nlohmann::json input = nlohmann::json::object();

    std::string text(std::string_view field) const;     // "" when absent
    long integer(std::string_view field) const;         // MalformedInput when not integral
    double number(std::string_view field) const;        // MalformedInput when not numeric
    bool operator==(const Action&) const = default;
};

struct AgentTurn {
    std::string reflection;
    std::string plan_status;
    std::string fact_check;
    std::string thought;
    std::string questions;
    Action action;

    bool operator==(const AgentTurn&) const = default;
};

inline constexpr std::string_view kTurnHeaders[] = {
    "Reflection", "Research Plan and Status", "Fact Check", "Thought", "Questions", "Action", "Action Input",
};

// Throws MissingHeader, UnknownTool, MalformedInput. Never anything else.
AgentTurn parse_turn(std::string_view raw, const ToolRegistry& registry);
std::string render_turn(const AgentTurn& turn);

inline constexpr std::size_t kSummaryWordLimit = 300;
inline constexpr std::string_view kSummaryTruncationMarker = "[...truncated]";

struct StepSummary {
    std::string reasoning;
    std::string action;
    std::string observation;
    std::string feedback;
    std::size_t word_count = 0;
    bool truncated = false;

    std::string render() const;
    bool operator==(const StepSummary&) const = default;
};

// Throws ParseError when a label is missing.
StepSummary parse_summary(std::string_view text);

// Keeps the first max_words words across fields in order and marks the cut.
StepSummary truncate_summary(StepSummary summary, std::size_t max_words = kSummaryWordLimit);

std::string summary_prompt(const AgentTurn& turn, std::string_view observation, std::string_view feedback);

// One gateway call; re-asks once on missing labels or an over-long reply,
// then truncates. Throws ParseError when labels are still missing.
StepSummary summarize_step(const AgentTurn& turn, std::string_view observation, llm::Gateway& gateway,
                           std::string_view feedback = {});

// Deterministic summary built without a model call.
StepSummary local_summary(const AgentTurn& turn, std::string_view observation, std::string_view feedback = {});

} // namespace autoresearch::protocol
