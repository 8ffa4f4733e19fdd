#include "autoresearch/protocol.hpp"
#include "autoresearch/error.hpp"
#include "autoresearch/lenient_json.hpp"
#include "autoresearch/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace autoresearch::protocol {

using nlohmann::json;

std::string ToolSpec::usage_block() const {
    std::string s;
    s += "- " + name + ":\n";
    s += "        " + description + "\n";
    s += "        Usage:\n";
    s += "        ```\n";
    s += "        Action: " + name + "\n";
    s += "        Action Input: {\n";
    for (std::size_t i = 0; i < input_schema.size(); ++i) {
        const auto& f = input_schema[i];
        s += "            \"" + f.name + "\": [" + f.description + (f.required ? "" : " (optional)") + "]";
        s += i + 1 < input_schema.size() ? ",\n" : "\n";
    }
    s += "        }\n";
    s += "        Observation: [" + observation + "]\n";
    s += "        ```\n";
    return s;
}

namespace {

FieldSpec text_field(std::string name, std::string description) {
    return FieldSpec{std::move(name), std::move(description), true, FieldKind::Text};
}
FieldSpec int_field(std::string name, std::string description) {
    return FieldSpec{std::move(name), std::move(description), true, FieldKind::Integer};
}
FieldSpec num_field(std::string name, std::string description) {
    return FieldSpec{std::move(name), std::move(description), true, FieldKind::Number};
}

const char* kRelFile = "file path relative to the workspace root";
const char* kLoadDirs = "dataset directories to read, joined with colons";

std::vector<ToolSpec> standard_tools() {
    using namespace std::string_literals;
    return {
        {std::string(tools::ListFiles), "Lists the files and folders inside a workspace directory.",
         {text_field("dir_path", "directory relative to the workspace root, e.g. \".\" or \"src/utils\"")},
         "the sorted directory entries, folders ending in /, or an error if dir_path is not a valid directory"},
        {std::string(tools::CopyFile), "Copies one file to another path inside the workspace.",
         {text_field("source", kRelFile), text_field("destination", kRelFile)},
         "a confirmation once the copy exists, or an error explaining why the copy failed"},
        {std::string(tools::UndoEditScript), "Reverts the most recent edit made to a script.",
         {text_field("script_name", kRelFile)},
         "the script content as it was before the reverted edit, or an error if nothing can be undone"},
        {std::string(tools::ExecuteScript), "Runs an existing script in the workspace and captures its output.",
         {text_field("script_name", kRelFile)},
         "the captured stdout and stderr together with the exit status"},
        {std::string(tools::RequestHelp),
         "Asks the supervising researcher for input. Check the available tools and files first; use this for "
         "things they cannot provide, such as missing references or packages.",
         {text_field("request", "what you need from the researcher, stated precisely")},
         "the researcher's reply"},
        {std::string(tools::FinalAnswer), "Submits the final result of the task. Only one submission is accepted.",
         {text_field("final_answer", "a complete account of the result and how it was reached")},
         "empty"},
        {std::string(tools::UnderstandFile),
         "Reads a whole file and reports on the aspects you ask about. Use Inspect Script Lines when you need the "
         "exact text of a region.",
         {text_field("file_name", kRelFile), text_field("things_to_look_for", "which aspects to report on")},
         "a description of the relevant parts of the file with line references, or an error if it does not exist"},
        {std::string(tools::InspectScriptLines),
         "Shows an exact line range of a script, at most 100 lines per request.",
         {text_field("script_name", kRelFile), int_field("start_line_number", "first line to show, starting at 1"),
          int_field("end_line_number", "last line to show, inclusive")},
         "the requested lines verbatim, or an error if the script or range is invalid"},
        {std::string(tools::EditScriptAI),
         "Applies a described edit to a script. Write the edit as instructions; an assistant model rewrites the "
         "file accordingly.",
         {text_field("script_name", kRelFile + " (created empty when missing)"s),
          text_field("edit_instruction", "step by step description of the change"),
          text_field("save_name", "where to write the edited script")},
         "the edited script content; review it and use Undo Edit Script if it went wrong"},
        {std::string(tools::Reflection), "Reviews the steps taken so far and reflects on the question you pose.",
         {text_field("things_to_reflect_on", "what to reflect on and what to report")},
         "the reflection text"},
        {std::string(tools::RetrieveDataset),
         "Finds a dataset that matches the described requirements and saves it under save_dir.",
         {text_field("instruction", "the requirements the dataset must meet"),
          text_field("save_dir", "directory to write the dataset to, e.g. data/retrieved/")},
         "a confirmation naming the saved dataset, or an error"},
        {std::string(tools::RetrieveModel), "Finds candidate models that match the described requirements.",
         {text_field("instruction", "the requirements the model must meet")},
         "a ranked list of candidate models to choose from"},
        {std::string(tools::ProcessDataset),
         "Transforms datasets as instructed. Results carry a model_input column and a model_output column.",
         {text_field("instruction", "how each input row should be transformed"),
          text_field("load_dirs", kLoadDirs),
          text_field("save_dirs", "output directories joined with colons, in the same order as load_dirs")},
         "a confirmation with row counts, or an error"},
        {std::string(tools::TrainModel),
         "Trains the task's model on processed datasets with the given hyperparameters.",
         {text_field("model_name", "model to train"), text_field("load_dirs", kLoadDirs),
          text_field("result_dir", "directory for the trained artifact; it is written to {result_dir}/trained_model/"),
          int_field("epochs", "number of training epochs"), int_field("batch_size", "training batch size"),
          int_field("warmup_steps", "optimizer warmup steps"), num_field("weight_decay", "optimizer weight decay"),
          num_field("learning_rate", "optimizer learning rate")},
         "a confirmation with the training metrics, or an error"},
        {std::string(tools::ExecuteModelOnTestSet),
         "Runs a trained model over the test split of each dataset and stores the predictions.",
         {text_field("result_dir", "directory holding the trained artifact"), text_field("load_dirs", kLoadDirs),
          text_field("save_path", "JSON file to write predictions to"),
          int_field("batch_size", "prediction batch size"), text_field("input_column", "column holding model inputs")},
         "a confirmation with the number of predictions, or an error"},
        {std::string(tools::EvaluateModel), "Scores stored predictions against the test split references.",
         {text_field("load_dirs", kLoadDirs), text_field("save_path", "JSON file holding the predictions"),
          text_field("output_column", "column holding reference outputs")},
         "the computed metric values"},
    };
}

} // namespace

ToolRegistry::ToolRegistry(std::vector<ToolSpec> tools) : tools_(std::move(tools)) {
    if (tools_.empty()) fail(ErrorCode::InvalidArgument, "tool registry is empty");
    std::set<std::string> seen;
    for (const auto& t : tools_)
        if (!seen.insert(t.name).second) fail(ErrorCode::DuplicateTool, "duplicate tool name '" + t.name + "'");
}

const ToolRegistry& ToolRegistry::standard() {
    static const ToolRegistry registry(standard_tools());
    return registry;
}

const ToolSpec* ToolRegistry::find(std::string_view name) const {
    for (const auto& t : tools_)
        if (t.name == name) return &t;
    for (const auto& t : tools_)
        if (text::iequals(t.name, name)) return &t;
    return nullptr;
}

std::vector<std::string> ToolRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& t : tools_) out.push_back(t.name);
    return out;
}

std::string ToolRegistry::catalog() const {
    return render_tool_catalog(tools_);
}

std::string render_tool_catalog(const std::vector<ToolSpec>& tools) {
    ToolRegistry check(tools);
    std::string out;
    for (std::size_t i = 0; i < tools.size(); ++i) {
        if (i) out += '\n';
        out += tools[i].usage_block();
    }
    return out;
}

std::string Action::text(std::string_view field) const {
    const auto key = std::string(field);
    if (!input.is_object() || !input.contains(key)) return {};
    const auto& v = input.at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return {};
    if (v.is_array()) {
        std::vector<std::string> parts;
        for (const auto& e : v) parts.push_back(e.is_string() ? e.get<std::string>() : e.dump());
        return text::join(parts, ":");
    }
    return v.dump();
}

namespace {

std::optional<double> as_number(const json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return text::parse_number(text::trim(v.get<std::string>()));
    return std::nullopt;
}

} // namespace

long Action::integer(std::string_view field) const {
    const auto key = std::string(field);
    if (!input.is_object() || !input.contains(key)) fail(ErrorCode::MalformedInput, "missing field '" + key + "'");
    const auto n = as_number(input.at(key));
    if (!n || std::floor(*n) != *n || std::fabs(*n) > 1e15)
        fail(ErrorCode::MalformedInput, "field '" + key + "' must be an integer");
    return static_cast<long>(*n);
}

double Action::number(std::string_view field) const {
    const auto key = std::string(field);
    if (!input.is_object() || !input.contains(key)) fail(ErrorCode::MalformedInput, "missing field '" + key + "'");
    const auto n = as_number(input.at(key));
    if (!n) fail(ErrorCode::MalformedInput, "field '" + key + "' must be a number");
    return *n;
}

namespace {

constexpr int kActionIdx = 5;
constexpr int kActionInputIdx = 6;
constexpr int kObservationStop = 7;

std::string_view skip_ws(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

std::string_view strip_stars(std::string_view s) {
    while (!s.empty() && s.front() == '*') s.remove_prefix(1);
    return s;
}

// Header index and the text following the colon.
std::optional<std::pair<int, std::string_view>> match_turn_header(std::string_view line) {
    auto s = skip_ws(line);
    if (!s.empty() && s.front() == '-') s = skip_ws(s.substr(1));
    s = strip_stars(s);
    static const std::pair<std::string_view, int> names[] = {
        {"Research Plan and Status", 1}, {"Action Input", 6}, {"Reflection", 0}, {"Fact Check", 2},
        {"Questions", 4},                {"Thought", 3},      {"Action", 5},     {"Observation", kObservationStop},
    };
    for (const auto& [name, idx] : names) {
        if (s.substr(0, name.size()) != name) continue;
        auto rest = skip_ws(strip_stars(s.substr(name.size())));
        if (rest.empty() || rest.front() != ':') continue;
        rest = skip_ws(strip_stars(rest.substr(1)));
        return std::make_pair(idx, rest);
    }
    return std::nullopt;
}

std::string clean_action_name(std::string_view raw) {
    auto name = text::trim(raw);
    auto strip = [](std::string& s, char c) {
        while (!s.empty() && s.front() == c) s.erase(s.begin());
        while (!s.empty() && s.back() == c) s.pop_back();
    };
    for (int i = 0; i < 2; ++i) {
        strip(name, '*');
        strip(name, '`');
        strip(name, '"');
        strip(name, '\'');
        name = text::trim(name);
    }
    return name;
}

std::string canonical_key(std::string_view key) {
    std::string out;
    for (char c : key) {
        if (c == '\\') continue;
        if (c == ' ' || c == '-') c = '_';
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return text::trim(out);
}

json normalize_input(const json& raw, const ToolSpec& tool) {
    json out = json::object();
    for (auto it = raw.begin(); it != raw.end(); ++it) {
        const auto key = canonical_key(it.key());
        std::string target = it.key();
        for (const auto& f : tool.input_schema)
            if (f.name == key) target = f.name;
        if (!out.contains(target)) out[target] = it.value();
    }
    for (const auto& f : tool.input_schema) {
        const bool present = out.contains(f.name) && !out[f.name].is_null();
        if (!present) {
            if (f.required) fail(ErrorCode::MalformedInput, "missing field '" + f.name + "' for " + tool.name);
            continue;
        }
        const auto& v = out[f.name];
        if (f.kind == FieldKind::Text) {
            if (v.is_object()) fail(ErrorCode::MalformedInput, "field '" + f.name + "' must be text");
            continue;
        }
        const auto n = as_number(v);
        if (!n || !std::isfinite(*n))
            fail(ErrorCode::MalformedInput, "field '" + f.name + "' must be a number");
        if (f.kind == FieldKind::Integer && (std::floor(*n) != *n || std::fabs(*n) > 1e15))
            fail(ErrorCode::MalformedInput, "field '" + f.name + "' must be an integer");
    }
    return out;
}

} // namespace

AgentTurn parse_turn(std::string_view raw, const ToolRegistry& registry) {
    std::optional<std::string> sections[7];
    int current = -1;
    for (const auto& line : text::split_lines(raw)) {
        if (auto m = match_turn_header(line)) {
            const int idx = m->first;
            if (idx == kObservationStop) {
                if (sections[kActionInputIdx]) break;
            } else if (!sections[idx]) {
                sections[idx] = std::string(m->second);
                current = idx;
                continue;
            }
        }
        if (current >= 0) {
            *sections[current] += '\n';
            *sections[current] += line;
        }
    }
    for (int i = 0; i < 7; ++i)
        if (!sections[i]) fail(ErrorCode::MissingHeader, std::string(kTurnHeaders[i]));

    AgentTurn turn;
    turn.reflection = text::trim(*sections[0]);
    turn.plan_status = text::trim(*sections[1]);
    turn.fact_check = text::trim(*sections[2]);
    turn.thought = text::trim(*sections[3]);
    turn.questions = text::trim(*sections[4]);

    const auto name = clean_action_name(*sections[kActionIdx]);
    const auto* tool = registry.find(name);
    if (!tool) fail(ErrorCode::UnknownTool, name);
    turn.action.name = tool->name;

    const auto input_text = text::trim(*sections[kActionInputIdx]);
    if (input_text.empty()) fail(ErrorCode::MalformedInput, "Action Input is empty");
    try {
        const auto obj = parse_lenient_object(input_text);
        turn.action.input = normalize_input(obj, *tool);
    } catch (const json::exception& e) {
        fail(ErrorCode::MalformedInput, e.what());
    }
    return turn;
}

namespace {
std::string dump(const json& j, int indent = -1) {
    return j.dump(indent, ' ', false, json::error_handler_t::replace);
}
} // namespace

std::string render_turn(const AgentTurn& turn) {
    std::string s;
    s += "Reflection: " + turn.reflection + "\n";
    s += "Research Plan and Status: " + turn.plan_status + "\n";
    s += "Fact Check: " + turn.fact_check + "\n";
    s += "Thought: " + turn.thought + "\n";
    s += "Questions: " + turn.questions + "\n";
    s += "Action: " + turn.action.name + "\n";
    s += "Action Input: " + dump(turn.action.input, 4) + "\n";
    return s;
}

namespace {

const std::string_view kSummaryLabels[] = {"[Reasoning]", "[Action]", "[Observation]", "[Feedback]"};

std::size_t count_words(const StepSummary& s) {
    return text::word_count(s.reasoning) + text::word_count(s.action) + text::word_count(s.observation) +
           text::word_count(s.feedback);
}

} // namespace

std::string StepSummary::render() const {
    return "[Reasoning]: " + reasoning + "\n[Action]: " + action + "\n[Observation]: " + observation +
           "\n[Feedback]: " + feedback;
}

StepSummary parse_summary(std::string_view response) {
    std::optional<std::string> fields[4];
    int current = -1;
    for (const auto& line : text::split_lines(response)) {
        auto s = skip_ws(line);
        if (!s.empty() && s.front() == '-') s = skip_ws(s.substr(1));
        s = strip_stars(s);
        int hit = -1;
        for (int i = 0; i < 4; ++i) {
            if (!fields[i] && text::starts_with_ci(s, kSummaryLabels[i])) {
                hit = i;
                break;
            }
        }
        if (hit >= 0) {
            auto rest = skip_ws(strip_stars(s.substr(kSummaryLabels[hit].size())));
            while (!rest.empty() && rest.front() == ':') rest = skip_ws(rest.substr(1));
            fields[hit] = std::string(rest);
            current = hit;
            continue;
        }
        if (current >= 0) {
            *fields[current] += '\n';
            *fields[current] += line;
        }
    }
    for (int i = 0; i < 4; ++i)
        if (!fields[i]) fail(ErrorCode::ParseError, "summary is missing the " + std::string(kSummaryLabels[i]) + " label");
    StepSummary out;
    out.reasoning = text::trim(*fields[0]);
    out.action = text::trim(*fields[1]);
    out.observation = text::trim(*fields[2]);
    out.feedback = text::trim(*fields[3]);
    out.word_count = count_words(out);
    return out;
}

StepSummary truncate_summary(StepSummary summary, std::size_t max_words) {
    summary.word_count = count_words(summary);
    if (summary.word_count <= max_words) return summary;
    std::size_t budget = max_words;
    bool cut = false;
    for (auto* field : {&summary.reasoning, &summary.action, &summary.observation, &summary.feedback}) {
        if (cut) {
            field->clear();
            continue;
        }
        const auto w = text::words(*field);
        if (w.size() <= budget) {
            budget -= w.size();
            continue;
        }
        std::vector<std::string> kept(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(budget));
        kept.emplace_back(kSummaryTruncationMarker);
        *field = text::join(kept, " ");
        cut = true;
    }
    summary.word_count = max_words;
    summary.truncated = true;
    return summary;
}

namespace {
constexpr std::size_t kObservationPromptChars = 8000;
}

std::string summary_prompt(const AgentTurn& turn, std::string_view observation, std::string_view feedback) {
    std::string obs(observation.substr(0, text::utf8_safe_prefix(observation, kObservationPromptChars)));
    if (obs.size() < observation.size()) obs += "\n[observation clipped]";
    std::string p;
    p += "Condense one step of a research agent into a short factual record.\n\n";
    p += "Agent reasoning:\n" + (turn.thought.empty() ? turn.reflection : turn.thought) + "\n\n";
    p += "Action: " + turn.action.name + "\n";
    p += "Action Input: " + dump(turn.action.input) + "\n\n";
    p += "Observation:\n```\n" + obs + "\n```\n\n";
    p += "Human feedback:\n" + (feedback.empty() ? std::string("none") : std::string(feedback)) + "\n\n";
    p += "Write fewer than 300 words, using exactly these four labeled lines:\n"
         "[Reasoning]: why the action was taken\n"
         "[Action]: what was done, with its relevant inputs\n"
         "[Observation]: what the observation showed, stated objectively\n"
         "[Feedback]: what the human feedback said, or nothing\n"
         "State only what the observation confirms.\n";
    return p;
}

StepSummary summarize_step(const AgentTurn& turn, std::string_view observation, llm::Gateway& gateway,
                           std::string_view feedback) {
    llm::CompletionRequest req;
    req.prompt = summary_prompt(turn, observation, feedback);
    req.session_tag = "summary";
    auto reply = gateway.complete(req);
    std::string complaint;
    try {
        auto s = parse_summary(reply.text);
        if (s.word_count <= kSummaryWordLimit) return s;
        complaint = "Your summary had " + std::to_string(s.word_count) + " words. Keep it under 300 words.";
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ParseError) throw;
        complaint = std::string(e.what()) + ". Use all four labels.";
    }
    req.prompt += "\n" + complaint + "\n";
    reply = gateway.complete(req);
    return truncate_summary(parse_summary(reply.text));
}

StepSummary local_summary(const AgentTurn& turn, std::string_view observation, std::string_view feedback) {
    StepSummary s;
    s.reasoning = turn.thought.empty() ? turn.reflection : turn.thought;
    s.action = turn.action.name + " " + dump(turn.action.input);
    const auto obs_words = text::words(observation);
    std::vector<std::string> head(obs_words.begin(),
                                  obs_words.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(obs_words.size(), 120)));
    s.observation = text::join(head, " ");
    if (head.size() < obs_words.size()) s.observation += " ...";
    s.feedback = std::string(feedback);
    return truncate_summary(std::move(s));
}

} // namespace autoresearch::protocol
