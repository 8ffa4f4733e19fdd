#include "autoresearch/idea.hpp"
#include "autoresearch/error.hpp"
#include "autoresearch/text.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

namespace autoresearch::idea {

using nlohmann::json;

std::string Hypothesis::title() const {
    const auto lines = text::split_lines(method);
    return lines.empty() ? std::string() : text::trim(lines.front());
}

std::string render_related(const std::vector<corpus::RelatedWork>& related) {
    if (related.empty()) return "(none found)\n";
    std::string s;
    for (const auto& r : related) {
        s += "Title: \"" + r.title + "\"";
        if (r.year > 0) s += " (" + std::to_string(r.year) + ")";
        s += "\nAbstract: " + r.abstract_text + "\n";
    }
    return s;
}

namespace {

std::string problem_block(const corpus::PromptContext& context, const std::vector<corpus::RelatedWork>& related) {
    std::string p;
    p += "Research problem:\n'''\n" + context.render() + "\n\n";
    p += "Recent works:\n" + render_related(related) + "'''\n\n";
    return p;
}

std::string feedback_block(std::string_view feedback) {
    if (text::trim(feedback).empty()) return {};
    return "Feedback on an earlier attempt, to take into account:\n" + std::string(feedback) + "\n\n";
}

} // namespace

std::string hypothesis_prompt(const corpus::PromptContext& context, const std::vector<corpus::RelatedWork>& related,
                              std::string_view feedback) {
    std::string p;
    p += "You are assisting a scientist who wants a new, well-founded method for an open research problem.\n"
         "The problem below was distilled from a target paper: its selected sections, the research tasks (t), "
         "the research gaps (g) and keywords (k). Recent related works follow it. Read the problem first, then "
         "the related works, then the keywords, which may or may not be useful.\n"
         "Propose one method that is clear, novel, rigorous, valid and general enough to transfer to similar "
         "problems.\n\n";
    p += problem_block(context, related);
    p += feedback_block(feedback);
    p += "Answer in exactly this layout:\nMethod: <method name on this line, then its description>\n\n"
         "Rationale: <why the method addresses the problem>\n";
    return p;
}

std::string plan_prompt(const corpus::PromptContext& context, const std::vector<corpus::RelatedWork>& related,
                        const Hypothesis& hypothesis, std::string_view feedback) {
    std::string p;
    p += "You are assisting a scientist who must test a proposed method experimentally.\n"
         "The research problem, recent works and the proposed method are given below. Design an experiment "
         "that would confirm or refute the method's benefit, with numbered design stages a practitioner can "
         "follow in order.\n\n";
    p += problem_block(context, related);
    p += "Proposed method:\n'''\n" + render_hypothesis(hypothesis) + "\n'''\n\n";
    p += feedback_block(feedback);
    p += "Answer in exactly this layout:\nExperiment: <title and objective>\n"
         "Experiment Design:\n1. <first stage>\n2. <next stage>\n...\n\n"
         "Rationale: <why this experiment is a fair test>\n";
    return p;
}

namespace {

// Text after "<name>:" when the line is that header, ignoring leading
// whitespace, markdown '#' and emphasis.
std::optional<std::string> header_rest(std::string_view line, std::string_view name) {
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '#' || line[i] == '*')) ++i;
    auto s = line.substr(i);
    if (!text::starts_with_ci(s, name)) return std::nullopt;
    auto rest = s.substr(name.size());
    while (!rest.empty() && rest.front() == '*') rest.remove_prefix(1);
    if (rest.empty() || rest.front() != ':') return std::nullopt;
    rest.remove_prefix(1);
    while (!rest.empty() && rest.front() == '*') rest.remove_prefix(1);
    return std::string(rest);
}

std::string collect(const std::vector<std::string>& lines, std::size_t header, std::size_t end,
                    const std::string& first) {
    std::string s = first;
    for (std::size_t i = header + 1; i < end; ++i) {
        s += '\n';
        s += lines[i];
    }
    return text::trim(s);
}

} // namespace

Hypothesis parse_hypothesis(std::string_view response) {
    const auto lines = text::split_lines(response);
    std::optional<std::size_t> method_at, rationale_at, stop_at;
    std::string method_first, rationale_first;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!method_at) {
            if (auto r = header_rest(lines[i], "Method")) {
                method_at = i;
                method_first = *r;
            }
        } else if (!rationale_at) {
            if (auto r = header_rest(lines[i], "Rationale")) {
                rationale_at = i;
                rationale_first = *r;
            }
        } else if (header_rest(lines[i], "Experiment")) {
            stop_at = i;
            break;
        }
    }
    if (!method_at) fail(ErrorCode::ParseError, "response has no 'Method:' header");
    if (!rationale_at) fail(ErrorCode::ParseError, "response has no 'Rationale:' header after 'Method:'");
    Hypothesis h;
    h.method = collect(lines, *method_at, *rationale_at, method_first);
    h.rationale = collect(lines, *rationale_at, stop_at.value_or(lines.size()), rationale_first);
    if (h.method.empty()) fail(ErrorCode::ParseError, "'Method:' section is empty");
    if (h.rationale.empty()) fail(ErrorCode::ParseError, "'Rationale:' section is empty");
    return h;
}

std::string render_hypothesis(const Hypothesis& h) {
    return "Method: " + h.method + "\n\nRationale: " + h.rationale + "\n";
}

namespace {

struct Marker {
    int number;
    std::string rest;
};

std::optional<Marker> top_level_marker(std::string_view line) {
    std::size_t indent = 0, i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) {
        indent += line[i] == '\t' ? 4 : 1;
        ++i;
    }
    if (indent >= 2) return std::nullopt;
    const auto digits_start = i;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == digits_start || i - digits_start > 4) return std::nullopt;
    if (i >= line.size() || (line[i] != '.' && line[i] != ')')) return std::nullopt;
    ++i;
    if (i < line.size() && line[i] != ' ' && line[i] != '\t') return std::nullopt;
    Marker m;
    m.number = std::stoi(std::string(line.substr(digits_start, i - 1 - digits_start)));
    m.rest = text::trim(line.substr(i));
    return m;
}

} // namespace

std::vector<PlanStage> split_stages(std::string_view block) {
    const auto lines = text::split_lines(block);
    std::vector<PlanStage> stages;
    for (const auto& line : lines) {
        if (auto m = top_level_marker(line)) {
            PlanStage st;
            st.number = m->number;
            auto title = m->rest;
            const auto colon = title.find(':');
            if (colon != std::string::npos) title = title.substr(0, colon);
            while (!title.empty() && (title.back() == '*' || title.back() == ' ')) title.pop_back();
            while (!title.empty() && title.front() == '*') title.erase(title.begin());
            st.title = text::trim(title);
            st.text = m->rest;
            stages.push_back(std::move(st));
        } else if (!stages.empty()) {
            stages.back().text += '\n';
            stages.back().text += line;
        }
    }
    for (auto& st : stages) st.text = text::trim(st.text);
    std::stable_sort(stages.begin(), stages.end(),
                     [](const PlanStage& a, const PlanStage& b) { return a.number < b.number; });
    return stages;
}

ExperimentPlan parse_plan(std::string_view response) {
    const auto lines = text::split_lines(response);
    std::optional<std::size_t> exp_at, rat_at;
    std::string exp_first, rat_first;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!exp_at) {
            if (auto r = header_rest(lines[i], "Experiment")) {
                exp_at = i;
                exp_first = *r;
            }
        } else if (auto r = header_rest(lines[i], "Rationale")) {
            rat_at = i;
            rat_first = *r;
        }
    }
    if (!exp_at) fail(ErrorCode::ParseError, "response has no 'Experiment:' header");
    if (!rat_at) fail(ErrorCode::ParseError, "response has no 'Rationale:' header after 'Experiment:'");
    ExperimentPlan p;
    p.raw = collect(lines, *exp_at, *rat_at, exp_first);
    p.rationale = collect(lines, *rat_at, lines.size(), rat_first);
    if (p.rationale.empty()) fail(ErrorCode::ParseError, "'Rationale:' section is empty");
    p.design = split_stages(p.raw);
    if (p.design.empty()) fail(ErrorCode::EmptyPlan, "experiment contains no numbered stages");
    return p;
}

std::string render_plan(const ExperimentPlan& p) {
    return "Experiment: " + p.raw + "\n\nRationale: " + p.rationale + "\n";
}

namespace {

template <class Parse>
auto ask_with_reask(std::string prompt, const char* tag, llm::Gateway& gateway, Parse parse, const char* layout) {
    llm::CompletionRequest req;
    req.prompt = std::move(prompt);
    req.session_tag = tag;
    auto reply = gateway.complete(req);
    try {
        return parse(reply.text);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ParseError) throw;
        req.prompt += "\nYour previous answer could not be used: " + std::string(e.what()) +
                      ". Answer again using the layout " + layout + ".\n";
        reply = gateway.complete(req);
        return parse(reply.text);
    }
}

} // namespace

Hypothesis generate_hypothesis(const corpus::PromptContext& context, const std::vector<corpus::RelatedWork>& related,
                               llm::Gateway& gateway, std::string_view feedback) {
    return ask_with_reask(hypothesis_prompt(context, related, feedback), "hypothesis", gateway,
                          [](const std::string& t) { return parse_hypothesis(t); }, "Method: ... Rationale: ...");
}

ExperimentPlan generate_plan(const corpus::PromptContext& context, const std::vector<corpus::RelatedWork>& related,
                             const Hypothesis& hypothesis, llm::Gateway& gateway, std::string_view feedback) {
    return ask_with_reask(plan_prompt(context, related, hypothesis, feedback), "plan", gateway,
                          [](const std::string& t) { return parse_plan(t); }, "Experiment: ... Rationale: ...");
}

ResearchIdea assemble_idea(corpus::PromptContext context, std::vector<corpus::RelatedWork> related,
                           Hypothesis hypothesis, ExperimentPlan plan, std::string provider_id) {
    if (context.paper.title.empty()) fail(ErrorCode::InvalidArgument, "idea context has no title");
    if (hypothesis.method.empty() || hypothesis.rationale.empty())
        fail(ErrorCode::InvalidArgument, "idea hypothesis is incomplete");
    if (plan.design.empty()) fail(ErrorCode::EmptyPlan, "idea plan has no stages");
    ResearchIdea idea;
    idea.context = std::move(context);
    idea.related = std::move(related);
    idea.hypothesis = std::move(hypothesis);
    idea.plan = std::move(plan);
    idea.provider_id = std::move(provider_id);
    return idea;
}

ResearchIdea refine_idea(const ResearchIdea& prior, std::string_view feedback, llm::Gateway& gateway) {
    const std::string fb = "Previous method:\n" + render_hypothesis(prior.hypothesis) + "\nPrevious experiment:\n" +
                           render_plan(prior.plan) + "\nFeedback:\n" + std::string(feedback);
    auto h = generate_hypothesis(prior.context, prior.related, gateway, fb);
    auto p = generate_plan(prior.context, prior.related, h, gateway, fb);
    return assemble_idea(prior.context, prior.related, std::move(h), std::move(p), gateway.provider_id());
}

json to_json(const ResearchIdea& idea) {
    json related = json::array();
    for (const auto& r : idea.related) related.push_back(corpus::to_json(r));
    json design = json::array();
    for (const auto& st : idea.plan.design)
        design.push_back({{"number", st.number}, {"title", st.title}, {"text", st.text}});
    return {
        {"context", {{"paper", corpus::to_json(idea.context.paper)}, {"frame", corpus::to_json(idea.context.frame)}}},
        {"related", related},
        {"hypothesis", {{"method", idea.hypothesis.method}, {"rationale", idea.hypothesis.rationale}}},
        {"plan", {{"raw", idea.plan.raw}, {"rationale", idea.plan.rationale}, {"design", design}}},
        {"provider_id", idea.provider_id},
        {"templates",
         {{"extraction", idea.extraction_template},
          {"hypothesis", idea.hypothesis_template},
          {"plan", idea.plan_template}}},
    };
}

namespace {

const json& field(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) fail(ErrorCode::SchemaError, "missing field '" + where + key + "'");
    return j.at(key);
}

std::string str_field(const json& j, const std::string& key, const std::string& where) {
    const auto& v = field(j, key, where);
    if (!v.is_string()) fail(ErrorCode::SchemaError, "field '" + where + key + "' must be a string");
    return v.get<std::string>();
}

} // namespace

ResearchIdea idea_from_json(const json& j) {
    if (!j.is_object()) fail(ErrorCode::SchemaError, "idea file must hold an object");
    ResearchIdea idea;
    const auto& ctx = field(j, "context", "");
    idea.context.paper = corpus::paper_from_json(field(ctx, "paper", "context."));
    idea.context.frame = corpus::frame_from_json(field(ctx, "frame", "context."));
    const auto& related = field(j, "related", "");
    if (!related.is_array()) fail(ErrorCode::SchemaError, "field 'related' must be an array");
    for (const auto& r : related) idea.related.push_back(corpus::related_from_json(r));
    const auto& h = field(j, "hypothesis", "");
    idea.hypothesis.method = str_field(h, "method", "hypothesis.");
    idea.hypothesis.rationale = str_field(h, "rationale", "hypothesis.");
    const auto& p = field(j, "plan", "");
    idea.plan.raw = str_field(p, "raw", "plan.");
    idea.plan.rationale = str_field(p, "rationale", "plan.");
    const auto& design = field(p, "design", "plan.");
    if (!design.is_array()) fail(ErrorCode::SchemaError, "field 'plan.design' must be an array");
    for (const auto& st : design) {
        PlanStage s;
        const auto& n = field(st, "number", "plan.design[].");
        if (!n.is_number_integer()) fail(ErrorCode::SchemaError, "field 'plan.design[].number' must be an integer");
        s.number = n.get<int>();
        s.title = str_field(st, "title", "plan.design[].");
        s.text = str_field(st, "text", "plan.design[].");
        idea.plan.design.push_back(std::move(s));
    }
    if (j.contains("provider_id")) idea.provider_id = str_field(j, "provider_id", "");
    if (j.contains("templates")) {
        const auto& t = j.at("templates");
        idea.extraction_template = str_field(t, "extraction", "templates.");
        idea.hypothesis_template = str_field(t, "hypothesis", "templates.");
        idea.plan_template = str_field(t, "plan", "templates.");
    }
    return idea;
}

std::string serialize_idea(const ResearchIdea& idea) {
    return to_json(idea).dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

ResearchIdea deserialize_idea(std::string_view text_in) {
    const auto j = json::parse(text_in, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::SchemaError, "idea file is not valid JSON");
    return idea_from_json(j);
}

void save_idea(const ResearchIdea& idea, const std::string& path) {
    text::write_file(path, serialize_idea(idea));
}

ResearchIdea load_idea(const std::string& path) {
    return deserialize_idea(text::read_file(path));
}

} // namespace autoresearch::idea
