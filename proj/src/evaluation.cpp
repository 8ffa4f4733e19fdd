#include "autoresearch/evaluation.hpp"
#include "autoresearch/error.hpp"
#include "autoresearch/text.hpp"

#include <cmath>
#include <regex>

namespace autoresearch::eval {

using nlohmann::json;

std::string_view reviewer_name(Reviewer r) {
    return r == Reviewer::Human ? "human" : "llm";
}

std::string_view target_name(Target t) {
    return t == Target::Hypothesis ? "hypothesis" : "experiment_design";
}

Reviewer parse_reviewer(std::string_view s) {
    const auto v = text::to_lower(text::trim(s));
    if (v == "human") return Reviewer::Human;
    if (v == "llm") return Reviewer::Llm;
    fail(ErrorCode::InvalidArgument, "unknown reviewer '" + std::string(s) + "'");
}

Target parse_target(std::string_view s) {
    const auto v = text::to_lower(text::trim(s));
    if (v == "hypothesis") return Target::Hypothesis;
    if (v == "experiment_design" || v == "design" || v == "plan") return Target::ExperimentDesign;
    fail(ErrorCode::InvalidArgument, "unknown scoring target '" + std::string(s) + "'");
}

const std::vector<std::string>& hypothesis_criteria() {
    static const std::vector<std::string> c = {"clarity", "validity", "rigor", "innovativeness", "generalizability"};
    return c;
}

const std::vector<std::string>& design_criteria() {
    static const std::vector<std::string> c = {"clarity", "validity", "robustness", "feasibility", "reproducibility"};
    return c;
}

const std::vector<std::string>& criteria_for(Target t) {
    return t == Target::Hypothesis ? hypothesis_criteria() : design_criteria();
}

double IdeaScorecard::mean() const {
    if (criteria.empty()) fail(ErrorCode::EmptyMap, "scorecard has no criteria");
    double s = 0;
    for (const auto& [k, v] : criteria) s += v;
    return s / static_cast<double>(criteria.size());
}

void IdeaScorecard::validate() const {
    for (const auto& [k, v] : criteria)
        if (v < 1 || v > 5)
            fail(ErrorCode::ScoreOutOfRange, "score for " + k + " is " + std::to_string(v) + ", expected 1..5");
}

json scorecard_records(const IdeaScorecard& card) {
    json out = json::array();
    for (const auto& name : criteria_for(card.target)) {
        auto it = card.criteria.find(name);
        if (it == card.criteria.end()) continue;
        out.push_back({{"reviewer", reviewer_name(card.reviewer)},
                       {"target", target_name(card.target)},
                       {"criterion", name},
                       {"score", it->second}});
    }
    for (const auto& [name, v] : card.criteria) {
        const auto& known = criteria_for(card.target);
        if (std::find(known.begin(), known.end(), name) != known.end()) continue;
        out.push_back({{"reviewer", reviewer_name(card.reviewer)},
                       {"target", target_name(card.target)},
                       {"criterion", name},
                       {"score", v}});
    }
    return out;
}

std::string scoring_prompt(const idea::ResearchIdea& idea, Target target) {
    std::string p = "You are reviewing a proposed piece of research.\n\n";
    p += "Research problem:\n" + idea.context.render() + "\n\n";
    if (target == Target::Hypothesis) {
        p += "Hypothesis under review:\n" + idea::render_hypothesis(idea.hypothesis) + "\n";
    } else {
        p += "Experiment design under review:\n" + idea::render_plan(idea.plan) + "\n";
    }
    p += "Rate it on each criterion below with an integer from 1 (poor) to 5 (excellent).\n";
    p += "Answer with exactly one line per criterion in the form \"Criterion: N\":\n";
    for (const auto& c : criteria_for(target)) {
        std::string label = c;
        label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
        p += label + ": N\n";
    }
    return p;
}

std::map<std::string, int> parse_scores(std::string_view reply, const std::vector<std::string>& criteria) {
    std::map<std::string, int> out;
    static const std::regex line_re(R"(^[\s*#\-]*([A-Za-z][A-Za-z ]*?)[\s*]*[:=]\s*\**\s*([-+]?\d+)(\s*/\s*5)?\b)");
    for (const auto& line : text::split_lines(reply)) {
        std::smatch m;
        if (!std::regex_search(line, m, line_re)) continue;
        const auto name = text::to_lower(text::trim(m[1].str()));
        for (const auto& c : criteria) {
            if (c == name && !out.count(c)) out[c] = std::stoi(m[2].str());
        }
    }
    for (const auto& c : criteria)
        if (!out.count(c)) fail(ErrorCode::ParseError, "reviewer reply has no score for " + c);
    return out;
}

IdeaScorecard score_idea(const idea::ResearchIdea& idea, Target target, llm::Gateway& reviewer) {
    const auto& criteria = criteria_for(target);
    llm::CompletionRequest req;
    req.prompt = scoring_prompt(idea, target);
    req.temperature = 0.0;
    req.session_tag = "review";
    IdeaScorecard card;
    card.reviewer = Reviewer::Llm;
    card.target = target;
    for (int attempt = 0;; ++attempt) {
        try {
            card.criteria = parse_scores(reviewer.complete(req).text, criteria);
            card.validate();
            return card;
        } catch (const Error& e) {
            if (attempt > 0 || (e.code() != ErrorCode::ParseError && e.code() != ErrorCode::ScoreOutOfRange)) throw;
            req.prompt = scoring_prompt(idea, target) + "\nYour previous answer was rejected (" + e.what() +
                         "). Give every criterion an integer from 1 to 5.\n";
        }
    }
}

double similarity(std::string_view a, std::string_view b) {
    std::map<std::string, double> ta, tb;
    for (auto& t : text::alnum_tokens(a)) ta[std::move(t)] += 1;
    for (auto& t : text::alnum_tokens(b)) tb[std::move(t)] += 1;
    if (ta.empty() || tb.empty()) return 0.0;
    double dot = 0, na = 0, nb = 0;
    for (const auto& [k, v] : ta) {
        na += v * v;
        if (auto it = tb.find(k); it != tb.end()) dot += v * it->second;
    }
    for (const auto& [k, v] : tb) nb += v * v;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

double improvement_pct(double baseline, double final_value, Direction direction) {
    if (baseline == 0.0) fail(ErrorCode::ZeroBaseline, "baseline value is zero; improvement is undefined");
    const double delta = direction == Direction::HigherBetter ? final_value - baseline : baseline - final_value;
    return delta / baseline * 100.0;
}

double success_rate(const std::vector<TrialResult>& trials, double threshold) {
    if (trials.empty()) fail(ErrorCode::EmptyTrials, "no trials to rate");
    std::size_t hits = 0;
    for (const auto& t : trials)
        if (t.improvement() >= threshold - kThresholdEpsilon) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(trials.size());
}

double aggregate_table(const std::map<std::string, double>& per_task) {
    if (per_task.empty()) fail(ErrorCode::EmptyMap, "nothing to aggregate");
    double s = 0;
    for (const auto& [k, v] : per_task) s += v;
    return s / static_cast<double>(per_task.size());
}

RunMetrics compute_run_metrics(const std::vector<TrialResult>& trials, double threshold) {
    if (trials.empty()) fail(ErrorCode::EmptyTrials, "no trials to summarize");
    std::map<std::string, std::vector<TrialResult>> by_task;
    for (const auto& t : trials) by_task[t.task].push_back(t);
    RunMetrics m;
    m.trials = trials.size();
    m.threshold = threshold;
    for (const auto& [task, ts] : by_task) {
        double s = 0;
        for (const auto& t : ts) s += t.improvement();
        m.per_task_improvement[task] = s / static_cast<double>(ts.size());
        m.per_task_success_rate[task] = success_rate(ts, threshold);
    }
    m.average_improvement = aggregate_table(m.per_task_improvement);
    m.average_success = aggregate_table(m.per_task_success_rate);
    return m;
}

json metrics_report(const RunMetrics& metrics, const std::vector<TrialResult>& trials) {
    json rows = json::array();
    for (const auto& [task, imp] : metrics.per_task_improvement)
        rows.push_back({{"task", task}, {"improvement", imp}, {"success_rate", metrics.per_task_success_rate.at(task)}});
    json out = {{"threshold", metrics.threshold},
                {"trials", metrics.trials},
                {"rows", rows},
                {"average", {{"improvement", metrics.average_improvement}, {"success_rate", metrics.average_success}}}};
    if (!trials.empty()) {
        json tr = json::array();
        for (const auto& t : trials) {
            json r = {{"task", t.task},
                      {"trial_seed", t.trial_seed},
                      {"baseline_value", t.baseline_value},
                      {"final_value", t.final_value},
                      {"direction", direction_name(t.direction)},
                      {"outcome", t.outcome}};
            r["improvement"] = t.baseline_value != 0.0 ? json(t.improvement()) : json(nullptr);
            tr.push_back(r);
        }
        out["trial_results"] = tr;
    }
    return out;
}

std::map<std::string, double> RecordedTable::column(std::size_t index, std::string_view group) const {
    if (index >= columns.size()) fail(ErrorCode::InvalidArgument, "table " + name + " has no column " + std::to_string(index));
    std::map<std::string, double> out;
    for (const auto& r : rows) {
        if (!group.empty() && r.group != group) continue;
        out[r.label] = r.values.at(index);
    }
    return out;
}

std::vector<double> RecordedTable::column_averages(std::string_view group) const {
    std::vector<double> out;
    for (std::size_t i = 0; i < columns.size(); ++i) out.push_back(aggregate_table(column(i, group)));
    return out;
}

RecordedTable table_from_json(const json& j) {
    try {
        RecordedTable t;
        t.name = j.value("name", "");
        t.columns = j.at("columns").get<std::vector<std::string>>();
        for (const auto& r : j.at("rows")) {
            RecordedRow row;
            row.group = r.value("group", "");
            row.label = r.at("label").get<std::string>();
            row.values = r.at("values").get<std::vector<double>>();
            if (row.values.size() != t.columns.size())
                fail(ErrorCode::SchemaError, "row '" + row.label + "' has " + std::to_string(row.values.size()) +
                                                 " values for " + std::to_string(t.columns.size()) + " columns");
            t.rows.push_back(std::move(row));
        }
        if (j.contains("printed_average")) t.printed_average = j["printed_average"].get<std::vector<double>>();
        return t;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaError, std::string("bad table record: ") + e.what());
    }
}

RecordedTable load_table(const std::string& path) {
    const auto body = text::read_file(path);
    auto j = json::parse(body, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::SchemaError, "table file is not JSON: " + path);
    return table_from_json(j);
}

json table_report(const RecordedTable& table, std::string_view group) {
    json rows = json::array();
    for (const auto& r : table.rows) {
        if (!group.empty() && r.group != group) continue;
        json row = {{"label", r.label}};
        if (!r.group.empty()) row["group"] = r.group;
        for (std::size_t i = 0; i < table.columns.size(); ++i) row[table.columns[i]] = r.values[i];
        rows.push_back(row);
    }
    json avg = json::object();
    const auto averages = table.column_averages(group);
    for (std::size_t i = 0; i < table.columns.size(); ++i) avg[table.columns[i]] = averages[i];
    return {{"name", table.name}, {"rows", rows}, {"average", avg}};
}

} // namespace autoresearch::eval
