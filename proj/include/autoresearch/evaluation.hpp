#pragma once
#include "autoresearch/gateway.hpp"
#include "autoresearch/idea.hpp"
#include "autoresearch/task.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace autoresearch::eval {

enum class Reviewer { Human, Llm };
enum class Target { Hypothesis, ExperimentDesign };

std::string_view reviewer_name(Reviewer r);
std::string_view target_name(Target t);
Reviewer parse_reviewer(std::string_view s); // InvalidArgument
Target parse_target(std::string_view s);     // InvalidArgument

const std::vector<std::string>& hypothesis_criteria();
const std::vector<std::string>& design_criteria();
const std::vector<std::string>& criteria_for(Target t);

struct IdeaScorecard {
    std::map<std::string, int> criteria;
    Reviewer reviewer = Reviewer::Llm;
    Target target = Target::Hypothesis;

    double mean() const; // EmptyMap when there are no criteria
    void validate() const; // ScoreOutOfRange
};

nlohmann::json scorecard_records(const IdeaScorecard& card);

std::string scoring_prompt(const idea::ResearchIdea& idea, Target target);

// "Criterion: N" lines, criterion names matched case-insensitively. Throws
// ParseError when a criterion has no integer; range is not checked here.
std::map<std::string, int> parse_scores(std::string_view reply, const std::vector<std::string>& criteria);

// One reviewer call for the target's criteria set. A missing or out-of-range
// score is re-asked once; the second failure throws ParseError or
// ScoreOutOfRange.
IdeaScorecard score_idea(const idea::ResearchIdea& idea, Target target, llm::Gateway& reviewer);

inline constexpr std::string_view kSimilarityMetricId = "tf-cosine";

// Cosine of term-frequency vectors over lowercased alphanumeric tokens; 0 when
// either side has no tokens.
double similarity(std::string_view a, std::string_view b);

// Throws ZeroBaseline.
double improvement_pct(double baseline, double final_value, Direction direction);

struct TrialResult {
    std::string task;
    long trial_seed = 0;
    double baseline_value = 0.0;
    double final_value = 0.0;
    Direction direction = Direction::HigherBetter;
    std::string outcome;

    double improvement() const { return improvement_pct(baseline_value, final_value, direction); }
};

// Tolerance applied to the threshold comparison so that recorded values
// landing exactly on the threshold count as successes.
inline constexpr double kThresholdEpsilon = 1e-9;

// Percent of trials whose improvement reaches threshold. Throws EmptyTrials.
double success_rate(const std::vector<TrialResult>& trials, double threshold);

// Arithmetic mean. Throws EmptyMap.
double aggregate_table(const std::map<std::string, double>& per_task);

struct RunMetrics {
    std::map<std::string, double> per_task_improvement;
    std::map<std::string, double> per_task_success_rate;
    double average_improvement = 0.0;
    double average_success = 0.0;
    std::size_t trials = 0;
    double threshold = 10.0;
};

// Per-task improvement is the mean over that task's trials. Throws EmptyTrials.
RunMetrics compute_run_metrics(const std::vector<TrialResult>& trials, double threshold = 10.0);

// {"threshold", "trials", "rows": [{task, improvement, success_rate}],
//  "average": {improvement, success_rate}, "trial_results": [...]}.
nlohmann::json metrics_report(const RunMetrics& metrics, const std::vector<TrialResult>& trials = {});

// Recorded result tables shipped as data.
// {"name", "columns": [...], "rows": [{"group"?, "label", "values": [...]}],
//  "printed_average"?: [...]}
struct RecordedRow {
    std::string group;
    std::string label;
    std::vector<double> values;
};

struct RecordedTable {
    std::string name;
    std::vector<std::string> columns;
    std::vector<RecordedRow> rows;
    std::vector<double> printed_average;

    std::map<std::string, double> column(std::size_t index, std::string_view group = {}) const;
    std::vector<double> column_averages(std::string_view group = {}) const;
};

RecordedTable load_table(const std::string& path); // FileMissing, SchemaError
RecordedTable table_from_json(const nlohmann::json& j);

nlohmann::json table_report(const RecordedTable& table, std::string_view group = {});

} // namespace autoresearch::eval
