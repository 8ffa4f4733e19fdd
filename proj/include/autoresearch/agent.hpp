#pragma once
#include "autoresearch/evaluation.hpp"
#include "autoresearch/gateway.hpp"
#include "autoresearch/idea.hpp"
#include "autoresearch/ml.hpp"
#include "autoresearch/protocol.hpp"
#include "autoresearch/run_store.hpp"
#include "autoresearch/task.hpp"
#include "autoresearch/workspace.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace autoresearch::agent {

enum class SummaryMode { Model, Local };

struct RunConfig {
    idea::ResearchIdea idea;
    TaskPackage task;
    std::size_t step_budget = 50;
    int retry_budget = 2;
    sandbox::ExecutionPolicy policy;
    std::string provider;
    long trial_seed = 0;
    std::chrono::milliseconds help_timeout{std::chrono::minutes(10)};
    SummaryMode summary_mode = SummaryMode::Model;
    std::size_t prompt_budget = 60000; // characters

    void validate() const; // InvalidArgument
    nlohmann::json digest() const;
};

struct ExperimentalSetup {
    sandbox::Workspace* workspace = nullptr;
    std::optional<ml::ModelCandidate> model;
    std::optional<ml::DatasetCandidate> dataset;
};

inline constexpr std::string_view kSubmitOnce = "You can only submit once";
inline constexpr std::string_view kFeedbackPrefix = "[Human feedback] ";

// Everything a tool may need besides the action itself.
struct DispatchContext {
    ExperimentalSetup setup;
    llm::Gateway* gateway = nullptr; // Edit Script (AI), Understand File, Reflection, Process Dataset
    ml::Hub* hub = nullptr;
    const TaskPackage* task = nullptr;
    const idea::ResearchIdea* idea = nullptr;
    const std::vector<protocol::StepSummary>* history = nullptr;
    std::optional<std::string> final_answer;
};

struct Observation {
    std::string text;
    bool terminal = false; // accepted Final Answer
    bool is_error = false;
};

// Runs one action. Tool errors come back as observation text; never throws
// for agent-level mistakes.
Observation dispatch_action(const protocol::Action& action, DispatchContext& ctx);

struct HelpResult {
    std::string observation;
    bool aborted = false;
    bool timed_out = false;
    std::optional<store::FeedbackMessage> message;
};

HelpResult handle_request_help(const std::string& request, store::FeedbackChannel& channel, store::TraceSink& trace,
                               store::RunState& state, std::chrono::milliseconds timeout);

// Deterministic. Oldest summaries are dropped first to fit prompt_budget;
// the most recent one always stays.
std::string build_step_prompt(const store::RunState& state, const idea::ResearchIdea& idea,
                              const std::vector<protocol::StepSummary>& summaries,
                              const protocol::ToolRegistry& catalog, std::size_t prompt_budget = 60000);

struct LoopDeps {
    llm::Gateway* gateway = nullptr;
    ml::Hub* hub = nullptr;
    std::shared_ptr<store::FeedbackChannel> channel; // optional
    store::TraceSink* trace = nullptr;
    // Called once before the final state is recorded; its result is stored
    // with it as "final_metric".
    std::function<nlohmann::json(const store::RunState&)> on_finish;
};

store::RunState run_loop(const RunConfig& config, sandbox::Workspace& workspace, const LoopDeps& deps,
                         const std::string& run_id = {});

// ---- trials ------------------------------------------------------------------

using ProviderFactory = std::function<std::shared_ptr<llm::Provider>(std::size_t trial)>;

struct TrialOptions {
    RunConfig config;
    std::size_t trials = 1;
    std::size_t parallel = 1;
    ProviderFactory provider_factory;
    llm::GatewayOptions gateway_options;
    std::function<std::unique_ptr<ml::Hub>()> hub_factory; // optional
    double threshold = 10.0;
    std::function<void(const std::string& run_id)> on_run_created; // optional
};

struct TrialRun {
    std::string run_id;
    eval::TrialResult result;
    store::RunState state;
    std::string note; // set when the final metric could not be measured
};

// Runs the task's metric command inside the workspace. Throws ExecFailed when
// the command fails or prints no metric.
double measure_metric(sandbox::Workspace& workspace, const std::string& command, const std::string& metric,
                      long trial_seed = 0);

// One isolated trial: seed workspace, baseline metric, agent loop, final metric.
TrialRun run_trial(const TrialOptions& options, std::size_t index, store::RunStore& store);

std::vector<TrialRun> run_trials(const TrialOptions& options, store::RunStore& store);

// Human-readable transcript of a stored trace.
std::string render_transcript(const std::vector<store::TraceEvent>& events);

} // namespace autoresearch::agent
