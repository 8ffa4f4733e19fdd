#include "autoresearch/agent.hpp"
#include "autoresearch/error.hpp"
#include "autoresearch/text.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

namespace autoresearch::agent {

using nlohmann::json;
using protocol::Action;
namespace tools = protocol::tools;

namespace {

std::string dump(const json& j, int indent = -1) {
    return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

std::string clip(std::string s, std::size_t max_chars) {
    if (s.size() <= max_chars) return s;
    s.resize(text::utf8_safe_prefix(s, max_chars));
    return s + "\n[... clipped]";
}

std::string format_number(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

std::string fenced_block(std::string_view reply) {
    const auto open = reply.find("```");
    if (open == std::string_view::npos) return std::string(reply);
    auto start = reply.find('\n', open);
    if (start == std::string_view::npos) return {};
    ++start;
    const auto close = reply.find("```", start);
    return std::string(reply.substr(start, close == std::string_view::npos ? std::string_view::npos : close - start));
}

std::string error_text(const Error& e) {
    return "Error [" + std::string(code_name(e.code())) + "]: " + e.what();
}

llm::Gateway& need_gateway(DispatchContext& ctx) {
    if (!ctx.gateway) fail(ErrorCode::InvalidArgument, "no language model is configured for this tool");
    return *ctx.gateway;
}

ml::Hub& need_hub(DispatchContext& ctx) {
    if (!ctx.hub) fail(ErrorCode::HubUnavailable, "no model/dataset hub is configured for this run");
    return *ctx.hub;
}

const TaskPackage& need_task(DispatchContext& ctx) {
    if (!ctx.task) fail(ErrorCode::MissingEntrypoint, "no task package is attached to this run");
    return *ctx.task;
}

std::string render_history(const std::vector<protocol::StepSummary>* history) {
    if (!history || history->empty()) return "(no steps taken yet)\n";
    std::string s;
    for (std::size_t i = 0; i < history->size(); ++i)
        s += "Step " + std::to_string(i + 1) + ":\n" + (*history)[i].render() + "\n";
    return s;
}

std::string ask(llm::Gateway& g, std::string prompt, const char* tag) {
    llm::CompletionRequest req;
    req.prompt = std::move(prompt);
    req.session_tag = tag;
    return g.complete(req).text;
}

Observation run_tool(const Action& a, DispatchContext& ctx) {
    auto& ws = *ctx.setup.workspace;
    const auto& n = a.name;

    if (n == tools::ListFiles) {
        const auto entries = ws.list_files(a.text("dir_path").empty() ? "." : a.text("dir_path"));
        return {entries.empty() ? "(empty directory)" : text::join(entries, "\n"), false, false};
    }
    if (n == tools::CopyFile) {
        ws.copy_file(a.text("source"), a.text("destination"));
        return {"File " + a.text("source") + " copied to " + a.text("destination") + ".", false, false};
    }
    if (n == tools::UndoEditScript) {
        const auto content = ws.undo_edit(a.text("script_name"));
        if (!ws.exists(a.text("script_name")))
            return {"Undid the edit that created " + a.text("script_name") + "; the file no longer exists.", false, false};
        return {"Content of " + a.text("script_name") + " after undo:\n" + clip(content, 10000), false, false};
    }
    if (n == tools::ExecuteScript) {
        const auto r = ws.execute_script(a.text("script_name"));
        std::string out = "The script has been executed. Here is the output:\n" + r.stdout_text;
        if (!r.stderr_text.empty()) out += (out.back() == '\n' ? "" : "\n") + r.stderr_text;
        if (r.exit_code != 0) out += "\n(exit status " + std::to_string(r.exit_code) + ")";
        return {out, false, r.exit_code != 0};
    }
    if (n == tools::FinalAnswer) {
        if (ctx.final_answer)
            return {std::string(kSubmitOnce) + "; the first submission stands and this one was ignored.", false, true};
        ctx.final_answer = a.text("final_answer");
        return {"Final answer submitted.", true, false};
    }
    if (n == tools::UnderstandFile) {
        const auto content = ws.read_file(a.text("file_name"));
        std::string p = "Read the file below and report on what is asked. Cite line numbers where useful.\n\n";
        p += "File: " + a.text("file_name") + "\n```\n" + clip(content, 40000) + "\n```\n\n";
        p += "Report on: " + a.text("things_to_look_for") + "\n";
        return {ask(need_gateway(ctx), p, "understand-file"), false, false};
    }
    if (n == tools::InspectScriptLines) {
        const auto start = a.integer("start_line_number");
        const auto end = a.integer("end_line_number");
        const auto lines = ws.read_lines(a.text("script_name"), start, end);
        const auto total = text::split_lines_keep_endings(ws.read_file(a.text("script_name"))).size();
        return {"Here are the lines (the file ends at line " + std::to_string(total) + "):\n\n" + lines, false, false};
    }
    if (n == tools::EditScriptAI) {
        const auto script = a.text("script_name");
        auto save = a.text("save_name");
        if (text::trim(save).empty()) save = script;
        const auto instruction = a.text("edit_instruction");
        const auto current = ws.exists(script) ? ws.read_file(script) : std::string();
        std::string p = "Rewrite the file below so that it follows the instruction. Return the complete new file "
                        "in one fenced code block and nothing else.\n\n";
        p += "File: " + script + "\n```\n" + current + (current.empty() || current.back() == '\n' ? "" : "\n") + "```\n\n";
        p += "Instruction:\n" + instruction + "\n";
        auto content = fenced_block(ask(need_gateway(ctx), p, "edit-script"));
        if (!content.empty() && content.back() != '\n') content += '\n';
        ws.write_with_history(save, content, instruction);
        return {"The edited file is saved to " + save + ". Here is the new content:\n" + clip(content, 10000) +
                    "\nCheck that the edit is correct; use Undo Edit Script to revert it.",
                false, false};
    }
    if (n == tools::Reflection) {
        std::string p = "Look back over the research steps so far and answer the question.\n\n";
        if (ctx.idea) p += "Research idea:\n" + idea::render_hypothesis(ctx.idea->hypothesis) + "\n";
        p += "Steps so far:\n" + render_history(ctx.history) + "\n";
        p += "Question: " + a.text("things_to_reflect_on") + "\n";
        return {ask(need_gateway(ctx), p, "reflection"), false, false};
    }
    if (n == tools::RetrieveModel) {
        const auto models = ml::retrieve_model(a.text("instruction"), need_hub(ctx), 5);
        if (models.empty()) return {"No model matched the instruction.", false, true};
        ctx.setup.model = models.front();
        std::string out = "Suitable models:\n";
        for (std::size_t i = 0; i < models.size(); ++i) {
            out += std::to_string(i + 1) + ". " + models[i].name;
            if (!models[i].description.empty()) out += " - " + models[i].description;
            out += "\n";
        }
        return {out, false, false};
    }
    if (n == tools::RetrieveDataset) {
        const auto save_dir = a.text("save_dir");
        const auto ds = ml::retrieve_dataset(a.text("instruction"), ws.resolve(save_dir), need_hub(ctx));
        ctx.setup.dataset = ds;
        std::string out = "Dataset " + ds.name + " saved to " + save_dir + ". Splits:";
        for (const auto& s : ds.splits) out += " " + s.name + " (" + std::to_string(s.row_count) + " rows)";
        out += ". Columns: " + text::join(ds.columns, ", ") + ".\n";
        if (ctx.idea) out += ml::post_checkup(ds, ml::derive_requirements(ctx.idea->plan, need_task(ctx).metric)).render();
        return {out, false, false};
    }
    if (n == tools::ProcessDataset) {
        const auto rep = ml::process_dataset(a.text("instruction"), ml::split_dirs(a.text("load_dirs")),
                                             ml::split_dirs(a.text("save_dirs")), need_gateway(ctx), ws);
        return {rep.message, false, false};
    }
    if (n == tools::TrainModel) {
        ml::Hyperparameters hp;
        hp.epochs = a.integer("epochs");
        hp.batch_size = a.integer("batch_size");
        hp.warmup_steps = a.integer("warmup_steps");
        hp.weight_decay = a.number("weight_decay");
        hp.learning_rate = a.number("learning_rate");
        const auto rep = ml::train_model(need_task(ctx), a.text("model_name"), ml::split_dirs(a.text("load_dirs")),
                                         a.text("result_dir"), hp, ws);
        std::string out = rep.message;
        if (!rep.metrics.is_null() && !rep.metrics.empty()) out += "\nMetrics: " + dump(rep.metrics);
        return {out, false, false};
    }
    if (n == tools::ExecuteModelOnTestSet) {
        const auto count = ml::execute_on_test(need_task(ctx), a.text("result_dir"), ml::split_dirs(a.text("load_dirs")),
                                               a.text("save_path"), a.integer("batch_size"), a.text("input_column"), ws);
        return {"Wrote " + std::to_string(count) + " predictions to " + a.text("save_path") + ".", false, false};
    }
    if (n == tools::EvaluateModel) {
        std::vector<std::string> metrics;
        if (ctx.task && ml::is_known_metric(ctx.task->metric)) metrics.push_back(ctx.task->metric);
        const auto values = ml::evaluate_predictions(ml::split_dirs(a.text("load_dirs")), a.text("save_path"),
                                                     a.text("output_column"), metrics, ws);
        std::string out = "Evaluation results:\n";
        for (const auto& [k, v] : values) out += k + ": " + format_number(v) + "\n";
        return {out, false, false};
    }
    if (n == tools::RequestHelp) {
        return {"No researcher is attached to this run; continue on your own.", false, true};
    }
    fail(ErrorCode::UnknownTool, n);
}

std::string usage_reminder(std::string_view name) {
    return "Unknown action '" + std::string(name) + "'. Valid actions are: " +
           text::join(protocol::ToolRegistry::standard().names(), ", ") + ".";
}

} // namespace

void RunConfig::validate() const {
    if (step_budget == 0) fail(ErrorCode::InvalidArgument, "step_budget must be positive");
    if (retry_budget < 0) fail(ErrorCode::InvalidArgument, "retry budget must not be negative");
    if (!task.root.empty()) {
        if (!std::filesystem::is_directory(task.prototype_dir()))
            fail(ErrorCode::InvalidArgument, "task package has no prototype/: " + task.root.string());
        if (!std::filesystem::is_regular_file(task.root / "task.meta"))
            fail(ErrorCode::InvalidArgument, "task package has no task.meta: " + task.root.string());
    }
    policy.validate();
}

json RunConfig::digest() const {
    return {{"task", task.name},
            {"metric", task.metric},
            {"direction", direction_name(task.direction)},
            {"step_budget", step_budget},
            {"retry_budget", retry_budget},
            {"provider", provider},
            {"trial_seed", trial_seed},
            {"summary_mode", summary_mode == SummaryMode::Model ? "model" : "local"},
            {"help_timeout_ms", help_timeout.count()},
            {"idea", idea.hypothesis.title()}};
}

Observation dispatch_action(const Action& action, DispatchContext& ctx) {
    if (!ctx.setup.workspace) fail(ErrorCode::InvalidArgument, "dispatch needs a workspace");
    if (!protocol::ToolRegistry::standard().find(action.name)) return {usage_reminder(action.name), false, true};
    try {
        return run_tool(action, ctx);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::UnknownTool) return {usage_reminder(action.name), false, true};
        if (e.code() == ErrorCode::BudgetExhausted || e.code() == ErrorCode::SessionExhausted ||
            e.code() == ErrorCode::StorageError)
            throw;
        return {error_text(e), false, true};
    } catch (const nlohmann::json::exception& e) {
        return {std::string("Error [MalformedInput]: ") + e.what(), false, true};
    }
}

HelpResult handle_request_help(const std::string& request, store::FeedbackChannel& channel, store::TraceSink& trace,
                               store::RunState& state, std::chrono::milliseconds timeout) {
    state.awaiting_feedback = true;
    channel.set_awaiting(true);
    trace.append(store::EventKind::StateChange, {{"awaiting_feedback", true}, {"request", request}});
    trace.update_state(state);

    auto r = channel.wait(timeout);

    channel.set_awaiting(false);
    state.awaiting_feedback = false;
    HelpResult out;
    switch (r.status) {
    case store::FeedbackChannel::WaitStatus::Delivered:
        out.message = r.message;
        out.observation = r.message->text;
        break;
    case store::FeedbackChannel::WaitStatus::TimedOut: {
        out.timed_out = true;
        const auto secs = std::chrono::duration<double>(timeout).count();
        out.observation = "Error [" + std::string(code_name(ErrorCode::FeedbackTimeout)) + "]: no help arrived within " +
                          format_number(secs) + " seconds. Continue on your own.";
        break;
    }
    case store::FeedbackChannel::WaitStatus::Aborted:
        out.aborted = true;
        out.observation = "The run was aborted while waiting for help.";
        break;
    }
    if (!out.aborted) {
        trace.append(store::EventKind::StateChange, {{"awaiting_feedback", false}});
        trace.update_state(state);
    }
    return out;
}

namespace {

const char* kInstructions =
    "You are a research assistant running an experiment inside a code workspace. Work toward the research idea "
    "below using the tools listed, one action per response.\n"
    "- Keep a short high-level plan in \"Research Plan and Status\" and update it as results arrive.\n"
    "- In \"Fact Check\", list only statements confirmed by an observation.\n"
    "- Do not install packages; use what the workspace provides or use Request Help.\n"
    "- Measure the baseline before changing anything, and check every change by running it.\n"
    "- Submit with Final Answer when done. Only one submission is accepted.\n\n";

const char* kFormat =
    "Respond in exactly this format:\n"
    "Reflection: what the last observation means\n"
    "Research Plan and Status: the current plan and progress\n"
    "Fact Check: confirmed statements, each with its source\n"
    "Thought: what to do next and why\n"
    "Questions: open questions, or none\n"
    "Action: one tool name from the list\n"
    "Action Input: a JSON object with that tool's fields\n";

std::string build_prompt_impl(const store::RunState& state, const idea::ResearchIdea& idea,
                              const std::vector<protocol::StepSummary>& summaries,
                              const protocol::ToolRegistry& catalog, std::size_t budget,
                              std::string_view pending_feedback) {
    std::string head = kInstructions;
    head += "Tools:\n" + catalog.catalog() + "\n";
    head += "Research problem:\n" + idea.context.render(6000) + "\n\n";
    head += "Research idea:\n" + idea::render_hypothesis(idea.hypothesis) + "\n" + idea::render_plan(idea.plan) + "\n";

    std::string tail;
    if (state.step_budget)
        tail += "This is step " + std::to_string(state.step_index + 1) + " of " + std::to_string(state.step_budget) + ".\n";
    if (!pending_feedback.empty()) tail += "\nHuman feedback received since the last step:\n" + std::string(pending_feedback) + "\n";
    tail += "\n" + std::string(kFormat);

    if (summaries.empty()) return head + "\n" + tail;

    const std::size_t first_step = state.step_index >= summaries.size() ? state.step_index - summaries.size() + 1 : 1;
    std::vector<std::string> blocks;
    for (std::size_t i = 0; i < summaries.size(); ++i)
        blocks.push_back("Step " + std::to_string(first_step + i) + ":\n" + summaries[i].render() + "\n");

    const std::size_t fixed = head.size() + tail.size() + 64;
    std::size_t keep_from = 0, hist = 0;
    for (const auto& b : blocks) hist += b.size();
    while (keep_from + 1 < blocks.size() && fixed + hist > budget) hist -= blocks[keep_from++].size();

    std::string history = "\nSummary of previous steps (oldest first):\n";
    if (keep_from) history += "(" + std::to_string(keep_from) + " earlier steps omitted)\n";
    for (std::size_t i = keep_from; i < blocks.size(); ++i) history += blocks[i];
    return head + history + "\n" + tail;
}

} // namespace

std::string build_step_prompt(const store::RunState& state, const idea::ResearchIdea& idea,
                              const std::vector<protocol::StepSummary>& summaries,
                              const protocol::ToolRegistry& catalog, std::size_t prompt_budget) {
    return build_prompt_impl(state, idea, summaries, catalog, prompt_budget, {});
}

store::RunState run_loop(const RunConfig& config, sandbox::Workspace& workspace, const LoopDeps& deps,
                         const std::string& run_id) {
    config.validate();
    if (!deps.gateway || !deps.trace) fail(ErrorCode::InvalidArgument, "run_loop needs a gateway and a trace");
    auto& trace = *deps.trace;
    auto& gateway = *deps.gateway;
    const auto& registry = protocol::ToolRegistry::standard();

    store::RunState st;
    st.run_id = run_id;
    st.step_budget = config.step_budget;
    std::vector<protocol::StepSummary> summaries;

    DispatchContext ctx;
    ctx.setup.workspace = &workspace;
    ctx.gateway = &gateway;
    ctx.hub = deps.hub;
    ctx.task = &config.task;
    ctx.idea = &config.idea;
    ctx.history = &summaries;

    auto finish = [&](store::Outcome o, std::string reason) {
        st.outcome = o;
        st.reason = std::move(reason);
        st.awaiting_feedback = false;
        st.paused = false;
        try {
            auto payload = st.to_json();
            payload.erase("run_id");
            if (deps.on_finish) payload["final_metric"] = deps.on_finish(st);
            trace.append(store::EventKind::StateChange, payload);
            trace.update_state(st);
        } catch (const std::exception& e) {
            st.outcome = store::Outcome::Failed;
            st.reason = std::string("could not record final state: ") + e.what();
        }
        return st;
    };

    try {
        trace.append(store::EventKind::StateChange, {{"outcome", "running"}, {"config", config.digest()}});
        trace.update_state(st);

        while (st.step_index < config.step_budget) {
            const auto step = st.step_index + 1;
            std::string injected;
            if (deps.channel) {
                if (deps.channel->paused()) {
                    st.paused = true;
                    trace.append(store::EventKind::StateChange, {{"paused", true}});
                    trace.update_state(st);
                }
                if (!deps.channel->checkpoint()) return finish(store::Outcome::Aborted, "aborted by operator");
                if (st.paused) {
                    st.paused = false;
                    trace.append(store::EventKind::StateChange, {{"paused", false}});
                    trace.update_state(st);
                }
                for (const auto& m : deps.channel->drain()) injected += std::string(kFeedbackPrefix) + m.text + "\n";
            }

            const auto prompt =
                build_prompt_impl(st, config.idea, summaries, registry, config.prompt_budget, injected);
            std::optional<protocol::AgentTurn> turn;
            std::string last_error;
            for (int attempt = 0; attempt <= config.retry_budget; ++attempt) {
                llm::CompletionRequest req;
                req.prompt = attempt == 0 ? prompt
                                          : prompt + "\nYour previous response was rejected: " + last_error +
                                                "\nAnswer again in exactly the required format.\n";
                req.session_tag = "agent";
                const auto resp = gateway.complete(req);
                trace.append(store::EventKind::Turn, {{"step", step}, {"attempt", attempt}, {"text", resp.text}});
                try {
                    turn = protocol::parse_turn(resp.text, registry);
                    break;
                } catch (const Error& e) {
                    last_error = error_text(e);
                    if (e.code() == ErrorCode::UnknownTool) last_error += ". " + usage_reminder(e.what());
                }
            }

            Observation obs;
            protocol::AgentTurn summary_turn;
            bool aborted = false;
            if (!turn) {
                obs.text = "No valid response after " + std::to_string(config.retry_budget + 1) +
                           " attempts; this step is used up. Last problem: " + last_error +
                           "\nUse the exact response format and one of the listed actions.";
                obs.is_error = true;
                summary_turn.thought = "(no valid response)";
                summary_turn.action.name = "(none)";
            } else {
                summary_turn = *turn;
                st.plan_status = turn->plan_status;
                trace.append(store::EventKind::Action, {{"step", step},
                                                        {"name", turn->action.name},
                                                        {"input", turn->action.input},
                                                        {"reflection", turn->reflection},
                                                        {"plan_status", turn->plan_status},
                                                        {"fact_check", turn->fact_check},
                                                        {"thought", turn->thought},
                                                        {"questions", turn->questions}});
                if (turn->action.name == tools::RequestHelp && deps.channel) {
                    const auto help = handle_request_help(turn->action.text("request"), *deps.channel, trace, st,
                                                          config.help_timeout);
                    obs.text = help.observation;
                    obs.is_error = help.timed_out;
                    aborted = help.aborted;
                } else {
                    obs = dispatch_action(turn->action, ctx);
                }
            }
            if (!injected.empty()) obs.text = injected + "\n" + obs.text;
            trace.append(store::EventKind::Observation, {{"step", step}, {"text", obs.text}, {"error", obs.is_error}});

            protocol::StepSummary summary;
            if (config.summary_mode == SummaryMode::Model && turn && !aborted) {
                try {
                    summary = protocol::summarize_step(*turn, obs.text, gateway, injected);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::ParseError) throw;
                    summary = protocol::local_summary(*turn, obs.text, injected);
                }
            } else {
                summary = protocol::local_summary(summary_turn, obs.text, injected);
            }
            trace.append(store::EventKind::Summary, {{"step", step},
                                                     {"reasoning", summary.reasoning},
                                                     {"action", summary.action},
                                                     {"observation", summary.observation},
                                                     {"feedback", summary.feedback},
                                                     {"word_count", summary.word_count},
                                                     {"truncated", summary.truncated}});
            summaries.push_back(std::move(summary));
            st.step_index = step;
            if (aborted) return finish(store::Outcome::Aborted, "aborted while waiting for help");
            trace.update_state(st);
            if (obs.terminal) {
                st.answer = ctx.final_answer.value_or("");
                return finish(store::Outcome::Completed, {});
            }
        }
        return finish(store::Outcome::BudgetExhausted,
                      "step budget of " + std::to_string(config.step_budget) + " exhausted");
    } catch (const Error& e) {
        if (e.code() == ErrorCode::BudgetExhausted) return finish(store::Outcome::BudgetExhausted, e.what());
        return finish(store::Outcome::Failed, error_text(e));
    } catch (const std::exception& e) {
        return finish(store::Outcome::Failed, e.what());
    }
}

// ---- trials ------------------------------------------------------------------

double measure_metric(sandbox::Workspace& workspace, const std::string& command, const std::string& metric,
                      long trial_seed) {
    const auto r = workspace.run_command(command, {{"AUTORESEARCH_TRIAL_SEED", std::to_string(trial_seed)}});
    if (r.exit_code != 0) {
        auto err = r.stderr_text;
        if (err.size() > 2000) err = err.substr(err.size() - 2000);
        fail(ErrorCode::ExecFailed, "'" + command + "' exited with " + std::to_string(r.exit_code) + ": " + err);
    }
    auto v = metric_from_output(r.stdout_text, metric);
    if (!v) v = metric_from_output(r.stderr_text, metric);
    if (!v || !std::isfinite(*v)) fail(ErrorCode::ExecFailed, "'" + command + "' printed no value for " + metric);
    return *v;
}

TrialRun run_trial(const TrialOptions& options, std::size_t index, store::RunStore& store) {
    if (!options.provider_factory) fail(ErrorCode::InvalidArgument, "no provider configured");
    auto cfg = options.config;
    cfg.trial_seed = options.config.trial_seed + static_cast<long>(index);
    cfg.validate();

    TrialRun out;
    out.run_id = store.create_run(cfg.task.name, cfg.digest());
    if (options.on_run_created) options.on_run_created(out.run_id);

    const auto ws_root = store.run_dir(out.run_id) / "workspace";
    sandbox::Workspace::seed(cfg.task.prototype_dir(), ws_root);
    sandbox::Workspace ws(ws_root, cfg.policy);

    const double baseline = measure_metric(ws, cfg.task.baseline_command, cfg.task.metric, cfg.trial_seed);
    double final_value = baseline;

    auto provider = options.provider_factory(index);
    if (cfg.provider.empty()) cfg.provider = provider->id();
    llm::Gateway gateway(provider, options.gateway_options);
    std::unique_ptr<ml::Hub> hub = options.hub_factory ? options.hub_factory() : nullptr;
    auto channel = std::make_shared<store::FeedbackChannel>();
    auto sink = store.sink(out.run_id);
    store.attach(out.run_id, channel);

    LoopDeps deps;
    deps.gateway = &gateway;
    deps.hub = hub.get();
    deps.channel = channel;
    deps.trace = sink.get();
    deps.on_finish = [&](const store::RunState&) {
        json m = {{"metric", cfg.task.metric}, {"baseline", baseline}};
        try {
            final_value = measure_metric(ws, cfg.task.eval_command, cfg.task.metric, cfg.trial_seed);
        } catch (const Error& e) {
            final_value = baseline;
            out.note = std::string("final evaluation failed, counted as baseline: ") + e.what();
            m["note"] = out.note;
        }
        m["final"] = final_value;
        return m;
    };

    out.state = run_loop(cfg, ws, deps, out.run_id);
    store.detach(out.run_id);

    out.result.task = cfg.task.name;
    out.result.trial_seed = cfg.trial_seed;
    out.result.baseline_value = baseline;
    out.result.final_value = final_value;
    out.result.direction = cfg.task.direction;
    out.result.outcome = std::string(store::outcome_name(out.state.outcome));
    return out;
}

std::vector<TrialRun> run_trials(const TrialOptions& options, store::RunStore& store) {
    if (options.trials == 0) fail(ErrorCode::InvalidArgument, "trials must be at least 1");
    std::vector<TrialRun> results(options.trials);
    std::vector<std::exception_ptr> errors(options.trials);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < options.trials;) {
            try {
                results[i] = run_trial(options, i, store);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto n = std::max<std::size_t>(1, std::min(options.parallel, options.trials));
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

std::string render_transcript(const std::vector<store::TraceEvent>& events) {
    std::string out;
    std::int64_t current = -1;
    for (const auto& ev : events) {
        const auto& p = ev.payload;
        if (p.contains("step") && p["step"].is_number_integer()) {
            const auto step = p["step"].get<std::int64_t>();
            if (step != current) {
                current = step;
                out += "\n=== Step " + std::to_string(step) + " ===\n";
            }
        }
        switch (ev.kind) {
        case store::EventKind::Turn:
            out += "[response, attempt " + std::to_string(p.value("attempt", 0) + 1) + "]\n" + p.value("text", "") + "\n";
            break;
        case store::EventKind::Action:
            out += "[action] " + p.value("name", "") + " " + dump(p.value("input", json::object())) + "\n";
            break;
        case store::EventKind::Observation:
            out += "[observation]\n" + p.value("text", "") + "\n";
            break;
        case store::EventKind::Summary: {
            protocol::StepSummary s;
            s.reasoning = p.value("reasoning", "");
            s.action = p.value("action", "");
            s.observation = p.value("observation", "");
            s.feedback = p.value("feedback", "");
            out += "[summary]\n" + s.render() + "\n";
            break;
        }
        case store::EventKind::Feedback:
            out += "[feedback from " + p.value("author", "researcher") + "] " + p.value("text", "") + "\n";
            break;
        case store::EventKind::Control:
            out += "[control] " + p.value("action", "") + "\n";
            break;
        case store::EventKind::StateChange:
            out += "[state] " + dump(p) + "\n";
            break;
        }
    }
    return out;
}

} // namespace autoresearch::agent
