#include "autoresearch/agent.hpp"
#include "autoresearch/api_server.hpp"
#include "autoresearch/corpus.hpp"
#include "autoresearch/error.hpp"
#include "autoresearch/evaluation.hpp"
#include "autoresearch/http_provider.hpp"
#include "autoresearch/idea.hpp"
#include "autoresearch/ml.hpp"
#include "autoresearch/run_store.hpp"
#include "autoresearch/text.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <pthread.h>
#include <set>
#include <thread>

namespace ar = autoresearch;
namespace fs = std::filesystem;
namespace agent = autoresearch::agent;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string dump(const json& j) {
    return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

void emit(const std::string& out_path, const std::string& body) {
    if (out_path.empty() || out_path == "-") {
        std::cout << body;
        std::cout.flush();
    } else {
        ar::text::write_file(out_path, body);
    }
}

// ---- provider configuration ------------------------------------------------

struct ProviderFlags {
    std::string config_file;
    std::string session;
    std::string base_url;
    std::string model;
    std::string api_key_env;
    std::size_t token_budget = 200000;
    int max_retries = 3;
};

void add_provider_flags(CLI::App* cmd, ProviderFlags& f) {
    cmd->add_option("--config", f.config_file, "JSON config with provider defaults")->check(CLI::ExistingFile);
    cmd->add_option("--session", f.session, "scripted session file (offline replay)")->check(CLI::ExistingFile);
    cmd->add_option("--base-url", f.base_url, "chat-completions endpoint base URL");
    cmd->add_option("--model", f.model, "model name for the endpoint");
    cmd->add_option("--api-key-env", f.api_key_env, "environment variable holding the API key");
    cmd->add_option("--token-budget", f.token_budget, "token budget per gateway")->check(CLI::PositiveNumber);
    cmd->add_option("--max-retries", f.max_retries, "retries on transient provider errors")->check(CLI::NonNegativeNumber);
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    auto j = json::parse(ar::text::read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw UsageError("config file is not a JSON object: " + path);
    std::function<void(const json&)> scan = [&](const json& v) {
        if (!v.is_object()) return;
        for (auto it = v.begin(); it != v.end(); ++it) {
            const auto k = ar::text::to_lower(it.key());
            if (k == "api_key" || k == "token" || k == "secret" || k == "password")
                throw UsageError("config file must not hold credentials ('" + it.key() +
                                 "'); name an environment variable instead");
            scan(it.value());
        }
    };
    scan(j);
    return j;
}

std::function<std::shared_ptr<ar::llm::Provider>()> provider_factory(const ProviderFlags& f, const json& config) {
    if (!f.session.empty()) {
        const auto path = f.session;
        return [path] { return ar::llm::ScriptedSession::load(path); };
    }
    ar::llm::ChatEndpointConfig c;
    if (config.contains("provider")) {
        const auto& p = config["provider"];
        c.base_url = p.value("base_url", "");
        c.model = p.value("model", "");
        c.api_key_env = p.value("api_key_env", c.api_key_env);
        if (p.contains("timeout_s")) c.timeout = std::chrono::seconds(p["timeout_s"].get<long>());
    }
    if (!f.base_url.empty()) c.base_url = f.base_url;
    if (!f.model.empty()) c.model = f.model;
    if (!f.api_key_env.empty()) c.api_key_env = f.api_key_env;
    if (c.base_url.empty() || c.model.empty())
        throw UsageError("no model provider: pass --session, or --base-url and --model (or a --config file)");
    return [c] { return std::make_shared<ar::llm::ChatCompletionsProvider>(c); };
}

ar::llm::GatewayOptions gateway_options(const ProviderFlags& f, const json& config) {
    ar::llm::GatewayOptions o;
    o.token_budget = f.token_budget;
    o.max_retries = f.max_retries;
    if (config.contains("gateway")) {
        const auto& g = config["gateway"];
        if (g.contains("token_budget")) o.token_budget = g["token_budget"].get<std::size_t>();
        if (g.contains("max_retries")) o.max_retries = g["max_retries"].get<int>();
    }
    return o;
}

// ---- signals -----------------------------------------------------------------

// Blocks SIGINT/SIGTERM in every thread and hands them to a watcher thread.
class SignalWatcher {
public:
    explicit SignalWatcher(std::function<void()> on_signal) : on_signal_(std::move(on_signal)) {
        sigemptyset(&set_);
        sigaddset(&set_, SIGINT);
        sigaddset(&set_, SIGTERM);
        sigaddset(&set_, SIGUSR1);
        pthread_sigmask(SIG_BLOCK, &set_, nullptr);
        thread_ = std::thread([this] {
            int sig = 0;
            sigwait(&set_, &sig);
            if (sig != SIGUSR1) {
                signaled_ = true;
                on_signal_();
            }
        });
    }
    ~SignalWatcher() {
        pthread_kill(thread_.native_handle(), SIGUSR1);
        thread_.join();
    }
    bool signaled() const { return signaled_; }

private:
    sigset_t set_;
    std::function<void()> on_signal_;
    std::atomic<bool> signaled_{false};
    std::thread thread_;
};

std::pair<std::string, int> parse_listen(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) throw UsageError("--listen expects host:port");
    const auto port = ar::text::parse_number(s.substr(colon + 1));
    if (!port || *port < 0 || *port > 65535) throw UsageError("--listen has a bad port");
    return {s.substr(0, colon), static_cast<int>(*port)};
}

std::string env_or_empty(const std::string& var) {
    if (var.empty()) return {};
    const char* v = std::getenv(var.c_str());
    return v ? v : "";
}

// ---- ingest / idea -------------------------------------------------------------

struct IdeaFlags {
    std::string paper_dir;
    std::string context_file;
    std::string literature_file;
    bool live_literature = false;
    std::size_t related_limit = 5;
    std::string out;
    std::string refine;
    std::string feedback;
};

ar::corpus::PromptContext build_context(const IdeaFlags& f, ar::llm::Gateway* gateway) {
    if (!f.context_file.empty()) {
        const auto j = json::parse(ar::text::read_file(f.context_file), nullptr, false);
        if (j.is_discarded()) throw UsageError("context file is not JSON: " + f.context_file);
        return ar::corpus::build_prompt_context(ar::corpus::paper_from_json(j.at("paper")),
                                                ar::corpus::frame_from_json(j.at("frame")));
    }
    auto parsed = ar::corpus::load_paper_dir(f.paper_dir);
    for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << "\n";
    auto frame = ar::corpus::extract_problem(parsed.paper, *gateway);
    return ar::corpus::build_prompt_context(std::move(parsed.paper), std::move(frame));
}

int cmd_ingest(const IdeaFlags& f, const ProviderFlags& pf) {
    const auto config = load_config(pf.config_file);
    ar::llm::Gateway gateway(provider_factory(pf, config)(), gateway_options(pf, config));
    const auto ctx = build_context(f, &gateway);
    emit(f.out, dump({{"paper", ar::corpus::to_json(ctx.paper)}, {"frame", ar::corpus::to_json(ctx.frame)}}));
    return 0;
}

int cmd_idea(const IdeaFlags& f, const ProviderFlags& pf) {
    const auto config = load_config(pf.config_file);
    ar::llm::Gateway gateway(provider_factory(pf, config)(), gateway_options(pf, config));
    if (!f.refine.empty()) {
        if (f.feedback.empty()) throw UsageError("--refine needs --feedback");
        const auto prior = ar::idea::load_idea(f.refine);
        emit(f.out, ar::idea::serialize_idea(ar::idea::refine_idea(prior, f.feedback, gateway)));
        return 0;
    }
    if (f.paper_dir.empty() && f.context_file.empty()) throw UsageError("pass --paper-dir or --context");
    auto ctx = build_context(f, &gateway);

    std::vector<ar::corpus::RelatedWork> related;
    if (!f.literature_file.empty()) {
        auto lit = ar::corpus::StubLiteratureProvider::from_file(f.literature_file);
        related = ar::corpus::search_recent_works(ctx, f.related_limit, lit);
    } else if (f.live_literature) {
        ar::corpus::HttpLiteratureConfig lc;
        if (config.contains("literature")) {
            const auto& l = config["literature"];
            lc.base_url = l.value("base_url", lc.base_url);
            lc.api_key_env = l.value("api_key_env", lc.api_key_env);
        }
        ar::corpus::HttpLiteratureProvider lit(lc);
        related = ar::corpus::search_recent_works(ctx, f.related_limit, lit);
    }
    auto h = ar::idea::generate_hypothesis(ctx, related, gateway);
    auto p = ar::idea::generate_plan(ctx, related, h, gateway);
    const auto idea = ar::idea::assemble_idea(std::move(ctx), std::move(related), std::move(h), std::move(p),
                                              gateway.provider_id());
    emit(f.out, ar::idea::serialize_idea(idea));
    return 0;
}

// ---- run / serve ---------------------------------------------------------------

struct RunFlags {
    std::string idea_file;
    std::string task_dir;
    std::string runs_dir = "runs";
    std::size_t trials = 1;
    std::size_t parallel = 1;
    std::size_t step_budget = 50;
    int retry_budget = 2;
    double threshold = 10.0;
    std::string summaries = "model";
    double help_timeout_s = 600;
    double exec_timeout_s = 60;
    long seed = 0;
    std::string hub_models;
    std::string hub_datasets;
    bool live_hub = false;
    std::string listen;
    std::string auth_token_env = "AUTORESEARCH_API_TOKEN";
    std::string report;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool required) {
    auto* idea = cmd->add_option("--idea", f.idea_file, "research idea file")->check(CLI::ExistingFile);
    auto* task = cmd->add_option("--task", f.task_dir, "task package directory")->check(CLI::ExistingDirectory);
    if (required) {
        idea->required();
        task->required();
    }
    cmd->add_option("--runs-dir", f.runs_dir, "run store directory")->capture_default_str();
    cmd->add_option("--trials", f.trials, "number of isolated trials")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--parallel", f.parallel, "trials run at once")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--step-budget", f.step_budget, "agent steps per trial")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--retry-budget", f.retry_budget, "re-asks per malformed turn")->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--threshold", f.threshold, "success threshold in percent")->capture_default_str();
    cmd->add_option("--summaries", f.summaries, "step summaries from the model or built locally")
        ->check(CLI::IsMember({"model", "local"}))
        ->capture_default_str();
    cmd->add_option("--help-timeout", f.help_timeout_s, "seconds to wait for a Request Help reply")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--exec-timeout", f.exec_timeout_s, "seconds per script execution")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--seed", f.seed, "trial seed of the first trial")->capture_default_str();
    cmd->add_option("--hub-models", f.hub_models, "model hub stub records")->check(CLI::ExistingFile);
    cmd->add_option("--hub-datasets", f.hub_datasets, "dataset hub stub records")->check(CLI::ExistingFile);
    cmd->add_flag("--live-hub", f.live_hub, "use the public model/dataset hub");
    cmd->add_option("--auth-token-env", f.auth_token_env, "environment variable holding the API token")->capture_default_str();
    cmd->add_option("--report", f.report, "write the metrics report here instead of stdout");
}

agent::TrialOptions trial_options(const RunFlags& f, const ProviderFlags& pf, const json& config) {

    agent::TrialOptions o;
    o.config.idea = ar::idea::load_idea(f.idea_file);
    o.config.task = ar::TaskPackage::load(f.task_dir);
    o.config.step_budget = f.step_budget;
    o.config.retry_budget = f.retry_budget;
    o.config.trial_seed = f.seed;
    o.config.summary_mode = f.summaries == "local" ? agent::SummaryMode::Local : agent::SummaryMode::Model;
    o.config.help_timeout = std::chrono::milliseconds(static_cast<long>(f.help_timeout_s * 1000));
    o.config.policy.timeout = std::chrono::milliseconds(static_cast<long>(f.exec_timeout_s * 1000));
    o.trials = f.trials;
    o.parallel = f.parallel;
    o.threshold = f.threshold;
    auto make = provider_factory(pf, config);
    o.provider_factory = [make](std::size_t) { return make(); };
    o.gateway_options = gateway_options(pf, config);
    if (!f.hub_models.empty() || !f.hub_datasets.empty()) {
        const auto models = f.hub_models.empty() ? std::nullopt : std::optional<fs::path>(f.hub_models);
        const auto datasets = f.hub_datasets.empty() ? std::nullopt : std::optional<fs::path>(f.hub_datasets);
        o.hub_factory = [models, datasets] {
            return std::make_unique<ar::ml::StubHub>(ar::ml::StubHub::from_files(models, datasets));
        };
    } else if (f.live_hub) {
        ar::ml::HttpHubConfig hc;
        if (config.contains("hub")) {
            const auto& h = config["hub"];
            hc.base_url = h.value("base_url", hc.base_url);
            hc.rows_base_url = h.value("rows_base_url", hc.rows_base_url);
            hc.token_env = h.value("token_env", hc.token_env);
        }
        o.hub_factory = [hc] { return std::make_unique<ar::ml::HttpHub>(hc); };
    }
    return o;
}

// Runs trials; on a signal every live run is aborted and allowed to finish
// writing its trace.
json execute_trials(agent::TrialOptions options, ar::store::RunStore& store, bool& interrupted) {
    std::mutex m;
    std::set<std::string> live;
    std::atomic<bool> stop{false};
    options.on_run_created = [&](const std::string& id) {
        std::lock_guard lock(m);
        live.insert(id);
        std::cerr << "run " << id << " started\n";
        if (stop) {
            try {
                store.control(id, ar::store::ControlAction::Abort);
            } catch (const ar::Error&) {
            }
        }
    };
    auto abort_all = [&] {
        stop = true;
        std::lock_guard lock(m);
        for (const auto& id : live) {
            try {
                store.control(id, ar::store::ControlAction::Abort);
            } catch (const ar::Error&) {
            }
        }
    };
    std::vector<agent::TrialRun> runs;
    {
        SignalWatcher watcher(abort_all);
        runs = agent::run_trials(options, store);
        interrupted = watcher.signaled();
    }
    std::vector<ar::eval::TrialResult> results;
    json ids = json::array();
    for (const auto& r : runs) {
        results.push_back(r.result);
        ids.push_back({{"run_id", r.run_id}, {"outcome", r.result.outcome}, {"note", r.note}});
    }
    const auto metrics = ar::eval::compute_run_metrics(results, options.threshold);
    auto report = ar::eval::metrics_report(metrics, results);
    report["runs"] = ids;
    return report;
}

int cmd_run(const RunFlags& f, const ProviderFlags& pf) {
    const auto config = load_config(pf.config_file);
    auto options = trial_options(f, pf, config);
    ar::store::RunStore store(f.runs_dir);
    std::unique_ptr<ar::api::ApiServer> server;
    if (!f.listen.empty()) {
        const auto [host, port] = parse_listen(f.listen);
        server = std::make_unique<ar::api::ApiServer>(store, ar::api::ServerOptions{host, port, env_or_empty(f.auth_token_env)});
        std::cerr << "listening on " << host << ":" << server->start() << "\n";
    }
    bool interrupted = false;
    const auto report = execute_trials(options, store, interrupted);
    if (server) server->stop();
    emit(f.report, dump(report));
    return interrupted ? 130 : 0;
}

int cmd_serve(const RunFlags& f, const ProviderFlags& pf, const std::string& listen) {
    const auto [host, port] = parse_listen(listen);
    ar::store::RunStore store(f.runs_dir);
    ar::api::ApiServer server(store, ar::api::ServerOptions{host, port, env_or_empty(f.auth_token_env)});

    const bool with_runs = !f.idea_file.empty() || !f.task_dir.empty();
    if (with_runs && (f.idea_file.empty() || f.task_dir.empty())) throw UsageError("serve needs both --idea and --task to launch runs");
    std::optional<agent::TrialOptions> options;
    if (with_runs) options = trial_options(f, pf, load_config(pf.config_file));

    std::cerr << "listening on " << host << ":" << server.start() << "\n";
    std::mutex m;
    std::condition_variable cv;
    bool done = false;
    std::set<std::string> live;
    auto on_signal = [&] {
        {
            std::lock_guard lock(m);
            done = true;
            for (const auto& id : live) {
                try {
                    store.control(id, ar::store::ControlAction::Abort);
                } catch (const ar::Error&) {
                }
            }
        }
        cv.notify_all();
    };
    SignalWatcher watcher(on_signal);
    std::thread runner;
    if (options) {
        options->on_run_created = [&](const std::string& id) {
            std::lock_guard lock(m);
            live.insert(id);
            std::cerr << "run " << id << " started\n";
            if (done) store.control(id, ar::store::ControlAction::Abort);
        };
        runner = std::thread([&] {
            try {
                const auto runs = agent::run_trials(*options, store);
                std::vector<ar::eval::TrialResult> results;
                for (const auto& r : runs) results.push_back(r.result);
                emit(f.report.empty() ? (fs::path(f.runs_dir) / "metrics.json").string() : f.report,
                     dump(ar::eval::metrics_report(ar::eval::compute_run_metrics(results, options->threshold), results)));
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
            }
        });
    }
    {
        std::unique_lock lock(m);
        cv.wait(lock, [&] { return done; });
    }
    if (runner.joinable()) runner.join();
    server.stop();
    return 0;
}

// ---- eval / replay -------------------------------------------------------------

struct EvalFlags {
    std::vector<std::string> tables;
    std::string group;
    std::string idea_file;
    std::string target = "both";
    std::string reference;
    std::string trials_file;
    double threshold = 10.0;
    std::string out;
};

std::vector<ar::eval::TrialResult> load_trials(const std::string& path) {
    auto j = json::parse(ar::text::read_file(path), nullptr, false);
    if (j.is_discarded()) throw UsageError("trials file is not JSON: " + path);
    if (j.is_object() && j.contains("trial_results")) j = j["trial_results"];
    if (!j.is_array()) throw UsageError("trials file must hold an array of trial results");
    std::vector<ar::eval::TrialResult> out;
    for (const auto& r : j) {
        ar::eval::TrialResult t;
        t.task = r.at("task").get<std::string>();
        t.trial_seed = r.value("trial_seed", 0L);
        t.baseline_value = r.at("baseline_value").get<double>();
        t.final_value = r.at("final_value").get<double>();
        t.direction = ar::parse_direction(r.value("direction", "higher_better"));
        t.outcome = r.value("outcome", "");
        out.push_back(std::move(t));
    }
    return out;
}

int cmd_eval(const EvalFlags& f, const ProviderFlags& pf) {
    if (f.tables.empty() && f.idea_file.empty() && f.trials_file.empty())
        throw UsageError("nothing to evaluate: pass --table, --idea or --trials");
    json out = json::object();
    if (!f.tables.empty()) {
        json tables = json::array();
        for (const auto& t : f.tables) tables.push_back(ar::eval::table_report(ar::eval::load_table(t), f.group));
        out["tables"] = tables;
    }
    if (!f.trials_file.empty()) {
        const auto trials = load_trials(f.trials_file);
        out["metrics"] = ar::eval::metrics_report(ar::eval::compute_run_metrics(trials, f.threshold), trials);
    }
    if (!f.idea_file.empty()) {
        const auto idea = ar::idea::load_idea(f.idea_file);
        if (!pf.session.empty() || !pf.base_url.empty() || !pf.config_file.empty()) {
            const auto config = load_config(pf.config_file);
            ar::llm::Gateway gateway(provider_factory(pf, config)(), gateway_options(pf, config));
            std::vector<ar::eval::Target> targets;
            if (f.target == "both" || f.target == "hypothesis") targets.push_back(ar::eval::Target::Hypothesis);
            if (f.target == "both" || f.target == "experiment_design") targets.push_back(ar::eval::Target::ExperimentDesign);
            json cards = json::array();
            for (auto t : targets) {
                const auto card = ar::eval::score_idea(idea, t, gateway);
                cards.push_back({{"target", ar::eval::target_name(t)},
                                 {"mean", card.mean()},
                                 {"records", ar::eval::scorecard_records(card)}});
            }
            out["scorecards"] = cards;
        }
        if (!f.reference.empty()) {
            const auto ref = ar::text::read_file(f.reference);
            out["similarity"] = {{"metric", ar::eval::kSimilarityMetricId},
                                 {"value", ar::eval::similarity(ar::idea::render_hypothesis(idea.hypothesis), ref)}};
        }
        if (!out.contains("scorecards") && !out.contains("similarity"))
            throw UsageError("--idea needs a reviewer (--session or provider flags) or --reference");
    }
    emit(f.out, dump(out));
    return 0;
}

int cmd_replay(const std::string& run_id, const std::string& runs_dir, bool as_json) {
    ar::store::RunStore store(runs_dir);
    const auto events = store.read_events(run_id);
    if (as_json) {
        std::string body;
        for (const auto& e : events) body += e.to_json().dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
        emit("-", body);
    } else {
        emit("-", ar::agent::render_transcript(events));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"autoresearch: paper to research idea to executed experiment"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "autoresearch 0.1.0");

    ProviderFlags pf;
    IdeaFlags idea_f;
    RunFlags run_f;
    EvalFlags eval_f;
    std::string replay_id, listen = "127.0.0.1:8080";
    bool replay_json = false;

    auto* ingest = app.add_subcommand("ingest", "parse a paper directory and extract tasks, gaps and keywords");
    ingest->add_option("--paper-dir", idea_f.paper_dir, "paper directory")->required()->check(CLI::ExistingDirectory);
    ingest->add_option("--out,-o", idea_f.out, "output file (default stdout)");
    add_provider_flags(ingest, pf);

    auto* idea = app.add_subcommand("idea", "generate a research idea (hypothesis and experiment plan)");
    auto* pd = idea->add_option("--paper-dir", idea_f.paper_dir, "paper directory")->check(CLI::ExistingDirectory);
    auto* cf = idea->add_option("--context", idea_f.context_file, "context file written by ingest")->check(CLI::ExistingFile);
    auto* rf = idea->add_option("--refine", idea_f.refine, "prior idea file to refine")->check(CLI::ExistingFile);
    pd->excludes(cf);
    rf->excludes(pd);
    rf->excludes(cf);
    idea->add_option("--feedback", idea_f.feedback, "feedback used with --refine");
    idea->add_option("--literature", idea_f.literature_file, "literature records file")->check(CLI::ExistingFile);
    idea->add_flag("--live-literature", idea_f.live_literature, "query the live literature service");
    idea->add_option("--related-limit", idea_f.related_limit, "recent works to include")->capture_default_str();
    idea->add_option("--out,-o", idea_f.out, "output file (default stdout)");
    add_provider_flags(idea, pf);

    auto* run = app.add_subcommand("run", "execute an idea on a task package over several trials");
    add_run_flags(run, run_f, true);
    run->add_option("--listen", run_f.listen, "serve the run API at host:port while running");
    add_provider_flags(run, pf);

    auto* eval = app.add_subcommand("eval", "score ideas, recompute trial metrics or recorded tables");
    eval->add_option("--table", eval_f.tables, "recorded table file")->check(CLI::ExistingFile);
    eval->add_option("--group", eval_f.group, "restrict table rows to one group");
    eval->add_option("--idea", eval_f.idea_file, "idea file to score")->check(CLI::ExistingFile);
    eval->add_option("--target", eval_f.target, "what to score")
        ->check(CLI::IsMember({"hypothesis", "experiment_design", "both"}))
        ->capture_default_str();
    eval->add_option("--reference", eval_f.reference, "text file compared to the hypothesis")->check(CLI::ExistingFile);
    eval->add_option("--trials", eval_f.trials_file, "trial results or a metrics report")->check(CLI::ExistingFile);
    eval->add_option("--threshold", eval_f.threshold, "success threshold in percent")->capture_default_str();
    eval->add_option("--out,-o", eval_f.out, "output file (default stdout)");
    add_provider_flags(eval, pf);

    auto* replay = app.add_subcommand("replay", "print the transcript of a stored run");
    replay->add_option("run_id", replay_id, "run id")->required();
    replay->add_option("--runs-dir", run_f.runs_dir, "run store directory")->capture_default_str();
    replay->add_flag("--json", replay_json, "print raw events, one per line");

    auto* serve = app.add_subcommand("serve", "serve the run API; optionally launch runs in this process");
    serve->add_option("--listen", listen, "host:port")->capture_default_str();
    add_run_flags(serve, run_f, false);
    add_provider_flags(serve, pf);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (*run || *serve) {
        // Threads started from here on inherit the mask; SignalWatcher takes the signals.
        sigset_t set;
        sigemptyset(&set);
        sigaddset(&set, SIGINT);
        sigaddset(&set, SIGTERM);
        sigaddset(&set, SIGUSR1);
        pthread_sigmask(SIG_BLOCK, &set, nullptr);
    }

    try {
        if (*ingest) return cmd_ingest(idea_f, pf);
        if (*idea) return cmd_idea(idea_f, pf);
        if (*run) return cmd_run(run_f, pf);
        if (*eval) return cmd_eval(eval_f, pf);
        if (*replay) return cmd_replay(replay_id, run_f.runs_dir, replay_json);
        if (*serve) return cmd_serve(run_f, pf, listen);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ar::Error& e) {
        std::cerr << "error [" << ar::code_name(e.code()) << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
