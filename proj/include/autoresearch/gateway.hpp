#pragma once
#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace autoresearch::llm {

struct Usage {
    std::size_t input_tokens = 0;
    std::size_t output_tokens = 0;
    std::size_t total() const { return input_tokens + output_tokens; }
};

struct CompletionRequest {
    std::string prompt;
    std::size_t max_output_tokens = 2048;
    double temperature = 0.7;
    std::string session_tag;
};

struct CompletionResponse {
    std::string text;
    std::string provider_id;
    Usage usage;
    std::chrono::milliseconds latency{0};
};

// Rough token estimate used when a provider does not report usage.
std::size_t estimate_tokens(std::size_t chars);

// One call contract shared by live endpoints and the offline replayer.
// Implementations throw Error(TransientProviderError) for retryable faults.
class Provider {
public:
    virtual ~Provider() = default;
    virtual CompletionResponse complete(const CompletionRequest& request) = 0;
    virtual std::string id() const = 0;
};

struct ScriptedEntry {
    std::optional<std::string> expect_substring;
    std::string reply;
};

// Replays recorded replies strictly in order. Thread-safe: concurrent callers
// observe one total order over the cursor.
class ScriptedSession : public Provider {
public:
    explicit ScriptedSession(std::vector<ScriptedEntry> entries, std::string name = "scripted");

    // JSONL (or a JSON array) of {"expect_substring"?, "reply"} records. A
    // record may carry "reply_file" instead of "reply", resolved relative to
    // the session file.
    static std::shared_ptr<ScriptedSession> load(const std::string& path);

    CompletionResponse complete(const CompletionRequest& request) override;
    std::string id() const override { return "scripted:" + name_; }

    std::size_t size() const { return entries_.size(); }
    std::size_t cursor() const;
    const std::vector<ScriptedEntry>& entries() const { return entries_; }

private:
    std::vector<ScriptedEntry> entries_;
    std::string name_;
    mutable std::mutex mutex_;
    std::size_t cursor_ = 0;
};

struct GatewayOptions {
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::size_t token_budget = 200000;
};

struct CompletionRecord {
    CompletionRequest request;
    CompletionResponse response;
    int retries = 0;
};

// Wraps a provider with request validation, retry with exponential backoff,
// and a per-run token budget checked before dispatch.
class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;
    using Recorder = std::function<void(const CompletionRecord&)>;

    explicit Gateway(std::shared_ptr<Provider> provider, GatewayOptions options = {});

    CompletionResponse complete(const CompletionRequest& request);

    // Projected usage of a request: prompt length / 3, rounded up.
    static std::size_t project_usage(const CompletionRequest& request);

    void set_sleeper(Sleeper sleeper);
    void set_recorder(Recorder recorder);

    std::string provider_id() const { return provider_->id(); }
    std::size_t remaining_budget() const;
    Usage total_usage() const;
    int total_retries() const;
    std::size_t calls() const;
    const GatewayOptions& options() const { return options_; }

private:
    std::shared_ptr<Provider> provider_;
    GatewayOptions options_;
    Sleeper sleeper_;
    Recorder recorder_;

    mutable std::mutex mutex_;
    std::size_t remaining_;
    std::size_t reserved_ = 0;
    Usage usage_;
    int retries_ = 0;
    std::size_t calls_ = 0;
};

} // namespace autoresearch::llm
