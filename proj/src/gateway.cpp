#include "autoresearch/gateway.hpp"
#include "autoresearch/error.hpp"
#include "autoresearch/text.hpp"

#include <json.hpp>

#include <filesystem>
#include <thread>

namespace autoresearch::llm {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t estimate_tokens(std::size_t chars) {
    return (chars + 3) / 4;
}

ScriptedSession::ScriptedSession(std::vector<ScriptedEntry> entries, std::string name)
    : entries_(std::move(entries)), name_(std::move(name)) {}

std::shared_ptr<ScriptedSession> ScriptedSession::load(const std::string& path) {
    const std::string content = text::read_file(path);
    const fs::path base = fs::path(path).parent_path();

    std::vector<json> records;
    const auto trimmed = text::trim(content);
    try {
        if (!trimmed.empty() && trimmed.front() == '[') {
            for (auto& r : json::parse(trimmed)) records.push_back(r);
        } else {
            for (const auto& line : text::split_lines(content)) {
                if (text::trim(line).empty()) continue;
                records.push_back(json::parse(line));
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::MalformedResponse, "session file " + path + ": " + e.what());
    }

    std::vector<ScriptedEntry> entries;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!r.is_object())
            fail(ErrorCode::MalformedResponse, "session entry " + std::to_string(i) + " is not an object");
        ScriptedEntry e;
        if (r.contains("expect_substring") && !r["expect_substring"].is_null())
            e.expect_substring = r["expect_substring"].get<std::string>();
        if (r.contains("reply")) {
            e.reply = r["reply"].get<std::string>();
        } else if (r.contains("reply_file")) {
            e.reply = text::read_file((base / r["reply_file"].get<std::string>()).string());
        } else {
            fail(ErrorCode::MalformedResponse, "session entry " + std::to_string(i) + " has no reply");
        }
        entries.push_back(std::move(e));
    }
    return std::make_shared<ScriptedSession>(std::move(entries), fs::path(path).stem().string());
}

CompletionResponse ScriptedSession::complete(const CompletionRequest& request) {
    std::lock_guard lock(mutex_);
    if (cursor_ >= entries_.size())
        fail(ErrorCode::SessionExhausted,
             "scripted session " + name_ + " exhausted after " + std::to_string(entries_.size()) + " entries");
    const auto& entry = entries_[cursor_];
    if (entry.expect_substring && request.prompt.find(*entry.expect_substring) == std::string::npos)
        fail(ErrorCode::SessionMismatch, "scripted entry " + std::to_string(cursor_) +
                                             " expected the prompt to contain \"" + *entry.expect_substring + "\"");
    ++cursor_;
    CompletionResponse r;
    r.text = entry.reply;
    r.provider_id = id();
    r.usage.input_tokens = estimate_tokens(request.prompt.size());
    r.usage.output_tokens = estimate_tokens(entry.reply.size());
    return r;
}

std::size_t ScriptedSession::cursor() const {
    std::lock_guard lock(mutex_);
    return cursor_;
}

Gateway::Gateway(std::shared_ptr<Provider> provider, GatewayOptions options)
    : provider_(std::move(provider)),
      options_(options),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      remaining_(options.token_budget) {
    if (!provider_) fail(ErrorCode::InvalidArgument, "gateway requires a provider");
    if (options_.max_retries < 0) fail(ErrorCode::InvalidArgument, "max_retries must be >= 0");
}

std::size_t Gateway::project_usage(const CompletionRequest& request) {
    return (request.prompt.size() + 2) / 3;
}

void Gateway::set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }
void Gateway::set_recorder(Recorder recorder) { recorder_ = std::move(recorder); }

CompletionResponse Gateway::complete(const CompletionRequest& request) {
    if (request.prompt.empty()) fail(ErrorCode::InvalidArgument, "prompt must be non-empty");
    if (request.max_output_tokens == 0) fail(ErrorCode::InvalidArgument, "max_output_tokens must be > 0");
    if (!(request.temperature >= 0.0 && request.temperature <= 2.0))
        fail(ErrorCode::InvalidArgument, "temperature must be in [0, 2]");

    const std::size_t projected = project_usage(request);
    {
        std::lock_guard lock(mutex_);
        if (projected > remaining_ - reserved_)
            fail(ErrorCode::BudgetExhausted, "token budget exhausted: projected " + std::to_string(projected) +
                                                 ", remaining " + std::to_string(remaining_ - reserved_));
        reserved_ += projected;
    }
    auto release = [&] {
        std::lock_guard lock(mutex_);
        reserved_ -= projected;
    };

    int retries = 0;
    auto backoff = options_.initial_backoff;
    const auto started = std::chrono::steady_clock::now();
    for (;;) {
        try {
            CompletionResponse response = provider_->complete(request);
            if (response.provider_id.empty()) response.provider_id = provider_->id();
            if (response.latency.count() == 0)
                response.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - started);
            {
                std::lock_guard lock(mutex_);
                reserved_ -= projected;
                const auto used = response.usage.total();
                remaining_ -= std::min(remaining_, used);
                usage_.input_tokens += response.usage.input_tokens;
                usage_.output_tokens += response.usage.output_tokens;
                retries_ += retries;
                ++calls_;
            }
            if (recorder_) recorder_(CompletionRecord{request, response, retries});
            return response;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::TransientProviderError) {
                release();
                throw;
            }
            if (retries >= options_.max_retries) {
                release();
                {
                    std::lock_guard lock(mutex_);
                    retries_ += retries;
                }
                fail(ErrorCode::ProviderUnavailable, "provider " + provider_->id() + " unavailable after " +
                                                         std::to_string(retries) + " retries: " + e.what());
            }
            sleeper_(backoff);
            backoff *= 2;
            ++retries;
        } catch (...) {
            release();
            throw;
        }
    }
}

std::size_t Gateway::remaining_budget() const {
    std::lock_guard lock(mutex_);
    return remaining_;
}

Usage Gateway::total_usage() const {
    std::lock_guard lock(mutex_);
    return usage_;
}

int Gateway::total_retries() const {
    std::lock_guard lock(mutex_);
    return retries_;
}

std::size_t Gateway::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

} // namespace autoresearch::llm
