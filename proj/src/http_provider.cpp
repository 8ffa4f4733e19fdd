#include "autoresearch/http_provider.hpp"
#include "autoresearch/error.hpp"
#include "http_util.hpp"

#include <json.hpp>

#include <cstdlib>

namespace autoresearch::llm {

using nlohmann::json;

ChatCompletionsProvider::ChatCompletionsProvider(ChatEndpointConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty() || config_.model.empty())
        fail(ErrorCode::InvalidArgument, "chat provider needs base_url and model");
}

CompletionResponse ChatCompletionsProvider::complete(const CompletionRequest& request) {
    const auto base = detail::split_base_url(config_.base_url);
    auto client = detail::make_client(base, config_.timeout);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const json body = {
        {"model", config_.model},
        {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"max_tokens", request.max_output_tokens},
        {"temperature", request.temperature},
    };
    auto res = client->Post(base.path_prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res)
        fail(ErrorCode::TransientProviderError, "chat request failed: " + httplib::to_string(res.error()));
    if (detail::is_transient_status(res->status))
        fail(ErrorCode::TransientProviderError, "chat endpoint returned HTTP " + std::to_string(res->status));
    if (res->status < 200 || res->status >= 300)
        fail(ErrorCode::ProviderError,
             "chat endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));

    CompletionResponse out;
    out.provider_id = id();
    try {
        const auto j = json::parse(res->body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        out.text = content.is_null() ? std::string() : content.get<std::string>();
        if (j.contains("usage") && j["usage"].is_object()) {
            out.usage.input_tokens = j["usage"].value("prompt_tokens", 0);
            out.usage.output_tokens = j["usage"].value("completion_tokens", 0);
        } else {
            out.usage.input_tokens = estimate_tokens(request.prompt.size());
            out.usage.output_tokens = estimate_tokens(out.text.size());
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::MalformedResponse, std::string("chat response: ") + e.what());
    }
    return out;
}

} // namespace autoresearch::llm
