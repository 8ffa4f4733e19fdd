#pragma once
#include "autoresearch/gateway.hpp"

#include <chrono>
#include <string>

namespace autoresearch::llm {

struct ChatEndpointConfig {
    std::string base_url;                  // e.g. https://api.openai.com/v1
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY"; // name of the variable, never the key
    std::chrono::seconds timeout{120};
};

// Speaks the common chat-completions wire format:
// POST {base_url}/chat/completions {model, messages, max_tokens, temperature}.
class ChatCompletionsProvider : public Provider {
public:
    explicit ChatCompletionsProvider(ChatEndpointConfig config);

    CompletionResponse complete(const CompletionRequest& request) override;
    std::string id() const override { return "chat:" + config_.model; }

private:
    ChatEndpointConfig config_;
};

} // namespace autoresearch::llm
