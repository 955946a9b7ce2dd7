#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace spatialgym {

struct ChatMessage {
    std::string role;  // "system", "user" or "assistant"
    std::string content;
};

struct ChatUsage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
    bool estimated = false;  // whitespace count, endpoint sent no usage block
};

struct ChatReply {
    std::string content;
    ChatUsage usage;
};

struct Sampling {
    double temperature = 0.0;
    int max_tokens = 4096;
};

struct ChatEndpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Whitespace-separated token count, used when usage metadata is missing.
int estimate_tokens(const std::string& text);

// Builds the chat-completions request body.
nlohmann::json chat_request_body(const std::string& model, const std::vector<ChatMessage>& messages,
                                 const Sampling& sampling);
// Reads choices[0].message.content and usage from a response body.
ChatReply parse_chat_response(const nlohmann::json& body, const std::vector<ChatMessage>& messages);

// Minimal client for a chat-completions endpoint ("{base_url}/chat/completions").
class ChatClient {
public:
    ChatClient(std::string base_url, std::string model, std::string api_key, Sampling sampling = {},
               int transport_retries = 3);

    ChatReply complete(const std::vector<ChatMessage>& messages) const;

    const std::string& model() const noexcept { return model_; }

private:
    std::string origin_;  // scheme://host[:port]
    std::string prefix_;  // path part of the base URL, no trailing slash
    std::string model_;
    std::string api_key_;
    Sampling sampling_;
    int retries_;
};

}  // namespace spatialgym
