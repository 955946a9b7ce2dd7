#include "spatialgym/chat_client.hpp"

#include <chrono>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace spatialgym {

int estimate_tokens(const std::string& text) {
    std::istringstream in(text);
    std::string word;
    int n = 0;
    while (in >> word) ++n;
    return n;
}

nlohmann::json chat_request_body(const std::string& model, const std::vector<ChatMessage>& messages,
                                 const Sampling& sampling) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", model},
            {"messages", msgs},
            {"temperature", sampling.temperature},
            {"max_tokens", sampling.max_tokens}};
}

ChatReply parse_chat_response(const nlohmann::json& body, const std::vector<ChatMessage>& messages) {
    ChatReply reply;
    try {
        const auto& content = body.at("choices").at(0).at("message").at("content");
        reply.content = content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ChatEndpointError(std::string("malformed chat response: ") + e.what());
    }
    if (body.contains("usage") && body["usage"].is_object()) {
        reply.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0);
        reply.usage.completion_tokens = body["usage"].value("completion_tokens", 0);
    } else {
        int prompt = 0;
        for (const auto& m : messages) prompt += estimate_tokens(m.content);
        reply.usage = {prompt, estimate_tokens(reply.content), true};
    }
    return reply;
}

ChatClient::ChatClient(std::string base_url, std::string model, std::string api_key, Sampling sampling,
                       int transport_retries)
    : model_(std::move(model)), api_key_(std::move(api_key)), sampling_(sampling), retries_(transport_retries) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw ChatEndpointError("endpoint URL needs a scheme: " + base_url);
    const auto path_start = base_url.find('/', scheme_end + 3);
    origin_ = base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

ChatReply ChatClient::complete(const std::vector<ChatMessage>& messages) const {
    httplib::Client cli(origin_);
    cli.set_connection_timeout(10);
    cli.set_read_timeout(600);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    const std::string body = chat_request_body(model_, messages, sampling_).dump();

    std::string last_error;
    for (int attempt = 0; attempt <= retries_; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(200 * attempt));
        auto res = cli.Post(prefix_ + "/chat/completions", headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500 || res->status == 429) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) throw ChatEndpointError("HTTP " + std::to_string(res->status) + ": " + res->body);
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error&) {
            throw ChatEndpointError("chat endpoint returned non-JSON body");
        }
        return parse_chat_response(parsed, messages);
    }
    throw ChatEndpointError("chat endpoint unavailable after retries (" + last_error + ")");
}

}  // namespace spatialgym
