// OpenAI-compatible chat-completions adapter. Kept in its own
// translation unit so <httplib.h> is compiled exactly once.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <nlohmann/json.hpp>

#include "tsb/gateway.hpp"

using nlohmann::json;

namespace tsb {

HttpBackend::HttpBackend(std::string base_url, std::string api_key_env, std::string path)
    : base_url_(std::move(base_url)), api_key_env_(std::move(api_key_env)), path_(std::move(path)) {}

std::string HttpBackend::complete(const std::string& prompt, const std::string& model,
                                  const GenerationParams& params) {
    json body;
    body["model"] = model;
    body["messages"] = json::array({{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = params.temperature;
    body["max_tokens"] = params.max_output_tokens;

    httplib::Client client(base_url_);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(api_key_env_.c_str())) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
        throw std::runtime_error("http transport failure: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw std::runtime_error("http status " + std::to_string(res->status) + ": " +
                                 res->body.substr(0, 200));
    }
    json parsed = json::parse(res->body);
    return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
}

}  // namespace tsb
