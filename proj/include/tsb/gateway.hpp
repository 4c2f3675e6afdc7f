#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsb {

enum class Role { summarizer, verifier, predictor };

const char* role_name(Role r);

struct GenerationParams {
    double temperature = 0.0;
    int max_output_tokens = 1024;
};

struct CompletionResponse {
    std::string text;
    int tokens_in = 0;   // whitespace-token estimate
    int tokens_out = 0;
    double latency_ms = 0.0;
    std::string backend_id;
    std::string cache_key;
    bool from_cache = false;
};

struct TransportError : std::runtime_error {
    int attempts;
    TransportError(const std::string& msg, int attempts_)
        : std::runtime_error(msg), attempts(attempts_) {}
};

struct UnmatchedPromptError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const std::string& prompt, const std::string& model,
                                 const GenerationParams& params) = 0;
    virtual std::string id() const = 0;
};

// Deterministic stand-in for an LLM. Entries are consulted in insertion
// order; the first live entry whose matcher hits serves the prompt.
class ScriptedBackend : public Backend {
public:
    using Responder = std::function<std::string(const std::string& prompt)>;

    explicit ScriptedBackend(bool strict = true) : strict_(strict) {}

    // max_uses = 0 means unlimited.
    void add_response(std::string substring, std::string response, int max_uses = 0);
    void add_exact(const std::string& prompt, std::string response, int max_uses = 0);
    void add_responder(std::string substring, Responder fn, int max_uses = 0);
    // Throws from the next `times` matching calls, then the entry expires.
    void add_failure(std::string substring, int times,
                     std::string message = "scripted backend failure");

    std::string complete(const std::string& prompt, const std::string& model,
                         const GenerationParams& params) override;
    std::string id() const override { return "scripted"; }

    struct LogEntry {
        std::string prompt;
        std::string response;
    };
    std::vector<LogEntry> call_log() const;
    int calls() const;
    // Calls whose prompt contains `substring`.
    int calls_matching(const std::string& substring) const;
    void clear_log();

private:
    struct Entry {
        enum class Kind { exact_hash, substring } kind;
        std::string matcher;  // sha256 hex for exact, literal otherwise
        Responder respond;
        int max_uses = 0;
        int uses = 0;
    };
    bool strict_;
    std::vector<Entry> entries_;
    std::vector<LogEntry> log_;
    mutable std::mutex mu_;
};

// Plain HTTPS adapter for OpenAI-compatible chat-completion endpoints.
// Credentials come from the named environment variable, never from config.
class HttpBackend : public Backend {
public:
    HttpBackend(std::string base_url, std::string api_key_env = "TSB_API_KEY",
                std::string path = "/v1/chat/completions");
    std::string complete(const std::string& prompt, const std::string& model,
                         const GenerationParams& params) override;
    std::string id() const override { return "http:" + base_url_; }

private:
    std::string base_url_;
    std::string api_key_env_;
    std::string path_;
};

class ResponseCache {
public:
    virtual ~ResponseCache() = default;
    virtual std::optional<std::string> get(const std::string& model, const std::string& key) = 0;
    virtual void put(const std::string& model, const std::string& key, const std::string& text) = 0;
};

class MemoryCache : public ResponseCache {
public:
    std::optional<std::string> get(const std::string& model, const std::string& key) override;
    void put(const std::string& model, const std::string& key, const std::string& text) override;

private:
    std::map<std::string, std::string> entries_;
    std::mutex mu_;
};

// One file per entry: <root>/<model>/<first-2-hex>/<key>.txt
class DiskCache : public ResponseCache {
public:
    explicit DiskCache(std::string root) : root_(std::move(root)) {}
    std::optional<std::string> get(const std::string& model, const std::string& key) override;
    void put(const std::string& model, const std::string& key, const std::string& text) override;

private:
    std::string entry_path(const std::string& model, const std::string& key) const;
    std::string root_;
    std::mutex mu_;
};

struct GatewayStats {
    std::int64_t hits = 0;
    std::int64_t misses = 0;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    std::int64_t estimated_calls = 0;  // actual backend invocations
};

struct RoleBinding {
    std::shared_ptr<Backend> backend;
    std::string model_name;
    GenerationParams params;
};

// Thread-safe front door to all model backends: response caching,
// bounded retries with exponential backoff, and a global cap on
// in-flight backend calls.
class Gateway {
public:
    explicit Gateway(std::shared_ptr<ResponseCache> cache = nullptr, int max_parallel = 4,
                     int max_attempts = 3, int backoff_base_ms = 250);

    void bind(Role role, std::shared_ptr<Backend> backend, std::string model_name,
              GenerationParams params = {});
    const RoleBinding& binding(Role role) const;

    // bypass_cache skips the cache read (the response is still written
    // back), giving retries on malformed output a fresh sample.
    CompletionResponse complete(Role role, const std::string& prompt, bool bypass_cache = false);
    static std::string cache_key(const std::string& model, const GenerationParams& params,
                                 const std::string& prompt);

    GatewayStats stats() const;

private:
    std::shared_ptr<ResponseCache> cache_;
    int max_parallel_;
    int max_attempts_;
    int backoff_base_ms_;
    std::map<Role, RoleBinding> bindings_;
    GatewayStats stats_;
    mutable std::mutex mu_;
    std::condition_variable slot_free_;
    int in_flight_ = 0;
};

}  // namespace tsb
