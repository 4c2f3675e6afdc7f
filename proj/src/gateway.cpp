#include "tsb/gateway.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "tsb/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsb {

const char* role_name(Role r) {
    switch (r) {
        case Role::summarizer: return "summarizer";
        case Role::verifier: return "verifier";
        case Role::predictor: return "predictor";
    }
    return "";
}

// ---------------------------------------------------------------- scripted

void ScriptedBackend::add_response(std::string substring, std::string response, int max_uses) {
    std::lock_guard lock(mu_);
    entries_.push_back({Entry::Kind::substring, std::move(substring),
                        [response = std::move(response)](const std::string&) { return response; },
                        max_uses, 0});
}

void ScriptedBackend::add_exact(const std::string& prompt, std::string response, int max_uses) {
    std::lock_guard lock(mu_);
    entries_.push_back({Entry::Kind::exact_hash, sha256_hex(prompt),
                        [response = std::move(response)](const std::string&) { return response; },
                        max_uses, 0});
}

void ScriptedBackend::add_responder(std::string substring, Responder fn, int max_uses) {
    std::lock_guard lock(mu_);
    entries_.push_back({Entry::Kind::substring, std::move(substring), std::move(fn), max_uses, 0});
}

void ScriptedBackend::add_failure(std::string substring, int times, std::string message) {
    std::lock_guard lock(mu_);
    entries_.push_back({Entry::Kind::substring, std::move(substring),
                        [message = std::move(message)](const std::string&) -> std::string {
                            throw std::runtime_error(message);
                        },
                        times, 0});
}

std::string ScriptedBackend::complete(const std::string& prompt, const std::string&,
                                      const GenerationParams&) {
    Responder responder;
    {
        std::lock_guard lock(mu_);
        for (auto& e : entries_) {
            if (e.max_uses > 0 && e.uses >= e.max_uses) continue;
            bool hit = e.kind == Entry::Kind::exact_hash
                           ? sha256_hex(prompt) == e.matcher
                           : prompt.find(e.matcher) != std::string::npos;
            if (hit) {
                ++e.uses;
                responder = e.respond;
                break;
            }
        }
        if (!responder && strict_) {
            throw UnmatchedPromptError("scripted backend: no matcher for prompt starting \"" +
                                       prompt.substr(0, 60) + "\"");
        }
    }
    std::string response = responder ? responder(prompt) : std::string();
    std::lock_guard lock(mu_);
    log_.push_back({prompt, response});
    return response;
}

std::vector<ScriptedBackend::LogEntry> ScriptedBackend::call_log() const {
    std::lock_guard lock(mu_);
    return log_;
}

int ScriptedBackend::calls() const {
    std::lock_guard lock(mu_);
    return static_cast<int>(log_.size());
}

int ScriptedBackend::calls_matching(const std::string& substring) const {
    std::lock_guard lock(mu_);
    int n = 0;
    for (const auto& e : log_)
        if (e.prompt.find(substring) != std::string::npos) ++n;
    return n;
}

void ScriptedBackend::clear_log() {
    std::lock_guard lock(mu_);
    log_.clear();
}

// -------------------------------------------------------------------- cache

std::optional<std::string> MemoryCache::get(const std::string& model, const std::string& key) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(model + "/" + key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void MemoryCache::put(const std::string& model, const std::string& key, const std::string& text) {
    std::lock_guard lock(mu_);
    entries_[model + "/" + key] = text;
}

namespace {
std::string sanitize(const std::string& s) {
    std::string out = s;
    for (char& c : out) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) {
            c = '_';
        }
    }
    return out.empty() ? "_" : out;
}
}  // namespace

std::string DiskCache::entry_path(const std::string& model, const std::string& key) const {
    return (fs::path(root_) / sanitize(model) / key.substr(0, 2) / (key + ".txt")).string();
}

std::optional<std::string> DiskCache::get(const std::string& model, const std::string& key) {
    std::ifstream in(entry_path(model, key), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void DiskCache::put(const std::string& model, const std::string& key, const std::string& text) {
    std::lock_guard lock(mu_);
    atomic_write_file(entry_path(model, key), text);
}

// ------------------------------------------------------------------ gateway

Gateway::Gateway(std::shared_ptr<ResponseCache> cache, int max_parallel, int max_attempts,
                 int backoff_base_ms)
    : cache_(cache ? std::move(cache) : std::make_shared<MemoryCache>()),
      max_parallel_(max_parallel),
      max_attempts_(max_attempts),
      backoff_base_ms_(backoff_base_ms) {
    if (max_parallel_ < 1) throw std::invalid_argument("max_parallel must be >= 1");
    if (max_attempts_ < 1) throw std::invalid_argument("max_attempts must be >= 1");
}

void Gateway::bind(Role role, std::shared_ptr<Backend> backend, std::string model_name,
                   GenerationParams params) {
    std::lock_guard lock(mu_);
    bindings_[role] = {std::move(backend), std::move(model_name), params};
}

const RoleBinding& Gateway::binding(Role role) const {
    std::lock_guard lock(mu_);
    auto it = bindings_.find(role);
    if (it == bindings_.end()) {
        throw std::runtime_error(std::string("no backend bound for role ") + role_name(role));
    }
    return it->second;
}

std::string Gateway::cache_key(const std::string& model, const GenerationParams& params,
                               const std::string& prompt) {
    std::ostringstream material;
    material << model << '\x1f' << params.temperature << '\x1f' << params.max_output_tokens
             << '\x1f' << prompt;
    return sha256_hex(material.str());
}

CompletionResponse Gateway::complete(Role role, const std::string& prompt, bool bypass_cache) {
    RoleBinding bound;
    {
        std::lock_guard lock(mu_);
        auto it = bindings_.find(role);
        if (it == bindings_.end()) {
            throw std::runtime_error(std::string("no backend bound for role ") + role_name(role));
        }
        bound = it->second;
    }

    CompletionResponse resp;
    resp.cache_key = cache_key(bound.model_name, bound.params, prompt);
    resp.tokens_in = word_count(prompt);

    auto cached = bypass_cache ? std::optional<std::string>{}
                               : cache_->get(bound.model_name, resp.cache_key);
    if (cached) {
        resp.text = *cached;
        resp.tokens_out = word_count(resp.text);
        resp.backend_id = "cache";
        resp.from_cache = true;
        std::lock_guard lock(mu_);
        ++stats_.hits;
        return resp;
    }

    {
        std::unique_lock lock(mu_);
        slot_free_.wait(lock, [&] { return in_flight_ < max_parallel_; });
        ++in_flight_;
    }
    auto release = [&] {
        std::lock_guard lock(mu_);
        --in_flight_;
        slot_free_.notify_one();
    };

    auto start = std::chrono::steady_clock::now();
    std::string text;
    std::string last_error;
    int attempt = 0;
    bool ok = false;
    for (; attempt < max_attempts_; ++attempt) {
        try {
            text = bound.backend->complete(prompt, bound.model_name, bound.params);
            ok = true;
            break;
        } catch (const UnmatchedPromptError&) {
            release();
            throw;
        } catch (const std::exception& e) {
            last_error = e.what();
            if (attempt + 1 < max_attempts_ && backoff_base_ms_ > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(backoff_base_ms_ * (1 << attempt)));
            }
        }
    }
    release();
    {
        std::lock_guard lock(mu_);
        stats_.estimated_calls += attempt + (ok ? 1 : 0);
    }
    if (!ok) {
        throw TransportError("backend failed after " + std::to_string(max_attempts_) +
                                 " attempts: " + last_error,
                             max_attempts_);
    }

    resp.text = text;
    resp.tokens_out = word_count(text);
    resp.backend_id = bound.backend->id();
    resp.latency_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    cache_->put(bound.model_name, resp.cache_key, text);
    {
        std::lock_guard lock(mu_);
        ++stats_.misses;
        stats_.tokens_in += resp.tokens_in;
        stats_.tokens_out += resp.tokens_out;
    }
    return resp;
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

}  // namespace tsb
