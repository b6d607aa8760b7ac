#pragma once

#include "contraguard/core.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

namespace contraguard {

enum class ChatRole { System, User, Assistant };

std::string_view to_string(ChatRole role);
std::optional<ChatRole> chat_role_from_string(std::string_view s);

struct ChatMessage {
    ChatRole role = ChatRole::User;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

/// Empty when the conversation is an optional system message followed by
/// alternating user/assistant turns starting with a user turn.
std::vector<std::string> conversation_violations(const std::vector<ChatMessage>& messages);

struct Usage {
    long prompt_tokens = 0;
    long completion_tokens = 0;

    long total() const { return prompt_tokens + completion_tokens; }
    bool operator==(const Usage&) const = default;
};

struct ChatRequest {
    std::string model;
    double temperature = 0.0;
    int max_tokens = 512;
    std::vector<ChatMessage> messages;
    /// Distinguishes repeated samples of an identical prompt (multi-path
    /// detection). Only part of the fingerprint when non-zero.
    int sample_index = 0;
};

struct ChatReply {
    std::string content;
    std::optional<Usage> usage;
};

/// Stable hex fingerprint of (model, temperature, messages[, sample index]).
std::string fingerprint(const ChatRequest& request);

/// Serialized request as stored in cassettes and transcripts.
nlohmann::json request_to_json(const ChatRequest& request);
ChatRequest request_from_json(const nlohmann::json& j);

/// One model call: what was asked and what came back.
struct Exchange {
    std::string stage;
    ChatRequest request;
    ChatReply reply;
    std::string fingerprint;
};

struct CassetteEntry {
    std::string fingerprint;
    nlohmann::json request;
    std::string reply;
    std::optional<Usage> usage;
};

nlohmann::json cassette_entry_to_json(const CassetteEntry& entry);
CassetteEntry cassette_entry_from_json(const nlohmann::json& j);

/// Immutable, loaded cassette. Lookups take no locks.
class Cassette {
public:
    Cassette() = default;
    explicit Cassette(std::vector<CassetteEntry> entries);

    /// Loads a JSON Lines cassette; a later line for the same fingerprint wins.
    /// Throws IoError when the file cannot be opened.
    static Cassette load(const std::string& path);

    const CassetteEntry* find(const std::string& fingerprint) const;
    std::size_t size() const { return index_.size(); }
    const std::vector<CassetteEntry>& entries() const { return entries_; }

private:
    std::vector<CassetteEntry> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Append-only writer. A re-recorded fingerprint replaces its entry in place
/// (the file is rewritten), so the entry count is unchanged.
class CassetteRecorder {
public:
    /// Loads existing entries at `path` if the file exists. Throws IoError if
    /// the location is not writable.
    explicit CassetteRecorder(std::string path);

    void record(CassetteEntry entry);
    std::size_t size() const;
    Cassette snapshot() const;
    const std::string& path() const { return path_; }

private:
    void rewrite_locked() const;

    std::string path_;
    mutable std::mutex mu_;
    std::vector<CassetteEntry> entries_;
    std::map<std::string, std::size_t> index_;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Must be safe to call concurrently.
    virtual ChatReply complete(const ChatRequest& request) = 0;
};

struct RetryPolicy {
    int max_attempts = 6;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds max_backoff{8000};
    /// Wall-clock cap across all attempts of one call.
    std::chrono::milliseconds budget{60000};
    std::chrono::milliseconds request_timeout{120000};
};

/// OpenAI-compatible chat-completions client: POST {base_url}/chat/completions.
class HttpChatBackend final : public ChatBackend {
public:
    HttpChatBackend(std::string base_url, std::string api_key, RetryPolicy policy = {});
    ChatReply complete(const ChatRequest& request) override;

private:
    std::string host_;
    std::string path_prefix_;
    std::string api_key_;
    RetryPolicy policy_;
};

class ReplayBackend final : public ChatBackend {
public:
    explicit ReplayBackend(std::shared_ptr<const Cassette> cassette);
    /// Throws ErrorCode::ReplayMiss when the fingerprint is not recorded.
    ChatReply complete(const ChatRequest& request) override;

private:
    std::shared_ptr<const Cassette> cassette_;
};

class RecordingBackend final : public ChatBackend {
public:
    RecordingBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<CassetteRecorder> recorder);
    ChatReply complete(const ChatRequest& request) override;

private:
    std::shared_ptr<ChatBackend> inner_;
    std::shared_ptr<CassetteRecorder> recorder_;
};

/// Backend driven by a callable; used for scripted models and local stubs.
class FunctionBackend final : public ChatBackend {
public:
    using Fn = std::function<ChatReply(const ChatRequest&)>;
    explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
    ChatReply complete(const ChatRequest& request) override { return fn_(request); }

private:
    Fn fn_;
};

struct CallOptions {
    std::optional<double> temperature;
    int sample_index = 0;
};

/// A model endpoint bound to a backend. Copies share the backend and the
/// in-flight limit.
class ModelClient {
public:
    ModelClient(ModelEndpoint endpoint, std::shared_ptr<ChatBackend> backend);

    /// complete_chat: validates the conversation, sends it, returns the exchange.
    Exchange complete(const std::vector<ChatMessage>& messages, const CallOptions& options = {}) const;

    const ModelEndpoint& endpoint() const { return endpoint_; }
    const std::shared_ptr<ChatBackend>& backend() const { return backend_; }

private:
    ModelEndpoint endpoint_;
    std::shared_ptr<ChatBackend> backend_;
    std::shared_ptr<std::counting_semaphore<1024>> slots_;
};

/// Wraps `client` so every later call is appended to the cassette at `path`.
ModelClient record_session(const ModelClient& client, const std::string& cassette_path);

struct GatewayOptions {
    /// Record every call to this cassette when non-empty.
    std::string record_path;
    RetryPolicy retry;
    /// Overrides CONTRAGUARD_API_KEY when set.
    std::optional<std::string> api_key;
};

/// Builds a client for the endpoint's transport (live HTTP or cassette replay).
ModelClient make_client(const ModelEndpoint& endpoint, const GatewayOptions& options = {});

}  // namespace contraguard
