#include "contraguard/gateway.hpp"

#include "contraguard/error.hpp"
#include "contraguard/text_util.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <thread>

namespace contraguard {

using json = nlohmann::json;

std::string_view to_string(ChatRole role) {
    switch (role) {
        case ChatRole::System: return "system";
        case ChatRole::User: return "user";
        case ChatRole::Assistant: return "assistant";
    }
    return "user";
}

std::optional<ChatRole> chat_role_from_string(std::string_view s) {
    if (s == "system") return ChatRole::System;
    if (s == "user") return ChatRole::User;
    if (s == "assistant") return ChatRole::Assistant;
    return std::nullopt;
}

std::vector<std::string> conversation_violations(const std::vector<ChatMessage>& messages) {
    std::vector<std::string> out;
    if (messages.empty()) {
        out.emplace_back("conversation is empty");
        return out;
    }
    std::size_t i = 0;
    if (messages[0].role == ChatRole::System) {
        if (messages[0].content.empty()) out.emplace_back("system message is empty");
        i = 1;
    }
    ChatRole expected = ChatRole::User;
    for (; i < messages.size(); ++i) {
        const auto& m = messages[i];
        if (m.role != expected)
            out.push_back("message " + std::to_string(i) + " should be " + std::string(to_string(expected)));
        if (m.role != ChatRole::Assistant && m.content.empty())
            out.push_back("message " + std::to_string(i) + " is empty");
        expected = expected == ChatRole::User ? ChatRole::Assistant : ChatRole::User;
    }
    if (messages.back().role != ChatRole::User) out.emplace_back("conversation must end with a user turn");
    return out;
}

json request_to_json(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages)
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    json j = {{"model", request.model},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens},
              {"messages", std::move(messages)}};
    if (request.sample_index != 0) j["sample_index"] = request.sample_index;
    return j;
}

ChatRequest request_from_json(const json& j) {
    ChatRequest r;
    r.model = j.at("model").get<std::string>();
    r.temperature = j.at("temperature").get<double>();
    r.max_tokens = j.value("max_tokens", 512);
    r.sample_index = j.value("sample_index", 0);
    for (const auto& m : j.at("messages")) {
        auto role = chat_role_from_string(m.at("role").get<std::string>());
        if (!role) throw Error(ErrorCode::Parse, "unknown chat role");
        r.messages.push_back({*role, m.at("content").get<std::string>()});
    }
    return r;
}

std::string fingerprint(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages)
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    // Fixed formatting keeps the temperature bit-stable across platforms.
    char temp[32];
    std::snprintf(temp, sizeof temp, "%.4f", request.temperature);
    json key = {{"model", request.model}, {"temperature", temp}, {"messages", std::move(messages)}};
    if (request.sample_index != 0) key["sample_index"] = request.sample_index;
    return text::sha256_hex(key.dump());
}

json cassette_entry_to_json(const CassetteEntry& entry) {
    json j = {{"fingerprint", entry.fingerprint}, {"request", entry.request}, {"reply", entry.reply}};
    if (entry.usage)
        j["usage"] = {{"prompt_tokens", entry.usage->prompt_tokens},
                      {"completion_tokens", entry.usage->completion_tokens}};
    else
        j["usage"] = nullptr;
    return j;
}

CassetteEntry cassette_entry_from_json(const json& j) {
    CassetteEntry e;
    e.fingerprint = j.at("fingerprint").get<std::string>();
    e.request = j.value("request", json::object());
    e.reply = j.at("reply").get<std::string>();
    if (j.contains("usage") && j["usage"].is_object())
        e.usage = Usage{j["usage"].value("prompt_tokens", 0L), j["usage"].value("completion_tokens", 0L)};
    return e;
}

namespace {

std::vector<CassetteEntry> read_cassette_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open cassette: " + path);
    std::vector<CassetteEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            entries.push_back(cassette_entry_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            spdlog::warn("{}:{}: skipping unreadable cassette line ({})", path, lineno, e.what());
        }
    }
    return entries;
}

}  // namespace

Cassette::Cassette(std::vector<CassetteEntry> entries) {
    for (auto& e : entries) {
        if (auto it = index_.find(e.fingerprint); it != index_.end()) {
            entries_[it->second] = std::move(e);
        } else {
            index_.emplace(e.fingerprint, entries_.size());
            entries_.push_back(std::move(e));
        }
    }
}

Cassette Cassette::load(const std::string& path) { return Cassette(read_cassette_lines(path)); }

const CassetteEntry* Cassette::find(const std::string& fp) const {
    auto it = index_.find(fp);
    return it == index_.end() ? nullptr : &entries_[it->second];
}

CassetteRecorder::CassetteRecorder(std::string path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) {
        Cassette existing = Cassette::load(path_);
        for (const auto& e : existing.entries()) {
            index_.emplace(e.fingerprint, entries_.size());
            entries_.push_back(e);
        }
        rewrite_locked();
    } else {
        std::ofstream out(path_, std::ios::app);
        if (!out) throw Error(ErrorCode::Io, "cassette path not writable: " + path_);
    }
}

void CassetteRecorder::record(CassetteEntry entry) {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(entry.fingerprint); it != index_.end()) {
        entries_[it->second] = std::move(entry);
        rewrite_locked();
        return;
    }
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot append to cassette: " + path_);
    out << cassette_entry_to_json(entry).dump() << '\n';
    index_.emplace(entry.fingerprint, entries_.size());
    entries_.push_back(std::move(entry));
}

std::size_t CassetteRecorder::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

Cassette CassetteRecorder::snapshot() const {
    std::lock_guard lock(mu_);
    return Cassette(entries_);
}

void CassetteRecorder::rewrite_locked() const {
    const auto tmp = path_ + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cassette path not writable: " + path_);
        for (const auto& e : entries_) out << cassette_entry_to_json(e).dump() << '\n';
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path_, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot replace cassette " + path_ + ": " + ec.message());
}

HttpChatBackend::HttpChatBackend(std::string base_url, std::string api_key, RetryPolicy policy)
    : api_key_(std::move(api_key)), policy_(policy) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(base_url, m, url_re))
        throw Error(ErrorCode::Validation, "malformed base URL: " + base_url);
    host_ = m[1];
    path_prefix_ = m[2].matched ? std::string(m[2]) : "";
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

ChatReply HttpChatBackend::complete(const ChatRequest& request) {
    json body = {{"model", request.model},
                 {"temperature", request.temperature},
                 {"max_tokens", request.max_tokens},
                 {"messages", request_to_json(request).at("messages")}};
    const std::string payload = body.dump();
    const std::string path = path_prefix_ + "/chat/completions";

    httplib::Client client(host_);
    auto timeout = std::chrono::duration_cast<std::chrono::seconds>(policy_.request_timeout);
    client.set_connection_timeout(std::max<long>(1, timeout.count()), 0);
    client.set_read_timeout(std::max<long>(1, timeout.count()), 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const auto started = std::chrono::steady_clock::now();
    auto backoff = policy_.initial_backoff;
    bool rate_limited = false;
    std::string last_error;
    for (int attempt = 1;; ++attempt) {
        auto res = client.Post(path, headers, payload, "application/json");
        if (res && res->status == 200) {
            json reply;
            try {
                reply = json::parse(res->body);
                ChatReply out;
                out.content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
                if (reply.contains("usage") && reply["usage"].is_object())
                    out.usage = Usage{reply["usage"].value("prompt_tokens", 0L),
                                      reply["usage"].value("completion_tokens", 0L)};
                return out;
            } catch (const json::exception& e) {
                throw Error(ErrorCode::Transport, std::string("malformed completion reply: ") + e.what());
            }
        }
        bool retryable = false;
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            retryable = true;
        } else {
            last_error = "HTTP " + std::to_string(res->status);
            rate_limited = rate_limited || res->status == 429;
            retryable = res->status == 429 || (res->status >= 500 && res->status < 600);
            if (!retryable) throw Error(ErrorCode::Transport, last_error + ": " + res->body.substr(0, 200));
        }
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
        if (attempt >= policy_.max_attempts || elapsed + backoff > policy_.budget) {
            if (rate_limited || (res && res->status >= 500))
                throw Error(ErrorCode::RateLimitedExhausted,
                            "retry budget exhausted after " + std::to_string(attempt) + " attempts: " + last_error);
            throw Error(ErrorCode::Transport, last_error);
        }
        spdlog::debug("chat call failed ({}), retrying in {} ms", last_error, backoff.count());
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, policy_.max_backoff);
    }
}

ReplayBackend::ReplayBackend(std::shared_ptr<const Cassette> cassette) : cassette_(std::move(cassette)) {}

ChatReply ReplayBackend::complete(const ChatRequest& request) {
    const auto fp = fingerprint(request);
    const auto* entry = cassette_->find(fp);
    if (entry == nullptr) {
        std::string last_user;
        for (const auto& m : request.messages)
            if (m.role == ChatRole::User) last_user = m.content;
        throw Error(ErrorCode::ReplayMiss, "no recorded reply for fingerprint " + fp + " (model " +
                                               request.model + "); prompt starts: " + last_user.substr(0, 120));
    }
    return ChatReply{entry->reply, entry->usage};
}

RecordingBackend::RecordingBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<CassetteRecorder> recorder)
    : inner_(std::move(inner)), recorder_(std::move(recorder)) {}

ChatReply RecordingBackend::complete(const ChatRequest& request) {
    auto reply = inner_->complete(request);
    recorder_->record(CassetteEntry{fingerprint(request), request_to_json(request), reply.content, reply.usage});
    return reply;
}

ModelClient::ModelClient(ModelEndpoint endpoint, std::shared_ptr<ChatBackend> backend)
    : endpoint_(std::move(endpoint)),
      backend_(std::move(backend)),
      slots_(std::make_shared<std::counting_semaphore<1024>>(std::clamp(endpoint_.concurrency, 1, 1024))) {}

Exchange ModelClient::complete(const std::vector<ChatMessage>& messages, const CallOptions& options) const {
    if (auto v = conversation_violations(messages); !v.empty())
        throw Error(ErrorCode::Validation, "malformed conversation: " + text::join(v, "; "));
    ChatRequest request{endpoint_.name, options.temperature.value_or(endpoint_.temperature),
                        endpoint_.max_tokens, messages, options.sample_index};
    slots_->acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{*slots_};
    auto reply = backend_->complete(request);
    auto fp = fingerprint(request);
    return Exchange{{}, std::move(request), std::move(reply), std::move(fp)};
}

namespace {

std::shared_ptr<CassetteRecorder> shared_recorder(const std::string& path) {
    static std::mutex mu;
    static std::map<std::string, std::weak_ptr<CassetteRecorder>> registry;
    std::lock_guard lock(mu);
    auto key = std::filesystem::absolute(path).lexically_normal().string();
    if (auto existing = registry[key].lock()) return existing;
    auto recorder = std::make_shared<CassetteRecorder>(path);
    registry[key] = recorder;
    return recorder;
}

}  // namespace

ModelClient record_session(const ModelClient& client, const std::string& cassette_path) {
    auto backend = std::make_shared<RecordingBackend>(client.backend(), shared_recorder(cassette_path));
    return ModelClient(client.endpoint(), std::move(backend));
}

ModelClient make_client(const ModelEndpoint& endpoint, const GatewayOptions& options) {
    if (auto v = endpoint.violations(); !v.empty())
        throw Error(ErrorCode::Validation, "invalid endpoint '" + endpoint.name + "': " + text::join(v, "; "));
    std::shared_ptr<ChatBackend> backend;
    if (endpoint.transport == Transport::Replay) {
        backend = std::make_shared<ReplayBackend>(std::make_shared<const Cassette>(Cassette::load(endpoint.cassette_path)));
    } else {
        std::string key;
        if (options.api_key) {
            key = *options.api_key;
        } else if (const char* env = std::getenv("CONTRAGUARD_API_KEY")) {
            key = env;
        }
        backend = std::make_shared<HttpChatBackend>(endpoint.base_url, key, options.retry);
    }
    ModelClient client(endpoint, std::move(backend));
    if (!options.record_path.empty()) return record_session(client, options.record_path);
    return client;
}

}  // namespace contraguard
