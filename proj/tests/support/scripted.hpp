#pragma once

#include "contraguard/app.hpp"
#include "contraguard/gateway.hpp"
#include "contraguard/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace testsupport {

using namespace contraguard;

/// What a trigger prompt asked for, recovered from the prompt text.
struct TriggerAsk {
    std::string kind;  // cloze | continue | rephrase | question | answer
    std::string subject;
    std::string predicate;
    std::string sentence;  // rephrase/question: the source sentence; answer: the question
    std::string prefix;
};

/// A deterministic stand-in for both models. Each prompt family is recognized
/// by its fixed wording and answered through the hooks below.
class ScriptedWorld {
public:
    std::string description = "Alice Smith is a painter. She was born in Oslo.";
    std::function<std::string(const TriggerAsk&)> alternative = [](const TriggerAsk& a) {
        return a.subject + " " + a.predicate + " something.";
    };
    std::function<bool(const std::string& original, const std::string& alternative)> contradictory =
        [](const std::string&, const std::string&) { return false; };
    std::function<std::string(const std::string& original, const std::string& alternative)> revise =
        [](const std::string& original, const std::string&) { return original; };
    /// Optional override for the raw conclusion text ("Yes."/"No." otherwise).
    std::function<std::string(bool)> conclusion;
    /// Optional failure injection: return true to make the call throw Transport.
    std::function<bool(const ChatRequest&)> fail;

    ChatReply respond(const ChatRequest& request);

    std::size_t calls(const std::string& kind) const;
    std::size_t total_calls() const;

private:
    void count(const std::string& kind);

    mutable std::mutex mu_;
    std::map<std::string, std::size_t> calls_;
};

ModelClient world_client(const std::shared_ptr<ScriptedWorld>& world, ModelEndpoint endpoint);
ClientFactory world_factory(const std::shared_ptr<ScriptedWorld>& world);
Pipeline world_pipeline(const std::shared_ptr<ScriptedWorld>& world);

/// Text between `open` and the next `close` (or the end), empty when absent.
std::string between(const std::string& s, const std::string& open, const std::string& close);

/// Fresh directory removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Minimal OpenAI-compatible chat server on 127.0.0.1 for gateway tests.
class StubChatServer {
public:
    struct Response {
        int status = 200;
        std::string content;
        std::optional<Usage> usage = Usage{10, 5};
    };
    using Handler = std::function<Response(const ChatRequest& request, int attempt)>;

    explicit StubChatServer(Handler handler);
    ~StubChatServer();

    std::string base_url() const;
    int requests() const { return requests_.load(); }
    std::string last_authorization() const;

private:
    Handler handler_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> requests_{0};
    mutable std::mutex mu_;
    std::string authorization_;
};

/// Reads a whole file; empty string when missing.
std::string slurp(const std::filesystem::path& path);

}  // namespace testsupport
