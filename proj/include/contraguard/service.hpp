#pragma once

#include "contraguard/app.hpp"
#include "contraguard/store.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace httplib {
class Server;
}

namespace contraguard {

struct ServiceOptions {
    std::filesystem::path store_root = "store";
    /// Model settings for runs created through the API.
    RunConfig defaults;
    ClientFactory clients;
    /// Events kept per run for stream resumption; older clients get a snapshot.
    std::size_t event_buffer = 4096;
};

/// Review/progress API over a run store.
///
///   POST /api/runs                               {task, text?} -> 201 {run_id, document}
///   POST /api/runs/{id}/mitigate                 {config}      -> 202
///   GET  /api/runs/{id}/events                   server-sent events, resumable via Last-Event-ID
///   GET  /api/runs/{id}/pairs
///   POST /api/runs/{id}/pairs/{pair_id}/decision {decision: accept|reject}
///   GET  /api/runs/{id}/document
class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds to host:port (port 0 picks a free port) and returns the port.
    int bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    void listen();
    void stop();
    /// Waits for the run's mitigation job, if any, to finish.
    void wait_idle(const std::string& run_id);

    httplib::Server& server();

    struct RunState;

private:
    std::shared_ptr<RunState> state_for(const std::string& run_id);
    void register_routes();

    ServiceOptions options_;
    RunStore store_;
    std::unique_ptr<httplib::Server> server_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<RunState>> runs_;
};

}  // namespace contraguard
