#include "contraguard/service.hpp"

#include "contraguard/error.hpp"
#include "contraguard/serialize.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <thread>

namespace contraguard {

using json = nlohmann::json;

struct Service::RunState {
    std::string run_id;
    std::unique_ptr<RunDir> dir;

    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::pair<std::uint64_t, PipelineEvent>> events;
    std::uint64_t next_event = 1;
    bool running = false;
    bool closing = false;
    std::thread job;

    // Pair views keyed by id, roots in the run's generated-document frame.
    std::map<std::string, json> pairs;
    std::vector<std::string> pair_order;
    // Roots awaiting a reject while a job runs.
    std::vector<std::size_t> pending_rejects;
    // Mitigation input lineage while a job runs (pipeline frame -> run frame).
    std::vector<std::size_t> input_lineage;
};

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, status, {{"schema", kSchema}, {"error", {{"code", code}, {"message", message}}}});
}

int status_for(const Error& e) {
    if (e.is_transport() || e.code() == ErrorCode::ReplayMiss) return 502;
    if (e.code() == ErrorCode::Io) return 500;
    return 422;
}

json pair_view(const PairRecord& p, std::size_t run_root) {
    return {{"pair_id", p.id},
            {"phase", p.phase},
            {"pass", p.pass},
            {"root", run_root},
            {"original", p.pair.original.text},
            {"alternative", p.pair.alternative},
            {"verdict", p.verdict ? verdict_json(*p.verdict) : json(nullptr)},
            {"revision", p.revision ? json(*p.revision) : json(nullptr)},
            {"decision", nullptr},
            {"error", p.error.empty() ? json(nullptr) : json(p.error)}};
}

const DocumentVersion& generated_of(const RunRecord& run) {
    const auto* v = run.latest("generated");
    if (!v) throw Error(ErrorCode::Validation, "run " + run.run_id + " has no document yet");
    return *v;
}

std::string sse_frame(std::uint64_t id, const std::string& type, const json& data) {
    return "id: " + std::to_string(id) + "\nevent: " + type + "\ndata: " + data.dump() + "\n\n";
}

Task task_from_body(const json& body) {
    if (body.contains("task")) return parse_as<Task>(body["task"], "task");
    if (body.contains("entity")) return Task::entity(body["entity"].get<std::string>());
    if (body.contains("prompt")) return Task::free_form(body["prompt"].get<std::string>());
    throw Error(ErrorCode::Validation, "body needs task, entity or prompt");
}

// Puts the generated text for `root` back into (doc, lineage): replaced in place
// when the root is present, otherwise inserted so lineage stays ascending.
void restore_root(Document& doc, std::vector<std::size_t>& lineage, std::size_t lineage_value, const std::string& text) {
    auto it = std::find(lineage.begin(), lineage.end(), lineage_value);
    if (it != lineage.end()) {
        doc.sentences[static_cast<std::size_t>(it - lineage.begin())].text = text;
        return;
    }
    auto pos = std::upper_bound(lineage.begin(), lineage.end(), lineage_value) - lineage.begin();
    lineage.insert(lineage.begin() + pos, lineage_value);
    doc.sentences.insert(doc.sentences.begin() + pos, Sentence{0, text});
    for (std::size_t i = 0; i < doc.sentences.size(); ++i) doc.sentences[i].index = i;
}

}  // namespace

Service::Service(ServiceOptions options)
    : options_(std::move(options)), store_(options_.store_root), server_(std::make_unique<httplib::Server>()) {
    if (!options_.clients) options_.clients = default_client_factory({});
    register_routes();
}

Service::~Service() {
    stop();
    std::vector<std::shared_ptr<RunState>> states;
    {
        std::lock_guard lock(mu_);
        for (auto& [_, s] : runs_) states.push_back(s);
    }
    for (auto& s : states) {
        {
            std::lock_guard lock(s->mu);
            s->closing = true;
        }
        s->cv.notify_all();
        if (s->job.joinable()) s->job.join();
    }
}

httplib::Server& Service::server() { return *server_; }

int Service::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    if (!server_->bind_to_port(host, port)) throw Error(ErrorCode::Io, fmt::format("cannot bind {}:{}", host, port));
    return port;
}

void Service::listen() { server_->listen_after_bind(); }

void Service::stop() {
    {
        std::lock_guard lock(mu_);
        for (auto& [_, s] : runs_) {
            std::lock_guard run_lock(s->mu);
            s->closing = true;
            s->cv.notify_all();
        }
    }
    if (server_->is_running()) server_->stop();
}

void Service::wait_idle(const std::string& run_id) {
    auto state = state_for(run_id);
    if (!state) return;
    std::unique_lock lock(state->mu);
    state->cv.wait(lock, [&] { return !state->running; });
    lock.unlock();
    if (state->job.joinable()) state->job.join();
}

std::shared_ptr<Service::RunState> Service::state_for(const std::string& run_id) {
    std::lock_guard lock(mu_);
    if (auto it = runs_.find(run_id); it != runs_.end()) return it->second;
    if (!store_.exists(run_id)) return nullptr;
    auto state = std::make_shared<RunState>();
    state->run_id = run_id;
    state->dir = std::make_unique<RunDir>(store_.root() / "runs" / run_id, run_id);
    auto run = state->dir->load();
    for (const auto& p : run.pairs) {
        state->pairs[p.id] = pair_view(p, p.root);
        state->pair_order.push_back(p.id);
    }
    for (const auto& d : run.decisions)
        if (auto it = state->pairs.find(d.pair_id); it != state->pairs.end()) it->second["decision"] = to_string(d.kind);
    runs_.emplace(run_id, state);
    return state;
}

namespace {

// Caller holds state.mu.
void push_event(Service::RunState& state, std::string type, json data, std::size_t cap) {
    state.events.emplace_back(state.next_event++, PipelineEvent{std::move(type), std::move(data)});
    while (state.events.size() > cap) state.events.pop_front();
    state.cv.notify_all();
}

// Caller holds state.mu. Keeps pair views current from pipeline events.
void track(Service::RunState& state, const PipelineEvent& ev) {
    auto to_run = [&](const json& root) {
        auto r = root.get<std::size_t>();
        return r < state.input_lineage.size() ? state.input_lineage[r] : r;
    };
    if (ev.type == "pair_triggered") {
        const auto id = ev.data.at("pair_id").get<std::string>();
        if (!state.pairs.count(id)) state.pair_order.push_back(id);
        state.pairs[id] = {{"pair_id", id},
                           {"phase", ev.data.value("phase", "")},
                           {"pass", ev.data.value("pass", 0)},
                           {"root", to_run(ev.data.at("root"))},
                           {"original", ev.data.value("original", "")},
                           {"alternative", ev.data.value("alternative", "")},
                           {"verdict", nullptr},
                           {"revision", nullptr},
                           {"decision", nullptr},
                           {"error", nullptr}};
    } else if (ev.type == "verdict") {
        if (auto it = state.pairs.find(ev.data.at("pair_id").get<std::string>()); it != state.pairs.end())
            it->second["verdict"] = ev.data.at("verdict");
    } else if (ev.type == "revision") {
        if (auto it = state.pairs.find(ev.data.at("pair_id").get<std::string>()); it != state.pairs.end())
            it->second["revision"] = ev.data.at("revised");
    } else if (ev.type == "drop" && ev.data.value("reason", "") == "empty_revision") {
        if (auto it = state.pairs.find(ev.data.at("pair_id").get<std::string>()); it != state.pairs.end())
            it->second["revision"] = "";
    }
}

json event_data_for_client(const Service::RunState& state, const PipelineEvent& ev) {
    if (!ev.data.contains("root")) return ev.data;
    json data = ev.data;
    auto r = data["root"].get<std::size_t>();
    if (r < state.input_lineage.size()) data["root"] = state.input_lineage[r];
    return data;
}

// Applies rejects to the latest stored version as a "decision" version. Caller
// must not hold state.mu while the job runs concurrently with this.
void apply_rejects_now(RunDir& dir, const std::vector<std::size_t>& roots) {
    if (roots.empty()) return;
    auto run = dir.load();
    const auto& generated = generated_of(run);
    auto latest = run.documents.back();
    for (auto root : roots) {
        if (root >= generated.document.sentences.size()) continue;
        restore_root(latest.document, latest.lineage, root, generated.document.sentences[root].text);
    }
    latest.label = "decision";
    dir.append_document(latest);
}

}  // namespace

void Service::register_routes() {
    auto& srv = *server_;
    const auto cap = options_.event_buffer;

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, status_for(e), to_string(e.code()), e.what());
        } catch (const json::exception& e) {
            send_error(res, 422, "parse", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    });

    srv.Post("/api/runs", [this](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            return send_error(res, 422, "parse", e.what());
        }
        if (!body.is_object()) return send_error(res, 422, "validation", "body must be an object");
        RunConfig config = options_.defaults;
        config.task = task_from_body(body);
        if (body.contains("mitigation")) config.mitigation = parse_as<MitigationConfig>(body["mitigation"], "mitigation");
        if (config.task.text().empty()) return send_error(res, 422, "validation", "task text is empty");

        auto dir = store_.create(config);
        Document doc;
        if (body.contains("text")) {
            doc = import_run(dir, config.task, body["text"].get<std::string>());
        } else {
            doc = generate_run(dir, config.task, build_pipeline(config, options_.clients));
        }
        send_json(res, 201, {{"schema", kSchema}, {"run_id", dir.run_id()}, {"document", doc}});
    });

    srv.Post(R"(/api/runs/([^/]+)/mitigate)", [this, cap](const httplib::Request& req, httplib::Response& res) {
        auto state = state_for(req.matches[1]);
        if (!state) return send_error(res, 404, "not_found", "unknown run");
        json body = req.body.empty() ? json::object() : json::parse(req.body);
        auto run = state->dir->load();
        auto config = run_config_from_json(run.config.at("config"));
        MitigationConfig cfg = config.mitigation;
        if (body.is_object() && !body.empty()) cfg = parse_as<MitigationConfig>(body.value("config", body), "mitigation");
        if (auto v = cfg.violations(); !v.empty()) return send_error(res, 422, "validation", v.front());
        generated_of(run);
        auto pipeline = std::make_shared<Pipeline>(build_pipeline(config, options_.clients));

        std::lock_guard lock(state->mu);
        if (state->running) return send_error(res, 409, "conflict", "a mitigation is already running");
        if (state->job.joinable()) state->job.join();
        state->running = true;
        state->input_lineage = run.documents.back().lineage;
        const auto generated = generated_of(run).document;

        state->job = std::thread([state, pipeline, cfg, cap, generated] {
            auto sink = [&](const PipelineEvent& ev) {
                std::lock_guard lock(state->mu);
                track(*state, ev);
                push_event(*state, ev.type, event_data_for_client(*state, ev), cap);
            };
            auto hook = [&](int, Document& doc, std::vector<std::size_t>& lineage) {
                std::lock_guard lock(state->mu);
                std::vector<std::size_t> deferred;
                for (auto root : state->pending_rejects) {
                    auto at = std::find(state->input_lineage.begin(), state->input_lineage.end(), root);
                    if (at == state->input_lineage.end() || root >= generated.sentences.size()) {
                        deferred.push_back(root);
                        continue;
                    }
                    auto local = static_cast<std::size_t>(at - state->input_lineage.begin());
                    restore_root(doc, lineage, local, generated.sentences[root].text);
                }
                state->pending_rejects = std::move(deferred);
            };
            try {
                mitigate_run(*state->dir, *pipeline, cfg, sink, hook);
            } catch (const MitigationAborted& e) {
                spdlog::warn("run {}: mitigation aborted: {}", state->run_id, e.what());
            } catch (const Error& e) {
                spdlog::warn("run {}: mitigation failed: {}", state->run_id, e.what());
                std::lock_guard lock(state->mu);
                push_event(*state, "error", {{"message", e.what()}, {"code", to_string(e.code())}}, cap);
            } catch (const std::exception& e) {
                spdlog::warn("run {}: mitigation failed: {}", state->run_id, e.what());
                std::lock_guard lock(state->mu);
                push_event(*state, "error", {{"message", e.what()}, {"code", "internal"}}, cap);
            }
            std::vector<std::size_t> leftover;
            {
                std::lock_guard lock(state->mu);
                leftover = std::move(state->pending_rejects);
                state->pending_rejects.clear();
            }
            try {
                apply_rejects_now(*state->dir, leftover);
            } catch (const std::exception& e) {
                spdlog::warn("run {}: applying decisions failed: {}", state->run_id, e.what());
            }
            std::lock_guard lock(state->mu);
            state->input_lineage.clear();
            state->running = false;
            state->cv.notify_all();
        });
        send_json(res, 202, {{"schema", kSchema}, {"run_id", state->run_id}, {"status", "running"}});
    });

    srv.Get(R"(/api/runs/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
        auto state = state_for(req.matches[1]);
        if (!state) return send_error(res, 404, "not_found", "unknown run");
        std::uint64_t after = 0;
        try {
            if (req.has_header("Last-Event-ID")) after = std::stoull(req.get_header_value("Last-Event-ID"));
            else if (req.has_param("after")) after = std::stoull(req.get_param_value("after"));
        } catch (const std::exception&) {
            return send_error(res, 422, "validation", "bad event id");
        }
        auto cursor = std::make_shared<std::uint64_t>(after);
        auto snapshot_due = std::make_shared<bool>(true);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [this, state, cursor, snapshot_due](
                                                                  std::size_t, httplib::DataSink& sink) {
            std::string out;
            bool finished = false;
            {
                std::unique_lock lock(state->mu);
                state->cv.wait_for(lock, std::chrono::milliseconds(200), [&] {
                    return state->closing || !state->running ||
                           (!state->events.empty() && state->events.back().first > *cursor);
                });
                if (*snapshot_due) {
                    *snapshot_due = false;
                    const auto first = state->events.empty() ? state->next_event : state->events.front().first;
                    if (*cursor + 1 < first) {
                        // The client missed events that are no longer buffered.
                        lock.unlock();
                        auto run = state->dir->load();
                        lock.lock();
                        json pairs = json::array();
                        for (const auto& id : state->pair_order) pairs.push_back(state->pairs.at(id));
                        out += sse_frame(first - 1, "snapshot",
                                         {{"document", run.documents.empty() ? json(nullptr) : json(run.documents.back().document)},
                                          {"pairs", pairs},
                                          {"running", state->running}});
                        *cursor = first - 1;
                    }
                }
                for (const auto& [id, ev] : state->events) {
                    if (id <= *cursor) continue;
                    out += sse_frame(id, ev.type, ev.data);
                    *cursor = id;
                }
                finished = state->closing || !state->running;
            }
            if (!out.empty() && !sink.write(out.data(), out.size())) return false;
            if (finished) sink.done();
            return true;
        });
    });

    srv.Get(R"(/api/runs/([^/]+)/pairs)", [this](const httplib::Request& req, httplib::Response& res) {
        auto state = state_for(req.matches[1]);
        if (!state) return send_error(res, 404, "not_found", "unknown run");
        std::lock_guard lock(state->mu);
        json pairs = json::array();
        for (const auto& id : state->pair_order) pairs.push_back(state->pairs.at(id));
        send_json(res, 200, {{"schema", kSchema}, {"run_id", state->run_id}, {"running", state->running}, {"pairs", pairs}});
    });

    srv.Post(R"(/api/runs/([^/]+)/pairs/([^/]+)/decision)", [this, cap](const httplib::Request& req,
                                                                       httplib::Response& res) {
        auto state = state_for(req.matches[1]);
        if (!state) return send_error(res, 404, "not_found", "unknown run");
        const std::string pair_id = req.matches[2];
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            return send_error(res, 422, "parse", e.what());
        }
        std::optional<DecisionKind> kind;
        if (body.is_object() && body.contains("decision") && body["decision"].is_string())
            kind = decision_from_string(body["decision"].get<std::string>());
        if (!kind) return send_error(res, 422, "validation", "decision must be \"accept\" or \"reject\"");

        std::size_t root = 0;
        bool apply_now = false;
        {
            std::lock_guard lock(state->mu);
            auto it = state->pairs.find(pair_id);
            if (it == state->pairs.end()) return send_error(res, 404, "not_found", "unknown pair");
            const auto& v = it->second["verdict"];
            if (!v.is_object() || !v.value("contradictory", false))
                return send_error(res, 409, "conflict", "pair was not flagged");
            root = it->second["root"].get<std::size_t>();
            it->second["decision"] = to_string(*kind);
            state->dir->append_decision(Decision{pair_id, *kind});
            if (*kind == DecisionKind::Reject) {
                if (state->running) state->pending_rejects.push_back(root);
                else apply_now = true;
            }
            push_event(*state, "decision",
                       {{"pair_id", pair_id}, {"decision", to_string(*kind)}, {"root", root},
                        {"applied", apply_now || *kind == DecisionKind::Accept}},
                       cap);
        }
        if (apply_now) apply_rejects_now(*state->dir, {root});
        send_json(res, 200, {{"schema", kSchema}, {"pair_id", pair_id}, {"decision", to_string(*kind)}});
    });

    srv.Get(R"(/api/runs/([^/]+)/document)", [this](const httplib::Request& req, httplib::Response& res) {
        auto state = state_for(req.matches[1]);
        if (!state) return send_error(res, 404, "not_found", "unknown run");
        auto run = state->dir->load();
        if (run.documents.empty()) return send_error(res, 404, "not_found", "run has no document yet");
        const auto& latest = run.documents.back();
        bool running;
        {
            std::lock_guard lock(state->mu);
            running = state->running;
        }
        send_json(res, 200, {{"schema", kSchema},
                             {"run_id", state->run_id},
                             {"label", latest.label},
                             {"running", running},
                             {"document", latest.document},
                             {"lineage", latest.lineage}});
    });
}

}  // namespace contraguard
