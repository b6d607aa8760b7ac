#include "contraguard/error.hpp"
#include "contraguard/gateway.hpp"

#include "scripted.hpp"

#include <doctest.h>

#include <filesystem>

using namespace contraguard;
using namespace testsupport;

namespace {

const std::string kFreemanRevision =
    "He was born in the United States.";

RetryPolicy fast_policy() {
    RetryPolicy p;
    p.max_attempts = 4;
    p.initial_backoff = std::chrono::milliseconds(10);
    p.max_backoff = std::chrono::milliseconds(40);
    p.budget = std::chrono::milliseconds(5000);
    p.request_timeout = std::chrono::milliseconds(5000);
    return p;
}

ModelEndpoint live(const std::string& base_url, double temperature = 0.0) {
    auto ep = ModelEndpoint::analyzer("stub-model");
    ep.base_url = base_url;
    ep.temperature = temperature;
    return ep;
}

std::vector<ChatMessage> ask(const std::string& text) { return {{ChatRole::User, text}}; }

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::Validation;
}

}  // namespace

TEST_CASE("conversation_violations") {
    CHECK(conversation_violations(ask("hi")).empty());
    CHECK(conversation_violations({{ChatRole::System, "s"}, {ChatRole::User, "u"}, {ChatRole::Assistant, "a"},
                                   {ChatRole::User, "u2"}})
              .empty());
    CHECK_FALSE(conversation_violations({}).empty());
    CHECK_FALSE(conversation_violations({{ChatRole::Assistant, "a"}}).empty());
    CHECK_FALSE(conversation_violations({{ChatRole::User, "u"}, {ChatRole::User, "u"}}).empty());
    CHECK_FALSE(conversation_violations({{ChatRole::User, "u"}, {ChatRole::System, "s"}}).empty());

    auto world = std::make_shared<ScriptedWorld>();
    auto client = world_client(world, ModelEndpoint::analyzer("m"));
    CHECK(code_of([&] { client.complete({{ChatRole::Assistant, "a"}}); }) == ErrorCode::Validation);
    CHECK(world->total_calls() == 0);
}

TEST_CASE("fingerprint is stable and sensitive to what is asked") {
    ChatRequest a{"gpt-3.5-turbo", 0.0, 512, ask("Is the sky blue?"), 0};
    ChatRequest b = a;
    CHECK(fingerprint(a) == fingerprint(b));
    CHECK(fingerprint(a).size() == 64);
    b.temperature = 1.0;
    CHECK(fingerprint(a) != fingerprint(b));
    b = a;
    b.model = "gpt-4";
    CHECK(fingerprint(a) != fingerprint(b));
    b = a;
    b.messages[0].content += " ";
    CHECK(fingerprint(a) != fingerprint(b));
    b = a;
    b.sample_index = 2;
    CHECK(fingerprint(a) != fingerprint(b));
    CHECK(fingerprint(request_from_json(request_to_json(b))) == fingerprint(b));
}

TEST_CASE("live transport sends bearer auth and parses usage") {
    StubChatServer stub([](const ChatRequest& r, int) {
        return StubChatServer::Response{200, "echo: " + r.messages.back().content, Usage{12, 3}};
    });
    GatewayOptions opts;
    opts.api_key = "sk-test";
    opts.retry = fast_policy();
    auto client = make_client(live(stub.base_url()), opts);
    auto ex = client.complete(ask("Hello"));
    CHECK(ex.reply.content == "echo: Hello");
    REQUIRE(ex.reply.usage);
    CHECK(ex.reply.usage->total() == 15);
    CHECK(stub.last_authorization() == "Bearer sk-test");
    CHECK(ex.request.model == "stub-model");
    CHECK(ex.fingerprint == fingerprint(ex.request));
}

TEST_CASE("temperature zero calls repeat identically") {
    StubChatServer stub([](const ChatRequest& r, int) {
        return StubChatServer::Response{200, r.temperature == 0.0 ? "fixed" : "varies", Usage{1, 1}};
    });
    GatewayOptions opts;
    opts.api_key = "k";
    auto client = make_client(live(stub.base_url()), opts);
    auto a = client.complete(ask("Same question"));
    auto b = client.complete(ask("Same question"));
    CHECK(a.reply.content == b.reply.content);
    CHECK(a.fingerprint == b.fingerprint);
}

TEST_CASE("retries on 429 and 5xx then succeeds") {
    StubChatServer stub([](const ChatRequest&, int attempt) {
        if (attempt == 1) return StubChatServer::Response{429, ""};
        if (attempt == 2) return StubChatServer::Response{503, ""};
        return StubChatServer::Response{200, "ok"};
    });
    GatewayOptions opts;
    opts.api_key = "k";
    opts.retry = fast_policy();
    auto client = make_client(live(stub.base_url()), opts);
    CHECK(client.complete(ask("x")).reply.content == "ok");
    CHECK(stub.requests() == 3);
}

TEST_CASE("persistent rate limiting exhausts within the budget") {
    StubChatServer stub([](const ChatRequest&, int) { return StubChatServer::Response{429, ""}; });
    GatewayOptions opts;
    opts.api_key = "k";
    opts.retry = fast_policy();
    auto client = make_client(live(stub.base_url()), opts);
    const auto started = std::chrono::steady_clock::now();
    CHECK(code_of([&] { client.complete(ask("x")); }) == ErrorCode::RateLimitedExhausted);
    CHECK(std::chrono::steady_clock::now() - started < opts.retry.budget);
    CHECK(stub.requests() == opts.retry.max_attempts);
}

TEST_CASE("client errors are not retried") {
    StubChatServer stub([](const ChatRequest&, int) { return StubChatServer::Response{401, ""}; });
    GatewayOptions opts;
    opts.api_key = "bad";
    opts.retry = fast_policy();
    auto client = make_client(live(stub.base_url()), opts);
    CHECK(code_of([&] { client.complete(ask("x")); }) == ErrorCode::Transport);
    CHECK(stub.requests() == 1);
}

TEST_CASE("invalid endpoints are rejected before any call") {
    auto ep = ModelEndpoint::analyzer("");
    CHECK(code_of([&] { make_client(ep); }) == ErrorCode::Validation);
    auto replay = ModelEndpoint::analyzer("m");
    replay.transport = Transport::Replay;
    replay.cassette_path = "/nonexistent/cassette.jsonl";
    CHECK(code_of([&] { make_client(replay); }) == ErrorCode::Io);
}

TEST_CASE("record then replay") {
    TempDir tmp;
    const auto cassette = (tmp.path() / "session.jsonl").string();
    auto world = std::make_shared<ScriptedWorld>();
    world->revise = [](const std::string&, const std::string&) { return kFreemanRevision; };

    {
        auto recorded = record_session(world_client(world, ModelEndpoint::analyzer("gpt-3.5-turbo")), cassette);
        recorded.complete(ask("Please tell me about William T. Freeman."));
        recorded.complete(ask("Original Sentence:\nHe was born on August 15, 1955, in the United States.\n\n"
                              "This sentence originally had a contradiction with this sentence:\n"
                              "He was born on 15 August 1960.\n\nRemove the conflicting information."));
        recorded.complete(ask("Third question"));
        recorded.complete(ask("Third question"));
    }
    CHECK(Cassette::load(cassette).size() == 3);
    CHECK(world->total_calls() == 4);

    auto ep = ModelEndpoint::analyzer("gpt-3.5-turbo");
    ep.transport = Transport::Replay;
    ep.cassette_path = cassette;
    auto replay = make_client(ep);
    auto ex = replay.complete(ask("Original Sentence:\nHe was born on August 15, 1955, in the United States.\n\n"
                                  "This sentence originally had a contradiction with this sentence:\n"
                                  "He was born on 15 August 1960.\n\nRemove the conflicting information."));
    CHECK(ex.reply.content == kFreemanRevision);
    CHECK(world->total_calls() == 4);

    CHECK(code_of([&] { replay.complete(ask("Never asked")); }) == ErrorCode::ReplayMiss);
    auto hotter = ep;
    hotter.temperature = 0.7;
    CHECK(code_of([&] { make_client(hotter).complete(ask("Third question")); }) == ErrorCode::ReplayMiss);
}

TEST_CASE("recorder replaces a re-recorded fingerprint in place") {
    TempDir tmp;
    const auto path = (tmp.path() / "c.jsonl").string();
    ChatRequest r{"m", 0.0, 512, ask("q"), 0};
    {
        CassetteRecorder rec(path);
        rec.record({fingerprint(r), request_to_json(r), "first", std::nullopt});
        rec.record({fingerprint(r), request_to_json(r), "second", Usage{1, 2}});
        CHECK(rec.size() == 1);
    }
    auto loaded = Cassette::load(path);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded.find(fingerprint(r))->reply == "second");

    CassetteRecorder reopened(path);
    CHECK(reopened.size() == 1);
    CHECK(code_of([&] { CassetteRecorder((tmp.path() / "missing" / "dir" / "c.jsonl").string()); }) == ErrorCode::Io);
}

TEST_CASE("concurrency limit bounds in-flight calls") {
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    auto backend = std::make_shared<FunctionBackend>([&](const ChatRequest&) {
        int now = ++in_flight;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        --in_flight;
        return ChatReply{"ok", std::nullopt};
    });
    auto ep = ModelEndpoint::analyzer("m");
    ep.concurrency = 2;
    ModelClient client(ep, backend);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { client.complete(ask("x")); });
    for (auto& t : threads) t.join();
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
}
