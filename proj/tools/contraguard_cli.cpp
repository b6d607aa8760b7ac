#include "contraguard/app.hpp"
#include "contraguard/error.hpp"
#include "contraguard/serialize.hpp"
#include "contraguard/service.hpp"
#include "contraguard/store.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace contraguard;
using json = nlohmann::json;

namespace {

struct Globals {
    std::string store = "store";
    std::string generator_model;
    std::string analyzer_model;
    std::string base_url;
    std::optional<double> temperature_gen;
    std::optional<double> temperature_analyze;
    std::string record;
    std::string replay;
    std::optional<int> concurrency;
    bool json_output = false;
    bool verbose = false;
};

// Command-line settings override whatever the run was created with.
void apply_overrides(ModelEndpoint& ep, const Globals& g, bool generator) {
    const auto& model = generator ? g.generator_model : g.analyzer_model;
    if (!model.empty()) ep.name = model;
    const auto& t = generator ? g.temperature_gen : g.temperature_analyze;
    if (t) ep.temperature = *t;
    if (!g.base_url.empty()) ep.base_url = g.base_url;
    if (g.concurrency) ep.concurrency = *g.concurrency;
    if (!g.replay.empty()) {
        ep.transport = Transport::Replay;
        ep.cassette_path = g.replay;
    } else {
        ep.transport = Transport::LiveHttp;
        ep.cassette_path.clear();
    }
}

void check_endpoints(const RunConfig& config) {
    for (const auto* ep : {&config.generator, &config.analyzer})
        if (auto v = ep->violations(); !v.empty())
            throw Error(ErrorCode::Validation, fmt::format("{} endpoint: {}", to_string(ep->role), v.front()));
    for (const auto* ep : {&config.generator, &config.analyzer})
        if (ep->transport == Transport::Replay && !std::filesystem::exists(ep->cassette_path))
            throw Error(ErrorCode::Validation, "replay cassette not found: " + ep->cassette_path);
}

ClientFactory clients_for(const Globals& g) {
    GatewayOptions options;
    options.record_path = g.record;
    return default_client_factory(options);
}

RunConfig run_config(const RunRecord& run, const Globals& g) {
    auto config = run_config_from_json(run.config.at("config"));
    apply_overrides(config.generator, g, true);
    apply_overrides(config.analyzer, g, false);
    check_endpoints(config);
    return config;
}

void emit(const Globals& g, const json& payload, const std::string& text) {
    if (g.json_output) std::cout << payload.dump(2) << '\n';
    else std::cout << text;
}

json pairs_json(const std::vector<PairRecord>& pairs) {
    json out = json::array();
    for (const auto& p : pairs) {
        auto j = pair_event_json(p);
        j["verdict"] = p.verdict ? verdict_json(*p.verdict) : json(nullptr);
        if (!p.error.empty()) j["error"] = p.error;
        out.push_back(std::move(j));
    }
    return out;
}

int fail(const Globals& g, const Error& e) {
    const int code = e.is_transport() ? 2 : 1;
    if (g.json_output) {
        std::cerr << json{{"schema", kSchema}, {"error", {{"code", to_string(e.code()), }, {"message", e.what()}}}}.dump()
                  << '\n';
    } else {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    }
    return code;
}

Service* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Detect and mitigate self-contradictions in generated text."};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--store", g.store, "Run store directory")->capture_default_str();
    app.add_option("--generator-model", g.generator_model, "Generator model name");
    app.add_option("--analyzer-model", g.analyzer_model, "Analyzer model name");
    app.add_option("--base-url", g.base_url, "OpenAI-compatible API base URL");
    app.add_option("--temperature-gen", g.temperature_gen, "Generator temperature")->check(CLI::Range(0.0, 2.0));
    app.add_option("--temperature-analyze", g.temperature_analyze, "Analyzer temperature")->check(CLI::Range(0.0, 2.0));
    app.add_option("--record", g.record, "Append every model call to this cassette");
    app.add_option("--replay", g.replay, "Serve model calls from this cassette only");
    app.add_option("--concurrency", g.concurrency, "In-flight requests per model")->check(CLI::PositiveNumber);
    app.add_flag("--json", g.json_output, "Machine-readable output");
    app.add_flag("-v,--verbose", g.verbose, "Debug logging");

    std::string entity, prompt, text_file, run_id, strategy = "cot", trigger = "cloze", annotations, scorer_url;
    std::string addr = "127.0.0.1:8080";
    int iterations = 3;
    bool no_drop = false;

    auto* generate = app.add_subcommand("generate", "Create a run and generate (or import) its document");
    auto* task_opts = generate->add_option_group("task");
    task_opts->add_option("--entity", entity, "Entity to describe");
    task_opts->add_option("--prompt", prompt, "Free-form prompt");
    task_opts->require_option(1);
    generate->add_option("--text", text_file, "Import this text file instead of generating")->check(CLI::ExistingFile);

    auto* trig = app.add_subcommand("trigger", "Trigger alternative sentences for a run");
    trig->add_option("--run", run_id)->required();
    trig->add_option("--strategy", trigger, "cloze|continue|rephrase|qa")->capture_default_str();

    auto* detect = app.add_subcommand("detect", "Detect contradictions among triggered pairs");
    detect->add_option("--run", run_id)->required();
    detect->add_option("--strategy", strategy, "cot|direct|step|multipath")->capture_default_str();

    auto* mitigate = app.add_subcommand("mitigate", "Iteratively revise the run's latest document");
    mitigate->add_option("--run", run_id)->required();
    mitigate->add_option("--iterations", iterations)->check(CLI::Range(1, 20))->capture_default_str();
    mitigate->add_flag("--no-drop", no_drop, "Skip the final detection sweep");
    mitigate->add_option("--trigger-strategy", trigger, "cloze|continue|rephrase|qa")->capture_default_str();
    mitigate->add_option("--detect-strategy", strategy, "cot|direct|step|multipath")->capture_default_str();

    auto* evaluate = app.add_subcommand("evaluate", "Compute metrics for a run against annotations");
    evaluate->add_option("--run", run_id)->required();
    evaluate->add_option("--annotations", annotations)->required()->check(CLI::ExistingFile);
    evaluate->add_option("--scorer-url", scorer_url, "Perplexity scorer endpoint");

    auto* serve = app.add_subcommand("serve", "Serve the review API");
    serve->add_option("--addr", addr, "host:port")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::warn);
    spdlog::set_pattern("%^%l%$ %v");

    try {
        RunStore store(g.store);

        if (*generate) {
            RunConfig config;
            config.task = entity.empty() ? Task::free_form(prompt) : Task::entity(entity);
            if (config.task.text().empty()) throw Error(ErrorCode::Validation, "task text is empty");
            apply_overrides(config.generator, g, true);
            apply_overrides(config.analyzer, g, false);
            Document doc;
            if (!text_file.empty()) {
                std::ifstream in(text_file, std::ios::binary);
                std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                auto dir = store.create(config);
                doc = import_run(dir, config.task, raw);
                run_id = dir.run_id();
            } else {
                check_endpoints(config);
                auto pipeline = build_pipeline(config, clients_for(g));
                auto dir = store.create(config);
                try {
                    doc = generate_run(dir, config.task, pipeline);
                } catch (const Error&) {
                    std::filesystem::remove_all(dir.path());
                    throw;
                }
                run_id = dir.run_id();
            }
            std::string text = "run " + run_id + "\n";
            for (const auto& s : doc.sentences) text += fmt::format("[{}] {}\n", s.index, s.text);
            emit(g, {{"schema", kSchema}, {"run_id", run_id}, {"document", doc}}, text);
            return 0;
        }

        if (*serve) {
            const auto colon = addr.rfind(':');
            if (colon == std::string::npos) throw Error(ErrorCode::Validation, "--addr must be host:port");
            const auto host = addr.substr(0, colon);
            int port = 0;
            try {
                port = std::stoi(addr.substr(colon + 1));
            } catch (const std::exception&) {
                throw Error(ErrorCode::Validation, "bad port in --addr");
            }
            ServiceOptions options;
            options.store_root = g.store;
            apply_overrides(options.defaults.generator, g, true);
            apply_overrides(options.defaults.analyzer, g, false);
            options.clients = clients_for(g);
            Service service(options);
            port = service.bind(host, port);
            g_service = &service;
            std::signal(SIGINT, [](int) {
                if (g_service) g_service->stop();
            });
            std::cerr << "listening on " << host << ":" << port << '\n';
            service.listen();
            g_service = nullptr;
            return 0;
        }

        auto dir = store.open(run_id);
        auto run = dir.load();
        for (const auto& w : run.warnings) spdlog::warn("{}", w);

        if (*trig) {
            auto ts = trigger_strategy_from_string(trigger);
            if (!ts) throw Error(ErrorCode::Validation, "unknown trigger strategy: " + trigger);
            auto pipeline = build_pipeline(run_config(run, g), clients_for(g));
            auto pairs = trigger_run(dir, pipeline, *ts);
            std::string text;
            for (const auto& p : pairs)
                text += p.error.empty() ? fmt::format("{}  {}\n", p.id, p.pair.alternative)
                                        : fmt::format("{}  error: {}\n", p.id, p.error);
            emit(g, {{"schema", kSchema}, {"run_id", run_id}, {"pairs", pairs_json(pairs)}}, text);
            // Failed pairs are stored; the exit code still reports the transport failure.
            const bool failed = std::any_of(pairs.begin(), pairs.end(), [](const PairRecord& p) { return !p.error.empty(); });
            return failed ? 2 : 0;
        }

        if (*detect) {
            auto ds = detect_strategy_from_string(strategy);
            if (!ds) throw Error(ErrorCode::Validation, "unknown detect strategy: " + strategy);
            auto pipeline = build_pipeline(run_config(run, g), clients_for(g));
            auto pairs = detect_run(dir, pipeline, *ds);
            std::string text;
            for (const auto& p : pairs)
                text += fmt::format("{}  {}\n", p.id, p.flagged() ? "contradictory" : "consistent");
            emit(g, {{"schema", kSchema}, {"run_id", run_id}, {"pairs", pairs_json(pairs)}}, text);
            return 0;
        }

        if (*mitigate) {
            MitigationConfig cfg;
            cfg.iterations = iterations;
            cfg.drop_remaining = !no_drop;
            auto ts = trigger_strategy_from_string(trigger);
            if (!ts) throw Error(ErrorCode::Validation, "unknown trigger strategy: " + trigger);
            auto ds = detect_strategy_from_string(strategy);
            if (!ds) throw Error(ErrorCode::Validation, "unknown detect strategy: " + strategy);
            cfg.trigger_strategy = *ts;
            cfg.detect_strategy = *ds;
            auto pipeline = build_pipeline(run_config(run, g), clients_for(g));
            auto result = mitigate_run(dir, pipeline, cfg);
            std::string text;
            for (const auto& s : result.report.passes)
                text += fmt::format("pass {}: {} pairs, {} flagged, {} revised, {} dropped\n", s.pass, s.pairs,
                                    s.flagged, s.revised, s.dropped);
            if (result.report.sweep)
                text += fmt::format("sweep: {} pairs, {} dropped\n", result.report.sweep->pairs, result.report.sweep->dropped);
            for (const auto& s : result.document.sentences) text += fmt::format("[{}] {}\n", s.index, s.text);
            json passes = json::array();
            for (const auto& s : result.report.passes) passes.push_back(stats_json(s));
            emit(g,
                 {{"schema", kSchema},
                  {"run_id", run_id},
                  {"passes", passes},
                  {"sweep", result.report.sweep ? stats_json(*result.report.sweep) : json(nullptr)},
                  {"document", result.document}},
                 text);
            return 0;
        }

        if (*evaluate) {
            auto gold = index_annotations(load_annotations(annotations));
            std::unique_ptr<PerplexityScorer> scorer;
            if (!scorer_url.empty()) scorer = std::make_unique<HttpPerplexityScorer>(scorer_url);
            auto metrics = evaluate_run(run, gold, scorer.get());
            auto report = report_json(run, &metrics);
            dir.write_report(report);
            emit(g, report, metrics_table(metrics));
            return 0;
        }
    } catch (const Error& e) {
        return fail(g, e);
    } catch (const std::exception& e) {
        return fail(g, Error(ErrorCode::Validation, e.what()));
    }
    return 0;
}
