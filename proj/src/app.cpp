#include "contraguard/app.hpp"

#include "contraguard/error.hpp"
#include "contraguard/serialize.hpp"

#include <future>

namespace contraguard {

using json = nlohmann::json;

ClientFactory default_client_factory(GatewayOptions options) {
    return [options = std::move(options)](const ModelEndpoint& endpoint) { return make_client(endpoint, options); };
}

Pipeline build_pipeline(const RunConfig& config, const ClientFactory& clients) {
    return Pipeline(clients(config.generator), clients(config.analyzer), make_extractor(config.extractor));
}

Document generate_run(RunDir& dir, const Task& task, const Pipeline& pipeline) {
    CallLog log;
    auto doc = pipeline.generate_description(task, kDocumentId, log);
    std::vector<std::size_t> lineage(doc.sentences.size());
    for (std::size_t i = 0; i < lineage.size(); ++i) lineage[i] = i;
    dir.append_phase(stage::kGenerate, log, {});
    dir.append_document({"generated", doc, lineage});
    return doc;
}

Document import_run(RunDir& dir, const Task& task, std::string_view raw_text) {
    std::vector<std::string> texts;
    for (auto& s : split_sentences(raw_text)) texts.push_back(std::move(s.text));
    if (texts.empty()) throw Error(ErrorCode::EmptyGeneration, "imported text has no sentences");
    auto doc = make_document(kDocumentId, task, texts, DocumentOrigin::Imported);
    std::vector<std::size_t> lineage(doc.sentences.size());
    for (std::size_t i = 0; i < lineage.size(); ++i) lineage[i] = i;
    dir.append_document({"generated", doc, lineage});
    return doc;
}

namespace {

const DocumentVersion& require_generated(const RunRecord& run) {
    const auto* v = run.latest("generated");
    if (!v) throw Error(ErrorCode::Validation, "run " + run.run_id + " has no document yet");
    return *v;
}

}  // namespace

std::vector<PairRecord> trigger_run(RunDir& dir, const Pipeline& pipeline, TriggerStrategy strategy) {
    auto run = dir.load();
    const auto& generated = require_generated(run);
    if (!run.pairs_in_phase(phase::kTrigger).empty())
        throw Error(ErrorCode::Validation, "run " + run.run_id + " is already triggered");
    CallLog log;
    auto pairs = pipeline.trigger(generated.document, strategy, log);
    dir.append_phase(phase::kTrigger, log, pairs);
    return pairs;
}

std::vector<PairRecord> detect_run(RunDir& dir, const Pipeline& pipeline, const DetectStrategy& strategy) {
    auto run = dir.load();
    std::vector<PairRecord> todo;
    for (auto& p : run.pairs_in_phase(phase::kTrigger))
        if (p.error.empty() && !p.verdict) todo.push_back(std::move(p));

    std::vector<CallLog> logs(todo.size());
    std::vector<std::future<Verdict>> pending;
    for (std::size_t i = 0; i < todo.size(); ++i)
        pending.push_back(std::async(std::launch::async, [&, i] { return pipeline.detect(todo[i].pair, strategy, logs[i]); }));

    std::optional<Error> failure;
    CallLog merged;
    for (std::size_t i = 0; i < todo.size(); ++i) {
        try {
            todo[i].verdict = pending[i].get();
        } catch (const Error& e) {
            if (!failure) failure = e;
            continue;
        }
        const auto offset = merged.size();
        todo[i].detect_calls.clear();
        for (std::size_t c = 0; c < logs[i].size(); ++c) todo[i].detect_calls.push_back(offset + c);
        merged.absorb(std::move(logs[i]));
    }
    std::vector<PairRecord> done;
    for (auto& p : todo)
        if (p.verdict) done.push_back(std::move(p));
    dir.append_verdicts(merged, done);
    if (failure) throw *failure;
    return done;
}

namespace {

// Re-expresses pipeline output relative to the run's generated document.
void compose_lineage(MitigationResult& result, const std::vector<std::size_t>& base) {
    auto map = [&](std::size_t i) { return i < base.size() ? base[i] : i; };
    for (auto& l : result.lineage) l = map(l);
    for (auto& version : result.report.lineage)
        for (auto& l : version) l = map(l);
    for (auto& p : result.report.pairs) p.root = map(p.root);
}

void persist_mitigation(RunDir& dir, const MitigationResult& result, const CallLog& log) {
    const auto& report = result.report;
    for (std::size_t v = 1; v < report.versions.size(); ++v)
        dir.append_document({"pass-" + std::to_string(v), report.versions[v], report.lineage[v]});
    dir.append_phase(phase::kMitigate, log, report.pairs);
    if (!report.error) dir.append_document({"final", result.document, result.lineage});
    json passes = json::array();
    for (const auto& s : report.passes) passes.push_back(stats_json(s));
    dir.write_report({{"schema", kSchema},
                      {"mitigation",
                       {{"passes", passes},
                        {"sweep", report.sweep ? stats_json(*report.sweep) : json(nullptr)},
                        {"sentences_before", report.versions.front().sentences.size()},
                        {"sentences_after", result.document.sentences.size()},
                        {"error", report.error ? json(*report.error) : json(nullptr)}}},
                      {"metrics", nullptr}});
}

}  // namespace

MitigationResult mitigate_run(RunDir& dir, const Pipeline& pipeline, const MitigationConfig& cfg,
                              const EventSink& sink, const PassHook& hook) {
    auto run = dir.load();
    require_generated(run);
    const auto& input = run.documents.back();
    CallLog log;
    try {
        auto result = pipeline.mitigate_iter(input.document, cfg, log, sink, hook);
        compose_lineage(result, input.lineage);
        persist_mitigation(dir, result, log);
        return result;
    } catch (const MitigationAborted& aborted) {
        auto partial = aborted.partial();
        compose_lineage(partial, input.lineage);
        persist_mitigation(dir, partial, log);
        throw;
    }
}

json report_json(const RunRecord& run, const MetricsReport* metrics) {
    json out = run.report.value_or(json{{"schema", kSchema}, {"mitigation", nullptr}});
    out["schema"] = kSchema;
    out["metrics"] = metrics ? metrics_json(*metrics) : json(nullptr);
    return out;
}

}  // namespace contraguard
