#pragma once

#include "contraguard/gateway.hpp"
#include "contraguard/pipeline.hpp"
#include "contraguard/store.hpp"

#include <functional>
#include <memory>
#include <string>

namespace contraguard {

/// Builds the client for an endpoint; tests swap in scripted backends.
using ClientFactory = std::function<ModelClient(const ModelEndpoint&)>;

ClientFactory default_client_factory(GatewayOptions options);

Pipeline build_pipeline(const RunConfig& config, const ClientFactory& clients);

/// Id given to the generated document of every run, so run directories do not embed the run id.
inline constexpr const char* kDocumentId = "document";

/// Generates the initial document and stores it as version "generated".
Document generate_run(RunDir& dir, const Task& task, const Pipeline& pipeline);

/// Stores a document supplied by the caller (origin Imported) as version "generated".
Document import_run(RunDir& dir, const Task& task, std::string_view raw_text);

/// Triggers pairs for the generated document.
std::vector<PairRecord> trigger_run(RunDir& dir, const Pipeline& pipeline, TriggerStrategy strategy);

/// Detects every triggered pair that has no verdict yet.
std::vector<PairRecord> detect_run(RunDir& dir, const Pipeline& pipeline, const DetectStrategy& strategy);

/// Mitigates the latest document version and persists passes, pairs and the final document.
MitigationResult mitigate_run(RunDir& dir, const Pipeline& pipeline, const MitigationConfig& cfg,
                              const EventSink& sink = {}, const PassHook& hook = {});

nlohmann::json report_json(const RunRecord& run, const MetricsReport* metrics);

}  // namespace contraguard
