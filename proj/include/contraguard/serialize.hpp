#pragma once

#include "contraguard/core.hpp"
#include "contraguard/gateway.hpp"
#include "contraguard/pipeline.hpp"
#include "contraguard/prompts.hpp"
#include "contraguard/segmenter.hpp"

#include <json.hpp>

// nlohmann ADL hooks, so `json j = value;` and `j.get<T>()` work for core types.
// Parse failures surface as ErrorCode::Parse.
namespace contraguard {

void to_json(nlohmann::json& j, const Task& v);
void from_json(const nlohmann::json& j, Task& v);
void to_json(nlohmann::json& j, const Sentence& v);
void from_json(const nlohmann::json& j, Sentence& v);
void to_json(nlohmann::json& j, const Document& v);
void from_json(const nlohmann::json& j, Document& v);
void to_json(nlohmann::json& j, const FactTriple& v);
void from_json(const nlohmann::json& j, FactTriple& v);
void to_json(nlohmann::json& j, const TriggerContext& v);
void from_json(const nlohmann::json& j, TriggerContext& v);
void to_json(nlohmann::json& j, const SentencePair& v);
void from_json(const nlohmann::json& j, SentencePair& v);
void to_json(nlohmann::json& j, const Verdict& v);
void from_json(const nlohmann::json& j, Verdict& v);
void to_json(nlohmann::json& j, const AnnotationRecord& v);
void from_json(const nlohmann::json& j, AnnotationRecord& v);
void to_json(nlohmann::json& j, const ModelEndpoint& v);
void from_json(const nlohmann::json& j, ModelEndpoint& v);
void to_json(nlohmann::json& j, const DetectStrategy& v);
void from_json(const nlohmann::json& j, DetectStrategy& v);
void to_json(nlohmann::json& j, const MitigationConfig& v);
void from_json(const nlohmann::json& j, MitigationConfig& v);
void to_json(nlohmann::json& j, const ExtractorConfig& v);
void from_json(const nlohmann::json& j, ExtractorConfig& v);

/// Parses one value, mapping json errors to ErrorCode::Parse.
template <typename T>
T parse_as(const nlohmann::json& j, std::string_view what) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, std::string(what) + ": " + e.what());
    }
}

}  // namespace contraguard
