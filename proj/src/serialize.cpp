#include "contraguard/serialize.hpp"

#include "contraguard/error.hpp"

namespace contraguard {

using json = nlohmann::json;

namespace {

template <typename E, typename F>
E enum_field(const json& j, const char* key, F from_string) {
    auto s = j.at(key).get<std::string>();
    auto v = from_string(s);
    if (!v) throw Error(ErrorCode::Parse, "unknown " + std::string(key) + " '" + s + "'");
    return *v;
}

}  // namespace

void to_json(json& j, const Task& v) { j = {{"kind", to_string(v.kind())}, {"text", v.text()}}; }

void from_json(const json& j, Task& v) {
    auto kind = enum_field<TaskKind>(j, "kind", task_kind_from_string);
    const auto text = j.at("text").get<std::string>();
    v = kind == TaskKind::EntityDescription ? Task::entity(text) : Task::free_form(text);
}

void to_json(json& j, const Sentence& v) { j = {{"index", v.index}, {"text", v.text}}; }

void from_json(const json& j, Sentence& v) {
    v.index = j.at("index").get<std::size_t>();
    v.text = j.at("text").get<std::string>();
}

void to_json(json& j, const Document& v) {
    std::vector<std::string> texts;
    for (const auto& s : v.sentences) texts.push_back(s.text);
    j = {{"id", v.id},
         {"task", v.task},
         {"sentences", texts},
         {"origin", to_string(v.origin)},
         {"generator_id", v.generator_id}};
}

void from_json(const json& j, Document& v) {
    v = make_document(j.at("id").get<std::string>(), j.at("task").get<Task>(),
                      j.at("sentences").get<std::vector<std::string>>(),
                      enum_field<DocumentOrigin>(j, "origin", document_origin_from_string),
                      j.value("generator_id", std::string{}));
}

void to_json(json& j, const FactTriple& v) {
    j = {{"subject", v.subject}, {"predicate", v.predicate}, {"object", v.object ? json(*v.object) : json(nullptr)}};
}

void from_json(const json& j, FactTriple& v) {
    v.subject = j.at("subject").get<std::string>();
    v.predicate = j.at("predicate").get<std::string>();
    v.object.reset();
    if (j.contains("object") && j["object"].is_string()) v.object = j["object"].get<std::string>();
}

void to_json(json& j, const TriggerContext& v) {
    j = {{"task", v.task},
         {"prefix", v.prefix},
         {"triple", v.triple},
         {"sentence", v.sentence ? json(*v.sentence) : json(nullptr)},
         {"context_index", v.context_index}};
}

void from_json(const json& j, TriggerContext& v) {
    v.task = j.at("task").get<Task>();
    v.prefix = j.at("prefix").get<std::vector<Sentence>>();
    v.triple = j.at("triple").get<FactTriple>();
    v.sentence.reset();
    if (j.contains("sentence") && j["sentence"].is_object()) v.sentence = j["sentence"].get<Sentence>();
    v.context_index = j.value("context_index", std::size_t{0});
}

void to_json(json& j, const SentencePair& v) {
    j = {{"original", v.original}, {"alternative", v.alternative}, {"context", v.context}};
}

void from_json(const json& j, SentencePair& v) {
    v.original = j.at("original").get<Sentence>();
    v.alternative = j.at("alternative").get<std::string>();
    v.context = j.at("context").get<TriggerContext>();
}

void to_json(json& j, const Verdict& v) { j = verdict_json(v); }

void from_json(const json& j, Verdict& v) {
    v.contradictory = j.at("contradictory").get<bool>();
    v.explanation = j.value("explanation", std::string{});
    v.raw_conclusion = j.value("raw_conclusion", std::string{});
    v.confidence_note = enum_field<ConfidenceNote>(j, "confidence_note", confidence_note_from_string);
}

void to_json(json& j, const AnnotationRecord& v) {
    auto opt = [](const std::optional<bool>& b) { return b ? json(*b) : json(nullptr); };
    j = {{"pair_id", v.pair_id},
         {"gold_contradictory", v.gold_contradictory},
         {"gold_factual_original", opt(v.gold_factual_original)},
         {"gold_verifiable_online", opt(v.gold_verifiable_online)}};
}

void from_json(const json& j, AnnotationRecord& v) {
    auto opt = [&](const char* key) -> std::optional<bool> {
        if (j.contains(key) && j[key].is_boolean()) return j[key].get<bool>();
        return std::nullopt;
    };
    v.pair_id = j.at("pair_id").get<std::string>();
    v.gold_contradictory = j.at("gold_contradictory").get<bool>();
    v.gold_factual_original = opt("gold_factual_original");
    v.gold_verifiable_online = opt("gold_verifiable_online");
}

void to_json(json& j, const ModelEndpoint& v) {
    j = {{"role", to_string(v.role)},
         {"name", v.name},
         {"temperature", v.temperature},
         {"max_tokens", v.max_tokens},
         {"transport", to_string(v.transport)},
         {"base_url", v.base_url},
         {"cassette_path", v.cassette_path},
         {"concurrency", v.concurrency}};
}

void from_json(const json& j, ModelEndpoint& v) {
    v.role = enum_field<ModelRole>(j, "role", model_role_from_string);
    v.name = j.at("name").get<std::string>();
    v.temperature = j.value("temperature", v.role == ModelRole::Generator ? 1.0 : 0.0);
    v.max_tokens = j.value("max_tokens", 512);
    v.transport = j.contains("transport") ? enum_field<Transport>(j, "transport", transport_from_string)
                                          : Transport::LiveHttp;
    v.base_url = j.value("base_url", std::string("https://api.openai.com/v1"));
    v.cassette_path = j.value("cassette_path", std::string{});
    v.concurrency = j.value("concurrency", 4);
}

void to_json(json& j, const DetectStrategy& v) {
    j = {{"kind", to_string(v.kind)}};
    if (v.kind == DetectStrategy::Kind::MultiPath) {
        j["paths"] = v.paths;
        j["temperature"] = v.path_temperature;
    }
}

void from_json(const json& j, DetectStrategy& v) {
    auto kind = j.is_string() ? j.get<std::string>() : j.at("kind").get<std::string>();
    auto parsed = detect_strategy_from_string(kind);
    if (!parsed) throw Error(ErrorCode::Parse, "unknown detect strategy '" + kind + "'");
    v = *parsed;
    if (j.is_object()) {
        v.paths = j.value("paths", v.paths);
        v.path_temperature = j.value("temperature", v.path_temperature);
    }
}

void to_json(json& j, const MitigationConfig& v) {
    j = {{"iterations", v.iterations},
         {"drop_remaining", v.drop_remaining},
         {"trigger_strategy", to_string(v.trigger_strategy)},
         {"detect_strategy", v.detect_strategy}};
}

void from_json(const json& j, MitigationConfig& v) {
    v = MitigationConfig{};
    v.iterations = j.value("iterations", v.iterations);
    v.drop_remaining = j.value("drop_remaining", v.drop_remaining);
    if (j.contains("trigger_strategy")) {
        auto s = j["trigger_strategy"].get<std::string>();
        auto t = trigger_strategy_from_string(s);
        if (!t) throw Error(ErrorCode::Parse, "unknown trigger strategy '" + s + "'");
        v.trigger_strategy = *t;
    }
    if (j.contains("detect_strategy")) v.detect_strategy = j["detect_strategy"].get<DetectStrategy>();
}

void to_json(json& j, const ExtractorConfig& v) {
    j = {{"kind", v.kind == ExtractorKind::RuleBased ? "rule_based" : "external_service"},
         {"url", v.service.url},
         {"timeout_ms", v.service.timeout.count()},
         {"retries", v.service.retries},
         {"fallback_to_rule_based", v.fallback_to_rule_based}};
}

void from_json(const json& j, ExtractorConfig& v) {
    v = ExtractorConfig{};
    auto kind = j.value("kind", std::string("rule_based"));
    if (kind == "rule_based") v.kind = ExtractorKind::RuleBased;
    else if (kind == "external_service") v.kind = ExtractorKind::ExternalService;
    else throw Error(ErrorCode::Parse, "unknown extractor kind '" + kind + "'");
    v.service.url = j.value("url", std::string{});
    v.service.timeout = std::chrono::milliseconds(j.value("timeout_ms", 5000L));
    v.service.retries = j.value("retries", 2);
    v.fallback_to_rule_based = j.value("fallback_to_rule_based", true);
}

}  // namespace contraguard
