#include "contraguard/core.hpp"

#include "contraguard/error.hpp"
#include "contraguard/text_util.hpp"

#include <fmt/format.h>

namespace contraguard {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Validation: return "ValidationError";
        case ErrorCode::Io: return "IoError";
        case ErrorCode::Transport: return "TransportError";
        case ErrorCode::RateLimitedExhausted: return "RateLimitedExhausted";
        case ErrorCode::ReplayMiss: return "ReplayMiss";
        case ErrorCode::EmptyGeneration: return "EmptyGeneration";
        case ErrorCode::MissingTriple: return "MissingTriple";
        case ErrorCode::MissingOriginalSentence: return "MissingOriginalSentence";
        case ErrorCode::Parse: return "ParseError";
        case ErrorCode::EvenPathCount: return "EvenPathCount";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::MissingLabel: return "MissingLabel";
        case ErrorCode::DivisionByZero: return "DivisionByZero";
        case ErrorCode::ScorerUnavailable: return "ScorerUnavailable";
        case ErrorCode::ExtractorUnavailable: return "ExtractorUnavailable";
    }
    return "Error";
}

Task Task::entity(std::string_view name) {
    auto trimmed = text::trim(name);
    if (trimmed.empty()) throw Error(ErrorCode::Validation, "entity must be non-empty");
    return Task(TaskKind::EntityDescription, std::move(trimmed));
}

Task Task::free_form(std::string_view prompt) {
    auto trimmed = text::trim(prompt);
    if (trimmed.empty()) throw Error(ErrorCode::Validation, "prompt must be non-empty");
    return Task(TaskKind::FreeFormPrompt, std::move(trimmed));
}

std::optional<std::string> Task::entity_name() const {
    if (kind_ == TaskKind::EntityDescription) return text_;
    return std::nullopt;
}

std::optional<std::string> Task::prompt() const {
    if (kind_ == TaskKind::FreeFormPrompt) return text_;
    return std::nullopt;
}

SentenceId Document::identity(const Sentence& s) const {
    return SentenceId{id, s.index, text::sha256_hex(s.text).substr(0, 16)};
}

std::string Document::text() const {
    std::string out;
    for (const auto& s : sentences) {
        if (!out.empty()) out.push_back(' ');
        out += s.text;
    }
    return out;
}

Document make_document(std::string id, Task task, const std::vector<std::string>& sentences,
                       DocumentOrigin origin, std::string generator_id) {
    Document doc{std::move(id), std::move(task), {}, origin, std::move(generator_id)};
    doc.sentences.reserve(sentences.size());
    for (std::size_t i = 0; i < sentences.size(); ++i) doc.sentences.push_back({i, sentences[i]});
    return doc;
}

ModelEndpoint ModelEndpoint::generator(std::string name) {
    ModelEndpoint ep;
    ep.role = ModelRole::Generator;
    ep.name = std::move(name);
    ep.temperature = 1.0;
    return ep;
}

ModelEndpoint ModelEndpoint::analyzer(std::string name) {
    ModelEndpoint ep;
    ep.role = ModelRole::Analyzer;
    ep.name = std::move(name);
    ep.temperature = 0.0;
    return ep;
}

std::vector<std::string> ModelEndpoint::violations() const {
    std::vector<std::string> out;
    if (name.empty()) out.emplace_back("model name empty");
    if (!(temperature >= 0.0 && temperature <= 2.0))
        out.push_back(fmt::format("temperature {} outside [0, 2]", temperature));
    if (max_tokens <= 0) out.push_back(fmt::format("max_tokens {} not positive", max_tokens));
    if (transport == Transport::Replay && cassette_path.empty())
        out.emplace_back("replay transport requires a cassette path");
    if (concurrency <= 0) out.push_back(fmt::format("concurrency {} not positive", concurrency));
    return out;
}

std::vector<std::string> validate_document(const Document& doc) {
    std::vector<std::string> out;
    for (std::size_t pos = 0; pos < doc.sentences.size(); ++pos) {
        const auto& s = doc.sentences[pos];
        if (s.index != pos)
            out.push_back(fmt::format("sentence at position {} has index {}", pos, s.index));
        if (text::trim(s.text).empty()) {
            out.push_back(fmt::format("sentence {} empty", pos));
        } else if (text::trim(s.text).size() != s.text.size()) {
            out.push_back(fmt::format("sentence {} has surrounding whitespace", pos));
        }
    }
    return out;
}

std::string_view to_string(TaskKind kind) {
    return kind == TaskKind::EntityDescription ? "entity" : "prompt";
}

std::string_view to_string(DocumentOrigin origin) {
    switch (origin) {
        case DocumentOrigin::Generated: return "generated";
        case DocumentOrigin::Imported: return "imported";
        case DocumentOrigin::Revised: return "revised";
    }
    return "generated";
}

std::string_view to_string(ConfidenceNote note) {
    return note == ConfidenceNote::Parsed ? "parsed" : "ambiguous_defaulted_no";
}

std::string_view to_string(ModelRole role) {
    return role == ModelRole::Generator ? "generator" : "analyzer";
}

std::string_view to_string(Transport transport) {
    return transport == Transport::LiveHttp ? "live_http" : "replay";
}

std::optional<TaskKind> task_kind_from_string(std::string_view s) {
    if (s == "entity") return TaskKind::EntityDescription;
    if (s == "prompt") return TaskKind::FreeFormPrompt;
    return std::nullopt;
}

std::optional<DocumentOrigin> document_origin_from_string(std::string_view s) {
    if (s == "generated") return DocumentOrigin::Generated;
    if (s == "imported") return DocumentOrigin::Imported;
    if (s == "revised") return DocumentOrigin::Revised;
    return std::nullopt;
}

std::optional<ConfidenceNote> confidence_note_from_string(std::string_view s) {
    if (s == "parsed") return ConfidenceNote::Parsed;
    if (s == "ambiguous_defaulted_no") return ConfidenceNote::AmbiguousDefaultedNo;
    return std::nullopt;
}

std::optional<ModelRole> model_role_from_string(std::string_view s) {
    if (s == "generator") return ModelRole::Generator;
    if (s == "analyzer") return ModelRole::Analyzer;
    return std::nullopt;
}

std::optional<Transport> transport_from_string(std::string_view s) {
    if (s == "live_http") return Transport::LiveHttp;
    if (s == "replay") return Transport::Replay;
    return std::nullopt;
}

}  // namespace contraguard
