#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace contraguard {

enum class TaskKind { EntityDescription, FreeFormPrompt };

/// What the generator was asked: describe an entity, or answer a free-form prompt.
class Task {
public:
    /// Empty placeholder; only the factories produce a valid task.
    Task() = default;

    static Task entity(std::string_view name);
    static Task free_form(std::string_view prompt);

    TaskKind kind() const noexcept { return kind_; }
    bool is_entity() const noexcept { return kind_ == TaskKind::EntityDescription; }
    /// Entity name or prompt text, already trimmed.
    const std::string& text() const noexcept { return text_; }

    std::optional<std::string> entity_name() const;
    std::optional<std::string> prompt() const;

    bool operator==(const Task&) const = default;

private:
    Task(TaskKind kind, std::string text) : kind_(kind), text_(std::move(text)) {}

    TaskKind kind_ = TaskKind::EntityDescription;
    std::string text_;
};

struct Sentence {
    std::size_t index = 0;
    std::string text;

    bool operator==(const Sentence&) const = default;
};

/// Identity of a sentence slot. Revisions change the hash, so original and
/// revised sentences never alias even when they share an index.
struct SentenceId {
    std::string document_id;
    std::size_t index = 0;
    std::string text_hash;

    bool operator==(const SentenceId&) const = default;
};

enum class DocumentOrigin { Generated, Imported, Revised };

struct Document {
    std::string id;
    Task task;
    std::vector<Sentence> sentences;
    DocumentOrigin origin = DocumentOrigin::Generated;
    std::string generator_id;

    SentenceId identity(const Sentence& s) const;
    /// Sentence texts joined with single spaces.
    std::string text() const;

    bool operator==(const Document&) const = default;
};

/// Builds a document with sentence indices assigned from position.
Document make_document(std::string id, Task task, const std::vector<std::string>& sentences,
                       DocumentOrigin origin = DocumentOrigin::Generated,
                       std::string generator_id = {});

struct FactTriple {
    std::string subject;
    std::string predicate;
    std::optional<std::string> object;

    bool operator==(const FactTriple&) const = default;
};

struct TriggerContext {
    Task task;
    std::vector<Sentence> prefix;
    /// Always object-less: the omitted object is the cloze blank.
    FactTriple triple;
    /// The sentence this context was extracted from; needed by the rephrase
    /// and question-answer trigger strategies.
    std::optional<Sentence> sentence;
    std::size_t context_index = 0;

    bool operator==(const TriggerContext&) const = default;
};

struct SentencePair {
    Sentence original;
    std::string alternative;
    TriggerContext context;

    bool operator==(const SentencePair&) const = default;
};

enum class ConfidenceNote { Parsed, AmbiguousDefaultedNo };

struct Verdict {
    bool contradictory = false;
    std::string explanation;
    std::string raw_conclusion;
    ConfidenceNote confidence_note = ConfidenceNote::AmbiguousDefaultedNo;

    bool operator==(const Verdict&) const = default;
};

struct AnnotationRecord {
    std::string pair_id;
    bool gold_contradictory = false;
    std::optional<bool> gold_factual_original;
    std::optional<bool> gold_verifiable_online;

    bool operator==(const AnnotationRecord&) const = default;
};

enum class ModelRole { Generator, Analyzer };
enum class Transport { LiveHttp, Replay };

struct ModelEndpoint {
    ModelRole role = ModelRole::Generator;
    std::string name;
    double temperature = 1.0;
    int max_tokens = 512;
    Transport transport = Transport::LiveHttp;
    std::string base_url = "https://api.openai.com/v1";
    std::string cassette_path;
    /// Upper bound on in-flight requests for this endpoint.
    int concurrency = 4;

    /// Generator defaults to 1.0 for initial text; analyzer calls default to 0.
    static ModelEndpoint generator(std::string name);
    static ModelEndpoint analyzer(std::string name);

    /// Empty when valid.
    std::vector<std::string> violations() const;

    bool operator==(const ModelEndpoint&) const = default;
};

/// One entry per violated document invariant; empty iff the document is well formed.
std::vector<std::string> validate_document(const Document& doc);

std::string_view to_string(TaskKind kind);
std::string_view to_string(DocumentOrigin origin);
std::string_view to_string(ConfidenceNote note);
std::string_view to_string(ModelRole role);
std::string_view to_string(Transport transport);

std::optional<TaskKind> task_kind_from_string(std::string_view s);
std::optional<DocumentOrigin> document_origin_from_string(std::string_view s);
std::optional<ConfidenceNote> confidence_note_from_string(std::string_view s);
std::optional<ModelRole> model_role_from_string(std::string_view s);
std::optional<Transport> transport_from_string(std::string_view s);

}  // namespace contraguard
