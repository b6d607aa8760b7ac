#pragma once

#include "contraguard/core.hpp"
#include "contraguard/gateway.hpp"
#include "contraguard/metrics.hpp"
#include "contraguard/pipeline.hpp"
#include "contraguard/segmenter.hpp"

#include <json.hpp>

#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace contraguard {

inline constexpr const char* kSchema = "contraguard/v1";

/// Settings a run was created with; written once to config.json.
struct RunConfig {
    Task task;
    ModelEndpoint generator = ModelEndpoint::generator("gpt-3.5-turbo");
    ModelEndpoint analyzer = ModelEndpoint::analyzer("gpt-3.5-turbo");
    ExtractorConfig extractor;
    MitigationConfig mitigation;
};

nlohmann::json run_config_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

struct DocumentVersion {
    /// "generated", "pass-N", "final", or "decision".
    std::string label;
    Document document;
    std::vector<std::size_t> lineage;
};

enum class DecisionKind { Accept, Reject };

struct Decision {
    std::string pair_id;
    DecisionKind kind = DecisionKind::Accept;
};

std::string_view to_string(DecisionKind kind);
std::optional<DecisionKind> decision_from_string(std::string_view s);

struct TranscriptEntry {
    std::string id;
    std::string stage;
    std::string phase;
    ChatRequest request;
    ChatReply reply;
    std::string fingerprint;
};

/// Everything persisted for one run, as loaded from disk.
struct RunRecord {
    std::string run_id;
    nlohmann::json config;
    std::vector<DocumentVersion> documents;
    /// Pairs in write order; verdict/revision records are merged into their pair.
    std::vector<PairRecord> pairs;
    std::vector<Decision> decisions;
    std::vector<TranscriptEntry> transcripts;
    std::optional<nlohmann::json> report;
    /// Non-fatal problems met while loading (skipped partial lines).
    std::vector<std::string> warnings;

    std::vector<PairRecord> pairs_in_phase(std::string_view phase) const;
    const DocumentVersion* latest(std::string_view label_prefix = {}) const;
};

/// Reads a JSON Lines file. A last line that does not parse (an interrupted
/// write) is skipped and reported through `warnings`; any other bad line throws Parse.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

/// Transcript id for a global transcript index ("tx-000001" for index 0).
std::string transcript_id(std::size_t index);

class RunDir {
public:
    RunDir(std::filesystem::path path, std::string run_id);

    const std::string& run_id() const { return run_id_; }
    const std::filesystem::path& path() const { return path_; }

    void append_document(const DocumentVersion& version);
    /// Writes the log's exchanges as transcripts and cassette entries, then the
    /// pair/verdict/revision records referencing them. Returns the transcript base index.
    std::size_t append_phase(std::string_view phase, const CallLog& log, const std::vector<PairRecord>& pairs);
    /// Adds verdict records for pairs that already exist.
    std::size_t append_verdicts(const CallLog& log, const std::vector<PairRecord>& pairs);
    void append_decision(const Decision& decision);
    void write_report(const nlohmann::json& report);

    RunRecord load() const;

private:
    void append_line(const std::string& file, const nlohmann::json& j);
    std::size_t append_log(std::string_view phase, const CallLog& log);

    std::filesystem::path path_;
    std::string run_id_;
    mutable std::mutex mu_;
    std::size_t transcripts_ = 0;
    std::set<std::string> cassette_fingerprints_;
};

class RunStore {
public:
    explicit RunStore(std::filesystem::path root);

    /// UTC timestamp plus a 6-hex random suffix.
    static std::string new_run_id();

    RunDir create(const RunConfig& config, std::optional<std::string> run_id = std::nullopt);
    /// Throws Validation when the run does not exist.
    RunDir open(const std::string& run_id) const;
    bool exists(const std::string& run_id) const;
    std::vector<std::string> list() const;

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
};

/// Loads annotation JSON Lines.
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);

/// Builds metrics for a stored run. `scorer` is optional.
MetricsReport evaluate_run(const RunRecord& run, const GoldLabels& gold, const PerplexityScorer* scorer);

}  // namespace contraguard
