#pragma once

#include "contraguard/core.hpp"
#include "contraguard/error.hpp"
#include "contraguard/gateway.hpp"
#include "contraguard/prompts.hpp"
#include "contraguard/segmenter.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace contraguard {

/// Stage labels attached to every exchange; token accounting groups by these.
namespace stage {
inline constexpr const char* kGenerate = "generate";
inline constexpr const char* kTrigger = "trigger";
inline constexpr const char* kDetect = "detect";
inline constexpr const char* kRevise = "revise";
inline constexpr const char* kFactuality = "factuality";
}  // namespace stage

/// Phases a pair can belong to.
namespace phase {
inline constexpr const char* kTrigger = "trigger";
inline constexpr const char* kMitigate = "mitigate";
inline constexpr const char* kSweep = "sweep";
}  // namespace phase

struct PipelineEvent {
    std::string type;
    nlohmann::json data;
};

using EventSink = std::function<void(const PipelineEvent&)>;

/// Ordered record of model calls; indices are stable once appended.
class CallLog {
public:
    std::size_t add(Exchange exchange, std::string_view stage);
    /// Appends `other` and returns the index offset its entries received.
    std::size_t absorb(CallLog&& other);

    const std::vector<Exchange>& exchanges() const { return exchanges_; }
    std::size_t size() const { return exchanges_.size(); }

private:
    std::vector<Exchange> exchanges_;
};

struct PairRecord {
    std::string id;
    std::string phase;
    /// 1-based pass for mitigation pairs, 0 otherwise.
    int pass = 0;
    /// Position of the sentence in the phase's input document.
    std::size_t source = 0;
    /// Position in the initial document this sentence descends from.
    std::size_t root = 0;
    SentencePair pair;
    std::optional<Verdict> verdict;
    std::optional<std::string> revision;
    std::vector<std::size_t> trigger_calls;
    std::vector<std::size_t> detect_calls;
    std::vector<std::size_t> revise_calls;
    /// Non-empty when producing this pair failed.
    std::string error;

    bool flagged() const { return verdict && verdict->contradictory; }
};

struct MitigationConfig {
    int iterations = 3;
    bool drop_remaining = true;
    TriggerStrategy trigger_strategy = TriggerStrategy::ClozeTriple;
    DetectStrategy detect_strategy = DetectStrategy::chain_of_thought();

    std::vector<std::string> violations() const;
};

struct PassStats {
    int pass = 0;
    std::size_t pairs = 0;
    std::size_t flagged = 0;
    std::size_t revised = 0;
    std::size_t dropped = 0;

    bool operator==(const PassStats&) const = default;
};

struct MitigationReport {
    std::vector<PassStats> passes;
    /// Final detection sweep; absent when drop_remaining is off.
    std::optional<PassStats> sweep;
    /// Document after every pass, before the sweep (index 0 is the input).
    std::vector<Document> versions;
    /// For each version, the initial-document position of each sentence.
    std::vector<std::vector<std::size_t>> lineage;
    std::vector<PairRecord> pairs;
    /// Set when a gateway failure aborted the run; the report holds what completed.
    std::optional<std::string> error;
};

struct MitigationResult {
    Document document;
    std::vector<std::size_t> lineage;
    MitigationReport report;
};

/// Thrown by mitigate_iter when a model call fails mid-run; carries what completed.
class MitigationAborted : public Error {
public:
    MitigationAborted(const Error& cause, MitigationResult partial)
        : Error(cause.code(), cause.what()), partial_(std::make_shared<MitigationResult>(std::move(partial))) {}

    const MitigationResult& partial() const { return *partial_; }

private:
    std::shared_ptr<MitigationResult> partial_;
};

/// Called after each pass with the pass output and its lineage; may edit both
/// (human decisions) before the next pass consumes them. Lineage must stay
/// parallel to the sentences.
using PassHook = std::function<void(int completed_pass, Document& doc, std::vector<std::size_t>& lineage)>;

class Pipeline {
public:
    Pipeline(ModelClient generator, ModelClient analyzer, std::shared_ptr<const TripleExtractor> extractor,
             PromptKit prompts = PromptKit());

    Document generate_description(const Task& task, const std::string& document_id, CallLog& log) const;

    /// One alternative for single-output strategies, up to two otherwise.
    std::vector<std::string> gen_sentence(const TriggerContext& ctx, TriggerStrategy strategy, CallLog& log) const;

    /// Pairs in (sentence, context) order. Failures are returned as records with `error` set.
    std::vector<PairRecord> trigger(const Document& doc, TriggerStrategy strategy, CallLog& log,
                                    const EventSink& sink = {}) const;

    Verdict detect(const SentencePair& pair, const DetectStrategy& strategy, CallLog& log) const;
    std::string revise(const SentencePair& pair, CallLog& log) const;
    /// Revised text when detect flags the pair, the original text otherwise.
    std::string mitigate_one(const SentencePair& pair, const DetectStrategy& strategy, CallLog& log) const;

    MitigationResult mitigate_iter(const Document& doc, const MitigationConfig& cfg, CallLog& log,
                                   const EventSink& sink = {}, const PassHook& hook = {}) const;

    const ModelClient& generator() const { return generator_; }
    const ModelClient& analyzer() const { return analyzer_; }
    const PromptKit& prompts() const { return prompts_; }

private:
    ModelClient generator_;
    ModelClient analyzer_;
    std::shared_ptr<const TripleExtractor> extractor_;
    PromptKit prompts_;
};

std::string pair_id(std::string_view phase, int pass, std::size_t sentence, std::size_t context,
                    std::size_t alternative, std::size_t alternatives);

nlohmann::json pair_event_json(const PairRecord& record);
nlohmann::json verdict_json(const Verdict& verdict);
nlohmann::json stats_json(const PassStats& stats);

}  // namespace contraguard
