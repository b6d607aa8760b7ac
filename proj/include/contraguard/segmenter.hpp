#pragma once

#include "contraguard/core.hpp"

#include <chrono>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace contraguard {

/// Deterministic rule-based sentence splitter.
///
/// A boundary is a run of `.`, `!` or `?` (plus any closing quotes or
/// brackets) followed by whitespace and then an uppercase letter or an
/// opening quote/bracket. Periods that end a protected abbreviation, an
/// initial ("T."), a dotted acronym ("U.S.") or an ellipsis never split.
/// A blank line is also a boundary. Each returned sentence has its internal
/// whitespace collapsed, so joining the results with single spaces yields
/// the whitespace-normalized input.
std::vector<Sentence> split_sentences(std::string_view raw_text);

enum class ExtractorKind { RuleBased, ExternalService };

class TripleExtractor {
public:
    virtual ~TripleExtractor() = default;
    /// Must be safe to call concurrently.
    virtual std::vector<FactTriple> extract(const Sentence& sentence) const = 0;
};

/// Subject / finite-verb-group / remainder grammar; see triple_grammar.cpp.
class RuleBasedExtractor final : public TripleExtractor {
public:
    std::vector<FactTriple> extract(const Sentence& sentence) const override;
};

struct ExtractorServiceConfig {
    /// Full URL, e.g. http://127.0.0.1:9000/extract
    std::string url;
    std::chrono::milliseconds timeout{5000};
    int retries = 2;
};

/// Client for an external extractor: POST {"sentence": ...} -> {"triples": [...]}.
/// Throws ErrorCode::ExtractorUnavailable once retries are exhausted.
class HttpTripleExtractor final : public TripleExtractor {
public:
    explicit HttpTripleExtractor(ExtractorServiceConfig config);
    std::vector<FactTriple> extract(const Sentence& sentence) const override;

private:
    ExtractorServiceConfig config_;
};

/// Tries `primary`, falls back to `fallback` when the primary is unavailable.
class FallbackExtractor final : public TripleExtractor {
public:
    FallbackExtractor(std::shared_ptr<const TripleExtractor> primary,
                      std::shared_ptr<const TripleExtractor> fallback);
    std::vector<FactTriple> extract(const Sentence& sentence) const override;

private:
    std::shared_ptr<const TripleExtractor> primary_;
    std::shared_ptr<const TripleExtractor> fallback_;
};

struct ExtractorConfig {
    ExtractorKind kind = ExtractorKind::RuleBased;
    ExtractorServiceConfig service;
    bool fallback_to_rule_based = true;
};

std::shared_ptr<const TripleExtractor> make_extractor(const ExtractorConfig& config);

/// Contexts for `sentence` within `doc`: one per extracted triple, prefix is
/// every sentence before it, and the triple's object is always dropped.
std::vector<TriggerContext> extract_contexts(const Sentence& sentence, const Document& doc,
                                             const TripleExtractor& extractor);

/// Same, with an explicit prefix (used when the prefix is a partially revised document).
std::vector<TriggerContext> extract_contexts(const Sentence& sentence, const Task& task,
                                             const std::vector<Sentence>& prefix,
                                             const TripleExtractor& extractor);

}  // namespace contraguard
