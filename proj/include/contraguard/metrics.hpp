#pragma once

#include "contraguard/core.hpp"
#include "contraguard/pipeline.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace contraguard {

/// Exact non-negative ratio; den == 0 never escapes the metric functions.
struct Fraction {
    long num = 0;
    long den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    Fraction reduced() const;
    bool operator==(const Fraction& o) const;
};

struct PRF {
    Fraction precision;
    Fraction recall;
    Fraction f1;
};

/// Precision, recall and F1. No predicted and no gold positives gives P = 1;
/// no predicted positives with gold positives present gives P = 0; no gold
/// positives gives R = 1; F1 = 0 when P + R = 0. Throws LengthMismatch.
PRF prf1(const std::vector<bool>& predicted, const std::vector<bool>& gold);

/// A document state plus the pairs evaluated on it. Sentences and pairs are
/// matched through `roots`: the initial-document position each sentence
/// descends from (PairRecord::root).
struct EvalView {
    std::vector<std::size_t> roots;
    std::vector<std::string> texts;
    std::vector<PairRecord> pairs;
};

using GoldLabels = std::map<std::string, AnnotationRecord>;

GoldLabels index_annotations(const std::vector<AnnotationRecord>& records);

/// Sentences with a gold-contradictory pair over sentences with any pair.
double trigger_frequency(const std::vector<PairRecord>& pairs, const GoldLabels& gold);

/// Predicted (analyzer verdict) and gold labels for every pair carrying a verdict.
PRF detection_prf1(const std::vector<PairRecord>& pairs, const GoldLabels& gold);

/// Share of gold-contradictory pairs in `before` whose sentence was dropped, or
/// revised with no gold-contradictory pair re-triggered on it in `after`.
/// 1.0 when `before` has no gold-contradictory pair.
double removed_ratio(const EvalView& before, const EvalView& after, const GoldLabels& gold);

/// Sentences with zero contradictory verdicts; sentences without pairs count.
std::size_t informative_count(const EvalView& view);
/// informative(after) / informative(before). Throws DivisionByZero.
double informativeness_ratio(const EvalView& before, const EvalView& after);

class PerplexityScorer {
public:
    virtual ~PerplexityScorer() = default;
    /// Throws ScorerUnavailable when the scorer cannot answer.
    virtual double score(const std::string& text) const = 0;
};

/// POST {"text": ...} -> {"perplexity": real}.
class HttpPerplexityScorer final : public PerplexityScorer {
public:
    explicit HttpPerplexityScorer(std::string url, int timeout_ms = 30000);
    double score(const std::string& text) const override;

private:
    std::string url_;
    int timeout_ms_;
};

class FunctionScorer final : public PerplexityScorer {
public:
    explicit FunctionScorer(std::function<double(const std::string&)> fn) : fn_(std::move(fn)) {}
    double score(const std::string& text) const override { return fn_(text); }

private:
    std::function<double(const std::string&)> fn_;
};

double perplexity_increase(const std::string& before_text, const std::string& after_text,
                           const PerplexityScorer& scorer);

/// One recorded call for cost accounting.
struct CostEntry {
    std::string stage;
    std::string phase;
    std::optional<Usage> usage;
};

struct StageCost {
    long prompt_tokens = 0;
    long completion_tokens = 0;
    std::size_t calls = 0;
    /// Calls whose backend reported no usage; totals exclude them.
    std::size_t unknown_calls = 0;

    long total() const { return prompt_tokens + completion_tokens; }
};

struct TokenCost {
    std::map<std::string, StageCost> stages;
    std::map<std::string, StageCost> phases;
    /// stage total / generation total; empty when generation cost is zero.
    std::map<std::string, double> multiples;
};

TokenCost token_cost(const std::vector<CostEntry>& entries);

struct MetricsReport {
    std::optional<double> trigger_frequency;
    std::optional<PRF> detection;
    std::optional<double> removed_ratio;
    std::optional<double> informativeness_ratio;
    std::optional<double> perplexity_increase;
    TokenCost token_cost;
    std::vector<std::string> notes;
};

/// Rounds to 4 decimals so serialized reports are byte-stable.
double round4(double v);

nlohmann::json metrics_json(const MetricsReport& report);
/// Aligned two-column text table.
std::string metrics_table(const MetricsReport& report);

/// Reference values reported for the ChatGPT configuration; documentation only.
namespace reference {
inline constexpr double kTriggerFrequency = 0.177;
inline constexpr double kPrecision = 0.842;
inline constexpr double kRecall = 0.832;
inline constexpr double kF1 = 0.837;
inline constexpr double kRemovedRatio = 0.895;
inline constexpr double kInformativeness = 1.008;
inline constexpr double kPerplexityIncrease = 0.44;
}  // namespace reference

}  // namespace contraguard
