#pragma once

#include "contraguard/core.hpp"
#include "contraguard/gateway.hpp"

#include <optional>
#include <string>
#include <vector>

namespace contraguard {

enum class TriggerStrategy { ClozeTriple, Continue, Rephrase, QA };

struct DetectStrategy {
    enum class Kind { ChainOfThought, DirectAsk, StepByStep, MultiPath };

    Kind kind = Kind::ChainOfThought;
    int paths = 5;
    double path_temperature = 1.0;

    static DetectStrategy chain_of_thought() { return {}; }
    static DetectStrategy direct_ask() { return {Kind::DirectAsk}; }
    static DetectStrategy step_by_step() { return {Kind::StepByStep}; }
    static DetectStrategy multi_path(int paths = 5, double temperature = 1.0) {
        return {Kind::MultiPath, paths, temperature};
    }

    bool operator==(const DetectStrategy&) const = default;
};

std::string_view to_string(TriggerStrategy s);
std::string_view to_string(DetectStrategy::Kind k);
std::optional<TriggerStrategy> trigger_strategy_from_string(std::string_view s);
/// Accepts "cot", "direct", "step", "multipath" and the long names.
std::optional<DetectStrategy> detect_strategy_from_string(std::string_view s);

enum class TurnPlan { SingleTurn, TwoTurn };

struct RenderedPrompt {
    std::vector<ChatMessage> messages;
    TurnPlan turn_plan = TurnPlan::SingleTurn;
    /// Exact follow-up user message for TwoTurn plans.
    std::string second_user_message;
    /// Independent samples of the whole turn plan (multi-path detection).
    int samples = 1;
    std::optional<double> sample_temperature;

    bool operator==(const RenderedPrompt&) const = default;
};

/// Fixed few-shot demonstration for the generator system prompt.
struct Demonstration {
    std::string entity;
    std::vector<std::string> prefix;
    std::string sentence;
    std::string subject;
    std::string predicate;
    std::string cloze_answer;
    std::vector<std::string> continue_answers;
    std::string rephrase_answer;
};

/// Loads every *.json demonstration in `dir`, ordered by file name.
std::vector<Demonstration> load_demonstrations(const std::string& dir);
/// Demonstrations shipped with the repository (loaded once).
const std::vector<Demonstration>& default_demonstrations();

class PromptKit {
public:
    PromptKit();
    explicit PromptKit(std::vector<Demonstration> demos);

    RenderedPrompt render_trigger(const TriggerContext& ctx, TriggerStrategy strategy) const;
    /// Second stage of the question-answer trigger: a fresh conversation per question.
    RenderedPrompt render_qa_answer(const TriggerContext& ctx, const std::string& question) const;
    RenderedPrompt render_detect(const SentencePair& pair, const DetectStrategy& strategy) const;
    RenderedPrompt render_revise(const SentencePair& pair) const;
    RenderedPrompt render_factuality(const Sentence& sentence, const std::vector<std::string>& samples,
                                     const Task& task, const std::vector<Sentence>& prefix) const;
    /// The request used to produce the initial text.
    RenderedPrompt render_generation(const Task& task) const;

    const std::vector<Demonstration>& demonstrations() const { return demos_; }

private:
    std::vector<Demonstration> demos_;
};

std::string render_task_header(const Task& task);
/// "Please tell me about {t}." for entities, the prompt verbatim otherwise.
std::string generation_request(const Task& task);

/// Parses a yes/no conclusion reply; total, never throws.
Verdict parse_verdict(std::string_view conclusion_reply);
/// Picks the concluding segment of a single-turn step-by-step reply, then parses it.
Verdict parse_step_by_step(std::string_view reply);
/// Strict majority vote; ambiguous paths count as "no". Throws EvenPathCount.
Verdict aggregate_multipath(const std::vector<Verdict>& verdicts);

/// Integer after "Score:" in 0..10. Throws ErrorCode::Parse otherwise.
int parse_factuality(std::string_view reply);

/// Strips a leading list marker ("1. ", "2) ", "- ") and keeps the first sentence.
/// Returns an empty string when nothing is left.
std::string first_sentence(std::string_view reply);
/// Splits a numbered or blank-line separated list into its items, each reduced
/// with first_sentence; empty items are skipped.
std::vector<std::string> split_enumerated(std::string_view reply);

/// Flattens a rendered prompt to the golden-file layout.
std::string to_golden_text(const RenderedPrompt& prompt);

}  // namespace contraguard
