#include "contraguard/prompts.hpp"

#include "contraguard/error.hpp"
#include "contraguard/segmenter.hpp"
#include "contraguard/text_util.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <regex>

namespace contraguard {

using json = nlohmann::json;

namespace {

constexpr std::string_view kClozeSystem =
    "You are a description generator. You are given the start of a description and a question that should be "
    "answered by the next sentence. You return the next sentence for the description.";
constexpr std::string_view kContinueSystem =
    "You are a description generator. You are given the start of a description. You return potential next "
    "sentences for the description.";
constexpr std::string_view kRephraseSystem =
    "You are a description generator. You are given the start of a description. You return the next sentence "
    "for the description.";
constexpr std::string_view kConcludeFollowUp =
    "Please conclude whether the statements are contradictory with Yes or No.";
constexpr std::string_view kScoreFollowUp =
    "Please conclude whether the statement is incorrect a score between 0 (entirely incorrect) and 10 (fully "
    "correct). Answer just \"Score: X\" where X is your score";

std::string prefix_text(const std::vector<Sentence>& prefix) {
    std::vector<std::string> parts;
    parts.reserve(prefix.size());
    for (const auto& s : prefix) parts.push_back(s.text);
    return text::join(parts, " ");
}

// Header line followed by the prefix line, omitted when the prefix is empty.
std::string block(std::string_view header, const std::string& body) {
    std::string out(header);
    if (!body.empty()) out += "\n" + body;
    return out;
}

// Header used by the continue / rephrase / question strategies.
std::string entity_header(const Task& task) {
    if (task.is_entity()) return "Here is the start of a description with the entity " + task.text();
    return render_task_header(task);
}

// "about {t}" for entities; free-form prompts drop the qualifier.
std::string about(const Task& task) { return task.is_entity() ? " about " + task.text() : ""; }

std::string cloze_user(const Task& task, const std::string& prefix, const std::string& subject,
                       const std::string& predicate) {
    return block(render_task_header(task) + ":", prefix) +
           "\n\nPlease generate the next sentence of this description.\n"
           "The generated sentence must fill the gap in this Subject;Predicate;Object triple: (" +
           subject + "; " + predicate + "; _)\n" + "The sentence should contain as little other information as possible.";
}

std::string continue_user(const Task& task, const std::string& prefix) {
    return block(entity_header(task) + ":", prefix) + "\n\nPlease generate two valid continuations of this description.";
}

std::string rephrase_user(const Task& task, const std::string& prefix, const std::string& sentence) {
    return block(entity_header(task) + ":", prefix) +
           "\n\nPlease generate the next sentence of this description. It should be a rephrased version of this "
           "sentence:\n" +
           sentence;
}

std::string detect_intro(const Task& task, bool one_line) {
    std::string head = task.is_entity() ? "I give you the beginning of a description about " + task.text() + "."
                                        : "I give you the beginning of a text answering the prompt \"" + task.text() + "\".";
    return head + (one_line ? " " : "\n") + "Then follow two statements.";
}

std::string detect_body(const SentencePair& pair) {
    const auto& task = pair.context.task;
    return block(task.is_entity() ? "Description:" : "Text:", prefix_text(pair.context.prefix)) +
           "\n\nStatement 1:\n" + pair.original.text + "\n\nStatement 2:\n" + pair.alternative;
}


bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Lowercase alphabetic words of s.
std::vector<std::string> words_of(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string_view skip_noise(std::string_view s) {
    while (!s.empty() && !is_word_char(s.front())) s.remove_prefix(1);
    return s;
}

std::string json_string(const json& j, const char* key) {
    return j.contains(key) && j[key].is_string() ? j[key].get<std::string>() : std::string{};
}

}  // namespace

std::string_view to_string(TriggerStrategy s) {
    switch (s) {
        case TriggerStrategy::ClozeTriple: return "cloze";
        case TriggerStrategy::Continue: return "continue";
        case TriggerStrategy::Rephrase: return "rephrase";
        case TriggerStrategy::QA: return "qa";
    }
    return "cloze";
}

std::string_view to_string(DetectStrategy::Kind k) {
    switch (k) {
        case DetectStrategy::Kind::ChainOfThought: return "cot";
        case DetectStrategy::Kind::DirectAsk: return "direct";
        case DetectStrategy::Kind::StepByStep: return "step";
        case DetectStrategy::Kind::MultiPath: return "multipath";
    }
    return "cot";
}

std::optional<TriggerStrategy> trigger_strategy_from_string(std::string_view s) {
    auto v = text::to_lower(s);
    if (v == "cloze" || v == "cloze_triple") return TriggerStrategy::ClozeTriple;
    if (v == "continue") return TriggerStrategy::Continue;
    if (v == "rephrase") return TriggerStrategy::Rephrase;
    if (v == "qa") return TriggerStrategy::QA;
    return std::nullopt;
}

std::optional<DetectStrategy> detect_strategy_from_string(std::string_view s) {
    auto v = text::to_lower(s);
    if (v == "cot" || v == "chain_of_thought") return DetectStrategy::chain_of_thought();
    if (v == "direct" || v == "direct_ask") return DetectStrategy::direct_ask();
    if (v == "step" || v == "step_by_step") return DetectStrategy::step_by_step();
    if (v == "multipath" || v == "multi_path") return DetectStrategy::multi_path();
    return std::nullopt;
}

std::vector<Demonstration> load_demonstrations(const std::string& dir) {
    std::vector<std::filesystem::path> files;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec))
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    if (ec) throw Error(ErrorCode::Io, "cannot read demonstrations from " + dir + ": " + ec.message());
    std::sort(files.begin(), files.end());

    std::vector<Demonstration> demos;
    for (const auto& path : files) {
        std::ifstream in(path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
        }
        Demonstration d;
        d.entity = json_string(j, "entity");
        for (const auto& p : j.value("prefix", json::array())) d.prefix.push_back(p.get<std::string>());
        d.sentence = json_string(j, "sentence");
        d.subject = json_string(j, "subject");
        d.predicate = json_string(j, "predicate");
        d.cloze_answer = json_string(j, "cloze_answer");
        for (const auto& a : j.value("continue_answers", json::array())) d.continue_answers.push_back(a.get<std::string>());
        d.rephrase_answer = json_string(j, "rephrase_answer");
        if (d.entity.empty() || d.sentence.empty())
            throw Error(ErrorCode::Parse, path.string() + ": demonstration needs entity and sentence");
        demos.push_back(std::move(d));
    }
    return demos;
}

const std::vector<Demonstration>& default_demonstrations() {
    static const std::vector<Demonstration> demos = [] {
        std::string root = CONTRAGUARD_FIXTURES_DIR;
        if (const char* env = std::getenv("CONTRAGUARD_FIXTURES")) root = env;
        return load_demonstrations(root + "/demos");
    }();
    return demos;
}

PromptKit::PromptKit() : demos_(default_demonstrations()) {}
PromptKit::PromptKit(std::vector<Demonstration> demos) : demos_(std::move(demos)) {}

std::string render_task_header(const Task& task) {
    if (task.is_entity()) return "Here is the start of a description about " + task.text();
    return "Here is the start of an answer to the prompt \"" + task.text() + "\"";
}

std::string generation_request(const Task& task) {
    return task.is_entity() ? "Please tell me about " + task.text() + "." : task.text();
}

RenderedPrompt PromptKit::render_generation(const Task& task) const {
    return RenderedPrompt{{{ChatRole::User, generation_request(task)}}};
}

RenderedPrompt PromptKit::render_trigger(const TriggerContext& ctx, TriggerStrategy strategy) const {
    const auto prefix = prefix_text(ctx.prefix);
    RenderedPrompt out;
    auto demo_prefix = [](const Demonstration& d) { return text::join(d.prefix, " "); };
    switch (strategy) {
        case TriggerStrategy::ClozeTriple: {
            if (ctx.triple.subject.empty() || ctx.triple.predicate.empty())
                throw Error(ErrorCode::MissingTriple, "cloze trigger needs a subject and predicate");
            out.messages.push_back({ChatRole::System, std::string(kClozeSystem)});
            for (const auto& d : demos_) {
                out.messages.push_back(
                    {ChatRole::User, cloze_user(Task::entity(d.entity), demo_prefix(d), d.subject, d.predicate)});
                out.messages.push_back({ChatRole::Assistant, d.cloze_answer});
            }
            out.messages.push_back(
                {ChatRole::User, cloze_user(ctx.task, prefix, ctx.triple.subject, ctx.triple.predicate)});
            break;
        }
        case TriggerStrategy::Continue: {
            out.messages.push_back({ChatRole::System, std::string(kContinueSystem)});
            for (const auto& d : demos_) {
                std::vector<std::string> numbered;
                for (std::size_t k = 0; k < d.continue_answers.size(); ++k)
                    numbered.push_back(fmt::format("{}. {}", k + 1, d.continue_answers[k]));
                out.messages.push_back({ChatRole::User, continue_user(Task::entity(d.entity), demo_prefix(d))});
                out.messages.push_back({ChatRole::Assistant, text::join(numbered, "\n\n")});
            }
            out.messages.push_back({ChatRole::User, continue_user(ctx.task, prefix)});
            break;
        }
        case TriggerStrategy::Rephrase: {
            if (!ctx.sentence) throw Error(ErrorCode::MissingOriginalSentence, "rephrase trigger needs the sentence");
            out.messages.push_back({ChatRole::System, std::string(kRephraseSystem)});
            for (const auto& d : demos_) {
                out.messages.push_back(
                    {ChatRole::User, rephrase_user(Task::entity(d.entity), demo_prefix(d), d.sentence)});
                out.messages.push_back({ChatRole::Assistant, d.rephrase_answer});
            }
            out.messages.push_back({ChatRole::User, rephrase_user(ctx.task, prefix, ctx.sentence->text)});
            break;
        }
        case TriggerStrategy::QA: {
            if (!ctx.sentence) throw Error(ErrorCode::MissingOriginalSentence, "question trigger needs the sentence");
            out.messages.push_back(
                {ChatRole::User, block(entity_header(ctx.task) + ":", prefix) +
                                     "\n\nPlease read the following sentence. Write at least two questions that can "
                                     "be answered by the information presented in the following sentence.\n"
                                     "Sentence:\n" +
                                     ctx.sentence->text});
            break;
        }
    }
    return out;
}

RenderedPrompt PromptKit::render_qa_answer(const TriggerContext& ctx, const std::string& question) const {
    std::string head = ctx.task.is_entity() ? "I am going to ask you about " + ctx.task.text()
                                            : "I am going to ask you about the prompt \"" + ctx.task.text() + "\"";
    return RenderedPrompt{{{ChatRole::User, block(head + ":", prefix_text(ctx.prefix)) +
                                                "\n\nPlease answer the following question\nSentence:\n" + question}}};
}

RenderedPrompt PromptKit::render_detect(const SentencePair& pair, const DetectStrategy& strategy) const {
    const auto& task = pair.context.task;
    RenderedPrompt out;
    switch (strategy.kind) {
        case DetectStrategy::Kind::ChainOfThought:
        case DetectStrategy::Kind::MultiPath:
            out.messages.push_back({ChatRole::User, detect_intro(task, false) + "\n\n" + detect_body(pair) +
                                                        "\n\nPlease explain if the statements" + about(task) +
                                                        " are contradictory. Provide your explanation only."});
            out.turn_plan = TurnPlan::TwoTurn;
            out.second_user_message = std::string(kConcludeFollowUp);
            if (strategy.kind == DetectStrategy::Kind::MultiPath) {
                out.samples = strategy.paths;
                out.sample_temperature = strategy.path_temperature;
            }
            break;
        case DetectStrategy::Kind::DirectAsk:
            out.messages.push_back({ChatRole::User, detect_intro(task, true) + "\n\n" + detect_body(pair) +
                                                        "\n\nAre the two statements" + about(task) +
                                                        " contradictory? Answer with either Yes or No."});
            break;
        case DetectStrategy::Kind::StepByStep:
            out.messages.push_back({ChatRole::User, detect_intro(task, true) + "\n\n" + detect_body(pair) +
                                                        "\n\nAre the two statements" + about(task) +
                                                        " contradictory? First, show your reasoning in a "
                                                        "step-by-step fashion.\nThen conclude with yes or no."});
            break;
    }
    return out;
}

RenderedPrompt PromptKit::render_revise(const SentencePair& pair) const {
    const auto& ctx = pair.context;
    return RenderedPrompt{
        {{ChatRole::User,
          block(render_task_header(ctx.task) + ".", prefix_text(ctx.prefix)) + "\n\nOriginal Sentence:\n" +
              pair.original.text +
              "\n\nThis sentence originally followed the description. However, there is a contradiction with this "
              "sentence:\n" +
              pair.alternative +
              "\n\nRemove the conflicting information from the sentence, preserving as much valid information as "
              "possible.\nThe result must fit well after the given description. Answer with the new sentence only.\n"
              "The new sentence must only contain information from the original sentence."}}};
}

RenderedPrompt PromptKit::render_factuality(const Sentence& sentence, const std::vector<std::string>& samples,
                                            const Task& task, const std::vector<Sentence>& prefix) const {
    if (samples.empty()) throw Error(ErrorCode::Validation, "factuality scoring needs at least one sample");
    std::string body = "I give you the beginning of a text answering the prompt \"" + generation_request(task) +
                       "\".\n"
                       "Then follow several statements. The first statement is the original statement of the text.\n"
                       "The subsequent statements are additional evidence for you to verify the correctness of the "
                       "original statement. If there is a contradiction between the original text and any of the "
                       "additional evidences, you should conclude that the original statement is incorrect.\n\n" +
                       block("Text:", prefix_text(prefix)) + "\n\nOriginal Statement:\n" + sentence.text;
    for (std::size_t k = 0; k < samples.size(); ++k) body += fmt::format("\n\nEvidence {}:\n{}", k + 1, samples[k]);
    body +=
        "\n\nAre there contradictions between the original statement and the provided evidence?\n"
        "Based on your reasoning about the above question and the evidences, what is your conclusion regarding the "
        "correctness of the original statement? Provide your explanation only.";
    RenderedPrompt out{{{ChatRole::User, std::move(body)}}};
    out.turn_plan = TurnPlan::TwoTurn;
    out.second_user_message = std::string(kScoreFollowUp);
    return out;
}

Verdict parse_verdict(std::string_view reply) {
    Verdict v;
    v.raw_conclusion = std::string(reply);
    v.contradictory = false;
    v.confidence_note = ConfidenceNote::AmbiguousDefaultedNo;

    std::string_view s = skip_noise(reply);
    // List marker such as "1." or "2)".
    std::size_t digits = 0;
    while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
    if (digits > 0 && digits < s.size() && (s[digits] == '.' || s[digits] == ')')) s = skip_noise(s.substr(digits + 1));
    for (std::string_view label : {"final answer:", "answer:", "conclusion:"}) {
        if (text::starts_with_icase(s, label)) {
            s = skip_noise(s.substr(label.size()));
            break;
        }
    }
    auto clause_end = s.find_first_of(".!?\n");
    auto words = words_of(s.substr(0, clause_end));
    if (words.empty()) return v;
    const bool has_yes = std::find(words.begin(), words.end(), "yes") != words.end();
    const bool has_no = std::find(words.begin(), words.end(), "no") != words.end();
    if (has_yes && has_no) return v;
    if (words.front() == "yes") {
        v.contradictory = true;
        v.confidence_note = ConfidenceNote::Parsed;
    } else if (words.front() == "no") {
        v.confidence_note = ConfidenceNote::Parsed;
    }
    return v;
}

Verdict parse_step_by_step(std::string_view reply) {
    const auto lower = text::to_lower(reply);
    std::string segment;
    if (auto pos = lower.rfind("conclusion:"); pos != std::string::npos) {
        segment = text::trim(reply.substr(pos + 11));
    } else {
        auto lines = text::split_lines(reply);
        for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
            if (!text::trim(*it).empty()) {
                segment = text::trim(*it);
                break;
            }
        }
    }
    Verdict v = parse_verdict(segment);
    v.explanation = std::string(reply);
    return v;
}

Verdict aggregate_multipath(const std::vector<Verdict>& verdicts) {
    if (verdicts.empty() || verdicts.size() % 2 == 0)
        throw Error(ErrorCode::EvenPathCount,
                    fmt::format("multi-path vote needs an odd number of paths, got {}", verdicts.size()));
    std::size_t yes = 0;
    std::vector<std::string> explanations;
    for (std::size_t k = 0; k < verdicts.size(); ++k) {
        const auto& v = verdicts[k];
        if (v.contradictory && v.confidence_note == ConfidenceNote::Parsed) ++yes;
        explanations.push_back(fmt::format("Path {}: {}", k + 1, v.explanation));
    }
    Verdict out;
    out.contradictory = 2 * yes > verdicts.size();
    out.raw_conclusion = out.contradictory ? "Yes." : "No.";
    out.confidence_note = ConfidenceNote::Parsed;
    out.explanation = text::join(explanations, "\n\n");
    return out;
}

int parse_factuality(std::string_view reply) {
    static const std::regex canonical(R"(^Score: ?(\d{1,2})\.?$)");
    auto lines = text::split_lines(reply);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        auto line = text::trim(*it);
        if (line.empty()) continue;
        std::smatch m;
        if (std::regex_match(line, m, canonical)) {
            int score = std::stoi(m[1]);
            if (score <= 10) return score;
            throw Error(ErrorCode::Parse, fmt::format("score {} outside 0..10", score));
        }
    }
    throw Error(ErrorCode::Parse, "no \"Score: X\" line in reply");
}

std::string first_sentence(std::string_view reply) {
    static const std::regex marker(R"(^\s*(?:\d+[.):]|[-*•])\s+)");
    std::string s = text::trim(reply);
    s = std::regex_replace(s, marker, "", std::regex_constants::format_first_only);
    auto sentences = split_sentences(s);
    return sentences.empty() ? std::string{} : sentences.front().text;
}

std::vector<std::string> split_enumerated(std::string_view reply) {
    static const std::regex item_start(R"(^\s*\d+[.):]\s+)");
    std::vector<std::string> items;
    std::string current;
    bool numbered = false;
    auto flush = [&] {
        auto item = first_sentence(current);
        if (!item.empty()) items.push_back(std::move(item));
        current.clear();
    };
    for (const auto& line : text::split_lines(reply)) {
        if (std::regex_search(line, item_start)) {
            flush();
            numbered = true;
        } else if (!numbered && text::trim(line).empty()) {
            flush();
        }
        current += line + "\n";
    }
    flush();
    return items;
}

std::string to_golden_text(const RenderedPrompt& prompt) {
    std::string out;
    for (const auto& m : prompt.messages) out += fmt::format("=== {} ===\n{}\n", to_string(m.role), m.content);
    if (prompt.turn_plan == TurnPlan::TwoTurn) out += "=== followup user ===\n" + prompt.second_user_message + "\n";
    if (prompt.samples > 1)
        out += fmt::format("=== samples {} temperature {:.1f} ===\n", prompt.samples, prompt.sample_temperature.value_or(1.0));
    return out;
}

}  // namespace contraguard
