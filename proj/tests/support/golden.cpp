#include "golden.hpp"

#include "scripted.hpp"

#include "contraguard/prompts.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <random>

namespace testsupport {

using json = nlohmann::json;

std::filesystem::path fixtures_dir() {
    if (const char* env = std::getenv("CONTRAGUARD_FIXTURES")) return env;
    return CONTRAGUARD_FIXTURES_DIR;
}

namespace {

Task task_of(const json& j) {
    const auto text = j.at("text").get<std::string>();
    return j.at("kind") == "entity" ? Task::entity(text) : Task::free_form(text);
}

std::vector<Sentence> prefix_of(const json& c) {
    std::vector<Sentence> out;
    for (const auto& s : c.value("prefix", json::array())) out.push_back({out.size(), s.get<std::string>()});
    return out;
}

TriggerContext context_of(const json& c) {
    auto prefix = prefix_of(c);
    Sentence sentence{prefix.size(), c.value("sentence", "")};
    FactTriple triple{c.value("subject", "x"), c.value("predicate", "x"), std::nullopt};
    return TriggerContext{task_of(c.at("task")), std::move(prefix), std::move(triple), std::move(sentence), 0};
}

TriggerStrategy trigger_of(const std::string& s) {
    if (s == "cloze") return TriggerStrategy::ClozeTriple;
    if (s == "continue") return TriggerStrategy::Continue;
    if (s == "rephrase") return TriggerStrategy::Rephrase;
    return TriggerStrategy::QA;
}

RenderedPrompt render(const PromptKit& kit, const json& c) {
    const auto kind = c.at("render").get<std::string>();
    if (kind == "trigger") return kit.render_trigger(context_of(c), trigger_of(c.at("strategy")));
    if (kind == "qa_answer") return kit.render_qa_answer(context_of(c), c.at("question"));
    if (kind == "generation") return kit.render_generation(task_of(c.at("task")));
    if (kind == "factuality") {
        auto ctx = context_of(c);
        return kit.render_factuality(*ctx.sentence, c.at("samples").get<std::vector<std::string>>(), ctx.task,
                                     ctx.prefix);
    }
    auto ctx = context_of(c);
    SentencePair pair{*ctx.sentence, c.at("alternative"), ctx};
    if (kind == "revise") return kit.render_revise(pair);
    return kit.render_detect(pair, *detect_strategy_from_string(c.at("strategy").get<std::string>()));
}

}  // namespace

std::vector<std::string> fuzzed_ambiguous_replies(std::size_t n, unsigned seed) {
    static const std::vector<std::string> openers = {"Maybe", "Perhaps", "It", "The", "Both", "Unclear",
                                                     "Possibly", "Not", "Nope", "Yeah", "Yesterday", "Nobody",
                                                     "Hard", "Partially", "Neither", "Certainly"};
    static const std::vector<std::string> words = {"statements", "seem", "to", "differ", "somewhat", "depends",
                                                   "on", "context", "the", "dates", "agree", "sort", "of",
                                                   "difficult", "say", "cannot", "tell"};
    static const std::vector<std::string> noise = {"", "**", "> ", "\"", "(", "- ", "  "};
    std::mt19937 rng(seed);
    auto pick = [&](const std::vector<std::string>& v) { return v[rng() % v.size()]; };
    std::vector<std::string> out;
    while (out.size() < n) {
        std::string reply = pick(noise);
        switch (rng() % 3) {
            case 0:
                reply += pick(openers);
                break;
            case 1:
                reply += rng() % 2 ? "Yes and no" : "No, yes";
                break;
            default:
                reply += "Answer: " + pick(openers);
                break;
        }
        const int extra = static_cast<int>(rng() % 6);
        for (int k = 0; k < extra; ++k) reply += " " + pick(words);
        reply += rng() % 2 ? "." : "";
        if (rng() % 3 == 0) reply += " Yes.";
        out.push_back(std::move(reply));
    }
    return out;
}

std::vector<std::string> fuzzed_malformed_scores(std::size_t n, unsigned seed) {
    static const std::vector<std::string> shapes = {
        "Score: {}0", "Score - {}", "score: {}", "Score:{}/10", "Score: {} out of 10", "The score is {}.",
        "Score: -{}", "Score: {}.5", "Score: {}{}{}", "{}", "Rating: {}", "Score: ten", "Score:",
    };
    std::mt19937 rng(seed);
    std::vector<std::string> out;
    while (out.size() < n) {
        std::string shape = shapes[rng() % shapes.size()];
        std::string line;
        for (char ch : shape) {
            if (ch == '{' || ch == '}') {
                if (ch == '{') line += static_cast<char>('2' + rng() % 8);
                continue;
            }
            line += ch;
        }
        std::string reply;
        if (rng() % 2) reply = "The original statement is plausible.\n";
        reply += line;
        if (rng() % 3 == 0) reply += "\nThanks for asking.";
        out.push_back(std::move(reply));
    }
    return out;
}

std::vector<GoldenResult> render_golden_cases() {
    const auto dir = fixtures_dir() / "prompts";
    std::ifstream in(dir / "cases.json");
    const auto cases = json::parse(in).at("cases");
    PromptKit kit;
    std::vector<GoldenResult> out;
    for (const auto& c : cases) {
        const auto name = c.at("golden").get<std::string>();
        out.push_back({name, slurp(dir / name), to_golden_text(render(kit, c))});
    }
    return out;
}

}  // namespace testsupport
