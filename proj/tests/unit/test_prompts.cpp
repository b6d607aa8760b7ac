#include "contraguard/error.hpp"
#include "contraguard/prompts.hpp"

#include "golden.hpp"
#include "scripted.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>

using namespace contraguard;
using namespace testsupport;

namespace {

TriggerContext freeman_context() {
    return TriggerContext{Task::entity("William T. Freeman"),
                          {Sentence{0, "William T. Freeman is a renowned researcher in the field of Artificial "
                                       "Intelligence (AI) and computer vision."}},
                          FactTriple{"He", "was born", std::nullopt},
                          Sentence{1, "He was born on August 15, 1955, in the United States."},
                          0};
}

SentencePair freeman_pair() { return SentencePair{*freeman_context().sentence, "He was born in 1960.", freeman_context()}; }

std::string user_text(const RenderedPrompt& p) { return p.messages.back().content; }

void check_verdict(std::string_view reply, bool contradictory, ConfidenceNote note) {
    CAPTURE(reply);
    auto v = parse_verdict(reply);
    CHECK(v.contradictory == contradictory);
    CHECK(v.confidence_note == note);
    CHECK(v.raw_conclusion == reply);
}

Verdict vote(bool yes, ConfidenceNote note = ConfidenceNote::Parsed) { return Verdict{yes, "e", yes ? "Yes." : "No.", note}; }

}  // namespace

TEST_CASE("rendered prompts match the golden files byte for byte") {
    auto results = render_golden_cases();
    CHECK(results.size() >= 12);
    for (const auto& r : results) {
        CAPTURE(r.name);
        CHECK_FALSE(r.expected.empty());
        CHECK(r.actual == r.expected);
    }
}

TEST_CASE("task header") {
    CHECK(render_task_header(Task::entity("  Angela Merkel ")) == "Here is the start of a description about Angela Merkel");
    CHECK(render_task_header(Task::free_form("Why is the sky blue?")) ==
          "Here is the start of an answer to the prompt \"Why is the sky blue?\"");
    CHECK(generation_request(Task::entity("William T. Freeman")) == "Please tell me about William T. Freeman.");
    CHECK(generation_request(Task::free_form("Why is the sky blue?")) == "Why is the sky blue?");
}

TEST_CASE("trigger prompt shape") {
    PromptKit kit;
    auto cloze = kit.render_trigger(freeman_context(), TriggerStrategy::ClozeTriple);
    CHECK(cloze.turn_plan == TurnPlan::SingleTurn);
    CHECK(cloze.messages.front().role == ChatRole::System);
    CHECK(cloze.messages.back().role == ChatRole::User);
    CHECK(conversation_violations(cloze.messages).empty());
    CHECK(user_text(cloze).find("(He; was born; _)") != std::string::npos);
    // Demonstrations precede the query as user/assistant pairs.
    CHECK(cloze.messages.size() == 2 + 2 * kit.demonstrations().size());

    auto empty = freeman_context();
    empty.prefix.clear();
    auto none = kit.render_trigger(empty, TriggerStrategy::ClozeTriple);
    CHECK(user_text(none).find("about William T. Freeman:\n\n") != std::string::npos);
}

TEST_CASE("detect prompts differ only in the statement blocks when swapped") {
    PromptKit kit;
    auto pair = freeman_pair();
    SentencePair swapped{Sentence{1, pair.alternative}, pair.original.text, pair.context};
    auto a = user_text(kit.render_detect(pair, DetectStrategy::chain_of_thought()));
    auto b = user_text(kit.render_detect(swapped, DetectStrategy::chain_of_thought()));
    CHECK(a != b);
    auto strip = [](std::string s) {
        auto from = s.find("Statement 1:\n");
        auto to = s.find("\n\nPlease explain");
        return s.substr(0, from) + s.substr(to);
    };
    CHECK(strip(a) == strip(b));
    CHECK(between(a, "Statement 1:\n", "\n\n") == between(b, "Statement 2:\n", "\n\n"));
}

TEST_CASE("detect turn plans") {
    PromptKit kit;
    auto pair = freeman_pair();
    auto cot = kit.render_detect(pair, DetectStrategy::chain_of_thought());
    CHECK(cot.turn_plan == TurnPlan::TwoTurn);
    CHECK(cot.second_user_message == "Please conclude whether the statements are contradictory with Yes or No.");
    CHECK(cot.samples == 1);

    auto direct = kit.render_detect(pair, DetectStrategy::direct_ask());
    CHECK(direct.turn_plan == TurnPlan::SingleTurn);
    auto step = kit.render_detect(pair, DetectStrategy::step_by_step());
    CHECK(step.turn_plan == TurnPlan::SingleTurn);

    auto multi = kit.render_detect(pair, DetectStrategy::multi_path());
    CHECK(multi.turn_plan == TurnPlan::TwoTurn);
    CHECK(multi.samples == 5);
    REQUIRE(multi.sample_temperature);
    CHECK(*multi.sample_temperature == 1.0);
    CHECK(multi.messages == cot.messages);
}

TEST_CASE("revise prompt") {
    PromptKit kit;
    auto r = kit.render_revise(freeman_pair());
    CHECK(r.turn_plan == TurnPlan::SingleTurn);
    CHECK(between(user_text(r), "Original Sentence:\n", "\n\n") == "He was born on August 15, 1955, in the United States.");
    CHECK(user_text(r).find("He was born in 1960.") != std::string::npos);
}

TEST_CASE("strategy names") {
    CHECK(detect_strategy_from_string("cot") == DetectStrategy::chain_of_thought());
    CHECK(detect_strategy_from_string("direct") == DetectStrategy::direct_ask());
    CHECK(detect_strategy_from_string("step") == DetectStrategy::step_by_step());
    CHECK(detect_strategy_from_string("multipath") == DetectStrategy::multi_path());
    CHECK_FALSE(detect_strategy_from_string("guess"));
    for (auto s : {TriggerStrategy::ClozeTriple, TriggerStrategy::Continue, TriggerStrategy::Rephrase, TriggerStrategy::QA})
        CHECK(trigger_strategy_from_string(to_string(s)) == s);
}

TEST_CASE("parse_verdict examples") {
    check_verdict("Yes.", true, ConfidenceNote::Parsed);
    check_verdict("Yes, the statements are contradictory.", true, ConfidenceNote::Parsed);
    check_verdict("No.", false, ConfidenceNote::Parsed);
    check_verdict("no, they agree", false, ConfidenceNote::Parsed);
    check_verdict("**Yes**", true, ConfidenceNote::Parsed);
    check_verdict("Answer: No.", false, ConfidenceNote::Parsed);
    check_verdict("Conclusion: yes", true, ConfidenceNote::Parsed);
    check_verdict("It depends on interpretation.", false, ConfidenceNote::AmbiguousDefaultedNo);
    check_verdict("Yes and no.", false, ConfidenceNote::AmbiguousDefaultedNo);
    check_verdict("Yesterday it was different.", false, ConfidenceNote::AmbiguousDefaultedNo);
    check_verdict("", false, ConfidenceNote::AmbiguousDefaultedNo);
    check_verdict("   \n", false, ConfidenceNote::AmbiguousDefaultedNo);
}

TEST_CASE("parse_verdict agrees with the labeled corpus") {
    std::ifstream in(fixtures_dir() / "verdicts.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        auto note = j.at("note") == "parsed" ? ConfidenceNote::Parsed : ConfidenceNote::AmbiguousDefaultedNo;
        check_verdict(j.at("reply").get<std::string>(), j.at("contradictory").get<bool>(), note);
        ++n;
    }
    CHECK(n == 40);
}

TEST_CASE("fuzzed ambiguous replies default to no") {
    for (const auto& reply : fuzzed_ambiguous_replies(200, 7)) check_verdict(reply, false, ConfidenceNote::AmbiguousDefaultedNo);
}

TEST_CASE("parse_step_by_step uses the concluding segment") {
    auto v = parse_step_by_step("Step 1: compare dates.\nStep 2: 1955 vs 1960.\nConclusion: Yes, they conflict.");
    CHECK(v.contradictory);
    CHECK(v.confidence_note == ConfidenceNote::Parsed);
    CHECK_FALSE(parse_step_by_step("Step 1: both say he was born.\nNo.").contradictory);
    CHECK(parse_step_by_step("Step 1: hmm.").confidence_note == ConfidenceNote::AmbiguousDefaultedNo);
}

TEST_CASE("multipath majority") {
    CHECK(aggregate_multipath({vote(true), vote(true), vote(false)}).contradictory);
    CHECK_FALSE(aggregate_multipath({vote(true), vote(false), vote(false)}).contradictory);
    CHECK_FALSE(aggregate_multipath({vote(true), vote(true), vote(false, ConfidenceNote::AmbiguousDefaultedNo),
                                     vote(false, ConfidenceNote::AmbiguousDefaultedNo), vote(false)})
                    .contradictory);
    CHECK(aggregate_multipath({vote(true)}).contradictory);
    for (std::size_t n : {0u, 2u, 4u}) {
        std::vector<Verdict> even(n, vote(true));
        try {
            aggregate_multipath(even);
            FAIL("expected EvenPathCount");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EvenPathCount);
        }
    }
}

TEST_CASE("parse_factuality") {
    CHECK(parse_factuality("Score: 0") == 0);
    CHECK(parse_factuality("Score: 10") == 10);
    CHECK(parse_factuality("The statement is consistent.\nScore: 7.") == 7);
    CHECK(parse_factuality("Score:4\n\n") == 4);
    for (const auto& reply : {std::string("Score: 11"), std::string("no score here"), std::string("")}) {
        CAPTURE(reply);
        CHECK_THROWS_AS(parse_factuality(reply), Error);
    }
    for (const auto& reply : fuzzed_malformed_scores(50, 11)) {
        CAPTURE(reply);
        try {
            parse_factuality(reply);
            FAIL("expected Parse");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::Parse);
        }
    }
}

TEST_CASE("first_sentence and split_enumerated") {
    CHECK(first_sentence("1. He was born in 1960. He grew up in Ohio.") == "He was born in 1960.");
    CHECK(first_sentence("- She studied physics.") == "She studied physics.");
    CHECK(first_sentence("  ") == "");
    CHECK(split_enumerated("1. He was born in 1960.\n\n2. He was born in Ohio.") ==
          std::vector<std::string>{"He was born in 1960.", "He was born in Ohio."});
    CHECK(split_enumerated("1) When was he born?\n2) Where was he born?") ==
          std::vector<std::string>{"When was he born?", "Where was he born?"});
    CHECK(split_enumerated("First one.\n\nSecond one.") == std::vector<std::string>{"First one.", "Second one."});
    CHECK(split_enumerated("").empty());
}
