#include "contraguard/error.hpp"
#include "contraguard/pipeline.hpp"

#include "scripted.hpp"

#include <doctest.h>

#include <set>

using namespace contraguard;
using namespace testsupport;

namespace {

Document doc_of(std::vector<std::string> sentences, const std::string& entity = "Alice Smith") {
    return make_document("doc", Task::entity(entity), sentences);
}

std::vector<std::string> texts(const Document& doc) {
    std::vector<std::string> out;
    for (const auto& s : doc.sentences) out.push_back(s.text);
    return out;
}

std::vector<std::string> types(const std::vector<PipelineEvent>& events) {
    std::vector<std::string> out;
    for (const auto& e : events) out.push_back(e.type);
    return out;
}

SentencePair pair_of(const std::string& original, const std::string& alternative) {
    TriggerContext ctx{Task::entity("William T. Freeman"), {}, FactTriple{"He", "was born", std::nullopt},
                       Sentence{0, original}, 0};
    return SentencePair{Sentence{0, original}, alternative, ctx};
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::Validation;
}

}  // namespace

TEST_CASE("generate_description splits the reply") {
    auto world = std::make_shared<ScriptedWorld>();
    auto p = world_pipeline(world);
    CallLog log;
    auto doc = p.generate_description(Task::entity("Alice Smith"), "d", log);
    CHECK(texts(doc) == std::vector<std::string>{"Alice Smith is a painter.", "She was born in Oslo."});
    CHECK(doc.origin == DocumentOrigin::Generated);
    CHECK(doc.generator_id == "scripted-gen");
    REQUIRE(log.size() == 1);
    CHECK(log.exchanges()[0].stage == "generate");
    CHECK(log.exchanges()[0].request.messages.back().content == "Please tell me about Alice Smith.");

    world->description = "  ";
    CHECK(code_of([&] { p.generate_description(Task::entity("Alice Smith"), "d", log); }) == ErrorCode::EmptyGeneration);
}

TEST_CASE("gen_sentence keeps the first sentence or the listed continuations") {
    auto world = std::make_shared<ScriptedWorld>();
    world->alternative = [](const TriggerAsk& a) {
        if (a.kind == "answer") return std::string("He was born in 1960. More text.");
        return std::string("He was born in 1960. He grew up in Ohio.");
    };
    auto p = world_pipeline(world);
    TriggerContext ctx{Task::entity("William T. Freeman"), {Sentence{0, "William T. Freeman is a researcher."}},
                       FactTriple{"He", "was born", std::nullopt}, Sentence{1, "He was born in 1955."}, 0};
    CallLog log;
    CHECK(p.gen_sentence(ctx, TriggerStrategy::ClozeTriple, log) == std::vector<std::string>{"He was born in 1960."});
    CHECK(p.gen_sentence(ctx, TriggerStrategy::Rephrase, log) == std::vector<std::string>{"He was born in 1960."});
    CHECK(p.gen_sentence(ctx, TriggerStrategy::Continue, log) ==
          std::vector<std::string>{"He was born in 1960.", "He was born in 1960."});
    auto qa = p.gen_sentence(ctx, TriggerStrategy::QA, log);
    CHECK(qa == std::vector<std::string>{"He was born in 1960.", "He was born in 1960."});
    // cloze, rephrase, continue, then one question call and two answers.
    CHECK(log.size() == 6);
    for (const auto& e : log.exchanges()) CHECK(e.stage == "trigger");

    world->alternative = [](const TriggerAsk&) { return std::string(""); };
    CHECK(code_of([&] { p.gen_sentence(ctx, TriggerStrategy::ClozeTriple, log); }) == ErrorCode::EmptyGeneration);
}

TEST_CASE("trigger makes one pair per context") {
    auto world = std::make_shared<ScriptedWorld>();
    auto p = world_pipeline(world);
    auto doc = doc_of({"Alice Smith is a painter.", "She was born in Oslo and moved to Bergen in 1990.", "Wow!"});
    CallLog log;
    std::vector<PipelineEvent> events;
    auto pairs = p.trigger(doc, TriggerStrategy::ClozeTriple, log, [&](const PipelineEvent& e) { events.push_back(e); });
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].id == "trigger-s0-c0");
    CHECK(pairs[1].id == "trigger-s1-c0");
    CHECK(pairs[2].id == "trigger-s1-c1");
    CHECK(pairs[1].pair.alternative == "She was born something.");
    CHECK(pairs[2].pair.alternative == "She moved something.");
    CHECK(pairs[2].pair.context.prefix.size() == 1);
    CHECK(log.size() == 3);
    CHECK(world->calls("trigger") == 3);
    CHECK(types(events) == std::vector<std::string>(3, "pair_triggered"));
    for (const auto& r : pairs) CHECK(r.trigger_calls.size() == 1);
    CHECK(pairs[0].trigger_calls[0] != pairs[1].trigger_calls[0]);
}

TEST_CASE("trigger failures become error records") {
    auto world = std::make_shared<ScriptedWorld>();
    world->fail = [](const ChatRequest& r) { return r.messages.back().content.find("(She; was born; _)") != std::string::npos; };
    auto p = world_pipeline(world);
    CallLog log;
    auto pairs = p.trigger(doc_of({"Alice Smith is a painter.", "She was born in Oslo."}), TriggerStrategy::ClozeTriple, log);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].error.empty());
    CHECK_FALSE(pairs[1].error.empty());
    CHECK(pairs[1].pair.alternative.empty());
}

TEST_CASE("detect") {
    auto world = std::make_shared<ScriptedWorld>();
    world->contradictory = [](const std::string& a, const std::string& b) { return a != b; };
    auto p = world_pipeline(world);
    CallLog log;

    SUBCASE("self pair is not contradictory") {
        auto v = p.detect(pair_of("He was born in 1955.", "He was born in 1955."), DetectStrategy::chain_of_thought(), log);
        CHECK_FALSE(v.contradictory);
        CHECK(v.raw_conclusion == "No.");
        CHECK(v.explanation == "The statements agree.");
        CHECK(log.size() == 2);
        CHECK(log.exchanges()[1].request.messages.size() == 3);
    }

    SUBCASE("contradictory pair") {
        auto v = p.detect(pair_of("He was born in 1955.", "He was born in 1960."), DetectStrategy::chain_of_thought(), log);
        CHECK(v.contradictory);
        CHECK(v.confidence_note == ConfidenceNote::Parsed);
    }

    SUBCASE("prose conclusion defaults to no") {
        world->conclusion = [](bool) {
            return std::string("The statements are not contradictory because the second only adds detail.");
        };
        auto v = p.detect(pair_of("The Arkenstone is a jewel.", "The Arkenstone is a gem."), DetectStrategy::chain_of_thought(), log);
        CHECK_FALSE(v.contradictory);
        CHECK(v.confidence_note == ConfidenceNote::AmbiguousDefaultedNo);
    }

    SUBCASE("direct and step-by-step use one call") {
        CHECK(p.detect(pair_of("a.", "b."), DetectStrategy::direct_ask(), log).contradictory);
        CHECK(p.detect(pair_of("a.", "b."), DetectStrategy::step_by_step(), log).contradictory);
        CHECK(log.size() == 2);
        CHECK(world->calls("detect_direct") == 1);
        CHECK(world->calls("detect_step") == 1);
    }

    SUBCASE("multi-path samples independently at the path temperature") {
        auto v = p.detect(pair_of("a.", "b."), DetectStrategy::multi_path(5, 1.0), log);
        CHECK(v.contradictory);
        CHECK(log.size() == 10);
        std::set<int> samples;
        for (const auto& e : log.exchanges()) {
            CHECK(e.request.temperature == 1.0);
            samples.insert(e.request.sample_index);
        }
        CHECK(samples == std::set<int>{1, 2, 3, 4, 5});
        CHECK(code_of([&] { p.detect(pair_of("a.", "b."), DetectStrategy::multi_path(4), log); }) == ErrorCode::EvenPathCount);
    }
}

TEST_CASE("revise and mitigate_one") {
    auto world = std::make_shared<ScriptedWorld>();
    world->contradictory = [](const std::string& a, const std::string& b) { return a != b; };
    world->revise = [](const std::string& original, const std::string&) {
        if (original.find("1955") != std::string::npos) return std::string("He was born in the United States.");
        if (original.find("PlayStation") != std::string::npos)
            return std::string("It is a home video game console. It was developed by Sony.");
        if (original.find("Jorgensen") != std::string::npos) return std::string("");
        return original;
    };
    auto p = world_pipeline(world);
    CallLog log;
    CHECK(p.revise(pair_of("He was born on August 15, 1955, in the United States.", "He was born in 1960."), log) ==
          "He was born in the United States.");
    CHECK(p.revise(pair_of("The PlayStation 4 was released in 2013.", "It was released in 2014."), log) ==
          "It is a home video game console.");
    CHECK(code_of([&] { p.revise(pair_of("Jorgensen won in 1999.", "Jorgensen won in 2001."), log); }) ==
          ErrorCode::EmptyGeneration);

    const auto before = world->calls("revise");
    CHECK(p.mitigate_one(pair_of("He was born in 1955.", "He was born in 1955."), DetectStrategy::chain_of_thought(), log) ==
          "He was born in 1955.");
    CHECK(world->calls("revise") == before);
    CHECK(p.mitigate_one(pair_of("He was born on August 15, 1955, in the United States.", "He was born in 1960."),
                         DetectStrategy::chain_of_thought(), log) == "He was born in the United States.");
    CHECK(world->calls("revise") == before + 1);
}

TEST_CASE("mitigate_iter with no contradictions keeps the document") {
    auto world = std::make_shared<ScriptedWorld>();
    auto p = world_pipeline(world);
    auto doc = doc_of({"Alice Smith is a painter.", "She was born in Oslo."});
    CallLog log;
    std::vector<PipelineEvent> events;
    auto r = p.mitigate_iter(doc, {}, log, [&](const PipelineEvent& e) { events.push_back(e); });
    CHECK(texts(r.document) == texts(doc));
    CHECK(r.lineage == std::vector<std::size_t>{0, 1});
    REQUIRE(r.report.passes.size() == 3);
    for (int k = 0; k < 3; ++k) CHECK(r.report.passes[k] == PassStats{k + 1, 2, 0, 0, 0});
    REQUIRE(r.report.sweep);
    CHECK(*r.report.sweep == PassStats{4, 2, 0, 0, 0});
    CHECK(r.report.versions.size() == 4);
    CHECK(world->calls("revise") == 0);
    CHECK(events.front().type == "pass_started");
    CHECK(events.back().type == "done");
    CHECK(r.report.pairs.size() == 8);
    CHECK(r.report.pairs[0].id == "mitigate-p1-s0-c0");
    CHECK(r.report.pairs.back().id == "sweep-s1-c0");
}

TEST_CASE("mitigate_iter revises a flagged sentence and feeds revisions forward") {
    auto world = std::make_shared<ScriptedWorld>();
    world->contradictory = [](const std::string& original, const std::string&) {
        return original == "She was born in Oslo.";
    };
    world->revise = [](const std::string&, const std::string&) { return std::string("She was born in Norway."); };
    auto p = world_pipeline(world);
    CallLog log;
    MitigationConfig cfg;
    cfg.iterations = 2;
    auto r = p.mitigate_iter(doc_of({"Alice Smith is a painter.", "She was born in Oslo.", "She lives in Bergen."}), cfg, log);
    CHECK(texts(r.document) ==
          std::vector<std::string>{"Alice Smith is a painter.", "She was born in Norway.", "She lives in Bergen."});
    CHECK(r.report.passes[0] == PassStats{1, 3, 1, 1, 0});
    CHECK(r.report.passes[1] == PassStats{2, 3, 0, 0, 0});
    // The third sentence in pass 1 sees the revised second sentence in its prefix.
    const auto& third = r.report.pairs[2];
    CHECK(third.id == "mitigate-p1-s2-c0");
    REQUIRE(third.pair.context.prefix.size() == 2);
    CHECK(third.pair.context.prefix[1].text == "She was born in Norway.");
    CHECK(r.report.pairs[1].revision == std::optional<std::string>("She was born in Norway."));
    CHECK(r.report.pairs[1].revise_calls.size() == 1);
}

TEST_CASE("mitigate_iter drops on empty revision and in the sweep") {
    auto world = std::make_shared<ScriptedWorld>();
    world->contradictory = [](const std::string& original, const std::string&) {
        return original.find("Oslo") != std::string::npos || original.find("Bergen") != std::string::npos;
    };
    world->revise = [](const std::string& original, const std::string&) {
        return original.find("Oslo") != std::string::npos ? std::string("") : original;
    };
    auto p = world_pipeline(world);
    CallLog log;
    std::vector<PipelineEvent> events;
    auto r = p.mitigate_iter(doc_of({"Alice Smith is a painter.", "She was born in Oslo.", "She lives in Bergen."}), {}, log,
                             [&](const PipelineEvent& e) { events.push_back(e); });
    CHECK(texts(r.document) == std::vector<std::string>{"Alice Smith is a painter."});
    CHECK(r.lineage == std::vector<std::size_t>{0});
    CHECK(r.report.passes[0] == PassStats{1, 3, 2, 1, 1});
    CHECK(r.report.passes[1] == PassStats{2, 2, 1, 1, 0});
    CHECK(*r.report.sweep == PassStats{4, 2, 1, 0, 1});
    CHECK(r.report.lineage[1] == std::vector<std::size_t>{0, 2});
    std::vector<std::string> reasons;
    for (const auto& e : events)
        if (e.type == "drop") reasons.push_back(e.data.at("reason"));
    CHECK(reasons == std::vector<std::string>{"empty_revision", "sweep"});
    for (const auto& e : events)
        if (e.type == "drop" && e.data.at("reason") == "sweep") CHECK(e.data.at("root") == 2);
}

TEST_CASE("mitigate_iter without the sweep keeps persistent contradictions") {
    auto world = std::make_shared<ScriptedWorld>();
    world->contradictory = [](const std::string& original, const std::string&) { return original.find("Oslo") != std::string::npos; };
    auto p = world_pipeline(world);
    CallLog log;
    MitigationConfig cfg;
    cfg.drop_remaining = false;
    auto r = p.mitigate_iter(doc_of({"Alice Smith is a painter.", "She was born in Oslo."}), cfg, log);
    CHECK(texts(r.document) == std::vector<std::string>{"Alice Smith is a painter.", "She was born in Oslo."});
    CHECK_FALSE(r.report.sweep);
    CHECK(world->calls("revise") == 3);
}

TEST_CASE("mitigate_iter pass hook can edit the document") {
    auto world = std::make_shared<ScriptedWorld>();
    auto p = world_pipeline(world);
    CallLog log;
    MitigationConfig cfg;
    cfg.iterations = 2;
    cfg.drop_remaining = false;
    std::vector<int> seen;
    auto r = p.mitigate_iter(doc_of({"Alice Smith is a painter.", "She was born in Oslo."}), cfg, log, {},
                             [&](int pass, Document& d, std::vector<std::size_t>& lineage) {
                                 seen.push_back(pass);
                                 if (pass == 1) {
                                     d.sentences.erase(d.sentences.begin());
                                     lineage.erase(lineage.begin());
                                 }
                             });
    CHECK(seen == std::vector<int>{1, 2});
    CHECK(texts(r.document) == std::vector<std::string>{"She was born in Oslo."});
    CHECK(r.lineage == std::vector<std::size_t>{1});
    CHECK(r.report.passes[1].pairs == 1);

    CHECK(code_of([&] {
              p.mitigate_iter(doc_of({"Alice Smith is a painter."}), cfg, log, {},
                              [](int, Document&, std::vector<std::size_t>& lineage) { lineage.push_back(9); });
          }) == ErrorCode::Validation);
}

TEST_CASE("mitigate_iter rejects bad input and reports partial progress on failure") {
    auto world = std::make_shared<ScriptedWorld>();
    auto p = world_pipeline(world);
    CallLog log;
    MitigationConfig bad;
    bad.iterations = 0;
    CHECK(code_of([&] { p.mitigate_iter(doc_of({"A b c."}), bad, log); }) == ErrorCode::Validation);

    int detects = 0;
    world->fail = [&](const ChatRequest& r) {
        return r.messages[0].content.find("Statement 1:") != std::string::npos && ++detects > 4;
    };
    std::vector<PipelineEvent> events;
    try {
        p.mitigate_iter(doc_of({"Alice Smith is a painter.", "She was born in Oslo."}), {}, log,
                        [&](const PipelineEvent& e) { events.push_back(e); });
        FAIL("expected MitigationAborted");
    } catch (const MitigationAborted& e) {
        CHECK(e.code() == ErrorCode::Transport);
        CHECK(e.partial().report.passes.size() == 1);
        CHECK(e.partial().report.error);
        CHECK(events.back().type == "error");
    }
}

TEST_CASE("pair ids") {
    CHECK(pair_id(phase::kTrigger, 0, 3, 1, 0, 1) == "trigger-s3-c1");
    CHECK(pair_id(phase::kMitigate, 2, 0, 0, 1, 2) == "mitigate-p2-s0-c0-a1");
    CHECK(pair_id(phase::kSweep, 0, 4, 0, 0, 1) == "sweep-s4-c0");
}
