#include "contraguard/error.hpp"
#include "contraguard/metrics.hpp"

#include <doctest.h>

#include <cmath>

using namespace contraguard;

namespace {

PairRecord pair(const std::string& id, std::size_t root, std::optional<bool> verdict = std::nullopt) {
    PairRecord r;
    r.id = id;
    r.root = root;
    if (verdict) r.verdict = Verdict{*verdict, "", *verdict ? "Yes." : "No.", ConfidenceNote::Parsed};
    return r;
}

GoldLabels gold_of(std::initializer_list<std::pair<std::string, bool>> labels) {
    std::vector<AnnotationRecord> records;
    for (const auto& [id, c] : labels) records.push_back({id, c, std::nullopt, std::nullopt});
    return index_annotations(records);
}

std::vector<bool> bits(const std::string& s) {
    std::vector<bool> out;
    for (char c : s) out.push_back(c == '1');
    return out;
}

}  // namespace

TEST_CASE("prf1 worked example") {
    // TP=5, FP=1, FN=2, TN=2
    auto r = prf1(bits("1111110000"), bits("1111101100"));
    CHECK(r.precision == Fraction{5, 6});
    CHECK(r.recall == Fraction{5, 7});
    CHECK(r.f1 == Fraction{10, 13});
    CHECK(r.precision.value() == doctest::Approx(0.8333).epsilon(1e-4));
}

TEST_CASE("prf1 edge conventions") {
    auto none = prf1(bits("000"), bits("000"));
    CHECK(none.precision == Fraction{1, 1});
    CHECK(none.recall == Fraction{1, 1});
    CHECK(none.f1 == Fraction{1, 1});

    auto missed = prf1(bits("000"), bits("010"));
    CHECK(missed.precision == Fraction{0, 1});
    CHECK(missed.recall == Fraction{0, 1});
    CHECK(missed.f1 == Fraction{0, 1});

    auto false_alarm = prf1(bits("100"), bits("000"));
    CHECK(false_alarm.precision == Fraction{0, 1});
    CHECK(false_alarm.recall == Fraction{1, 1});

    auto empty = prf1({}, {});
    CHECK(empty.precision == Fraction{1, 1});

    try {
        prf1(bits("10"), bits("1"));
        FAIL("expected LengthMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::LengthMismatch);
    }
}

TEST_CASE("trigger frequency counts sentences") {
    std::vector<PairRecord> pairs;
    for (std::size_t i = 0; i < 5; ++i) {
        pairs.push_back(pair("s" + std::to_string(i) + "a", i));
        pairs.push_back(pair("s" + std::to_string(i) + "b", i));
    }
    auto gold = gold_of({{"s0a", false}, {"s0b", false}, {"s1a", false}, {"s1b", false}, {"s2a", true}, {"s2b", true},
                         {"s3a", false}, {"s3b", false}, {"s4a", false}, {"s4b", false}});
    CHECK(trigger_frequency(pairs, gold) == doctest::Approx(0.2));
    CHECK(trigger_frequency({}, gold) == 0.0);

    pairs.push_back(pair("unlabeled", 9));
    try {
        trigger_frequency(pairs, gold);
        FAIL("expected MissingLabel");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingLabel);
    }

    auto failed = pair("failed", 7);
    failed.error = "transport";
    CHECK(trigger_frequency({pairs[0], failed}, gold) == 0.0);
}

TEST_CASE("detection prf1 uses pairs with verdicts") {
    std::vector<PairRecord> pairs = {pair("a", 0, true), pair("b", 1, true), pair("c", 2, false), pair("d", 3)};
    auto gold = gold_of({{"a", true}, {"b", false}, {"c", true}});
    auto r = detection_prf1(pairs, gold);
    CHECK(r.precision == Fraction{1, 2});
    CHECK(r.recall == Fraction{1, 2});
}

TEST_CASE("removed ratio") {
    // Four gold-contradictory pairs on roots 0..3. Root 0 dropped, root 1 revised
    // and clean, root 2 revised but re-triggered, root 3 kept and unchanged.
    EvalView before{{0, 1, 2, 3, 4},
                    {"a.", "b.", "c.", "d.", "e."},
                    {pair("b0", 0), pair("b1", 1), pair("b2", 2), pair("b3", 3), pair("b4", 4)}};
    EvalView after{{1, 2, 3, 4}, {"b2.", "c2.", "d.", "e."}, {pair("a1", 1), pair("a2", 2), pair("a3", 3)}};
    auto gold = gold_of({{"b0", true}, {"b1", true}, {"b2", true}, {"b3", true}, {"b4", false},
                         {"a1", false}, {"a2", true}, {"a3", false}});
    CHECK(removed_ratio(before, after, gold) == doctest::Approx(0.5));

    // Root 3 is also revised cleanly: 3 of 4.
    after.texts[2] = "d2.";
    CHECK(removed_ratio(before, after, gold) == doctest::Approx(0.75));

    auto clean = gold_of({{"b0", false}, {"b1", false}, {"b2", false}, {"b3", false}, {"b4", false},
                          {"a1", false}, {"a2", false}, {"a3", false}});
    CHECK(removed_ratio(before, after, clean) == 1.0);
}

TEST_CASE("informativeness") {
    EvalView before;
    EvalView after;
    for (std::size_t i = 0; i < 10; ++i) {
        before.roots.push_back(i);
        before.texts.push_back("s.");
    }
    before.pairs = {pair("x", 0, true), pair("y", 1, true), pair("z", 2, false)};
    for (std::size_t i = 0; i < 9; ++i) {
        after.roots.push_back(i + 1);
        after.texts.push_back("s.");
    }
    // before: 10 sentences, 2 flagged -> 8 informative; after: 9 sentences, none flagged.
    CHECK(informative_count(before) == 8);
    CHECK(informative_count(after) == 9);
    CHECK(informativeness_ratio(before, after) == doctest::Approx(1.125));

    EvalView all_flagged{{0}, {"s."}, {pair("x", 0, true)}};
    try {
        informativeness_ratio(all_flagged, after);
        FAIL("expected DivisionByZero");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DivisionByZero);
    }
}

TEST_CASE("perplexity increase") {
    FunctionScorer by_length([](const std::string& t) { return static_cast<double>(t.size()) / 100.0; });
    const std::string before(100, 'a');
    const std::string after(144, 'a');
    CHECK(perplexity_increase(before, after, by_length) == doctest::Approx(0.44));
    HttpPerplexityScorer down("http://127.0.0.1:1/score", 200);
    try {
        perplexity_increase(before, after, down);
        FAIL("expected ScorerUnavailable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ScorerUnavailable);
    }
}

TEST_CASE("token cost multiples") {
    std::vector<CostEntry> entries = {
        {"generate", "generate", Usage{9, 250}},
        {"trigger", "mitigate", Usage{5000, 461}},
        {"detect", "mitigate", Usage{12000, 1000}},
        {"revise", "mitigate", Usage{1800, 200}},
        {"detect", "mitigate", std::nullopt},
    };
    auto cost = token_cost(entries);
    CHECK(cost.stages.at("generate").total() == 259);
    CHECK(cost.phases.at("mitigate").total() == 20461);
    CHECK(cost.stages.at("detect").unknown_calls == 1);
    CHECK(cost.stages.at("detect").calls == 2);
    double mitigation = 0;
    for (const auto& [stage, m] : cost.multiples)
        if (stage != "generate") mitigation += m;
    CHECK(std::round(mitigation * 10) / 10 == 79.0);
    CHECK(cost.multiples.at("generate") == 1.0);

    auto empty = token_cost({});
    CHECK(empty.stages.empty());
    CHECK(empty.multiples.empty());

    auto no_generation = token_cost({{"detect", "detect", Usage{1, 1}}});
    CHECK(no_generation.multiples.empty());
}

TEST_CASE("metrics json is byte stable") {
    MetricsReport r;
    r.trigger_frequency = 0.2;
    r.detection = prf1(bits("1111110000"), bits("1111101100"));
    r.removed_ratio = 0.75;
    r.informativeness_ratio = 1.125;
    r.token_cost = token_cost({{"generate", "generate", Usage{9, 250}}, {"detect", "detect", Usage{100, 10}}});
    r.notes.push_back("perplexity skipped: no scorer");
    const auto a = metrics_json(r).dump();
    const auto b = metrics_json(r).dump();
    CHECK(a == b);
    CHECK(a.find("\"precision\":0.8333") != std::string::npos);
    CHECK(a.find("\"perplexity_increase\":null") != std::string::npos);

    auto table = metrics_table(r);
    CHECK(table.find("trigger frequency") != std::string::npos);
    CHECK(table.find("20.0%") != std::string::npos);
    CHECK(table.find("n/a") != std::string::npos);
    CHECK(round4(0.123449) == 0.1234);
    CHECK(round4(0.12345) == doctest::Approx(0.1235));
}
