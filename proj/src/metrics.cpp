#include "contraguard/metrics.hpp"

#include "contraguard/error.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <cmath>
#include <numeric>
#include <regex>
#include <set>

namespace contraguard {

using json = nlohmann::json;

Fraction Fraction::reduced() const {
    long g = std::gcd(num, den);
    if (g == 0) return *this;
    return {num / g, den / g};
}

bool Fraction::operator==(const Fraction& o) const { return num * o.den == o.num * den; }

namespace {

Fraction frac(long num, long den) { return Fraction{num, den}.reduced(); }

const AnnotationRecord& label_for(const GoldLabels& gold, const std::string& pair_id) {
    auto it = gold.find(pair_id);
    if (it == gold.end()) throw Error(ErrorCode::MissingLabel, "no gold label for pair " + pair_id);
    return it->second;
}

bool usable(const PairRecord& r) { return r.error.empty(); }

}  // namespace

PRF prf1(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
    if (predicted.size() != gold.size())
        throw Error(ErrorCode::LengthMismatch,
                    fmt::format("{} predictions for {} gold labels", predicted.size(), gold.size()));
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (predicted[i] && gold[i]) ++tp;
        else if (predicted[i]) ++fp;
        else if (gold[i]) ++fn;
    }
    PRF out;
    if (tp + fp > 0) out.precision = frac(tp, tp + fp);
    else out.precision = fn == 0 ? Fraction{1, 1} : Fraction{0, 1};
    out.recall = tp + fn > 0 ? frac(tp, tp + fn) : Fraction{1, 1};
    const auto& p = out.precision;
    const auto& r = out.recall;
    const long den = p.num * r.den + r.num * p.den;
    out.f1 = den == 0 ? Fraction{0, 1} : frac(2 * p.num * r.num, den);
    return out;
}

GoldLabels index_annotations(const std::vector<AnnotationRecord>& records) {
    GoldLabels out;
    for (const auto& r : records) out[r.pair_id] = r;
    return out;
}

double trigger_frequency(const std::vector<PairRecord>& pairs, const GoldLabels& gold) {
    std::set<std::size_t> with_pairs;
    std::set<std::size_t> contradictory;
    for (const auto& p : pairs) {
        if (!usable(p)) continue;
        with_pairs.insert(p.root);
        if (label_for(gold, p.id).gold_contradictory) contradictory.insert(p.root);
    }
    if (with_pairs.empty()) return 0.0;
    return static_cast<double>(contradictory.size()) / static_cast<double>(with_pairs.size());
}

PRF detection_prf1(const std::vector<PairRecord>& pairs, const GoldLabels& gold) {
    std::vector<bool> predicted, labels;
    for (const auto& p : pairs) {
        if (!usable(p) || !p.verdict) continue;
        predicted.push_back(p.verdict->contradictory);
        labels.push_back(label_for(gold, p.id).gold_contradictory);
    }
    return prf1(predicted, labels);
}

double removed_ratio(const EvalView& before, const EvalView& after, const GoldLabels& gold) {
    std::map<std::size_t, std::string> before_text, after_text;
    for (std::size_t i = 0; i < before.roots.size(); ++i) before_text[before.roots[i]] = before.texts.at(i);
    for (std::size_t i = 0; i < after.roots.size(); ++i) after_text[after.roots[i]] = after.texts.at(i);
    std::set<std::size_t> still_contradictory;
    for (const auto& p : after.pairs)
        if (usable(p) && label_for(gold, p.id).gold_contradictory) still_contradictory.insert(p.root);

    long total = 0, removed = 0;
    for (const auto& p : before.pairs) {
        if (!usable(p) || !label_for(gold, p.id).gold_contradictory) continue;
        ++total;
        auto it = after_text.find(p.root);
        if (it == after_text.end()) {
            ++removed;
        } else if (it->second != before_text[p.root] && still_contradictory.count(p.root) == 0) {
            ++removed;
        }
    }
    return total == 0 ? 1.0 : static_cast<double>(removed) / static_cast<double>(total);
}

std::size_t informative_count(const EvalView& view) {
    std::set<std::size_t> flagged;
    for (const auto& p : view.pairs)
        if (usable(p) && p.flagged()) flagged.insert(p.root);
    std::size_t n = 0;
    for (auto root : view.roots)
        if (flagged.count(root) == 0) ++n;
    return n;
}

double informativeness_ratio(const EvalView& before, const EvalView& after) {
    const auto b = informative_count(before);
    if (b == 0) throw Error(ErrorCode::DivisionByZero, "original text has no informative sentence");
    return static_cast<double>(informative_count(after)) / static_cast<double>(b);
}

HttpPerplexityScorer::HttpPerplexityScorer(std::string url, int timeout_ms)
    : url_(std::move(url)), timeout_ms_(timeout_ms) {}

double HttpPerplexityScorer::score(const std::string& text) const {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url_, m, url_re)) throw Error(ErrorCode::Validation, "malformed scorer URL: " + url_);
    httplib::Client client(m[1].str());
    client.set_connection_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    auto res = client.Post(m[2].matched ? m[2].str() : "/", json{{"text", text}}.dump(), "application/json");
    if (!res) throw Error(ErrorCode::ScorerUnavailable, "perplexity scorer: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw Error(ErrorCode::ScorerUnavailable, fmt::format("perplexity scorer: HTTP {}", res->status));
    try {
        double v = json::parse(res->body).at("perplexity").get<double>();
        if (!(v > 0)) throw Error(ErrorCode::ScorerUnavailable, "perplexity scorer returned a non-positive value");
        return v;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ScorerUnavailable, std::string("perplexity scorer: ") + e.what());
    }
}

double perplexity_increase(const std::string& before_text, const std::string& after_text,
                           const PerplexityScorer& scorer) {
    return scorer.score(after_text) - scorer.score(before_text);
}

TokenCost token_cost(const std::vector<CostEntry>& entries) {
    TokenCost out;
    auto add = [](StageCost& c, const CostEntry& e) {
        ++c.calls;
        if (!e.usage) {
            ++c.unknown_calls;
            return;
        }
        c.prompt_tokens += e.usage->prompt_tokens;
        c.completion_tokens += e.usage->completion_tokens;
    };
    for (const auto& e : entries) {
        add(out.stages[e.stage], e);
        if (!e.phase.empty()) add(out.phases[e.phase], e);
    }
    auto gen = out.stages.find(stage::kGenerate);
    if (gen != out.stages.end() && gen->second.total() > 0) {
        for (const auto& [name, cost] : out.stages)
            out.multiples[name] = static_cast<double>(cost.total()) / static_cast<double>(gen->second.total());
    }
    return out;
}

double round4(double v) { return std::round(v * 10000.0) / 10000.0; }

namespace {

json opt(const std::optional<double>& v) { return v ? json(round4(*v)) : json(nullptr); }

json cost_json(const StageCost& c) {
    return {{"prompt_tokens", c.prompt_tokens},
            {"completion_tokens", c.completion_tokens},
            {"total_tokens", c.total()},
            {"calls", c.calls},
            {"unknown_calls", c.unknown_calls}};
}

std::string cell(const std::optional<double>& v, bool percent) {
    if (!v) return "n/a";
    return percent ? fmt::format("{:.1f}%", *v * 100.0) : fmt::format("{:.4f}", *v);
}

}  // namespace

json metrics_json(const MetricsReport& r) {
    json detection = nullptr;
    if (r.detection)
        detection = {{"precision", round4(r.detection->precision.value())},
                     {"recall", round4(r.detection->recall.value())},
                     {"f1", round4(r.detection->f1.value())}};
    json stages = json::object(), phases = json::object(), multiples = json::object();
    for (const auto& [k, v] : r.token_cost.stages) stages[k] = cost_json(v);
    for (const auto& [k, v] : r.token_cost.phases) phases[k] = cost_json(v);
    for (const auto& [k, v] : r.token_cost.multiples) multiples[k] = round4(v);
    return {{"schema", "contraguard/v1"},
            {"trigger_frequency", opt(r.trigger_frequency)},
            {"detection", detection},
            {"removed_ratio", opt(r.removed_ratio)},
            {"informativeness_ratio", opt(r.informativeness_ratio)},
            {"perplexity_increase", opt(r.perplexity_increase)},
            {"token_cost", {{"stages", stages}, {"phases", phases}, {"multiples", multiples}}},
            {"notes", r.notes}};
}

std::string metrics_table(const MetricsReport& r) {
    std::vector<std::pair<std::string, std::string>> rows = {
        {"trigger frequency", cell(r.trigger_frequency, true)},
        {"precision", r.detection ? cell(r.detection->precision.value(), true) : "n/a"},
        {"recall", r.detection ? cell(r.detection->recall.value(), true) : "n/a"},
        {"f1", r.detection ? cell(r.detection->f1.value(), true) : "n/a"},
        {"self-contra. removed", cell(r.removed_ratio, true)},
        {"informative facts retained", cell(r.informativeness_ratio, true)},
        {"perplexity increased", cell(r.perplexity_increase, false)},
    };
    for (const auto& [stage, mult] : r.token_cost.multiples)
        rows.emplace_back("tokens " + stage, fmt::format("{} ({:.1f}x)", r.token_cost.stages.at(stage).total(), mult));
    std::size_t width = 0;
    for (const auto& row : rows) width = std::max(width, row.first.size());
    std::string out;
    for (const auto& [name, value] : rows) out += fmt::format("{:<{}}  {}\n", name, width, value);
    return out;
}

}  // namespace contraguard
