#include "contraguard/pipeline.hpp"

#include "contraguard/error.hpp"
#include "contraguard/text_util.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <future>

namespace contraguard {

using json = nlohmann::json;

std::size_t CallLog::add(Exchange exchange, std::string_view stage) {
    exchange.stage = std::string(stage);
    exchanges_.push_back(std::move(exchange));
    return exchanges_.size() - 1;
}

std::size_t CallLog::absorb(CallLog&& other) {
    const std::size_t offset = exchanges_.size();
    for (auto& e : other.exchanges_) exchanges_.push_back(std::move(e));
    other.exchanges_.clear();
    return offset;
}

std::vector<std::string> MitigationConfig::violations() const {
    std::vector<std::string> out;
    if (iterations < 1) out.push_back(fmt::format("iterations must be at least 1, got {}", iterations));
    if (detect_strategy.kind == DetectStrategy::Kind::MultiPath) {
        if (detect_strategy.paths < 1 || detect_strategy.paths % 2 == 0)
            out.push_back(fmt::format("multi-path detection needs an odd path count, got {}", detect_strategy.paths));
        if (detect_strategy.path_temperature < 0 || detect_strategy.path_temperature > 2)
            out.emplace_back("multi-path temperature must be in [0, 2]");
    }
    return out;
}

std::string pair_id(std::string_view phase, int pass, std::size_t sentence, std::size_t context,
                    std::size_t alternative, std::size_t alternatives) {
    std::string id = phase == phase::kMitigate ? fmt::format("{}-p{}-s{}-c{}", phase, pass, sentence, context)
                                               : fmt::format("{}-s{}-c{}", phase, sentence, context);
    if (alternatives > 1) id += fmt::format("-a{}", alternative);
    return id;
}

json verdict_json(const Verdict& v) {
    return {{"contradictory", v.contradictory},
            {"explanation", v.explanation},
            {"raw_conclusion", v.raw_conclusion},
            {"confidence_note", to_string(v.confidence_note)}};
}

json stats_json(const PassStats& s) {
    return {{"pass", s.pass}, {"pairs", s.pairs}, {"flagged", s.flagged}, {"revised", s.revised}, {"dropped", s.dropped}};
}

json pair_event_json(const PairRecord& r) {
    return {{"pair_id", r.id},
            {"phase", r.phase},
            {"pass", r.pass},
            {"source", r.source},
            {"root", r.root},
            {"original", r.pair.original.text},
            {"alternative", r.pair.alternative},
            {"subject", r.pair.context.triple.subject},
            {"predicate", r.pair.context.triple.predicate}};
}

namespace {

void emit(const EventSink& sink, std::string type, json data) {
    if (sink) sink(PipelineEvent{std::move(type), std::move(data)});
}

// Indices of the entries one call added to `log`.
struct Span {
    std::size_t begin;
    std::size_t end;
    std::vector<std::size_t> indices() const {
        std::vector<std::size_t> out;
        for (auto i = begin; i < end; ++i) out.push_back(i);
        return out;
    }
};

// Work for one context: the alternatives generated for it, with their calls
// recorded in a private log so the caller can merge logs in logical order.
struct ContextWork {
    TriggerContext ctx;
    std::vector<std::string> alternatives;
    CallLog log;
    std::optional<Error> error;
};

}  // namespace

Pipeline::Pipeline(ModelClient generator, ModelClient analyzer, std::shared_ptr<const TripleExtractor> extractor,
                   PromptKit prompts)
    : generator_(std::move(generator)),
      analyzer_(std::move(analyzer)),
      extractor_(std::move(extractor)),
      prompts_(std::move(prompts)) {}

Document Pipeline::generate_description(const Task& task, const std::string& document_id, CallLog& log) const {
    auto prompt = prompts_.render_generation(task);
    auto exchange = generator_.complete(prompt.messages);
    auto sentences = split_sentences(exchange.reply.content);
    log.add(std::move(exchange), stage::kGenerate);
    if (sentences.empty())
        throw Error(ErrorCode::EmptyGeneration, "generator returned no sentences for '" + task.text() + "'");
    std::vector<std::string> texts;
    for (auto& s : sentences) texts.push_back(std::move(s.text));
    return make_document(document_id, task, texts, DocumentOrigin::Generated, generator_.endpoint().name);
}

std::vector<std::string> Pipeline::gen_sentence(const TriggerContext& ctx, TriggerStrategy strategy,
                                                CallLog& log) const {
    auto prompt = prompts_.render_trigger(ctx, strategy);
    auto exchange = generator_.complete(prompt.messages);
    const std::string reply = exchange.reply.content;
    log.add(std::move(exchange), stage::kTrigger);

    std::vector<std::string> out;
    switch (strategy) {
        case TriggerStrategy::ClozeTriple:
        case TriggerStrategy::Rephrase:
            if (auto s = first_sentence(reply); !s.empty()) out.push_back(std::move(s));
            break;
        case TriggerStrategy::Continue:
            out = split_enumerated(reply);
            if (out.size() > 2) out.resize(2);
            break;
        case TriggerStrategy::QA: {
            auto questions = split_enumerated(reply);
            if (questions.size() > 2) questions.resize(2);
            for (const auto& q : questions) {
                auto answer = generator_.complete(prompts_.render_qa_answer(ctx, q).messages);
                auto s = first_sentence(answer.reply.content);
                log.add(std::move(answer), stage::kTrigger);
                if (!s.empty()) out.push_back(std::move(s));
            }
            break;
        }
    }
    if (out.empty()) throw Error(ErrorCode::EmptyGeneration, "generator returned no usable sentence");
    return out;
}

std::vector<PairRecord> Pipeline::trigger(const Document& doc, TriggerStrategy strategy, CallLog& log,
                                          const EventSink& sink) const {
    // The prefix never changes here, so every context can be generated at once.
    std::vector<std::vector<std::unique_ptr<ContextWork>>> work(doc.sentences.size());
    std::vector<std::future<void>> pending;
    for (const auto& sentence : doc.sentences) {
        for (auto& ctx : extract_contexts(sentence, doc, *extractor_)) {
            auto item = std::make_unique<ContextWork>();
            item->ctx = std::move(ctx);
            auto* raw = item.get();
            work[sentence.index].push_back(std::move(item));
            pending.push_back(std::async(std::launch::async, [this, raw, strategy] {
                try {
                    raw->alternatives = gen_sentence(raw->ctx, strategy, raw->log);
                } catch (const Error& e) {
                    raw->error = e;
                }
            }));
        }
    }
    for (auto& f : pending) f.get();

    std::vector<PairRecord> records;
    for (std::size_t i = 0; i < work.size(); ++i) {
        for (auto& item : work[i]) {
            const auto k = item->ctx.context_index;
            const auto offset = log.size();
            std::vector<std::size_t> calls;
            for (std::size_t c = 0; c < item->log.size(); ++c) calls.push_back(offset + c);
            log.absorb(std::move(item->log));
            if (item->error) {
                PairRecord r;
                r.id = pair_id(phase::kTrigger, 0, i, k, 0, 1);
                r.phase = phase::kTrigger;
                r.source = r.root = i;
                r.pair = SentencePair{doc.sentences[i], {}, item->ctx};
                r.trigger_calls = calls;
                r.error = item->error->what();
                emit(sink, "error", {{"pair_id", r.id}, {"message", r.error}, {"code", to_string(item->error->code())}});
                records.push_back(std::move(r));
                continue;
            }
            const auto n = item->alternatives.size();
            for (std::size_t j = 0; j < n; ++j) {
                PairRecord r;
                r.id = pair_id(phase::kTrigger, 0, i, k, j, n);
                r.phase = phase::kTrigger;
                r.source = r.root = i;
                r.pair = SentencePair{doc.sentences[i], item->alternatives[j], item->ctx};
                r.trigger_calls = calls;
                emit(sink, "pair_triggered", pair_event_json(r));
                records.push_back(std::move(r));
            }
        }
    }
    return records;
}

Verdict Pipeline::detect(const SentencePair& pair, const DetectStrategy& strategy, CallLog& log) const {
    const auto prompt = prompts_.render_detect(pair, strategy);
    auto two_turn = [&](const CallOptions& options, CallLog& sub) {
        auto first = analyzer_.complete(prompt.messages, options);
        std::string explanation = first.reply.content;
        auto messages = prompt.messages;
        messages.push_back({ChatRole::Assistant, explanation});
        messages.push_back({ChatRole::User, prompt.second_user_message});
        sub.add(std::move(first), stage::kDetect);
        auto second = analyzer_.complete(messages, options);
        Verdict v = parse_verdict(second.reply.content);
        sub.add(std::move(second), stage::kDetect);
        v.explanation = text::trim(explanation);
        return v;
    };

    switch (strategy.kind) {
        case DetectStrategy::Kind::ChainOfThought:
            return two_turn({}, log);
        case DetectStrategy::Kind::DirectAsk: {
            auto ex = analyzer_.complete(prompt.messages);
            Verdict v = parse_verdict(ex.reply.content);
            log.add(std::move(ex), stage::kDetect);
            return v;
        }
        case DetectStrategy::Kind::StepByStep: {
            auto ex = analyzer_.complete(prompt.messages);
            Verdict v = parse_step_by_step(ex.reply.content);
            log.add(std::move(ex), stage::kDetect);
            return v;
        }
        case DetectStrategy::Kind::MultiPath: {
            if (prompt.samples < 1 || prompt.samples % 2 == 0)
                throw Error(ErrorCode::EvenPathCount, fmt::format("multi-path needs an odd path count, got {}", prompt.samples));
            std::vector<CallLog> logs(static_cast<std::size_t>(prompt.samples));
            std::vector<std::future<Verdict>> paths;
            for (int k = 0; k < prompt.samples; ++k) {
                CallOptions options{prompt.sample_temperature, k + 1};
                paths.push_back(std::async(std::launch::async, [&two_turn, options, &sub = logs[k]] {
                    return two_turn(options, sub);
                }));
            }
            std::vector<Verdict> verdicts;
            std::optional<Error> failure;
            for (auto& f : paths) {
                try {
                    verdicts.push_back(f.get());
                } catch (const Error& e) {
                    if (!failure) failure = e;
                }
            }
            if (failure) throw *failure;
            for (auto& sub : logs) log.absorb(std::move(sub));
            return aggregate_multipath(verdicts);
        }
    }
    return {};
}

namespace {

std::string revise_text(const ModelClient& analyzer, const PromptKit& prompts, const SentencePair& pair, CallLog& log) {
    auto ex = analyzer.complete(prompts.render_revise(pair).messages);
    auto text = first_sentence(ex.reply.content);
    log.add(std::move(ex), stage::kRevise);
    return text;
}

}  // namespace

std::string Pipeline::revise(const SentencePair& pair, CallLog& log) const {
    auto text = revise_text(analyzer_, prompts_, pair, log);
    if (text.empty()) throw Error(ErrorCode::EmptyGeneration, "analyzer returned an empty revision");
    return text;
}

std::string Pipeline::mitigate_one(const SentencePair& pair, const DetectStrategy& strategy, CallLog& log) const {
    if (detect(pair, strategy, log).contradictory) return revise(pair, log);
    return pair.original.text;
}

MitigationResult Pipeline::mitigate_iter(const Document& input, const MitigationConfig& cfg, CallLog& log,
                                         const EventSink& sink, const PassHook& hook) const {
    if (auto v = cfg.violations(); !v.empty())
        throw Error(ErrorCode::Validation, "invalid mitigation config: " + text::join(v, "; "));
    if (auto v = validate_document(input); !v.empty())
        throw Error(ErrorCode::Validation, "invalid document: " + text::join(v, "; "));

    MitigationResult result;
    auto& report = result.report;
    Document x = input;
    std::vector<std::size_t> lineage;
    for (std::size_t i = 0; i < x.sentences.size(); ++i) lineage.push_back(i);
    report.versions.push_back(x);
    report.lineage.push_back(lineage);

    auto record_pair = [&](PairRecord r) {
        report.pairs.push_back(std::move(r));
        return &report.pairs.back();
    };

    try {
        for (int pass = 1; pass <= cfg.iterations; ++pass) {
            emit(sink, "pass_started", {{"pass", pass}, {"phase", phase::kMitigate}, {"sentences", x.sentences.size()}});
            PassStats stats{pass};
            std::vector<Sentence> y;
            std::vector<std::size_t> y_lineage;

            for (std::size_t i = 0; i < x.sentences.size(); ++i) {
                const Sentence current{y.size(), x.sentences[i].text};
                auto contexts = extract_contexts(current, x.task, y, *extractor_);

                std::vector<ContextWork> work(contexts.size());
                std::vector<std::future<void>> pending;
                for (std::size_t k = 0; k < contexts.size(); ++k) {
                    work[k].ctx = std::move(contexts[k]);
                    pending.push_back(std::async(std::launch::async, [this, &w = work[k], &cfg] {
                        try {
                            w.alternatives = gen_sentence(w.ctx, cfg.trigger_strategy, w.log);
                        } catch (const Error& e) {
                            w.error = e;
                        }
                    }));
                }
                for (auto& f : pending) f.get();

                std::string text = current.text;
                bool dropped = false;
                for (auto& w : work) {
                    const auto offset = log.size();
                    const auto generated = w.log.size();
                    log.absorb(std::move(w.log));
                    if (w.error) throw *w.error;
                    const auto n = w.alternatives.size();
                    for (std::size_t j = 0; j < n && !dropped; ++j) {
                        PairRecord r;
                        r.id = pair_id(phase::kMitigate, pass, i, w.ctx.context_index, j, n);
                        r.phase = phase::kMitigate;
                        r.pass = pass;
                        r.source = i;
                        r.root = lineage[i];
                        r.pair = SentencePair{Sentence{y.size(), text}, w.alternatives[j], w.ctx};
                        r.trigger_calls = Span{offset, offset + generated}.indices();
                        ++stats.pairs;
                        emit(sink, "pair_triggered", pair_event_json(r));

                        const auto detect_begin = log.size();
                        r.verdict = detect(r.pair, cfg.detect_strategy, log);
                        r.detect_calls = Span{detect_begin, log.size()}.indices();
                        emit(sink, "verdict", json{{"pair_id", r.id}, {"verdict", verdict_json(*r.verdict)}});

                        if (r.verdict->contradictory) {
                            ++stats.flagged;
                            const auto revise_begin = log.size();
                            r.revision = revise_text(analyzer_, prompts_, r.pair, log);
                            r.revise_calls = Span{revise_begin, log.size()}.indices();
                            if (r.revision->empty()) {
                                dropped = true;
                                ++stats.dropped;
                                emit(sink, "drop", {{"pair_id", r.id}, {"pass", pass}, {"source", i}, {"root", r.root},
                                                    {"text", text}, {"reason", "empty_revision"}});
                            } else {
                                ++stats.revised;
                                emit(sink, "revision", {{"pair_id", r.id}, {"pass", pass}, {"source", i},
                                                        {"root", r.root}, {"position", y.size()},
                                                        {"original", text}, {"revised", *r.revision}});
                                text = *r.revision;
                            }
                        }
                        record_pair(std::move(r));
                    }
                    if (dropped) break;
                }
                if (!dropped) {
                    y.push_back(Sentence{y.size(), text});
                    y_lineage.push_back(lineage[i]);
                }
            }

            std::vector<std::string> texts;
            for (auto& s : y) texts.push_back(std::move(s.text));
            x = make_document(fmt::format("{}/p{}", input.id, pass), input.task, texts, DocumentOrigin::Revised,
                              input.generator_id);
            lineage = std::move(y_lineage);
            if (hook) {
                hook(pass, x, lineage);
                for (std::size_t i = 0; i < x.sentences.size(); ++i) x.sentences[i].index = i;
                if (lineage.size() != x.sentences.size())
                    throw Error(ErrorCode::Validation, "pass hook left lineage out of step with the document");
            }
            report.passes.push_back(stats);
            report.versions.push_back(x);
            report.lineage.push_back(lineage);
        }

        if (cfg.drop_remaining) {
            emit(sink, "pass_started", {{"pass", cfg.iterations + 1}, {"phase", phase::kSweep}, {"sentences", x.sentences.size()}});
            PassStats stats{cfg.iterations + 1};
            struct SweepWork {
                ContextWork gen;
                std::vector<std::pair<std::string, Verdict>> verdicts;  // alternative, verdict
                std::vector<std::size_t> detect_sizes;
            };
            std::vector<std::vector<std::unique_ptr<SweepWork>>> work(x.sentences.size());
            std::vector<std::future<void>> pending;
            for (const auto& sentence : x.sentences) {
                for (auto& ctx : extract_contexts(sentence, x, *extractor_)) {
                    auto item = std::make_unique<SweepWork>();
                    item->gen.ctx = std::move(ctx);
                    auto* raw = item.get();
                    work[sentence.index].push_back(std::move(item));
                    pending.push_back(std::async(std::launch::async, [this, raw, &cfg, &sentence] {
                        try {
                            raw->gen.alternatives = gen_sentence(raw->gen.ctx, cfg.trigger_strategy, raw->gen.log);
                            raw->detect_sizes.push_back(raw->gen.log.size());
                            for (const auto& alt : raw->gen.alternatives) {
                                auto v = detect(SentencePair{sentence, alt, raw->gen.ctx}, cfg.detect_strategy, raw->gen.log);
                                raw->verdicts.emplace_back(alt, std::move(v));
                                raw->detect_sizes.push_back(raw->gen.log.size());
                            }
                        } catch (const Error& e) {
                            raw->gen.error = e;
                        }
                    }));
                }
            }
            for (auto& f : pending) f.get();

            std::vector<std::string> kept;
            std::vector<std::size_t> kept_lineage;
            for (std::size_t i = 0; i < x.sentences.size(); ++i) {
                std::optional<std::string> flagged_by;
                for (auto& item : work[i]) {
                    const auto offset = log.size();
                    log.absorb(std::move(item->gen.log));
                    if (item->gen.error) throw *item->gen.error;
                    const auto n = item->verdicts.size();
                    for (std::size_t j = 0; j < n; ++j) {
                        PairRecord r;
                        r.id = pair_id(phase::kSweep, 0, i, item->gen.ctx.context_index, j, n);
                        r.phase = phase::kSweep;
                        r.source = i;
                        r.root = lineage[i];
                        r.pair = SentencePair{x.sentences[i], item->verdicts[j].first, item->gen.ctx};
                        r.trigger_calls = Span{offset, offset + item->detect_sizes.front()}.indices();
                        r.detect_calls = Span{offset + item->detect_sizes[j], offset + item->detect_sizes[j + 1]}.indices();
                        r.verdict = item->verdicts[j].second;
                        ++stats.pairs;
                        emit(sink, "pair_triggered", pair_event_json(r));
                        emit(sink, "verdict", json{{"pair_id", r.id}, {"verdict", verdict_json(*r.verdict)}});
                        if (r.verdict->contradictory) {
                            ++stats.flagged;
                            if (!flagged_by) flagged_by = r.id;
                        }
                        record_pair(std::move(r));
                    }
                }
                if (flagged_by) {
                    ++stats.dropped;
                    emit(sink, "drop", {{"pair_id", *flagged_by}, {"pass", cfg.iterations + 1}, {"source", i},
                                        {"root", lineage[i]}, {"text", x.sentences[i].text}, {"reason", "sweep"}});
                } else {
                    kept.push_back(x.sentences[i].text);
                    kept_lineage.push_back(lineage[i]);
                }
            }
            report.sweep = stats;
            x = make_document(input.id + "/final", input.task, kept, DocumentOrigin::Revised, input.generator_id);
            lineage = std::move(kept_lineage);
        }
    } catch (const Error& e) {
        report.error = e.what();
        emit(sink, "error", {{"message", e.what()}, {"code", to_string(e.code())}});
        result.document = x;
        result.lineage = lineage;
        throw MitigationAborted(e, std::move(result));
    }

    result.document = std::move(x);
    result.lineage = std::move(lineage);
    json passes = json::array();
    for (const auto& s : report.passes) passes.push_back(stats_json(s));
    emit(sink, "done", {{"sentences", result.document.sentences.size()},
                        {"passes", std::move(passes)},
                        {"sweep", report.sweep ? stats_json(*report.sweep) : json(nullptr)}});
    return result;
}

}  // namespace contraguard
