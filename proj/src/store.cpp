#include "contraguard/store.hpp"

#include "contraguard/error.hpp"
#include "contraguard/serialize.hpp"
#include "contraguard/text_util.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <map>
#include <random>

namespace contraguard {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kConfigFile = "config.json";
constexpr const char* kDocumentFile = "document.jsonl";
constexpr const char* kPairsFile = "pairs.jsonl";
constexpr const char* kTranscriptsFile = "transcripts.jsonl";
constexpr const char* kReportFile = "report.json";
constexpr const char* kCassetteFile = "cassette.jsonl";

json tx_ids(const std::vector<std::size_t>& calls, std::size_t base) {
    json out = json::array();
    for (auto c : calls) out.push_back(transcript_id(base + c));
    return out;
}

std::vector<std::size_t> tx_indices(const json& ids) {
    std::vector<std::size_t> out;
    for (const auto& id : ids) {
        auto s = id.get<std::string>();
        if (s.rfind("tx-", 0) != 0) throw Error(ErrorCode::Parse, "bad transcript id " + s);
        out.push_back(std::stoul(s.substr(3)) - 1);
    }
    return out;
}

std::optional<Usage> usage_from(const json& j) {
    if (!j.is_object()) return std::nullopt;
    return Usage{j.value("prompt_tokens", 0L), j.value("completion_tokens", 0L)};
}

void write_file(const fs::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
        out << content;
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot replace " + path.string() + ": " + ec.message());
}

}  // namespace

json run_config_json(const RunConfig& c) {
    return {{"task", c.task},
            {"generator", c.generator},
            {"analyzer", c.analyzer},
            {"extractor", c.extractor},
            {"mitigation", c.mitigation}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    c.task = parse_as<Task>(j.at("task"), "task");
    if (j.contains("generator")) c.generator = parse_as<ModelEndpoint>(j["generator"], "generator");
    if (j.contains("analyzer")) c.analyzer = parse_as<ModelEndpoint>(j["analyzer"], "analyzer");
    if (j.contains("extractor")) c.extractor = parse_as<ExtractorConfig>(j["extractor"], "extractor");
    if (j.contains("mitigation")) c.mitigation = parse_as<MitigationConfig>(j["mitigation"], "mitigation");
    return c;
}

std::string_view to_string(DecisionKind kind) { return kind == DecisionKind::Accept ? "accept" : "reject"; }

std::optional<DecisionKind> decision_from_string(std::string_view s) {
    if (s == "accept") return DecisionKind::Accept;
    if (s == "reject") return DecisionKind::Reject;
    return std::nullopt;
}

std::string transcript_id(std::size_t index) { return fmt::format("tx-{:06d}", index + 1); }

std::vector<json> read_jsonl(const fs::path& path, std::vector<std::string>* warnings) {
    std::vector<json> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t start = 0, lineno = 0;
    while (start < content.size()) {
        auto end = content.find('\n', start);
        const bool terminated = end != std::string::npos;
        if (!terminated) end = content.size();
        ++lineno;
        std::string_view line(content.data() + start, end - start);
        start = end + 1;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            if (!terminated || start >= content.size()) {
                auto msg = fmt::format("{}:{}: ignoring incomplete last line", path.string(), lineno);
                spdlog::warn("{}", msg);
                if (warnings) warnings->push_back(msg);
                break;
            }
            throw Error(ErrorCode::Parse, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        }
    }
    return out;
}

std::vector<PairRecord> RunRecord::pairs_in_phase(std::string_view phase) const {
    std::vector<PairRecord> out;
    for (const auto& p : pairs)
        if (p.phase == phase) out.push_back(p);
    return out;
}

const DocumentVersion* RunRecord::latest(std::string_view label_prefix) const {
    for (auto it = documents.rbegin(); it != documents.rend(); ++it)
        if (it->label.rfind(label_prefix, 0) == 0) return &*it;
    return nullptr;
}

RunDir::RunDir(fs::path path, std::string run_id) : path_(std::move(path)), run_id_(std::move(run_id)) {
    transcripts_ = read_jsonl(path_ / kTranscriptsFile).size();
    for (const auto& e : read_jsonl(path_ / kCassetteFile))
        cassette_fingerprints_.insert(e.value("fingerprint", std::string{}));
}

void RunDir::append_line(const std::string& file, const json& j) {
    std::ofstream out(path_ / file, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + (path_ / file).string());
    out << j.dump() << '\n';
}

void RunDir::append_document(const DocumentVersion& v) {
    std::lock_guard lock(mu_);
    append_line(kDocumentFile, {{"schema", kSchema}, {"label", v.label}, {"document", v.document}, {"lineage", v.lineage}});
}

std::size_t RunDir::append_log(std::string_view phase, const CallLog& log) {
    const std::size_t base = transcripts_;
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& ex = log.exchanges()[i];
        json usage = ex.reply.usage ? json{{"prompt_tokens", ex.reply.usage->prompt_tokens},
                                           {"completion_tokens", ex.reply.usage->completion_tokens}}
                                    : json(nullptr);
        append_line(kTranscriptsFile, {{"schema", kSchema},
                                       {"id", transcript_id(base + i)},
                                       {"stage", ex.stage},
                                       {"phase", phase},
                                       {"request", request_to_json(ex.request)},
                                       {"reply", ex.reply.content},
                                       {"usage", usage},
                                       {"fingerprint", ex.fingerprint}});
        if (cassette_fingerprints_.insert(ex.fingerprint).second)
            append_line(kCassetteFile, cassette_entry_to_json(CassetteEntry{ex.fingerprint, request_to_json(ex.request),
                                                                            ex.reply.content, ex.reply.usage}));
    }
    transcripts_ += log.size();
    return base;
}

std::size_t RunDir::append_phase(std::string_view phase, const CallLog& log, const std::vector<PairRecord>& pairs) {
    std::lock_guard lock(mu_);
    const auto base = append_log(phase, log);
    for (const auto& p : pairs) {
        append_line(kPairsFile, {{"schema", kSchema},
                                 {"type", "pair"},
                                 {"pair_id", p.id},
                                 {"phase", p.phase},
                                 {"pass", p.pass},
                                 {"source", p.source},
                                 {"root", p.root},
                                 {"pair", p.pair},
                                 {"trigger_calls", tx_ids(p.trigger_calls, base)},
                                 {"error", p.error}});
        if (p.verdict)
            append_line(kPairsFile, {{"schema", kSchema},
                                     {"type", "verdict"},
                                     {"pair_id", p.id},
                                     {"verdict", *p.verdict},
                                     {"detect_calls", tx_ids(p.detect_calls, base)}});
        if (p.revision)
            append_line(kPairsFile, {{"schema", kSchema},
                                     {"type", "revision"},
                                     {"pair_id", p.id},
                                     {"revision", *p.revision},
                                     {"revise_calls", tx_ids(p.revise_calls, base)}});
    }
    return base;
}

std::size_t RunDir::append_verdicts(const CallLog& log, const std::vector<PairRecord>& pairs) {
    std::lock_guard lock(mu_);
    const auto base = append_log(phase::kTrigger, log);
    for (const auto& p : pairs) {
        if (!p.verdict) continue;
        append_line(kPairsFile, {{"schema", kSchema},
                                 {"type", "verdict"},
                                 {"pair_id", p.id},
                                 {"verdict", *p.verdict},
                                 {"detect_calls", tx_ids(p.detect_calls, base)}});
    }
    return base;
}

void RunDir::append_decision(const Decision& d) {
    std::lock_guard lock(mu_);
    append_line(kPairsFile,
                {{"schema", kSchema}, {"type", "decision"}, {"pair_id", d.pair_id}, {"decision", to_string(d.kind)}});
}

void RunDir::write_report(const json& report) {
    std::lock_guard lock(mu_);
    write_file(path_ / kReportFile, report.dump(2) + "\n");
}

RunRecord RunDir::load() const {
    std::lock_guard lock(mu_);
    RunRecord run;
    run.run_id = run_id_;
    {
        std::ifstream in(path_ / kConfigFile);
        if (!in) throw Error(ErrorCode::Io, "missing " + (path_ / kConfigFile).string());
        try {
            run.config = json::parse(in);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Parse, std::string("config.json: ") + e.what());
        }
    }
    for (const auto& j : read_jsonl(path_ / kDocumentFile, &run.warnings)) {
        run.documents.push_back(DocumentVersion{j.at("label").get<std::string>(),
                                                parse_as<Document>(j.at("document"), "document"),
                                                j.at("lineage").get<std::vector<std::size_t>>()});
    }

    std::map<std::string, std::size_t> by_id;
    for (const auto& j : read_jsonl(path_ / kPairsFile, &run.warnings)) {
        const auto type = j.at("type").get<std::string>();
        const auto id = j.at("pair_id").get<std::string>();
        if (type == "pair") {
            PairRecord r;
            r.id = id;
            r.phase = j.at("phase").get<std::string>();
            r.pass = j.value("pass", 0);
            r.source = j.value("source", std::size_t{0});
            r.root = j.value("root", std::size_t{0});
            r.pair = parse_as<SentencePair>(j.at("pair"), "pair");
            r.trigger_calls = tx_indices(j.value("trigger_calls", json::array()));
            r.error = j.value("error", std::string{});
            if (auto it = by_id.find(id); it != by_id.end()) {
                run.pairs[it->second] = std::move(r);
            } else {
                by_id.emplace(id, run.pairs.size());
                run.pairs.push_back(std::move(r));
            }
            continue;
        }
        if (type == "decision") {
            auto kind = decision_from_string(j.at("decision").get<std::string>());
            if (!kind) throw Error(ErrorCode::Parse, "unknown decision for " + id);
            run.decisions.push_back(Decision{id, *kind});
            continue;
        }
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(ErrorCode::Parse, type + " record for unknown pair " + id);
        auto& r = run.pairs[it->second];
        if (type == "verdict") {
            r.verdict = parse_as<Verdict>(j.at("verdict"), "verdict");
            r.detect_calls = tx_indices(j.value("detect_calls", json::array()));
        } else if (type == "revision") {
            r.revision = j.at("revision").get<std::string>();
            r.revise_calls = tx_indices(j.value("revise_calls", json::array()));
        } else {
            throw Error(ErrorCode::Parse, "unknown pair record type " + type);
        }
    }

    for (const auto& j : read_jsonl(path_ / kTranscriptsFile, &run.warnings)) {
        TranscriptEntry t;
        t.id = j.at("id").get<std::string>();
        t.stage = j.value("stage", std::string{});
        t.phase = j.value("phase", std::string{});
        t.request = request_from_json(j.at("request"));
        t.reply = ChatReply{j.at("reply").get<std::string>(), usage_from(j.value("usage", json(nullptr)))};
        t.fingerprint = j.value("fingerprint", std::string{});
        run.transcripts.push_back(std::move(t));
    }

    if (fs::exists(path_ / kReportFile)) {
        std::ifstream in(path_ / kReportFile);
        try {
            run.report = json::parse(in);
        } catch (const json::exception& e) {
            run.warnings.push_back(std::string("report.json unreadable: ") + e.what());
        }
    }
    return run;
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) {}

std::string RunStore::new_run_id() {
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mu);
    auto now = std::chrono::system_clock::now();
    return fmt::format("{:%Y%m%dT%H%M%SZ}-{:06x}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)),
                       rng() & 0xFFFFFF);
}

RunDir RunStore::create(const RunConfig& config, std::optional<std::string> run_id) {
    const auto id = run_id.value_or(new_run_id());
    const auto dir = root_ / "runs" / id;
    std::error_code ec;
    if (fs::exists(dir)) throw Error(ErrorCode::Validation, "run already exists: " + id);
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    json j = {{"schema", kSchema},
              {"run_id", id},
              {"created_at", fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now))},
              {"config", run_config_json(config)}};
    write_file(dir / kConfigFile, j.dump(2) + "\n");
    return RunDir(dir, id);
}

bool RunStore::exists(const std::string& run_id) const {
    if (run_id.empty() || run_id.find('/') != std::string::npos || run_id.find("..") != std::string::npos) return false;
    return fs::exists(root_ / "runs" / run_id / kConfigFile);
}

RunDir RunStore::open(const std::string& run_id) const {
    if (!exists(run_id)) throw Error(ErrorCode::Validation, "unknown run: " + run_id);
    return RunDir(root_ / "runs" / run_id, run_id);
}

std::vector<std::string> RunStore::list() const {
    std::vector<std::string> out;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(root_ / "runs", ec))
        if (fs::exists(e.path() / kConfigFile)) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<AnnotationRecord> load_annotations(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorCode::Io, "annotation file not found: " + path.string());
    std::vector<AnnotationRecord> out;
    for (const auto& j : read_jsonl(path)) out.push_back(parse_as<AnnotationRecord>(j, "annotation"));
    return out;
}

namespace {

EvalView view_of(const DocumentVersion& version, std::vector<PairRecord> pairs) {
    EvalView v;
    v.roots = version.lineage;
    for (const auto& s : version.document.sentences) v.texts.push_back(s.text);
    v.pairs = std::move(pairs);
    return v;
}

bool any_verdict(const std::vector<PairRecord>& pairs) {
    return std::any_of(pairs.begin(), pairs.end(), [](const PairRecord& p) { return p.verdict.has_value(); });
}

}  // namespace

MetricsReport evaluate_run(const RunRecord& run, const GoldLabels& gold, const PerplexityScorer* scorer) {
    MetricsReport report;
    const auto trigger_pairs = run.pairs_in_phase(phase::kTrigger);
    const auto sweep_pairs = run.pairs_in_phase(phase::kSweep);
    const auto* generated = run.latest("generated");
    const auto* final_doc = run.latest("final");
    if (!final_doc) final_doc = run.latest("pass-");
    const auto* pre_sweep = run.latest("pass-");

    if (!trigger_pairs.empty()) report.trigger_frequency = trigger_frequency(trigger_pairs, gold);
    else report.notes.emplace_back("trigger_frequency: run has no triggered pairs");

    if (any_verdict(trigger_pairs)) report.detection = detection_prf1(trigger_pairs, gold);
    else report.notes.emplace_back("detection: triggered pairs carry no verdicts");

    if (generated && final_doc) {
        try {
            report.removed_ratio = removed_ratio(view_of(*generated, trigger_pairs), view_of(*final_doc, sweep_pairs), gold);
        } catch (const Error& e) {
            report.notes.push_back(std::string("removed_ratio: ") + e.what());
        }
        if (any_verdict(trigger_pairs) && pre_sweep && !sweep_pairs.empty()) {
            try {
                report.informativeness_ratio =
                    informativeness_ratio(view_of(*generated, trigger_pairs), view_of(*pre_sweep, sweep_pairs));
            } catch (const Error& e) {
                report.notes.push_back(std::string("informativeness_ratio: ") + e.what());
            }
        } else {
            report.notes.emplace_back("informativeness_ratio: needs detected trigger pairs and a final detection sweep");
        }
        if (scorer) {
            report.perplexity_increase =
                perplexity_increase(generated->document.text(), final_doc->document.text(), *scorer);
        } else {
            report.notes.emplace_back("perplexity_increase: no scorer configured");
        }
    } else {
        report.notes.emplace_back("mitigation metrics: run has no mitigated document");
    }

    std::vector<CostEntry> costs;
    for (const auto& t : run.transcripts) costs.push_back(CostEntry{t.stage, t.phase, t.reply.usage});
    report.token_cost = token_cost(costs);
    return report;
}

}  // namespace contraguard
