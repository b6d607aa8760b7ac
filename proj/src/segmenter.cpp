#include "contraguard/segmenter.hpp"

#include "contraguard/error.hpp"
#include "contraguard/text_util.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <array>
#include <cctype>
#include <regex>
#include <thread>

namespace contraguard {

using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, 52> kAbbreviations = {
    "Dr.",   "Mr.",   "Mrs.",  "Ms.",   "Prof.", "St.",   "Jr.",   "Sr.",   "No.",
    "Nos.",  "vs.",   "e.g.",  "i.e.",  "Inc.",  "Ltd.",  "Co.",   "Corp.", "Mt.",
    "Ft.",   "Gen.",  "Col.",  "Lt.",   "Sgt.",  "Capt.", "Rev.",  "Hon.",  "Gov.",
    "Sen.",  "Rep.",  "Pres.", "Jan.",  "Feb.",  "Apr.",  "Jun.",  "Jul.",  "Aug.",
    "Sep.",  "Sept.", "Oct.",  "Nov.",  "Dec.",  "approx.", "Fig.", "Vol.", "pp.",
    "ca.",   "cf.",   "al.",   "Ave.",  "Blvd.", "Dept.", "Univ.",
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

// Length of a closing quote/bracket starting at pos, 0 if none.
std::size_t closing_len(std::string_view s, std::size_t pos) {
    char c = s[pos];
    if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
    // U+201D right double quote, U+2019 right single quote.
    if (s.substr(pos, 3) == "\xE2\x80\x9D" || s.substr(pos, 3) == "\xE2\x80\x99") return 3;
    return 0;
}

bool opens_sentence(std::string_view s, std::size_t pos) {
    unsigned char c = static_cast<unsigned char>(s[pos]);
    if (std::isupper(c)) return true;
    if (c == '"' || c == '\'' || c == '(' || c == '[') return true;
    // U+201C left double quote, U+2018 left single quote.
    return s.substr(pos, 3) == "\xE2\x80\x9C" || s.substr(pos, 3) == "\xE2\x80\x98";
}

bool is_protected_token(std::string_view token) {
    while (!token.empty() && (token.front() == '(' || token.front() == '"' || token.front() == '\''))
        token.remove_prefix(1);
    for (auto abbr : kAbbreviations)
        if (token == abbr) return true;
    // Initials ("T.") and dotted acronyms ("U.S.", "e.g.").
    static const std::regex dotted(R"(^([A-Za-z]\.)+$)");
    if (token.size() == 2 && std::isupper(static_cast<unsigned char>(token[0]))) return true;
    return token.size() >= 4 && std::regex_match(token.begin(), token.end(), dotted);
}

}  // namespace

std::vector<Sentence> split_sentences(std::string_view raw) {
    std::vector<Sentence> out;
    auto flush = [&](std::size_t begin, std::size_t end) {
        auto sentence = text::normalize_whitespace(raw.substr(begin, end - begin));
        if (!sentence.empty()) out.push_back({out.size(), std::move(sentence)});
    };

    std::size_t start = 0;
    std::size_t i = 0;
    while (i < raw.size()) {
        char c = raw[i];
        if (c == '\n') {
            std::size_t j = i + 1;
            while (j < raw.size() && raw[j] != '\n' && is_space(raw[j])) ++j;
            if (j < raw.size() && raw[j] == '\n') {
                flush(start, i);
                while (j < raw.size() && is_space(raw[j])) ++j;
                start = i = j;
                continue;
            }
            ++i;
            continue;
        }
        if (!is_terminal(c)) {
            ++i;
            continue;
        }

        std::size_t end = i;
        std::size_t periods = 0;
        while (end < raw.size() && is_terminal(raw[end])) {
            if (raw[end] == '.') ++periods;
            ++end;
        }
        while (end < raw.size()) {
            auto len = closing_len(raw, end);
            if (len == 0) break;
            end += len;
        }
        bool boundary = end < raw.size() && is_space(raw[end]);
        if (boundary) {
            std::size_t next = end;
            while (next < raw.size() && is_space(raw[next])) ++next;
            boundary = next < raw.size() && opens_sentence(raw, next);
        }
        if (boundary && periods >= 2) boundary = false;  // ellipsis
        if (boundary && c == '.' && end == i + 1) {
            std::size_t tok = i;
            while (tok > start && !is_space(raw[tok - 1])) --tok;
            if (is_protected_token(raw.substr(tok, i + 1 - tok))) boundary = false;
        }
        if (boundary) {
            flush(start, end);
            start = end;
        }
        i = end;
    }
    if (start < raw.size()) flush(start, raw.size());
    return out;
}

HttpTripleExtractor::HttpTripleExtractor(ExtractorServiceConfig config)
    : config_(std::move(config)) {
    if (config_.url.empty())
        throw Error(ErrorCode::Validation, "external extractor requires an endpoint URL");
}

std::vector<FactTriple> HttpTripleExtractor::extract(const Sentence& sentence) const {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.url, m, url_re))
        throw Error(ErrorCode::Validation, "malformed extractor URL: " + config_.url);
    const std::string host = m[1];
    const std::string path = m[2].matched ? std::string(m[2]) : "/";

    httplib::Client client(host);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());

    const std::string body = json{{"sentence", sentence.text}}.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        auto res = client.Post(path, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
        } else if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
        } else {
            try {
                auto payload = json::parse(res->body);
                std::vector<FactTriple> triples;
                for (const auto& t : payload.at("triples")) {
                    FactTriple triple{t.at("subject").get<std::string>(),
                                      t.at("predicate").get<std::string>(), std::nullopt};
                    if (t.contains("object") && t["object"].is_string() &&
                        !t["object"].get<std::string>().empty())
                        triple.object = t["object"].get<std::string>();
                    if (!triple.subject.empty() && !triple.predicate.empty())
                        triples.push_back(std::move(triple));
                }
                return triples;
            } catch (const json::exception& e) {
                last_error = std::string("malformed reply: ") + e.what();
            }
        }
        if (attempt < config_.retries)
            std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    }
    throw Error(ErrorCode::ExtractorUnavailable, "extractor service failed: " + last_error);
}

FallbackExtractor::FallbackExtractor(std::shared_ptr<const TripleExtractor> primary,
                                     std::shared_ptr<const TripleExtractor> fallback)
    : primary_(std::move(primary)), fallback_(std::move(fallback)) {}

std::vector<FactTriple> FallbackExtractor::extract(const Sentence& sentence) const {
    try {
        return primary_->extract(sentence);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ExtractorUnavailable) throw;
        spdlog::warn("extractor unavailable, using rule-based fallback: {}", e.what());
        return fallback_->extract(sentence);
    }
}

std::shared_ptr<const TripleExtractor> make_extractor(const ExtractorConfig& config) {
    auto rule = std::make_shared<RuleBasedExtractor>();
    if (config.kind == ExtractorKind::RuleBased) return rule;
    auto http = std::make_shared<HttpTripleExtractor>(config.service);
    if (config.fallback_to_rule_based) return std::make_shared<FallbackExtractor>(http, rule);
    return http;
}

std::vector<TriggerContext> extract_contexts(const Sentence& sentence, const Document& doc,
                                             const TripleExtractor& extractor) {
    if (sentence.index >= doc.sentences.size() ||
        doc.sentences[sentence.index].text != sentence.text)
        throw Error(ErrorCode::Validation, "sentence does not belong to the document");
    std::vector<Sentence> prefix(doc.sentences.begin(),
                                 doc.sentences.begin() + static_cast<std::ptrdiff_t>(sentence.index));
    return extract_contexts(sentence, doc.task, prefix, extractor);
}

std::vector<TriggerContext> extract_contexts(const Sentence& sentence, const Task& task,
                                             const std::vector<Sentence>& prefix,
                                             const TripleExtractor& extractor) {
    std::vector<TriggerContext> out;
    auto triples = extractor.extract(sentence);
    out.reserve(triples.size());
    for (std::size_t k = 0; k < triples.size(); ++k) {
        auto triple = std::move(triples[k]);
        triple.object.reset();
        out.push_back(TriggerContext{task, prefix, std::move(triple), sentence, k});
    }
    return out;
}

}  // namespace contraguard
