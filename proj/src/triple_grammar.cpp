// Rule-based open relation extraction.
//
// Grammar, applied per clause:
//   clause     := [fronted ","] subject verb-group [object]
//   fronted    := leading prepositional or participle phrase closed by a comma
//   subject    := pronoun | noun-phrase-like span (capitalized, determiner or
//                 numeral start), with an appositive ", ...," cut off
//                 or a ", participle ...," phrase skipped
//   verb-group := adverb* finite-verb, where an auxiliary may be followed by
//                 (adverb|"not")* auxiliary* [participle], or a base verb
//                 after a modal or "do"
//   object     := remainder of the clause
// Clauses are separated by ";" and by "and"/"but"/"while"/"whereas" when the
// next words start a new clause (pronoun or short determiner-led noun phrase,
// then a verb group) or, for "and"/"but", a verb group that shares the
// previous subject.

#include "contraguard/segmenter.hpp"

#include "contraguard/text_util.hpp"

#include <cctype>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace contraguard {

namespace {

using WordSet = std::unordered_set<std::string>;

const WordSet& auxiliaries() {
    static const WordSet s = {"is",    "are",   "was",    "were",  "be",     "been", "being",
                              "am",    "has",   "have",   "had",   "does",   "do",   "did",
                              "will",  "would", "shall",  "should", "can",   "could", "may",
                              "might", "must"};
    return s;
}

const WordSet& pronouns() {
    static const WordSet s = {"he", "she", "it", "they", "we", "i", "you", "this", "these", "there"};
    return s;
}

const WordSet& plural_pronouns() {
    static const WordSet s = {"they", "we", "i", "you", "these"};
    return s;
}

const WordSet& determiners() {
    static const WordSet s = {"the", "a",     "an",    "his",  "her", "its", "their", "this",
                              "that", "these", "those", "our", "my",  "your", "each", "every",
                              "some", "many",  "several", "both", "all", "most"};
    return s;
}

const WordSet& prepositions() {
    static const WordSet s = {"in",     "on",    "at",     "during", "after",  "before",
                              "since",  "from",  "by",     "with",   "following", "throughout",
                              "under",  "as",    "despite", "between", "until", "upon", "over"};
    return s;
}

const WordSet& adverbs() {
    static const WordSet s = {"also",     "still",    "currently", "later",     "often",
                              "never",    "always",   "first",     "originally", "primarily",
                              "mainly",   "now",      "then",      "recently",  "previously",
                              "formerly", "once",     "best",      "well",      "widely",
                              "already",  "subsequently", "eventually", "initially", "not",
                              "n't",      "again",    "soon",      "even",      "only"};
    return s;
}

const WordSet& coordinators() {
    static const WordSet s = {"and", "but", "while", "whereas"};
    return s;
}

// Regular verbs: base forms; inflections are derived.
const std::vector<std::string>& regular_verbs() {
    static const std::vector<std::string> v = {
        "live",     "work",     "serve",    "include",  "remain",   "contain",  "feature",
        "play",     "cover",    "consist",  "represent", "locate",  "marry",    "release",
        "develop",  "produce",  "design",   "direct",   "create",   "receive",  "earn",
        "study",    "join",     "move",     "die",      "start",    "establish", "publish",
        "perform",  "record",   "host",     "compete",  "retire",   "attend",   "graduate",
        "name",     "use",      "own",      "operate",  "manufacture", "consider", "describe",
        "house",    "form",     "appear",   "star",     "debut",    "reach",    "chart",
        "premiere", "air",      "launch",   "introduce", "succeed", "replace",  "defeat",
        "score",    "coach",    "manage",   "support",  "advocate", "act",      "compose",
        "invent",   "discover", "complete", "open",     "close",    "situate",  "border",
        "flow",     "span",     "measure",  "award",    "nominate", "elect",    "appoint",
        "ordain",   "sign",     "return",   "enlist",   "deploy",   "found",    "co-found",
        "belong",   "focus",    "serve",    "train",    "end",      "last",     "rank",
        "lie",      "stand",    "border",   "employ",   "follow",   "base",     "inspire",
        "tour",     "sell",     "lead",     "hold",     "win",      "write",    "make",
        "become",   "begin",    "grow",     "teach",    "build",    "bring",    "take",
        "give",     "go",       "come",     "leave",    "meet",     "spend",    "run",
        "lose",     "know",     "see",      "find",     "hit",      "fight",    "sing",
        "speak",    "choose",   "draw",     "rise",     "fall",     "keep",     "pay",
        "get",      "buy",      "think",    "tell",     "bear",
    };
    return v;
}

struct IrregularForms {
    std::string past;
    std::string participle;
};

const std::unordered_map<std::string, IrregularForms>& irregulars() {
    static const std::unordered_map<std::string, IrregularForms> m = {
        {"sell", {"sold", "sold"}},       {"lead", {"led", "led"}},
        {"hold", {"held", "held"}},       {"win", {"won", "won"}},
        {"write", {"wrote", "written"}},  {"make", {"made", "made"}},
        {"become", {"became", "become"}}, {"begin", {"began", "begun"}},
        {"grow", {"grew", "grown"}},      {"teach", {"taught", "taught"}},
        {"build", {"built", "built"}},    {"bring", {"brought", "brought"}},
        {"take", {"took", "taken"}},      {"give", {"gave", "given"}},
        {"go", {"went", "gone"}},         {"come", {"came", "come"}},
        {"leave", {"left", "left"}},      {"meet", {"met", "met"}},
        {"spend", {"spent", "spent"}},    {"run", {"ran", "run"}},
        {"lose", {"lost", "lost"}},       {"know", {"knew", "known"}},
        {"see", {"saw", "seen"}},         {"find", {"found", "found"}},
        {"hit", {"hit", "hit"}},          {"fight", {"fought", "fought"}},
        {"sing", {"sang", "sung"}},       {"speak", {"spoke", "spoken"}},
        {"choose", {"chose", "chosen"}},  {"draw", {"drew", "drawn"}},
        {"rise", {"rose", "risen"}},      {"fall", {"fell", "fallen"}},
        {"keep", {"kept", "kept"}},       {"pay", {"paid", "paid"}},
        {"get", {"got", "gotten"}},       {"buy", {"bought", "bought"}},
        {"think", {"thought", "thought"}}, {"tell", {"told", "told"}},
        {"bear", {"bore", "born"}},       {"stand", {"stood", "stood"}},
        {"lie", {"lay", "lain"}},         {"die", {"died", "died"}},
    };
    return m;
}

std::string third_person(const std::string& base) {
    auto ends = [&](std::string_view suf) {
        return base.size() >= suf.size() && base.compare(base.size() - suf.size(), suf.size(), suf) == 0;
    };
    if (ends("y") && base.size() > 1 && std::string("aeiou").find(base[base.size() - 2]) == std::string::npos)
        return base.substr(0, base.size() - 1) + "ies";
    if (ends("s") || ends("sh") || ends("ch") || ends("x") || ends("o")) return base + "es";
    return base + "s";
}

std::string regular_past(const std::string& base) {
    if (base.back() == 'e') return base + "d";
    if (base.back() == 'y' && base.size() > 1 &&
        std::string("aeiou").find(base[base.size() - 2]) == std::string::npos)
        return base.substr(0, base.size() - 1) + "ied";
    if (base == "star" || base == "plan") return base + base.back() + "ed";
    return base + "ed";
}

struct Lexicon {
    WordSet finite;        // third-person present and simple past
    WordSet base;          // base forms (finite only after plural pronouns)
    WordSet participles;   // past participles and gerunds of known verbs
};

const Lexicon& lexicon() {
    static const Lexicon lex = [] {
        Lexicon l;
        for (const auto& base : regular_verbs()) {
            l.base.insert(base);
            l.finite.insert(third_person(base));
            if (auto it = irregulars().find(base); it != irregulars().end()) {
                l.finite.insert(it->second.past);
                l.participles.insert(it->second.participle);
            } else {
                l.finite.insert(regular_past(base));
                l.participles.insert(regular_past(base));
            }
        }
        return l;
    }();
    return lex;
}

struct Token {
    std::string raw;   // as it appears in the sentence
    std::string word;  // lowercase, surrounding punctuation stripped
};

std::string core_word(std::string_view raw) {
    std::size_t b = 0;
    std::size_t e = raw.size();
    auto punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) && c != '-'; };
    while (b < e && punct(raw[b])) ++b;
    while (e > b && punct(raw[e - 1])) --e;
    return text::to_lower(raw.substr(b, e - b));
}

std::vector<Token> tokenize(std::string_view sentence) {
    std::vector<Token> out;
    auto normalized = text::normalize_whitespace(sentence);
    std::size_t pos = 0;
    while (pos < normalized.size()) {
        auto sp = normalized.find(' ', pos);
        if (sp == std::string::npos) sp = normalized.size();
        auto raw = normalized.substr(pos, sp - pos);
        out.push_back({raw, core_word(raw)});
        pos = sp + 1;
    }
    return out;
}

bool is_capitalized(const Token& t) {
    for (char c : t.raw) {
        if (std::isalpha(static_cast<unsigned char>(c))) return std::isupper(static_cast<unsigned char>(c));
        if (std::isdigit(static_cast<unsigned char>(c))) return false;
    }
    return false;
}

bool is_lower_word(const Token& t) {
    return !t.word.empty() && std::islower(static_cast<unsigned char>(t.word.front())) && !is_capitalized(t);
}

bool ends_with(std::string_view s, std::string_view suf) {
    return s.size() >= suf.size() && s.substr(s.size() - suf.size()) == suf;
}

// -ly words that are not adverbs.
const WordSet& ly_nonadverbs() {
    static const WordSet s = {"family", "assembly", "supply", "rally",   "ally",    "monopoly",
                              "anomaly", "early",   "likely", "daily",   "friendly", "elderly",
                              "holy",   "italy",    "july",   "lily",    "belly",   "jelly",
                              "weekly", "monthly",  "yearly", "quarterly", "only"};
    return s;
}

bool is_adverb(const Token& t) {
    if (!is_lower_word(t)) return false;
    if (adverbs().count(t.word) > 0) return true;
    return ends_with(t.word, "ly") && t.word.size() > 4 && ly_nonadverbs().count(t.word) == 0;
}

bool is_aux(const Token& t) { return is_lower_word(t) && auxiliaries().count(t.word) > 0; }

// Auxiliaries that take a bare infinitive ("did not attend", "will serve").
bool takes_base_verb(const Token& t) {
    static const WordSet s = {"do", "does", "did", "will", "would", "shall", "should",
                              "can", "could", "may", "might", "must"};
    return s.count(t.word) > 0;
}

bool is_participle(const Token& t) {
    if (!is_lower_word(t)) return false;
    if (lexicon().participles.count(t.word) > 0) return true;
    return t.word.size() > 4 && (ends_with(t.word, "ed") || ends_with(t.word, "ing"));
}

// A finite main verb at position i (auxiliaries handled separately).
bool is_finite_main(const std::vector<Token>& toks, std::size_t i, const std::string& subject_head) {
    const auto& t = toks[i];
    if (!is_lower_word(t)) return false;
    if (lexicon().finite.count(t.word) > 0) return true;
    if (lexicon().base.count(t.word) > 0 && plural_pronouns().count(subject_head) > 0) return true;
    // Unknown "-ed" words count as past tense unless they modify a noun after a determiner.
    if (t.word.size() > 4 && ends_with(t.word, "ed")) {
        return i == 0 || determiners().count(toks[i - 1].word) == 0;
    }
    return false;
}

bool has_comma(const Token& t) { return !t.raw.empty() && t.raw.back() == ','; }

std::string strip_trailing(std::string s) {
    while (!s.empty() && (s.back() == ',' || s.back() == ';' || s.back() == ':' || s.back() == '.' ||
                          s.back() == '!' || s.back() == '?'))
        s.pop_back();
    return s;
}

std::string span(const std::vector<Token>& toks, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (!out.empty()) out.push_back(' ');
        out += toks[i].raw;
    }
    return strip_trailing(out);
}

// Returns the end of the verb group starting at `i`, or nullopt if none starts there.
std::optional<std::size_t> verb_group_end(const std::vector<Token>& toks, std::size_t i,
                                          std::size_t end, const std::string& subject_head) {
    std::size_t j = i;
    while (j < end && is_adverb(toks[j]) && !is_aux(toks[j])) ++j;
    if (j >= end) return std::nullopt;
    if (is_aux(toks[j])) {
        std::size_t last = j + 1;
        if (has_comma(toks[j])) return last;
        std::size_t k = last;
        std::size_t last_aux = j;
        // Adverbs and further auxiliaries, committed only if a verb form follows.
        while (k < end) {
            std::size_t probe = k;
            while (probe < end && is_adverb(toks[probe]) && !is_aux(toks[probe])) ++probe;
            if (probe < end && is_aux(toks[probe])) {
                last_aux = probe;
                last = k = probe + 1;
                if (has_comma(toks[probe])) return last;
                continue;
            }
            if (probe < end && is_participle(toks[probe])) last = probe + 1;
            else if (probe < end && takes_base_verb(toks[last_aux]) && is_lower_word(toks[probe]) &&
                     lexicon().base.count(toks[probe].word) > 0)
                last = probe + 1;
            break;
        }
        return last;
    }
    if (is_finite_main(toks, j, subject_head)) return j + 1;
    return std::nullopt;
}

bool subject_head_ok(const Token& t) {
    if (pronouns().count(t.word) > 0) return true;
    if (determiners().count(t.word) > 0) return true;
    if (is_capitalized(t)) return true;
    return !t.raw.empty() && std::isdigit(static_cast<unsigned char>(t.raw.front()));
}

struct Clause {
    std::size_t begin;
    std::size_t end;
    bool shares_subject;  // elliptical coordination: "... and died in 2020"
};

struct Parsed {
    std::string subject;
    std::size_t verb_begin;
    std::size_t verb_end;
};

std::optional<Parsed> parse_subject_and_verb(const std::vector<Token>& toks, std::size_t begin,
                                             std::size_t end) {
    std::size_t start = begin;
    // Fronted adverbial: "In 2011, ..." / "Released in 2013, ...".
    const auto& first = toks[begin];
    bool fronted = prepositions().count(first.word) > 0 ||
                   (is_capitalized(first) && (ends_with(first.word, "ed") || ends_with(first.word, "ing")) &&
                    pronouns().count(first.word) == 0);
    if (fronted) {
        for (std::size_t k = begin; k < end && k < begin + 10; ++k) {
            if (has_comma(toks[k])) {
                start = k + 1;
                break;
            }
        }
    }
    if (start >= end) return std::nullopt;
    if (!subject_head_ok(toks[start])) return std::nullopt;

    std::string head = toks[start].word;
    if (pronouns().count(head) > 0) {
        if (auto ve = verb_group_end(toks, start + 1, end, head))
            return Parsed{toks[start].raw, start + 1, *ve};
        return std::nullopt;
    }

    int depth = 0;
    std::optional<std::size_t> appositive_cut;
    for (std::size_t j = start; j < end; ++j) {
        const auto& t = toks[j];
        // ", completed in 1932," is an appositive, not the verb group.
        if (appositive_cut && j == *appositive_cut && depth == 0 && is_participle(t)) {
            std::size_t k = j;
            while (k < end && !has_comma(toks[k])) ++k;
            if (k + 1 < end) {
                j = k;
                continue;
            }
        }
        if (j > start && depth == 0) {
            if (auto ve = verb_group_end(toks, j, end, head)) {
                std::size_t subj_end = appositive_cut.value_or(j);
                if (subj_end - start == 0 || subj_end - start > 12) return std::nullopt;
                return Parsed{span(toks, start, subj_end), j, *ve};
            }
        }
        for (char c : t.raw) {
            if (c == '(') ++depth;
            if (c == ')' && depth > 0) --depth;
        }
        if (depth == 0 && has_comma(t) && !appositive_cut) appositive_cut = j + 1;
    }
    return std::nullopt;
}

bool starts_clause(const std::vector<Token>& toks, std::size_t i, std::size_t end) {
    if (i >= end) return false;
    if (pronouns().count(toks[i].word) > 0) return verb_group_end(toks, i + 1, end, toks[i].word).has_value();
    if (determiners().count(toks[i].word) == 0) return false;
    // "the coach was ...": up to three more noun-phrase words, then a verb group.
    for (std::size_t j = i + 1; j < end && j <= i + 3; ++j) {
        if (has_comma(toks[j - 1]) || prepositions().count(toks[j].word) > 0) return false;
        if (verb_group_end(toks, j, end, toks[i].word).has_value()) return true;
    }
    return false;
}

}  // namespace

std::vector<FactTriple> RuleBasedExtractor::extract(const Sentence& sentence) const {
    auto toks = tokenize(sentence.text);
    std::vector<FactTriple> out;
    if (toks.size() < 2) return out;

    // Split into clauses on ';' and clause-level coordination.
    std::vector<Clause> clauses;
    std::size_t begin = 0;
    bool shares = false;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (!toks[i].raw.empty() && toks[i].raw.back() == ';') {
            clauses.push_back({begin, i + 1, shares});
            begin = i + 1;
            shares = false;
            continue;
        }
        if (i == begin || coordinators().count(toks[i].word) == 0 || !is_lower_word(toks[i])) continue;
        if (starts_clause(toks, i + 1, toks.size())) {
            clauses.push_back({begin, i, shares});
            begin = i + 1;
            shares = false;
        } else if ((toks[i].word == "and" || toks[i].word == "but") && i + 1 < toks.size() &&
                   verb_group_end(toks, i + 1, toks.size(), "").has_value()) {
            clauses.push_back({begin, i, shares});
            begin = i + 1;
            shares = true;
        }
    }
    if (begin < toks.size()) clauses.push_back({begin, toks.size(), shares});

    std::string last_subject;
    for (const auto& clause : clauses) {
        if (clause.begin >= clause.end) continue;
        std::optional<Parsed> parsed;
        if (clause.shares_subject && !last_subject.empty()) {
            if (auto ve = verb_group_end(toks, clause.begin, clause.end, ""))
                parsed = Parsed{last_subject, clause.begin, *ve};
        } else {
            parsed = parse_subject_and_verb(toks, clause.begin, clause.end);
        }
        if (!parsed) continue;
        FactTriple triple;
        triple.subject = strip_trailing(parsed->subject);
        triple.predicate = span(toks, parsed->verb_begin, parsed->verb_end);
        auto object = span(toks, parsed->verb_end, clause.end);
        if (!object.empty()) triple.object = object;
        if (triple.subject.empty() || triple.predicate.empty()) continue;
        last_subject = triple.subject;
        out.push_back(std::move(triple));
    }
    return out;
}

}  // namespace contraguard
