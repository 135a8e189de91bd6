#include "vlnav/textparse.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace vlnav {

using nlohmann::json;

const std::vector<std::string>& object_categories() {
    static const std::vector<std::string> cats = {
        "sofa", "table", "lamp", "bed", "sink", "plant",
        "trash can", "painting", "mirror", "towel", "chair", "television",
    };
    return cats;
}

const std::vector<std::string>& room_words() {
    static const std::vector<std::string> rooms = {
        "kitchen", "bedroom", "bathroom", "office", "hallway",
        "spa room", "living room", "dining room", "laundry room",
    };
    return rooms;
}

Lexicon Lexicon::builtin() {
    Lexicon lex;
    auto add_phrase_words = [&](const std::string& phrase) {
        std::istringstream is(phrase);
        std::string w;
        while (is >> w) {
            lex.object_words.insert(w);
        }
    };
    for (const auto& c : object_categories()) {
        add_phrase_words(c);
    }
    for (const auto& r : room_words()) {
        add_phrase_words(r);
    }
    lex.action_words = {"walk", "go", "turn", "head", "pass", "stop", "find",
                        "enter", "exit", "continue", "locate", "wait"};
    lex.stop_words = {"the", "a", "an", "to", "and", "past", "through", "toward", "towards",
                      "at", "by", "then", "of", "in", "into", "on", "with", "near", "there",
                      "you", "your", "it", "is", "that", "this", "from", "for", "until", "up"};
    lex.suffix_rules = {{"ing", ""}, {"ing", "e"}, {"ies", "y"}, {"es", ""}, {"s", ""}, {"ed", ""}, {"ed", "e"}};
    return lex;
}

Lexicon Lexicon::from_json(const json& j) {
    Lexicon lex;
    for (const auto& w : j.at("actions")) {
        lex.action_words.insert(w.get<std::string>());
    }
    for (const auto& w : j.at("objects")) {
        lex.object_words.insert(w.get<std::string>());
    }
    for (const auto& w : j.at("stopwords")) {
        lex.stop_words.insert(w.get<std::string>());
    }
    for (const auto& r : j.at("suffix_rules")) {
        if (r.is_array()) {
            lex.suffix_rules.emplace_back(r.at(0).get<std::string>(), r.at(1).get<std::string>());
        } else {
            lex.suffix_rules.emplace_back(r.at("suffix").get<std::string>(), r.at("replacement").get<std::string>());
        }
    }
    lex.validate();
    return lex;
}

json Lexicon::to_json() const {
    json rules = json::array();
    for (const auto& [s, r] : suffix_rules) {
        rules.push_back({{"suffix", s}, {"replacement", r}});
    }
    return {{"actions", action_words}, {"objects", object_words}, {"stopwords", stop_words}, {"suffix_rules", rules}};
}

void Lexicon::validate() const {
    for (const auto& w : action_words) {
        if (object_words.count(w) != 0) {
            throw std::invalid_argument("lexicon word is both action and object: " + w);
        }
    }
}

std::vector<std::string> Lexicon::all_words() const {
    std::set<std::string> all(action_words.begin(), action_words.end());
    all.insert(object_words.begin(), object_words.end());
    all.insert(stop_words.begin(), stop_words.end());
    return {all.begin(), all.end()};
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= '0' && c <= '9') {
            continue;
        }
        if ((c >= 'a' && c <= 'z') || c >= 0x80) {
            cur.push_back(static_cast<char>(c));
        } else if (c >= 'A' && c <= 'Z') {
            cur.push_back(static_cast<char>(c - 'A' + 'a'));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

std::string lemmatize(const std::string& token, const Lexicon& lex) {
    if (lex.knows(token)) {
        return token;
    }
    for (const auto& [suffix, repl] : lex.suffix_rules) {
        if (token.size() > suffix.size() && token.compare(token.size() - suffix.size(), suffix.size(), suffix) == 0) {
            std::string cand = token.substr(0, token.size() - suffix.size()) + repl;
            if (lex.is_action(cand) || lex.is_object(cand)) {
                return cand;
            }
            // Undo consonant doubling: "stopping" -> "stopp" -> "stop".
            const std::size_t n = cand.size();
            if (repl.empty() && n >= 2 && cand[n - 1] == cand[n - 2]) {
                cand.pop_back();
                if (lex.is_action(cand) || lex.is_object(cand)) {
                    return cand;
                }
            }
        }
    }
    return token;
}

ParsedInstruction parse_oap(const std::vector<std::string>& tokens, const Lexicon& lex) {
    ParsedInstruction p;
    p.tokens = tokens;
    bool in_object_run = false;
    for (const auto& tok : tokens) {
        const std::string lemma = lemmatize(tok, lex);
        if (lex.is_object(lemma)) {
            if (in_object_run) {
                p.object_phrases.back() += " " + lemma;
            } else {
                p.object_phrases.push_back(lemma);
                in_object_run = true;
            }
            continue;
        }
        in_object_run = false;
        if (lex.is_action(lemma)) {
            p.action_phrases.push_back(lemma);
        }
    }
    return p;
}

json to_json(const ParsedInstruction& p) {
    return {{"tokens", p.tokens}, {"object_phrases", p.object_phrases}, {"action_phrases", p.action_phrases}};
}

}  // namespace vlnav
