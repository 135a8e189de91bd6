#pragma once

#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace vlnav {

/// Closed-world word lists used by both the instruction templates and the
/// object/action tagger.
struct Lexicon {
    std::set<std::string> action_words;
    std::set<std::string> object_words;
    std::set<std::string> stop_words;
    /// Tried in order; the first rewrite that yields a known lemma wins.
    std::vector<std::pair<std::string, std::string>> suffix_rules;

    static Lexicon builtin();
    static Lexicon from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    /// Throws std::invalid_argument when action and object words overlap.
    void validate() const;

    bool is_action(const std::string& w) const { return action_words.count(w) != 0; }
    bool is_object(const std::string& w) const { return object_words.count(w) != 0; }
    bool knows(const std::string& w) const {
        return is_action(w) || is_object(w) || stop_words.count(w) != 0;
    }
    /// Every word of the lexicon, sorted; used to build embedding vocabularies.
    std::vector<std::string> all_words() const;
};

struct ParsedInstruction {
    std::vector<std::string> tokens;
    std::vector<std::string> object_phrases;  // multi-word phrases joined by one space
    std::vector<std::string> action_phrases;

    friend bool operator==(const ParsedInstruction&, const ParsedInstruction&) = default;
};

/// Lowercases, deletes digits, and splits on anything that is not a letter.
/// Empty or whitespace-only text yields an empty sequence.
std::vector<std::string> tokenize(std::string_view text);

/// Lexicon lemma of a token, or the token itself when nothing matches.
std::string lemmatize(const std::string& token, const Lexicon& lex);

/// Tags action and object lemmas; adjacent object lemmas merge into one phrase.
/// Duplicates are kept in order of occurrence.
ParsedInstruction parse_oap(const std::vector<std::string>& tokens, const Lexicon& lex);

nlohmann::json to_json(const ParsedInstruction& p);

// Shared vocabulary of the synthetic world.
const std::vector<std::string>& object_categories();
const std::vector<std::string>& room_words();

}  // namespace vlnav
