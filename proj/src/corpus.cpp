#include "normlens/corpus.hpp"

#include <array>
#include <cctype>

#include "normlens/rng.hpp"

namespace normlens {

namespace {

// Common English words, weighted towards short function words by repetition.
constexpr std::array kWords = std::to_array<const char*>({
    "the", "the", "the", "of", "of", "and", "and", "a", "a", "to", "to", "in", "in",
    "is", "it", "that", "for", "was", "on", "are", "as", "with", "his", "they",
    "at", "be", "this", "have", "from", "or", "one", "had", "by", "word", "but",
    "not", "what", "all", "were", "we", "when", "your", "can", "said", "there",
    "use", "an", "each", "which", "she", "do", "how", "their", "if", "will",
    "up", "other", "about", "out", "many", "then", "them", "these", "so", "some",
    "her", "would", "make", "like", "him", "into", "time", "has", "look", "two",
    "more", "write", "go", "see", "number", "no", "way", "could", "people", "my",
    "than", "first", "water", "been", "call", "who", "oil", "its", "now", "find",
    "long", "down", "day", "did", "get", "come", "made", "may", "part", "over",
    "new", "sound", "take", "only", "little", "work", "know", "place", "year",
    "live", "me", "back", "give", "most", "very", "after", "thing", "our", "just",
    "name", "good", "sentence", "man", "think", "say", "great", "where", "help",
    "through", "much", "before", "line", "right", "too", "mean", "old", "any",
    "same", "tell", "boy", "follow", "came", "want", "show", "also", "around",
    "form", "three", "small", "set", "put", "end", "does", "another", "well",
    "large", "must", "big", "even", "such", "because", "turn", "here",
});

} // namespace

std::string generate_corpus(std::size_t min_bytes, std::uint64_t seed) {
    SeededRng rng(seed);
    std::string text;
    text.reserve(min_bytes + 128);
    std::size_t sentence_words = 0;
    std::size_t sentences_in_paragraph = 0;
    bool capitalize = true;
    while (text.size() < min_bytes) {
        std::string word = kWords[rng.below(kWords.size())];
        if (capitalize) {
            word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
            capitalize = false;
        }
        text += word;
        ++sentence_words;
        const std::size_t target = 6 + rng.below(10);
        if (sentence_words >= target) {
            const auto r = rng.below(10);
            text += r < 8 ? "." : (r == 8 ? "?" : "!");
            sentence_words = 0;
            capitalize = true;
            if (++sentences_in_paragraph >= 4 + rng.below(4)) {
                text += "\n\n";
                sentences_in_paragraph = 0;
            } else {
                text += ' ';
            }
        } else if (rng.below(12) == 0) {
            text += ", ";
        } else {
            text += ' ';
        }
    }
    text += '\n';
    return text;
}

} // namespace normlens
