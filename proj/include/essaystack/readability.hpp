#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "essaystack/core.hpp"
#include "essaystack/csv.hpp"

namespace essaystack {

inline constexpr int kReadabilityVersion = 1;
inline constexpr int kNumReadability = 8;
inline constexpr std::array<std::string_view, kNumReadability> kReadabilityNames = {
    "char_count",       "word_count",       "sentence_count", "avg_word_len",
    "avg_sentence_len", "type_token_ratio", "syllable_count", "flesch_reading_ease"};

struct ReadabilityVector {
    double char_count = 0;
    double word_count = 0;
    double sentence_count = 0;
    double avg_word_len = 0;
    double avg_sentence_len = 0;
    double type_token_ratio = 0;
    double syllable_count = 0;
    double flesch_reading_ease = 0;

    std::array<double, kNumReadability> values() const {
        return {char_count,       word_count,       sentence_count, avg_word_len,
                avg_sentence_len, type_token_ratio, syllable_count, flesch_reading_ease};
    }
};

namespace detail {

// Decodes one UTF-8 code point starting at text[i]; malformed bytes decode as themselves.
inline char32_t next_code_point(std::string_view text, std::size_t& i) {
    const auto c = static_cast<unsigned char>(text[i]);
    const int extra = c < 0x80 ? 0 : (c >= 0xF0 && c < 0xF8) ? 3 : c >= 0xE0 ? 2 : c >= 0xC0 ? 1 : -1;
    if (extra <= 0 || i + static_cast<std::size_t>(extra) >= text.size()) {
        ++i;
        return c;
    }
    char32_t cp = c & (extra == 1 ? 0x1F : extra == 2 ? 0x0F : 0x07);
    for (int k = 1; k <= extra; ++k) {
        const auto cc = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
        if ((cc & 0xC0) != 0x80) {
            ++i;
            return c;
        }
        cp = (cp << 6) | (cc & 0x3F);
    }
    i += static_cast<std::size_t>(extra) + 1;
    return cp;
}

inline bool is_word_char(char32_t cp) {
    if (cp < 0x80) return std::isalnum(static_cast<int>(cp)) || cp == U'\'';
    if (cp == 0x2019) return true;                    // right single quotation mark as apostrophe
    if (cp >= 0x2000 && cp <= 0x206F) return false;   // general punctuation block
    if (cp == 0x00A0 || cp == 0x3000) return false;   // no-break / ideographic space
    return cp >= 0x00C0;
}

inline bool is_vowel(char c) {
    switch (c) {
    case 'a': case 'e': case 'i': case 'o': case 'u': case 'y': return true;
    default: return false;
    }
}

} // namespace detail

/// Vowel-group count (a, e, i, o, u, y) with a silent final 'e' dropped, minimum 1.
/// A final "le" after a consonant keeps its syllable ("table").
inline int count_syllables(std::string_view word) {
    std::string w;
    for (char c : word)
        if (std::isalpha(static_cast<unsigned char>(c))) w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (w.empty()) return 1;
    int groups = 0;
    bool prev_vowel = false;
    for (char c : w) {
        const bool v = detail::is_vowel(c);
        if (v && !prev_vowel) ++groups;
        prev_vowel = v;
    }
    const std::size_t n = w.size();
    if (groups > 1 && w[n - 1] == 'e' && !detail::is_vowel(w[n - 2])) {
        const bool consonant_le = n >= 3 && w[n - 2] == 'l' && !detail::is_vowel(w[n - 3]);
        if (!consonant_le) --groups;
    }
    return std::max(groups, 1);
}

/// Words are maximal runs of letters, digits and apostrophes; a sentence ends at
/// '.', '!' or '?' once it holds a word, and a trailing unterminated fragment
/// counts as one more sentence.
inline ReadabilityVector readability_features(std::string_view text) {
    ReadabilityVector r;
    std::size_t i = 0;
    std::string word;
    std::vector<std::string> words;
    std::size_t word_chars = 0;
    int words_in_sentence = 0;
    double chars = 0;
    auto flush_word = [&]() {
        if (word.empty()) return;
        words.push_back(word);
        ++words_in_sentence;
        word.clear();
    };
    while (i < text.size()) {
        const std::size_t start = i;
        const char32_t cp = detail::next_code_point(text, i);
        chars += 1;
        if (detail::is_word_char(cp)) {
            word.append(text.substr(start, i - start));
            ++word_chars;
            continue;
        }
        flush_word();
        if ((cp == U'.' || cp == U'!' || cp == U'?') && words_in_sentence > 0) {
            r.sentence_count += 1;
            words_in_sentence = 0;
        }
    }
    flush_word();
    if (words_in_sentence > 0) r.sentence_count += 1;

    r.char_count = chars;
    r.word_count = static_cast<double>(words.size());
    if (words.empty()) {
        r = ReadabilityVector{};
        r.char_count = chars;
        return r;
    }
    std::set<std::string> types;
    double syllables = 0;
    for (const auto& w : words) {
        std::string lower;
        for (char c : w) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        types.insert(lower);
        syllables += count_syllables(w);
    }
    r.avg_word_len = static_cast<double>(word_chars) / r.word_count;
    r.avg_sentence_len = r.word_count / r.sentence_count;
    r.type_token_ratio = static_cast<double>(types.size()) / r.word_count;
    r.syllable_count = syllables;
    r.flesch_reading_ease = 206.835 - 1.015 * (r.word_count / r.sentence_count) - 84.6 * (syllables / r.word_count);
    return r;
}

/// n x 8 matrix, columns in kReadabilityNames order.
inline Matrix readability_matrix(const std::vector<std::string>& texts) {
    Matrix m(static_cast<Eigen::Index>(texts.size()), kNumReadability);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto v = readability_features(texts[i]).values();
        for (int c = 0; c < kNumReadability; ++c) m(static_cast<Eigen::Index>(i), c) = v[static_cast<std::size_t>(c)];
    }
    return m;
}

inline std::string format_readability_csv(const std::vector<std::string>& ids, const Matrix& m) {
    std::string out = "text_id";
    for (auto name : kReadabilityNames) out += "," + std::string(name);
    out += '\n';
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out += csv::escape(ids[i]);
        for (int c = 0; c < kNumReadability; ++c) out += "," + csv::format_double(m(static_cast<Eigen::Index>(i), c));
        out += '\n';
    }
    return out;
}

} // namespace essaystack
