#include <gtest/gtest.h>

#include "essaystack/readability.hpp"

using namespace essaystack;

TEST(Readability, EmptyIsAllZero) {
    const auto v = readability_features("").values();
    for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST(Readability, HelloWorld) {
    const auto r = readability_features("Hello world.");
    EXPECT_EQ(r.word_count, 2);
    EXPECT_EQ(r.sentence_count, 1);
    EXPECT_EQ(r.char_count, 12);
}

TEST(Readability, CatSatFlesch) {
    const auto r = readability_features("The cat sat on the mat.");
    EXPECT_EQ(r.syllable_count, 6);
    EXPECT_EQ(r.word_count, 6);
    EXPECT_NEAR(r.flesch_reading_ease, 116.145, 1e-9);
    EXPECT_NEAR(r.type_token_ratio, 5.0 / 6.0, 1e-15);
}

TEST(Readability, Syllables) {
    EXPECT_EQ(count_syllables("cake"), 1);
    EXPECT_EQ(count_syllables("table"), 2);
    EXPECT_EQ(count_syllables("the"), 1);
    EXPECT_EQ(count_syllables("rhythm"), 1);
    EXPECT_EQ(count_syllables("reading"), 2);
    EXPECT_EQ(count_syllables("xyz"), 1);
    EXPECT_EQ(count_syllables("beautiful"), 3);
}

TEST(Readability, ApostrophesAndUnicodeStayInWords) {
    const auto r = readability_features("Don\xE2\x80\x99t stop. It's caf\xC3\xA9 time!");
    EXPECT_EQ(r.word_count, 5);
    EXPECT_EQ(r.sentence_count, 2);
    EXPECT_EQ(r.char_count, 27);
}

TEST(Readability, TrailingFragmentCountsAsSentence) {
    EXPECT_EQ(readability_features("One. Two three").sentence_count, 2);
    EXPECT_EQ(readability_features("Wait... what?!").sentence_count, 2);
}

TEST(Readability, ConcatenationAddsCounts) {
    const std::string a = "The quick brown fox jumps. It runs!", b = "Dogs sleep all day? Yes.";
    const auto ra = readability_features(a), rb = readability_features(b), rab = readability_features(a + " " + b);
    EXPECT_EQ(rab.word_count, ra.word_count + rb.word_count);
    EXPECT_EQ(rab.sentence_count, ra.sentence_count + rb.sentence_count);
}

TEST(Readability, RatiosFiniteAndBounded) {
    for (const char* s : {"a", "Hi!", "   ", "...", "word word word", "Ünïcödé wörds hére."}) {
        const auto r = readability_features(s);
        for (double x : r.values()) EXPECT_TRUE(std::isfinite(x)) << s;
        if (r.word_count > 0) {
            EXPECT_GT(r.type_token_ratio, 0.0);
            EXPECT_LE(r.type_token_ratio, 1.0);
        }
    }
}

TEST(Readability, MatrixAndCsv) {
    const Matrix m = readability_matrix({"Hello world.", ""});
    EXPECT_EQ(m.rows(), 2);
    EXPECT_EQ(m.cols(), 8);
    EXPECT_EQ(m(0, 1), 2.0);
    const auto csv_text = format_readability_csv({"a", "b"}, m);
    EXPECT_EQ(csv_text.substr(0, csv_text.find('\n')),
              "text_id,char_count,word_count,sentence_count,avg_word_len,avg_sentence_len,type_token_ratio,"
              "syllable_count,flesch_reading_ease");
}
