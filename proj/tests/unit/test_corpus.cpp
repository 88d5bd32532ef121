#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "lenatten/corpus.hpp"
#include "lenatten/error.hpp"

using namespace lenatten;

TEST(Tokenize, LowercasesAndSplits) {
  EXPECT_EQ(tokenize("The Cat sat"), (Words{"the", "cat", "sat"}));
  EXPECT_EQ(tokenize("  a  b "), (Words{"a", "b"}));
  EXPECT_EQ(tokenize("\tx\ny\r\n"), (Words{"x", "y"}));
  EXPECT_TRUE(tokenize("   ").empty());
}

TEST(Tokenize, Idempotent) {
  for (std::string s : {"The Cat  sat", "  MIXED case\tWords ", "", "one"}) {
    const auto once = tokenize(s);
    EXPECT_EQ(tokenize(detokenize(once)), once);
  }
}

TEST(Tokenize, CharLengthIncludesSeparators) {
  EXPECT_EQ(summary_char_length(Words{"a", "bc"}), 4);
  EXPECT_EQ(summary_char_length(Words{}), 0);
  EXPECT_EQ(make_example("x", "a bc d", "a bc").reference_char_length, 4);
}

TEST(Vocab, SingleRepeatedWord) {
  Corpus c{make_example("1", "a a a", "a a")};
  const auto v = build_vocab(c, 100);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.content_words(), (Words{"a"}));
  EXPECT_EQ(v.id("a"), 4);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
}

TEST(Vocab, FrequencyThenLexicographic) {
  Corpus c{make_example("1", "pear apple fig fig kiwi", "kiwi fig")};
  const auto v = build_vocab(c, 100);
  EXPECT_EQ(v.content_words(), (Words{"fig", "kiwi", "apple", "pear"}));
  const auto capped = build_vocab(c, 6);
  EXPECT_EQ(capped.content_words(), (Words{"fig", "kiwi"}));
  EXPECT_EQ(capped.id("apple"), Vocabulary::kUnk);
}

TEST(Vocab, DeterministicAndCapChecked) {
  const auto c = generate_synthetic(SyntheticTask::prefix_copy, 50, 3);
  EXPECT_EQ(build_vocab(c, 30), build_vocab(c, 30));
  EXPECT_THROW(build_vocab(c, 4), ConfigError);
}

TEST(Vocab, ReservedIds) {
  Vocabulary v;
  EXPECT_EQ(v.word(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.word(Vocabulary::kUnk), "<unk>");
  EXPECT_EQ(v.word(Vocabulary::kSos), "<s>");
  EXPECT_EQ(v.word(Vocabulary::kEos), "</s>");
  EXPECT_THROW(v.word(4), IndexError);
}

TEST(Vocab, EncodeDecodeIdentityOnKnownWords) {
  const auto c = generate_synthetic(SyntheticTask::prefix_copy, 40, 9);
  const auto v = build_vocab(c, 1000);
  for (const auto& ex : c) EXPECT_EQ(v.decode(v.encode(ex.source)), ex.source);
}

TEST(Jsonl, ParsesValidLines) {
  std::istringstream in(R"({"id":"a","source":"The cat sat on the mat","summary":"cat sat"}
{"id":"b","source":"x y z","summary":"a bc"}
)");
  const auto c = parse_jsonl(in);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].source.front(), "the");
  EXPECT_EQ(c[0].reference_char_length, 7);
  EXPECT_EQ(c[1].reference_char_length, 4);
}

TEST(Jsonl, MissingFieldNamesTheFieldAndLine) {
  std::istringstream in("{\"id\":\"a\",\"source\":\"x\",\"summary\":\"x\"}\n{\"id\":\"b\",\"source\":\"x\"}\n");
  try {
    parse_jsonl(in, "data.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("summary"), std::string::npos) << msg;
    EXPECT_NE(msg.find("data.jsonl:2"), std::string::npos) << msg;
  }
}

TEST(Jsonl, MalformedAndDuplicate) {
  std::istringstream bad("{\"id\": \n");
  EXPECT_THROW(parse_jsonl(bad), ParseError);
  std::istringstream dup("{\"id\":\"a\",\"source\":\"x\",\"summary\":\"x\"}\n{\"id\":\"a\",\"source\":\"y\",\"summary\":\"y\"}\n");
  EXPECT_THROW(parse_jsonl(dup), ValidationError);
  std::istringstream empty_summary("{\"id\":\"a\",\"source\":\"x\",\"summary\":\"  \"}\n");
  EXPECT_THROW(parse_jsonl(empty_summary), ValidationError);
}

TEST(Jsonl, RoundTrip) {
  const auto c = generate_synthetic(SyntheticTask::prefix_copy, 25, 4);
  std::stringstream buf;
  write_jsonl(buf, c);
  EXPECT_EQ(parse_jsonl(buf), c);
}

TEST(Synthetic, DeterministicBySeed) {
  std::ostringstream a, b, c;
  write_jsonl(a, generate_synthetic(SyntheticTask::prefix_copy, 200, 42));
  write_jsonl(b, generate_synthetic(SyntheticTask::prefix_copy, 200, 42));
  write_jsonl(c, generate_synthetic(SyntheticTask::prefix_copy, 200, 43));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(Synthetic, ReferencesAreMaximalPrefixes) {
  const SyntheticSpec spec;
  const auto corpus = generate_synthetic(SyntheticTask::prefix_copy, 500, 7, spec);
  std::set<std::string> ids;
  for (const auto& ex : corpus) {
    ids.insert(ex.id);
    ASSERT_GE(ex.source.size(), spec.min_source_words);
    ASSERT_LE(ex.source.size(), spec.max_source_words);
    ASSERT_FALSE(ex.reference.empty());
    ASSERT_LE(ex.reference.size(), ex.source.size());
    for (std::size_t i = 0; i < ex.reference.size(); ++i) ASSERT_EQ(ex.reference[i], ex.source[i]);
    for (const auto& w : ex.source) {
      ASSERT_GE(w.size(), 2u);
      ASSERT_LE(w.size(), 8u);
    }
    // Recount the length by hand.
    std::int64_t len = 0;
    for (std::size_t i = 0; i < ex.reference.size(); ++i) len += static_cast<std::int64_t>(ex.reference[i].size()) + (i ? 1 : 0);
    ASSERT_EQ(len, ex.reference_char_length);
    ASSERT_LE(len, spec.max_target_chars);
    if (ex.reference.size() < ex.source.size()) {
      // The next word must overshoot the drawn target, which is at least min_target_chars.
      const auto next = len + 1 + static_cast<std::int64_t>(ex.source[ex.reference.size()].size());
      ASSERT_GT(next, spec.min_target_chars);
    }
  }
  EXPECT_EQ(ids.size(), corpus.size());
}

TEST(Histogram, SingleExample) {
  Example ex;
  ex.id = "x";
  ex.reference_char_length = 35;
  const auto h = length_histogram({ex}, 10);
  ASSERT_EQ(h.counts.size(), 1u);
  EXPECT_EQ(h.bin_starts[0], 30);
  EXPECT_EQ(h.counts[0], 1u);
  std::ostringstream csv;
  write_histogram_csv(csv, h);
  EXPECT_EQ(csv.str(), "bin_start,bin_end,count\n30,40,1\n");
}

TEST(Histogram, ConservesCountsAndStaysInRange) {
  const auto corpus = generate_synthetic(SyntheticTask::prefix_copy, 1000, 5);
  const auto h = length_histogram(corpus, 5);
  EXPECT_EQ(h.total(), corpus.size());
  EXPECT_GE(h.bin_starts.front(), 0);
  EXPECT_LE(h.bin_starts.back() + h.bin_width, 65);
  std::ostringstream svg;
  write_histogram_svg(svg, h, "reference <lengths>");
  EXPECT_NE(svg.str().find("&lt;lengths&gt;"), std::string::npos);
  EXPECT_THROW(length_histogram({}, 5), InputError);
  EXPECT_THROW(length_histogram(corpus, 0), ConfigError);
}
