#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "lenatten/error.hpp"
#include "lenatten/metrics.hpp"
#include "lenatten/training.hpp"
#include "oracles.hpp"

using namespace lenatten;

namespace {

Words w(const char* s) { return tokenize(s); }

Vocabulary twenty_word_vocab() {
  Words words;
  for (int i = 0; i < 16; ++i) words.push_back("w" + std::to_string(i));
  return Vocabulary(words);
}

Seq2SeqModel unigram_model(const Vocabulary& vocab, const std::vector<double>& probs) {
  ModelConfig c;
  c.variant = Variant::s2s;
  c.use_lenatten = false;
  c.d_hidden = 8;
  c.d_embed = 8;
  c.vocab_size = vocab.size();
  Seq2SeqModel m(c, 5);
  for (auto& x : m.parameters().get("out.W").data()) x = 0.0;
  auto b = m.parameters().get("out.b").data();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = probs[i] > 0 ? std::log(probs[i]) : -1000.0;
  return m;
}

PredictionRecord record(const std::string& id, const std::string& text, std::int64_t desired) {
  return {id, text, desired, static_cast<std::int64_t>(char_length(text))};
}

}  // namespace

TEST(RougeN, HandCountedFixture) {
  const auto r1 = rouge_n(w("the cat sat"), w("the cat ran"), 1);
  const auto r2 = rouge_n(w("the cat sat"), w("the cat ran"), 2);
  EXPECT_NEAR(r1.precision, 66.67, 0.01);
  EXPECT_NEAR(r1.recall, 66.67, 0.01);
  EXPECT_NEAR(r1.f1, 66.67, 0.01);
  EXPECT_NEAR(r2.precision, 50.0, 0.01);
  EXPECT_NEAR(r2.recall, 50.0, 0.01);
  EXPECT_NEAR(r2.f1, 50.0, 0.01);
}

TEST(RougeN, TrivialCases) {
  const auto same = rouge_n(w("a b c"), w("a b c"), 2);
  EXPECT_EQ(same.f1, 100.0);
  EXPECT_EQ(rouge_n(w("a b"), w("c d"), 1).f1, 0.0);
  EXPECT_EQ(rouge_n(w("a"), w("a"), 2).f1, 0.0);
  EXPECT_EQ(rouge_n({}, w("a"), 1).f1, 0.0);
  EXPECT_THROW(rouge_n(w("a"), w("a"), 0), ContractError);
}

TEST(RougeN, ClippedCountsMatchOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    Words a(static_cast<std::size_t>(rng.between(0, 10))), b(static_cast<std::size_t>(rng.between(0, 10)));
    for (auto& x : a) x = std::string(1, static_cast<char>('a' + rng.below(4)));
    for (auto& x : b) x = std::string(1, static_cast<char>('a' + rng.below(4)));
    for (std::size_t n : {1u, 2u}) {
      const auto r = rouge_n(a, b, n);
      const double overlap = static_cast<double>(oracle::ngram_overlap(a, b, n));
      const double ca = a.size() >= n ? static_cast<double>(a.size() - n + 1) : 0;
      const double cb = b.size() >= n ? static_cast<double>(b.size() - n + 1) : 0;
      EXPECT_NEAR(r.precision, ca > 0 ? 100 * overlap / ca : 0, 1e-9);
      EXPECT_NEAR(r.recall, cb > 0 ? 100 * overlap / cb : 0, 1e-9);
      const auto swapped = rouge_n(b, a, n);
      EXPECT_DOUBLE_EQ(swapped.precision, r.recall);
      EXPECT_DOUBLE_EQ(swapped.recall, r.precision);
      EXPECT_NEAR(swapped.f1, r.f1, 1e-12);
      EXPECT_GE(r.f1, 0.0);
      EXPECT_LE(r.f1, 100.0);
    }
  }
}

TEST(RougeL, HandLcsFixture) {
  EXPECT_EQ(lcs_length(w("a b c d"), w("a c d e")), 3u);
  const auto r = rouge_l(w("a b c d"), w("a c d e"));
  EXPECT_NEAR(r.precision, 75.0, 0.01);
  EXPECT_NEAR(r.recall, 75.0, 0.01);
  EXPECT_NEAR(r.f1, 75.0, 0.01);
  EXPECT_EQ(rouge_l(w("x y"), w("x y")).f1, 100.0);
  const auto empty = rouge_l({}, w("x y"));
  EXPECT_EQ(empty.precision, 0.0);
  EXPECT_EQ(empty.f1, 0.0);
}

TEST(RougeL, DynamicProgramEqualsRecursiveDefinition) {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    Words a(static_cast<std::size_t>(rng.between(0, 8))), b(static_cast<std::size_t>(rng.between(0, 8)));
    for (auto& x : a) x = std::string(1, static_cast<char>('a' + rng.below(3)));
    for (auto& x : b) x = std::string(1, static_cast<char>('a' + rng.below(3)));
    ASSERT_EQ(lcs_length(a, b), oracle::lcs_recursive(a, 0, b, 0));
  }
}

TEST(LengthVariance, Fixtures) {
  EXPECT_NEAR(length_variance({{10, 20}}), 0.1, 1e-12);
  EXPECT_NEAR(length_variance({{10, 12}, {20, 17}}), 0.0065, 1e-12);
  EXPECT_EQ(length_variance({{5, 5}, {9, 9}}), 0.0);
  EXPECT_THROW(length_variance({}), InputError);
}

TEST(LengthVariance, OrderInvariantAndQuadratic) {
  Rng rng(9);
  std::vector<LengthPair> pairs(20), doubled;
  for (auto& p : pairs) p = {rng.between(0, 80), rng.between(0, 80)};
  for (const auto& [r, p] : pairs) doubled.push_back({r, r + 2 * (p - r)});
  auto shuffled = pairs;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 7, shuffled.end());
  EXPECT_NEAR(length_variance(shuffled), length_variance(pairs), 1e-12);
  EXPECT_NEAR(length_variance(doubled), 4 * length_variance(pairs), 1e-9);
}

TEST(OverLength, Fixtures) {
  EXPECT_EQ(over_length_ratio({{10, 9}, {10, 10}}), 0.0);
  EXPECT_EQ(over_length_ratio({{1, 2}, {3, 9}}), 100.0);
  EXPECT_EQ(over_length_ratio({{1, 2}, {3, 9}, {5, 6}, {7, 7}}), 75.0);
  EXPECT_THROW(over_length_ratio({}), InputError);
}

TEST(Perplexity, UniformModelOverTwentyIds) {
  const auto vocab = twenty_word_vocab();
  const auto model = unigram_model(vocab, std::vector<double>(20, 1.0 / 20));
  const Corpus corpus{make_example("a", "w1 w2 w3", "w1 w2"), make_example("b", "w4 w5 w6 w7", "w5")};
  const auto r = perplexity(model, vocab, corpus);
  EXPECT_EQ(r.tokens, 5u);
  EXPECT_NEAR(r.perplexity, 20.0, 1e-9);
  EXPECT_EQ(perplexity(model, vocab, corpus).perplexity, r.perplexity);
  EXPECT_THROW(perplexity(model, vocab, {}), InputError);
}

TEST(Perplexity, MixtureIsNoBetterThanEmpiricalUnigram) {
  const auto vocab = twenty_word_vocab();
  const Corpus corpus{make_example("a", "w1 w2 w3", "w1 w2 w2"), make_example("b", "w4 w5 w6 w7", "w5 w2"),
                      make_example("c", "w1 w9", "w1")};
  // Gold stream: w1 w2 w2 </s> w5 w2 </s> w1 </s>
  std::vector<double> empirical(20, 0.0);
  const std::map<std::string, double> counts{{"w1", 2}, {"w2", 3}, {"w5", 1}};
  for (const auto& [word, c] : counts) empirical[static_cast<std::size_t>(vocab.id(word))] = c / 9.0;
  empirical[Vocabulary::kEos] = 3.0 / 9.0;
  double entropy = 0;
  for (double p : empirical)
    if (p > 0) entropy -= p * std::log(p);

  const auto best = perplexity(unigram_model(vocab, empirical), vocab, corpus);
  EXPECT_EQ(best.tokens, 9u);
  EXPECT_NEAR(best.perplexity, std::exp(entropy), 1e-9);
  for (double lambda : {0.9, 0.5, 0.1}) {
    std::vector<double> mix(20);
    for (std::size_t i = 0; i < 20; ++i) mix[i] = lambda * empirical[i] + (1 - lambda) / 20.0;
    EXPECT_GE(perplexity(unigram_model(vocab, mix), vocab, corpus).perplexity, best.perplexity);
  }
}

TEST(Evaluate, IdenticalCorpusIsPerfect) {
  Corpus corpus;
  for (int i = 0; i < 20; ++i) {
    std::string words;
    for (int k = 0; k <= i % 6 + 1; ++k) words += "w" + std::to_string((i + k) % 11) + " ";
    corpus.push_back(make_example(std::to_string(i), words + "tail", words));
  }
  std::vector<PredictionRecord> preds;
  for (const auto& ex : corpus) preds.push_back(record(ex.id, detokenize(ex.reference), ex.reference_char_length));
  const auto rep = evaluate(preds, corpus);
  for (const auto& m : {rep.rouge1, rep.rouge2, rep.rougeL}) {
    EXPECT_EQ(m.precision, 100.0);
    EXPECT_EQ(m.recall, 100.0);
    EXPECT_EQ(m.f1, 100.0);
  }
  EXPECT_EQ(rep.var, 0.0);
  EXPECT_EQ(rep.over_ratio, 0.0);
  EXPECT_EQ(rep.n_examples, 20u);
  EXPECT_FALSE(rep.perplexity);
}

TEST(Evaluate, ThreeExampleFixtureMatchesIndependentComputation) {
  const Corpus refs{make_example("1", "the cat ran off", "The cat ran"), make_example("2", "a c d e f", "a c d e"),
                    make_example("3", "x y z", "x y")};
  const std::vector<PredictionRecord> preds{record("3", "x", 2), record("1", "the cat sat down", 11),
                                            record("2", "A b c d", 7)};
  const auto rep = evaluate(preds, refs);

  const std::vector<std::pair<Words, Words>> pairs{
      {w("the cat sat down"), w("the cat ran")}, {w("a b c d"), w("a c d e")}, {w("x"), w("x y")}};
  double p1 = 0, r1 = 0, p2 = 0, r2 = 0, pl = 0, rl = 0;
  for (const auto& [c, r] : pairs) {
    const double c1 = static_cast<double>(c.size()), rr1 = static_cast<double>(r.size());
    p1 += 100 * static_cast<double>(oracle::ngram_overlap(c, r, 1)) / c1 / 3;
    r1 += 100 * static_cast<double>(oracle::ngram_overlap(c, r, 1)) / rr1 / 3;
    if (c.size() > 1) p2 += 100 * static_cast<double>(oracle::ngram_overlap(c, r, 2)) / (c1 - 1) / 3;
    if (r.size() > 1) r2 += 100 * static_cast<double>(oracle::ngram_overlap(c, r, 2)) / (rr1 - 1) / 3;
    pl += 100 * static_cast<double>(oracle::lcs_recursive(c, 0, r, 0)) / c1 / 3;
    rl += 100 * static_cast<double>(oracle::lcs_recursive(c, 0, r, 0)) / rr1 / 3;
  }
  const auto f = [](double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; };
  EXPECT_NEAR(rep.rouge1.precision, p1, 1e-9);
  EXPECT_NEAR(rep.rouge1.recall, r1, 1e-9);
  EXPECT_NEAR(rep.rouge1.f1, f(p1, r1), 1e-9);
  EXPECT_NEAR(rep.rouge2.precision, p2, 1e-9);
  EXPECT_NEAR(rep.rouge2.recall, r2, 1e-9);
  EXPECT_NEAR(rep.rouge2.f1, f(p2, r2), 1e-9);
  EXPECT_NEAR(rep.rougeL.precision, pl, 1e-9);
  EXPECT_NEAR(rep.rougeL.recall, rl, 1e-9);
  EXPECT_NEAR(rep.rougeL.f1, f(pl, rl), 1e-9);

  // Lengths (ref, pred): (11, 16), (7, 7), (3, 1); desired 11, 7, 2.
  EXPECT_NEAR(rep.var, 0.001 * (25 + 0 + 4) / 3, 1e-12);
  EXPECT_NEAR(rep.over_ratio, 100.0 / 3, 1e-12);
  EXPECT_NEAR(rep.var_desired, 0.001 * (25 + 0 + 1) / 3, 1e-12);
  EXPECT_NEAR(rep.mean_char_error, (5 + 0 + 1) / 3.0, 1e-12);
  EXPECT_NEAR(rep.mean_char_length, (16 + 7 + 1) / 3.0, 1e-12);
}

TEST(Evaluate, MisalignedIdsAreReported) {
  const Corpus refs{make_example("1", "a b", "a"), make_example("2", "c d", "c")};
  try {
    evaluate({record("1", "a", 1), record("9", "c", 1)}, refs);
    FAIL() << "expected AlignmentError";
  } catch (const AlignmentError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("9"), std::string::npos) << msg;
  }
  EXPECT_THROW(evaluate({record("1", "a", 1), record("1", "a", 1), record("2", "c", 1)}, refs), AlignmentError);
  EXPECT_THROW(evaluate({record("1", "a", 1)}, refs), AlignmentError);
}

TEST(Evaluate, ReportJsonHasEveryField) {
  const Corpus refs{make_example("1", "a b", "a")};
  auto rep = evaluate({record("1", "a b", 1)}, refs);
  auto text = report_json(rep);
  for (auto key : {"rouge1", "rouge2", "rougeL", "\"var\"", "over_ratio", "\"perplexity\": null", "n_examples",
                   "var_desired", "mean_char_error"})
    EXPECT_NE(text.find(key), std::string::npos) << key;
  rep.perplexity = 3.5;
  EXPECT_NE(report_json(rep).find("\"perplexity\": 3.5"), std::string::npos);
}
