#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lenatten/error.hpp"
#include "lenatten/training.hpp"

using namespace lenatten;

namespace {

ModelConfig tiny_config(const Vocabulary& vocab, Variant v = Variant::paulus, bool la = true) {
  ModelConfig c;
  c.variant = v;
  c.use_lenatten = la;
  c.d_hidden = 16;
  c.d_embed = 8;
  c.vocab_size = vocab.size();
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "lenatten_training_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Fixture {
  Corpus corpus = generate_synthetic(SyntheticTask::prefix_copy, 30, 5);
  Vocabulary vocab = build_vocab(corpus, 100);
};

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet p;
  auto& t = p.add("w", {3});
  t[0] = 0.5, t[1] = -1.0, t[2] = 2.0;
  const Tensor before = t;
  AdamOptimizer opt(p, {});
  opt.step(p);
  EXPECT_EQ(p.get("w"), before);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterSet p;
  auto& t = p.add("w", {1});
  t[0] = 1.0;
  t.grad()[0] = 1.0;
  AdamOptimizer opt(p, {});
  opt.step(p);
  EXPECT_NEAR(1.0 - p.get("w")[0], 0.001, 1e-10);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParameterSet p;
  p.add("fine", {2});
  auto& bad = p.add("broken", {2});
  bad.grad()[1] = std::nan("");
  AdamOptimizer opt(p, {});
  try {
    opt.step(p);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("broken"), std::string::npos);
    EXPECT_EQ(e.category(), Error::Category::numeric);
  }
}

TEST(Clipping, GlobalNormIsBounded) {
  ParameterSet p;
  auto& a = p.add("a", {3});
  auto& b = p.add("b", {2});
  a.grad()[0] = 3, a.grad()[1] = -4, a.grad()[2] = 12;  // norm 13 with b
  b.grad()[0] = 0, b.grad()[1] = 0;
  EXPECT_DOUBLE_EQ(clip_grad_norm(p, 2.0), 13.0);
  EXPECT_LE(global_grad_norm(p), 2.0 + 1e-9);
  EXPECT_NEAR(a.grad()[2], 12.0 * 2.0 / 13.0, 1e-15);

  a.grad()[0] = 0.3, a.grad()[1] = 0.4, a.grad()[2] = 0;
  clip_grad_norm(p, 2.0);
  EXPECT_EQ(a.grad()[0], 0.3);
}

TEST(ScheduledSampling, Extremes) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(scheduled_sample(5, 9, 0.0, rng), 5);
    EXPECT_EQ(scheduled_sample(5, 9, 1.0, rng), 9);
  }
  EXPECT_THROW(scheduled_sample(5, 9, 1.5, rng), ConfigError);
}

TEST(ScheduledSampling, MonteCarloRate) {
  Rng rng(2024);
  int picked = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) picked += scheduled_sample(0, 1, 0.25, rng);
  EXPECT_NEAR(static_cast<double>(picked) / n, 0.25, 0.01);
}

TEST(Loss, UniformModelGivesLogVocabPerStep) {
  Words words;
  for (int i = 0; i < 16; ++i) words.push_back("w" + std::to_string(i));
  const Vocabulary vocab(words);
  ASSERT_EQ(vocab.size(), 20u);
  for (auto v : {Variant::s2s, Variant::attention}) {
    Seq2SeqModel model(tiny_config(vocab, v), 3);
    for (auto& x : model.parameters().get("out.W").data()) x = 0.0;
    for (auto& x : model.parameters().get("out.b").data()) x = 0.0;
    const auto ex = encode_example(vocab, make_example("u", "w1 w2 w3 w4", "w1 w2"), false);
    Tape tape(false);
    ModelGraph g(tape, std::as_const(model));
    Rng rng(0);
    const auto r = mle_loss(g, vocab, ex, 0.25, rng);
    EXPECT_EQ(r.tokens, 3u);
    EXPECT_NEAR(r.loss.item(), std::log(20.0), 1e-12);
  }
}

TEST(Loss, TeacherForcingIsDeterministicAndSamplingChangesInputs) {
  Fixture f;
  Seq2SeqModel model(tiny_config(f.vocab), 3);
  const auto ex = encode_example(f.vocab, f.corpus[0], true);
  const auto loss = [&](double p, std::uint64_t seed) {
    Tape tape(false);
    ModelGraph g(tape, std::as_const(model));
    Rng rng(seed);
    return mle_loss(g, f.vocab, ex, p, rng).loss.item();
  };
  EXPECT_EQ(loss(0.0, 1), loss(0.0, 2));
  EXPECT_NE(loss(0.0, 1), loss(1.0, 1));
}

TEST(Loss, EmptyReferenceIsAnInputError) {
  Fixture f;
  Example ex = f.corpus[0];
  ex.reference.clear();
  EXPECT_THROW(encode_example(f.vocab, ex, true), InputError);
}

TEST(Trainer, MemorizesASingleExample) {
  const Corpus one{make_example("m", "the quick brown fox jumps", "quick brown")};
  const auto vocab = build_vocab(one, 100);
  TrainConfig tc;
  tc.epochs = 200;
  tc.sampling_prob = 0.0;
  std::vector<double> losses;
  TrainOptions opt;
  opt.on_epoch = [&](const EpochLog& log, const Trainer&) { losses.push_back(log.loss); };
  train(one, vocab, tiny_config(vocab), tc, opt);
  ASSERT_EQ(losses.size(), 200u);
  EXPECT_LT(losses.back(), 0.1);
  for (std::size_t i = 11; i < losses.size(); ++i) EXPECT_LE(losses[i], losses[i - 1]) << "epoch " << i + 1;
}

TEST(Trainer, MemorizesWithScheduledSampling) {
  const Corpus one{make_example("m", "the quick brown fox jumps", "quick brown")};
  const auto vocab = build_vocab(one, 100);
  TrainConfig tc;
  tc.epochs = 200;
  const auto ckpt = train(one, vocab, tiny_config(vocab), tc);
  Seq2SeqModel model(ckpt.model, ckpt.params);
  Tape tape(false);
  ModelGraph g(tape, std::as_const(model));
  Rng rng(0);
  EXPECT_LT(mle_loss(g, vocab, encode_example(vocab, one[0], true), 0.0, rng).loss.item(), 0.1);
}

TEST(Trainer, EpochLossesAreFinite) {
  Fixture f;
  TrainConfig tc;
  tc.epochs = 3;
  std::ostringstream log;
  TrainOptions opt;
  opt.log = &log;
  train(f.corpus, f.vocab, tiny_config(f.vocab), tc, opt);
  std::istringstream lines(log.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    EXPECT_NE(line.find("\"epoch\":" + std::to_string(n)), std::string::npos) << line;
    EXPECT_NE(line.find("\"wallclock\""), std::string::npos);
    EXPECT_EQ(line.find("nan"), std::string::npos);
  }
  EXPECT_EQ(n, 3);
}

TEST(Trainer, VocabularyMismatchIsAConfigError) {
  Fixture f;
  auto cfg = tiny_config(f.vocab);
  cfg.vocab_size += 1;
  EXPECT_THROW(Trainer(Seq2SeqModel(cfg, 1), f.vocab, TrainConfig{}), ConfigError);
}

TEST(Trainer, FrozenTableStaysOutOfOptimizerState) {
  Fixture f;
  TrainConfig tc;
  tc.epochs = 1;
  const auto ckpt = train(f.corpus, f.vocab, tiny_config(f.vocab), tc);
  EXPECT_EQ(ckpt.adam_m.size(), ckpt.params.size());
  for (const auto& n : ckpt.params.names()) EXPECT_EQ(n.find("table"), std::string::npos) << n;
  std::size_t moments = 0;
  for (const auto& m : ckpt.adam_m) moments += m.size();
  EXPECT_EQ(moments, ckpt.params.total_size());
}

TEST(Determinism, SameSeedSameCheckpointBytes) {
  Fixture f;
  TrainConfig tc;
  tc.epochs = 2;
  const auto a = serialize_checkpoint(train(f.corpus, f.vocab, tiny_config(f.vocab), tc));
  const auto b = serialize_checkpoint(train(f.corpus, f.vocab, tiny_config(f.vocab), tc));
  EXPECT_EQ(a, b);
  tc.seed = 2;
  EXPECT_NE(a, serialize_checkpoint(train(f.corpus, f.vocab, tiny_config(f.vocab), tc)));
}

TEST(Determinism, ResumeEqualsUninterruptedRun) {
  Fixture f;
  TrainConfig tc;
  tc.epochs = 4;
  const auto full = serialize_checkpoint(train(f.corpus, f.vocab, tiny_config(f.vocab), tc));

  Trainer first(Seq2SeqModel(tiny_config(f.vocab), tc.seed), f.vocab, tc);
  const auto data = first.encode(f.corpus);
  first.run_epoch(data);
  first.run_epoch(data);
  const auto path = temp_path("resume.ckpt");
  save_checkpoint(first.checkpoint(), path);
  Trainer resumed(load_checkpoint(path));
  EXPECT_EQ(resumed.epoch(), 2u);
  EXPECT_EQ(serialize_checkpoint(train(resumed, f.corpus)), full);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  Fixture f;
  TrainConfig tc;
  tc.epochs = 1;
  const auto ckpt = train(f.corpus, f.vocab, tiny_config(f.vocab), tc, {.run_config = R"({"note":"x","n":1})"});
  const auto p1 = temp_path("a.ckpt"), p2 = temp_path("b.ckpt");
  save_checkpoint(ckpt, p1);
  const auto loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);
  EXPECT_EQ(read_file(p1), read_file(p2));
  EXPECT_EQ(loaded.params.size(), ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) EXPECT_EQ(loaded.params.at(i), ckpt.params.at(i));
  EXPECT_EQ(loaded.vocab, f.vocab);
  EXPECT_EQ(loaded.model, ckpt.model);
  EXPECT_EQ(loaded.train, ckpt.train);
}

TEST(Checkpoint, CorruptionIsDetected) {
  Fixture f;
  TrainConfig tc;
  tc.epochs = 1;
  const auto bytes = serialize_checkpoint(train(f.corpus, f.vocab, tiny_config(f.vocab), tc));
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 9)), CheckpointError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, 30)), CheckpointError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, 5)), CheckpointError);

  auto flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x40;
  try {
    parse_checkpoint(flipped);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }

  auto version = bytes;
  version[8] = 9;
  try {
    parse_checkpoint(version);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }

  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(parse_checkpoint(magic), CheckpointError);
}

TEST(Checkpoint, MismatchedConfigIsIncompatible) {
  Fixture f;
  TrainConfig tc;
  tc.epochs = 1;
  const auto path = temp_path("compat.ckpt");
  save_checkpoint(train(f.corpus, f.vocab, tiny_config(f.vocab), tc), path);
  EXPECT_NO_THROW(load_checkpoint(path, tiny_config(f.vocab)));
  auto other = tiny_config(f.vocab);
  other.aleph = 10;
  try {
    load_checkpoint(path, other);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("incompatible"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(temp_path("does-not-exist.ckpt")), CheckpointError);
}

TEST(Checkpoint, ConfigHashTracksEveryField) {
  Fixture f;
  const auto base = tiny_config(f.vocab);
  auto changed = base;
  changed.r_scale = 0.02;
  EXPECT_NE(config_hash(base), config_hash(changed));
  changed = base;
  changed.count_separator = false;
  EXPECT_NE(config_hash(base), config_hash(changed));
  EXPECT_EQ(model_config_from_json(model_config_json(base)), base);
}
