#include <benchmark/benchmark.h>

#include <utility>

#include "lenatten/decoding.hpp"
#include "lenatten/length_control.hpp"
#include "lenatten/metrics.hpp"
#include "lenatten/training.hpp"

using namespace lenatten;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.uniform(-1, 1);
  return t;
}

struct ToySetup {
  Corpus corpus = generate_synthetic(SyntheticTask::prefix_copy, 64, 3);
  Vocabulary vocab = build_vocab(corpus, 1000);

  ModelConfig config(std::size_t d_hidden, std::size_t aleph = 2) const {
    ModelConfig c;
    c.d_hidden = d_hidden;
    c.d_embed = d_hidden / 2;
    c.aleph = aleph;
    c.vocab_size = vocab.size();
    return c;
  }
};

void BM_MatvecForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor w = random_tensor({n, n}, rng);
  w.set_requires_grad(true);
  const Tensor x = random_tensor({n}, rng);
  for (auto _ : state) {
    Tape tape;
    Var y = tanh(matvec(tape.parameter(w), tape.constant(x)));
    tape.backward(sum(y));
    benchmark::DoNotOptimize(w.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_MatvecForwardBackward)->RangeMultiplier(2)->Range(16, 256);

void BM_LengthAttention(benchmark::State& state) {
  const auto aleph = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  Rng rng(2);
  ParameterSet params;
  LenAttenParams::add_to(params, d, d, aleph, rng, 0.1);
  const auto table = build_length_embeddings(aleph, d);
  const Tensor h = random_tensor({d}, rng);
  for (auto _ : state) {
    Tape tape(false);
    LenAttenVars v{tape.parameter(params.get(LenAttenParams::kScoreProjection)),
                   tape.parameter(params.get(LenAttenParams::kStateProjection)),
                   tape.parameter(params.get(LenAttenParams::kLengthWeight)),
                   tape.parameter(params.get(LenAttenParams::kBias))};
    auto la = length_attention(tape.constant(h), RemainingLength(40), 0.01, tape.constant(table.rows()), v);
    benchmark::DoNotOptimize(la.context.value().data());
  }
}
BENCHMARK(BM_LengthAttention)->Arg(2)->Arg(10)->Arg(50)->Arg(250);

void BM_TrainingStep(benchmark::State& state) {
  ToySetup setup;
  Seq2SeqModel model(setup.config(static_cast<std::size_t>(state.range(0))), 1);
  const auto ex = encode_example(setup.vocab, setup.corpus[0], true);
  Rng rng(3);
  for (auto _ : state) {
    model.parameters().zero_grad();
    Tape tape;
    ModelGraph g(tape, model);
    auto r = mle_loss(g, setup.vocab, ex, 0.25, rng);
    tape.backward(r.loss);
    benchmark::DoNotOptimize(r.nll_sum);
  }
}
BENCHMARK(BM_TrainingStep)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_BeamSearch(benchmark::State& state) {
  ToySetup setup;
  const Seq2SeqModel model(setup.config(32), 1);
  const auto& ex = setup.corpus[0];
  const Source src = make_source(setup.vocab, ex.source);
  const auto beam = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    Seq2SeqStepModel step(model, setup.vocab, src);
    auto r = beam_search(step, 40, beam, default_max_steps(40));
    benchmark::DoNotOptimize(r.log_prob);
  }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_RougeL(benchmark::State& state) {
  Rng rng(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  Words a(n), b(n);
  for (auto& w : a) w = "w" + std::to_string(rng.below(50));
  for (auto& w : b) w = "w" + std::to_string(rng.below(50));
  for (auto _ : state) benchmark::DoNotOptimize(rouge_l(a, b).f1);
}
BENCHMARK(BM_RougeL)->RangeMultiplier(4)->Range(16, 1024);

}  // namespace

BENCHMARK_MAIN();
