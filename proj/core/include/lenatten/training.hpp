#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lenatten/corpus.hpp"
#include "lenatten/model.hpp"
#include "lenatten/rng.hpp"

namespace lenatten {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 10;
  AdamConfig adam;
  double clip_norm = 2.0;
  double sampling_prob = 0.25;
  std::size_t accumulate = 1;        // examples per optimizer step
  std::size_t checkpoint_every = 1;  // epochs between checkpoints, 0 disables
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(const ParameterSet& params, AdamConfig config);

  // One bias-corrected Adam update from the gradients currently stored in
  // `params`. Throws NumericError naming the first non-finite gradient.
  void step(ParameterSet& params);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return steps_; }
  const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }
  void restore(std::uint64_t steps, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

double global_grad_norm(const ParameterSet& params);
// Rescales all gradients so their global norm is at most `max_norm`. Returns
// the norm before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

int scheduled_sample(int gold_id, int predicted_id, double p, Rng& rng);

struct EncodedExample {
  std::string id;
  Source source;
  std::vector<int> targets;  // reference ids + EOS
  Words reference;
  std::int64_t desired_length = 0;
};

EncodedExample encode_example(const Vocabulary& vocab, const Example& ex, bool copy);

struct LossResult {
  Var loss;              // mean per-token negative log-likelihood
  double nll_sum = 0.0;  // summed over tokens
  std::size_t tokens = 0;
};

// Teacher-forced MLE loss. With probability `sampling_prob` per step (t >= 2)
// the decoder input is the previous argmax prediction instead of the gold
// token. The remaining length always follows the gold tokens.
LossResult mle_loss(ModelGraph& graph, const Vocabulary& vocab, const EncodedExample& ex, double sampling_prob,
                    Rng& rng);

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  Vocabulary vocab;
  ParameterSet params;
  std::uint64_t adam_steps = 0;
  std::vector<std::vector<double>> adam_m;
  std::vector<std::vector<double>> adam_v;
  std::string rng_state;
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  std::string run_config = "null";  // JSON snapshot of the invoking run configuration
};

std::string model_config_json(const ModelConfig& c);
ModelConfig model_config_from_json(const std::string& text);
std::string config_hash(const ModelConfig& c);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Also rejects checkpoints whose model configuration differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

struct EpochLog {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;
  double wallclock = 0.0;  // seconds since training started
};

class Trainer {
 public:
  Trainer(Seq2SeqModel model, Vocabulary vocab, TrainConfig config);
  explicit Trainer(const Checkpoint& ckpt);

  // Runs one pass over `data` in a freshly shuffled order.
  EpochLog run_epoch(const std::vector<EncodedExample>& data);
  std::vector<EncodedExample> encode(const Corpus& corpus) const;

  Checkpoint checkpoint(std::string run_config = "null") const;

  Seq2SeqModel& model() noexcept { return model_; }
  const Seq2SeqModel& model() const noexcept { return model_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  const TrainConfig& config() const noexcept { return config_; }
  std::size_t epoch() const noexcept { return epoch_; }
  std::uint64_t step() const noexcept { return step_; }

 private:
  Seq2SeqModel model_;
  Vocabulary vocab_;
  TrainConfig config_;
  AdamOptimizer optimizer_;
  Rng rng_;
  std::size_t epoch_ = 0;
  std::uint64_t step_ = 0;
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
};

struct TrainOptions {
  std::ostream* log = nullptr;                    // JSONL {epoch, step, loss, wallclock}
  std::optional<std::filesystem::path> checkpoint_path;
  std::string run_config = "null";
  std::function<void(const EpochLog&, const Trainer&)> on_epoch;
};

// Trains until `trainer.epoch() == trainer.config().epochs`.
Checkpoint train(Trainer& trainer, const Corpus& corpus, const TrainOptions& options = {});
Checkpoint train(const Corpus& corpus, const Vocabulary& vocab, const ModelConfig& model, const TrainConfig& config,
                 const TrainOptions& options = {});

}  // namespace lenatten
