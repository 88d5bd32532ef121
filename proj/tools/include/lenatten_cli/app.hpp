#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "lenatten/corpus.hpp"
#include "lenatten/model.hpp"
#include "lenatten/training.hpp"

namespace lenatten::cli {

// Every knob of a run. Serialized as one flat JSON object with dotted keys
// ("model.aleph", "train.epochs", ...).
struct RunConfig {
  std::uint64_t seed = 1;

  std::string data_dir = "data";
  std::size_t data_n = 1000;
  std::size_t data_min_source_words = 10;
  std::size_t data_max_source_words = 20;
  std::int64_t data_min_target_chars = 10;
  std::int64_t data_max_target_chars = 60;
  std::size_t data_vocab_cap = 1000;

  std::string model_variant = "paulus";
  bool model_use_lenatten = true;
  std::size_t model_aleph = 2;
  std::size_t model_d_hidden = 32;
  std::size_t model_d_embed = 16;
  std::size_t model_d_len = 0;
  std::size_t model_d_attn = 0;
  double model_r_scale = 0.01;
  bool model_count_separator = true;
  double model_init_range = 0.08;
  std::size_t model_max_source_len = 400;

  std::size_t train_epochs = 20;
  double train_lr = 0.001;
  double train_beta1 = 0.9;
  double train_beta2 = 0.999;
  double train_eps = 1e-8;
  double train_clip_norm = 2.0;
  double train_sampling_prob = 0.25;
  std::size_t train_accumulate = 1;
  std::size_t train_checkpoint_every = 1;

  std::size_t decode_beam = 4;
  std::string decode_policy = "reference";

  std::string eval_split = "test";
  std::vector<std::int64_t> eval_fixed_lengths;

  std::vector<std::size_t> sweep_alephs{2, 10, 50};

  std::string run_dir = "runs/default";

  // Flat dotted-key JSON. Unknown keys and type mismatches are config errors.
  std::string to_json(int indent = 2) const;
  static RunConfig from_json(std::string_view text, const std::string& origin = "<config>");
  // Applies one "key=value" override; the value is read as JSON, falling back
  // to a plain string.
  void set(std::string_view assignment);
  static std::vector<std::string> keys();

  ModelConfig model_config(std::size_t vocab_size) const;
  TrainConfig train_config() const;
  SyntheticSpec synthetic_spec() const;

  std::filesystem::path split_path(std::string_view split) const;
  std::filesystem::path checkpoint_path() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

// Entry point shared by the executable and the tests. Returns the exit code:
// 0 success, 1 usage error, 2 data error, 3 numeric failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lenatten::cli
