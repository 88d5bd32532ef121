#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lenatten/corpus.hpp"
#include "lenatten/length_control.hpp"
#include "lenatten/tensor.hpp"

namespace lenatten {

enum class Variant { s2s, attention, paulus };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::paulus;
  bool use_lenatten = true;
  std::size_t aleph = 2;
  std::size_t d_hidden = 64;
  std::size_t d_embed = 32;
  std::size_t vocab_size = 0;
  std::size_t d_len = 0;   // 0 means d_hidden
  std::size_t d_attn = 0;  // 0 means d_hidden
  double r_scale = 0.01;
  bool count_separator = true;
  double init_range = 0.08;
  std::size_t max_source_len = 400;

  std::size_t length_dim() const noexcept { return d_len ? d_len : d_hidden; }
  std::size_t attention_dim() const noexcept { return d_attn ? d_attn : d_hidden; }
  bool copies() const noexcept { return variant == Variant::paulus; }
  bool attends() const noexcept { return variant != Variant::s2s; }
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// A source sentence mapped onto the vocabulary. Out-of-vocabulary words get
// extended ids vocab_size + k so the copy mechanism can emit them.
struct Source {
  std::vector<int> ids;
  std::vector<int> ext_ids;
  Words oov;

  std::size_t size() const noexcept { return ids.size(); }
};

Source make_source(const Vocabulary& vocab, std::span<const std::string> words);

// Gold decoder targets (EOS appended). With `copy`, OOV words present in the
// source map to their extended id instead of UNK.
std::vector<int> target_ids(const Vocabulary& vocab, const Source& source, std::span<const std::string> reference,
                            bool copy);

// Text of an (extended) output id.
std::string_view token_text(const Vocabulary& vocab, const Source& source, int id);

struct EncoderOutput {
  std::vector<Var> states;  // per position, width 2*d_hidden (forward||backward)
  Var memory;               // states stacked, [n x 2*d_hidden]
  Var final_state;          // C: last forward || last backward, width 2*d_hidden
};

struct DecoderStepState {
  Var hidden;
  Var cell;
  RemainingLength remaining;
  std::vector<Var> past_decoder_states;  // h_1 .. h_{t-1}
  std::size_t step = 1;                  // t
  std::size_t emitted_words = 0;         // non-special tokens emitted so far
};

struct Attention {
  Var context;
  Var weights;
};

struct StepOutput {
  Var distribution;  // probabilities over the vocabulary, or the extended vocabulary when copying
  Var logits;        // pre-softmax vocabulary scores
  std::optional<LengthAttention> length;
  std::optional<Attention> encoder_attention;
  Var copy_gate;
  // Advanced state. `remaining` is carried over unchanged: the caller applies
  // update_remaining once the emitted token is known.
  DecoderStepState next;
};

class Seq2SeqModel {
 public:
  Seq2SeqModel(ModelConfig config, std::uint64_t init_seed);
  // Restores a model from stored parameters; shapes must match `config`.
  Seq2SeqModel(ModelConfig config, ParameterSet params);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  const std::optional<LengthEmbeddingTable>& length_table() const noexcept { return table_; }

  std::size_t output_size(const Source& source) const;
  std::size_t projection_input_size() const;

 private:
  static ParameterSet fresh_parameters(const ModelConfig& config, std::uint64_t init_seed);
  void check_parameters() const;

  ModelConfig config_;
  ParameterSet params_;
  std::optional<LengthEmbeddingTable> table_;
};

// The model's parameters bound to one tape, plus the forward computation.
class ModelGraph {
 public:
  // Trainable: gradients accumulate into the model's parameter tensors.
  ModelGraph(Tape& tape, Seq2SeqModel& model);
  // Read-only: parameters enter the tape as constants.
  ModelGraph(Tape& tape, const Seq2SeqModel& model);

  Tape& tape() noexcept { return *tape_; }
  const ModelConfig& config() const noexcept { return model_->config(); }
  const Seq2SeqModel& model() const noexcept { return *model_; }

  EncoderOutput encode(const Source& source);
  DecoderStepState initial_state(const EncoderOutput& enc, RemainingLength r1);
  StepOutput decode_step(const DecoderStepState& state, int prev_id, const EncoderOutput& enc, const Source& source);

  Var embed(int id);
  std::pair<Var, Var> lstm_cell(std::string_view prefix, Var input, Var hidden, Var cell);
  Attention encoder_attention(Var hidden, const EncoderOutput& enc);
  Var intra_decoder_attention(Var hidden, std::span<const Var> past);
  LengthAttention length_attention(Var hidden, RemainingLength r);
  Var project_vocab_s2s(Var hidden, std::optional<Var> length_context, Var prev_embedding, Var fixed_context);
  Var project_vocab_paulus(Var hidden, std::optional<Var> length_context, Var encoder_context, Var decoder_context);
  Var copy_gate(Var hidden, Var encoder_context, Var decoder_context, std::optional<Var> length_context);

  Var param(std::string_view name);

 private:
  void bind(bool trainable, Seq2SeqModel* mutable_model);

  Tape* tape_;
  const Seq2SeqModel* model_;
  std::vector<Var> vars_;
  Var table_;
};

// P_final(w) = p_gen * P_vocab(w) + (1 - p_gen) * sum_{i: src_i = w} alpha_i
// over the extended vocabulary of size `extended_size`.
Var final_distribution(Var p_vocab, Var encoder_weights, std::span<const int> source_ext_ids, Var p_gen,
                       std::size_t extended_size);

}  // namespace lenatten
