#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lenatten/corpus.hpp"
#include "lenatten/model.hpp"

namespace lenatten {

struct StepScores {
  std::vector<double> log_probs;
  std::vector<double> length_weights;  // empty when the model has no length attention
};

// Anything that scores the next token given a decoder state. Decoders own the
// remaining-length bookkeeping; step() never changes `remaining`.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual DecoderStepState start(RemainingLength r1) = 0;
  virtual StepScores step(const DecoderStepState& state, int prev_id, DecoderStepState& next) = 0;
  virtual std::string token(int id) const = 0;
  virtual bool count_separator() const = 0;
};

// A trained Seq2SeqModel bound to one source sentence (inference only).
class Seq2SeqStepModel : public StepModel {
 public:
  Seq2SeqStepModel(const Seq2SeqModel& model, const Vocabulary& vocab, const Source& source);

  DecoderStepState start(RemainingLength r1) override;
  StepScores step(const DecoderStepState& state, int prev_id, DecoderStepState& next) override;
  std::string token(int id) const override;
  bool count_separator() const override { return model_->config().count_separator; }

 private:
  const Seq2SeqModel* model_;
  const Vocabulary* vocab_;
  Source source_;
  Tape tape_{false};
  ModelGraph graph_;
  EncoderOutput enc_;
};

// Reserved ids (PAD, UNK, SOS, EOS) cost nothing and never reach the output
// text, matching how training replays the remaining length.
bool is_silent_token(int id) noexcept;

// Applies the remaining-length recurrence for one emitted token.
void advance_remaining(const StepModel& model, DecoderStepState& state, int token);

struct StepTrace {
  std::int64_t remaining = 0;  // r_t used to score this step
  std::vector<double> length_weights;
  int token = 0;
  std::string text;
  std::int64_t cost = 0;
};

struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  DecoderStepState state;
  bool finished = false;
  std::vector<StepTrace> trace;
};

struct DecodeResult {
  std::vector<int> tokens;  // emitted ids, EOS excluded
  Words words;
  std::string text;
  double log_prob = 0.0;
  bool finished = false;
  std::vector<StepTrace> trace;
};

// 2 + desired_length: every real token costs at least one character.
std::size_t default_max_steps(std::int64_t desired_length);

DecodeResult greedy_decode(StepModel& model, std::int64_t desired_length, std::size_t max_steps, bool trace = false);

// Beam search without length normalization. Every live hypothesis expands
// over its top `beam_size` tokens; EOS hypotheses are parked; the best parked
// hypothesis wins (best live one if none finished within `max_steps`).
DecodeResult beam_search(StepModel& model, std::int64_t desired_length, std::size_t beam_size, std::size_t max_steps,
                         bool trace = false);

struct LengthPolicy {
  enum class Kind { reference, fixed };
  Kind kind = Kind::reference;
  std::int64_t length = 0;

  static LengthPolicy reference() { return {}; }
  static LengthPolicy fixed(std::int64_t n);
  // "reference" or "fixed:N"
  static LengthPolicy parse(std::string_view text);
  std::string to_string() const;
  std::int64_t desired_for(const Example& ex) const;
};

struct PredictionRecord {
  std::string id;
  std::string prediction;
  std::int64_t desired_length = 0;
  std::int64_t char_length = 0;

  bool operator==(const PredictionRecord&) const = default;
};

// Parallelism cap from LENATTEN_THREADS (default 1).
std::size_t evaluation_threads();

std::vector<PredictionRecord> decode_corpus(const Seq2SeqModel& model, const Vocabulary& vocab, const Corpus& corpus,
                                            const LengthPolicy& policy, std::size_t beam_size,
                                            std::size_t threads = 1);

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(std::istream& in, const std::string& origin = "<stream>");
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);

}  // namespace lenatten
