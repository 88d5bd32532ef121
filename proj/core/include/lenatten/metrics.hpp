#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "lenatten/corpus.hpp"
#include "lenatten/decoding.hpp"
#include "lenatten/model.hpp"

namespace lenatten {

// Precision, recall and F1, all in [0, 100].
struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

PRF make_prf(double overlap, double candidate_total, double reference_total);

PRF rouge_n(const Words& candidate, const Words& reference, std::size_t n);
std::size_t lcs_length(const Words& a, const Words& b);
PRF rouge_l(const Words& candidate, const Words& reference);

// (reference chars, prediction chars)
using LengthPair = std::pair<std::int64_t, std::int64_t>;

// 0.001 * mean squared character-length difference.
double length_variance(const std::vector<LengthPair>& pairs);
// Percentage of predictions strictly longer than their references.
double over_length_ratio(const std::vector<LengthPair>& pairs);

struct PerplexityResult {
  double perplexity = 0.0;
  double nll_sum = 0.0;
  std::size_t tokens = 0;
};

// Teacher-forced with r_1 = reference length, no scheduled sampling.
PerplexityResult perplexity(const Seq2SeqModel& model, const Vocabulary& vocab, const Corpus& corpus);

struct MetricsReport {
  PRF rouge1;
  PRF rouge2;
  PRF rougeL;
  double var = 0.0;
  double over_ratio = 0.0;
  std::optional<double> perplexity;
  std::size_t n_examples = 0;
  // Against each record's desired length rather than the reference.
  double var_desired = 0.0;
  double mean_char_error = 0.0;
  double mean_char_length = 0.0;
};

// Macro-averaged over examples. Predictions are matched to the corpus by id;
// missing or unknown ids raise AlignmentError.
MetricsReport evaluate(const std::vector<PredictionRecord>& predictions, const Corpus& references);

std::string report_json(const MetricsReport& report, int indent = 2);
void write_report_table(std::ostream& out, const MetricsReport& report);

}  // namespace lenatten
