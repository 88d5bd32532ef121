#include "lenatten/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "lenatten/error.hpp"
#include "lenatten/training.hpp"

namespace lenatten {

using nlohmann::json;

PRF make_prf(double overlap, double candidate_total, double reference_total) {
  PRF r;
  if (candidate_total > 0) r.precision = 100.0 * overlap / candidate_total;
  if (reference_total > 0) r.recall = 100.0 * overlap / reference_total;
  if (r.precision + r.recall > 0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

namespace {

Words lowered(const Words& w) {
  Words out;
  out.reserve(w.size());
  for (const auto& s : w) {
    std::string t = s;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(std::move(t));
  }
  return out;
}

std::map<Words, std::size_t> ngram_counts(const Words& w, std::size_t n) {
  std::map<Words, std::size_t> counts;
  if (w.size() < n) return counts;
  for (std::size_t i = 0; i + n <= w.size(); ++i) ++counts[Words(w.begin() + static_cast<std::ptrdiff_t>(i),
                                                               w.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

PRF rouge_n(const Words& candidate, const Words& reference, std::size_t n) {
  if (n < 1) throw ContractError("rouge_n needs n >= 1");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  const auto total = [n](const Words& w) { return w.size() >= n ? static_cast<double>(w.size() - n + 1) : 0.0; };
  return make_prf(static_cast<double>(overlap), total(candidate), total(reference));
}

std::size_t lcs_length(const Words& a, const Words& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

PRF rouge_l(const Words& candidate, const Words& reference) {
  return make_prf(static_cast<double>(lcs_length(candidate, reference)), static_cast<double>(candidate.size()),
                  static_cast<double>(reference.size()));
}

double length_variance(const std::vector<LengthPair>& pairs) {
  if (pairs.empty()) throw InputError("length variance of an empty set");
  double acc = 0.0;
  for (const auto& [ref, pred] : pairs) {
    const double d = static_cast<double>(ref - pred);
    acc += d * d;
  }
  return 0.001 * acc / static_cast<double>(pairs.size());
}

double over_length_ratio(const std::vector<LengthPair>& pairs) {
  if (pairs.empty()) throw InputError("over-length ratio of an empty set");
  const auto over = std::count_if(pairs.begin(), pairs.end(), [](const LengthPair& p) { return p.second > p.first; });
  return 100.0 * static_cast<double>(over) / static_cast<double>(pairs.size());
}

PerplexityResult perplexity(const Seq2SeqModel& model, const Vocabulary& vocab, const Corpus& corpus) {
  if (corpus.empty()) throw InputError("perplexity of an empty corpus");
  PerplexityResult r;
  Rng unused(0);
  for (const auto& ex : corpus) {
    Tape tape(false);
    ModelGraph graph(tape, model);
    const auto loss = mle_loss(graph, vocab, encode_example(vocab, ex, model.config().copies()), 0.0, unused);
    r.nll_sum += loss.nll_sum;
    r.tokens += loss.tokens;
  }
  r.perplexity = std::exp(r.nll_sum / static_cast<double>(r.tokens));
  return r;
}

MetricsReport evaluate(const std::vector<PredictionRecord>& predictions, const Corpus& references) {
  if (references.empty()) throw InputError("evaluation corpus is empty");
  std::unordered_map<std::string, const PredictionRecord*> by_id;
  std::vector<std::string> duplicates;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.id, &p).second) duplicates.push_back(p.id);
  }
  if (!duplicates.empty()) throw AlignmentError("duplicate prediction ids: " + duplicates.front());

  std::vector<std::string> missing;
  for (const auto& ex : references)
    if (!by_id.count(ex.id)) missing.push_back(ex.id);
  std::vector<std::string> unknown;
  if (predictions.size() + missing.size() != references.size()) {
    std::unordered_map<std::string, bool> ref_ids;
    for (const auto& ex : references) ref_ids.emplace(ex.id, true);
    for (const auto& p : predictions)
      if (!ref_ids.count(p.id)) unknown.push_back(p.id);
  }
  if (!missing.empty() || !unknown.empty()) {
    std::ostringstream msg;
    msg << "predictions do not align with the corpus";
    const auto list = [&msg](const char* label, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg << "; " << label << ':';
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg << ' ' << ids[i];
      if (ids.size() > 20) msg << " ... (" << ids.size() << " total)";
    };
    list("missing ids", missing);
    list("unknown ids", unknown);
    throw AlignmentError(msg.str());
  }

  MetricsReport rep;
  rep.n_examples = references.size();
  double p1 = 0, r1 = 0, p2 = 0, r2 = 0, pl = 0, rl = 0, err = 0, len = 0;
  std::vector<LengthPair> vs_reference, vs_desired;
  for (const auto& ex : references) {
    const PredictionRecord& pred = *by_id.at(ex.id);
    const Words cand = tokenize(pred.prediction);
    const Words ref = lowered(ex.reference);
    const PRF a = rouge_n(cand, ref, 1), b = rouge_n(cand, ref, 2), c = rouge_l(cand, ref);
    p1 += a.precision, r1 += a.recall;
    p2 += b.precision, r2 += b.recall;
    pl += c.precision, rl += c.recall;
    const auto chars = static_cast<std::int64_t>(char_length(pred.prediction));
    vs_reference.emplace_back(ex.reference_char_length, chars);
    vs_desired.emplace_back(pred.desired_length, chars);
    err += static_cast<double>(std::llabs(chars - pred.desired_length));
    len += static_cast<double>(chars);
  }
  const double n = static_cast<double>(rep.n_examples);
  const auto averaged = [n](double p, double r) {
    PRF out;
    out.precision = p / n;
    out.recall = r / n;
    if (out.precision + out.recall > 0) out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
  };
  rep.rouge1 = averaged(p1, r1);
  rep.rouge2 = averaged(p2, r2);
  rep.rougeL = averaged(pl, rl);
  rep.var = length_variance(vs_reference);
  rep.over_ratio = over_length_ratio(vs_reference);
  rep.var_desired = length_variance(vs_desired);
  rep.mean_char_error = err / n;
  rep.mean_char_length = len / n;
  return rep;
}

namespace {

json prf_json(const PRF& p) { return json{{"p", p.precision}, {"r", p.recall}, {"f", p.f1}}; }

}  // namespace

std::string report_json(const MetricsReport& rep, int indent) {
  json j{{"rouge1", prf_json(rep.rouge1)},
         {"rouge2", prf_json(rep.rouge2)},
         {"rougeL", prf_json(rep.rougeL)},
         {"var", rep.var},
         {"over_ratio", rep.over_ratio},
         {"perplexity", rep.perplexity ? json(*rep.perplexity) : json(nullptr)},
         {"n_examples", rep.n_examples},
         {"var_desired", rep.var_desired},
         {"mean_char_error", rep.mean_char_error},
         {"mean_char_length", rep.mean_char_length}};
  return j.dump(indent);
}

void write_report_table(std::ostream& out, const MetricsReport& rep) {
  const auto flags = out.flags();
  out << std::fixed;
  out << std::left << std::setw(10) << "metric" << std::right << std::setw(10) << "P" << std::setw(10) << "R"
      << std::setw(10) << "F" << '\n';
  const auto row = [&out](const char* name, const PRF& p) {
    out << std::left << std::setw(10) << name << std::right << std::setprecision(2) << std::setw(10) << p.precision
        << std::setw(10) << p.recall << std::setw(10) << p.f1 << '\n';
  };
  row("ROUGE-1", rep.rouge1);
  row("ROUGE-2", rep.rouge2);
  row("ROUGE-L", rep.rougeL);
  const auto line = [&out](const char* name, double v, int precision) {
    out << std::left << std::setw(20) << name << std::right << std::setprecision(precision) << std::setw(20) << v
        << '\n';
  };
  line("Var", rep.var, 4);
  line("%over", rep.over_ratio, 2);
  if (rep.perplexity) line("perplexity", *rep.perplexity, 4);
  line("Var (desired)", rep.var_desired, 4);
  line("mean |error|", rep.mean_char_error, 2);
  line("mean length", rep.mean_char_length, 2);
  out << std::left << std::setw(20) << "examples" << std::right << std::setw(20) << rep.n_examples << '\n';
  out.flags(flags);
}

}  // namespace lenatten
