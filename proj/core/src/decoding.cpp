#include "lenatten/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "lenatten/error.hpp"

namespace lenatten {

using nlohmann::json;

// ---------------------------------------------------------------- step model

Seq2SeqStepModel::Seq2SeqStepModel(const Seq2SeqModel& model, const Vocabulary& vocab, const Source& source)
    : model_(&model), vocab_(&vocab), source_(source), graph_(tape_, model) {
  enc_ = graph_.encode(source_);
}

DecoderStepState Seq2SeqStepModel::start(RemainingLength r1) { return graph_.initial_state(enc_, r1); }

StepScores Seq2SeqStepModel::step(const DecoderStepState& state, int prev_id, DecoderStepState& next) {
  StepOutput out = graph_.decode_step(state, prev_id, enc_, source_);
  StepScores s;
  if (model_->config().copies()) {
    const auto p = out.distribution.value();
    s.log_probs.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) s.log_probs[i] = std::log(std::max(p[i], 1e-300));
  } else {
    const auto z = out.logits.value();
    const double mx = *std::max_element(z.begin(), z.end());
    double acc = 0.0;
    for (double x : z) acc += std::exp(x - mx);
    const double lse = mx + std::log(acc);
    s.log_probs.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) s.log_probs[i] = z[i] - lse;
  }
  if (out.length) {
    const auto a = out.length->weights.value();
    s.length_weights.assign(a.begin(), a.end());
  }
  next = std::move(out.next);
  return s;
}

std::string Seq2SeqStepModel::token(int id) const { return std::string(token_text(*vocab_, source_, id)); }

// ---------------------------------------------------------------- helpers

bool is_silent_token(int id) noexcept {
  return Vocabulary::is_special(id);
}

void advance_remaining(const StepModel& model, DecoderStepState& state, int token) {
  if (is_silent_token(token)) return;
  state.remaining = update_remaining(state.remaining, model.token(token), model.count_separator(),
                                     state.emitted_words == 0);
  ++state.emitted_words;
}

std::size_t default_max_steps(std::int64_t desired_length) {
  return 2 + static_cast<std::size_t>(std::max<std::int64_t>(0, desired_length));
}

namespace {

DecodeResult finish(const StepModel& model, const Hypothesis& h) {
  DecodeResult r;
  r.log_prob = h.log_prob;
  r.finished = h.finished;
  r.trace = h.trace;
  for (int t : h.tokens) {
    if (t == Vocabulary::kEos) break;
    r.tokens.push_back(t);
    if (!is_silent_token(t)) r.words.push_back(model.token(t));
  }
  r.text = detokenize(r.words);
  return r;
}

StepTrace make_trace(const StepModel& model, const DecoderStepState& before, const StepScores& scores, int token) {
  StepTrace s;
  s.remaining = before.remaining.chars();
  s.length_weights = scores.length_weights;
  s.token = token;
  if (!is_silent_token(token)) {
    s.text = model.token(token);
    s.cost = token_cost(s.text, model.count_separator(), before.emitted_words == 0);
  }
  return s;
}

}  // namespace

DecodeResult greedy_decode(StepModel& model, std::int64_t desired_length, std::size_t max_steps, bool trace) {
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  Hypothesis h;
  h.state = model.start(init_remaining(desired_length));
  int prev = Vocabulary::kSos;
  for (std::size_t t = 0; t < max_steps; ++t) {
    DecoderStepState next;
    const StepScores scores = model.step(h.state, prev, next);
    const int tok = static_cast<int>(std::max_element(scores.log_probs.begin(), scores.log_probs.end()) -
                                     scores.log_probs.begin());
    if (trace) h.trace.push_back(make_trace(model, h.state, scores, tok));
    h.log_prob += scores.log_probs[static_cast<std::size_t>(tok)];
    h.tokens.push_back(tok);
    h.state = std::move(next);
    if (tok == Vocabulary::kEos) {
      h.finished = true;
      break;
    }
    advance_remaining(model, h.state, tok);
    prev = tok;
  }
  return finish(model, h);
}

DecodeResult beam_search(StepModel& model, std::int64_t desired_length, std::size_t beam_size, std::size_t max_steps,
                         bool trace) {
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");

  struct Candidate {
    std::size_t parent;
    int token;
    double log_prob;
  };

  std::vector<Hypothesis> live(1);
  live[0].state = model.start(init_remaining(desired_length));
  std::vector<Hypothesis> finished;

  for (std::size_t t = 0; t < max_steps && !live.empty(); ++t) {
    std::vector<DecoderStepState> next_states(live.size());
    std::vector<StepScores> scores(live.size());
    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * beam_size);
    for (std::size_t i = 0; i < live.size(); ++i) {
      const int prev = live[i].tokens.empty() ? Vocabulary::kSos : live[i].tokens.back();
      scores[i] = model.step(live[i].state, prev, next_states[i]);
      const auto& lp = scores[i].log_probs;
      std::vector<int> ids(lp.size());
      std::iota(ids.begin(), ids.end(), 0);
      const std::size_t k = std::min(beam_size, ids.size());
      std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), [&](int a, int b) {
        const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
        return lp[ua] > lp[ub] || (lp[ua] == lp[ub] && a < b);
      });
      for (std::size_t j = 0; j < k; ++j) {
        candidates.push_back({i, ids[j], live[i].log_prob + lp[static_cast<std::size_t>(ids[j])]});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });

    std::vector<Hypothesis> next_live;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const auto& cand = candidates[c];
      const bool eos = cand.token == Vocabulary::kEos;
      if (eos && c >= beam_size) continue;
      if (!eos && next_live.size() >= beam_size) continue;
      const Hypothesis& parent = live[cand.parent];
      Hypothesis h;
      h.tokens = parent.tokens;
      h.tokens.push_back(cand.token);
      h.log_prob = cand.log_prob;
      h.state = next_states[cand.parent];
      if (trace) {
        h.trace = parent.trace;
        h.trace.push_back(make_trace(model, parent.state, scores[cand.parent], cand.token));
      }
      if (eos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        advance_remaining(model, h.state, cand.token);
        next_live.push_back(std::move(h));
      }
    }
    live = std::move(next_live);

    // Scores only decrease, so no live hypothesis can overtake the best parked one.
    if (!finished.empty() && !live.empty()) {
      const double best_finished =
          std::max_element(finished.begin(), finished.end(), [](const auto& a, const auto& b) {
            return a.log_prob < b.log_prob;
          })->log_prob;
      if (best_finished >= live.front().log_prob) break;
    }
  }

  const auto better = [](const Hypothesis& a, const Hypothesis& b) { return a.log_prob < b.log_prob; };
  if (!finished.empty()) return finish(model, *std::max_element(finished.begin(), finished.end(), better));
  return finish(model, *std::max_element(live.begin(), live.end(), better));
}

// ---------------------------------------------------------------- corpus decoding

LengthPolicy LengthPolicy::fixed(std::int64_t n) {
  if (n < 0) throw ConfigError("fixed length must be non-negative");
  return {Kind::fixed, n};
}

LengthPolicy LengthPolicy::parse(std::string_view text) {
  if (text == "reference") return reference();
  if (text.rfind("fixed:", 0) == 0) {
    const std::string num(text.substr(6));
    try {
      std::size_t used = 0;
      const long long n = std::stoll(num, &used);
      if (used != num.size()) throw std::invalid_argument(num);
      return fixed(n);
    } catch (const std::logic_error&) {
      throw ConfigError("bad fixed length in policy '" + std::string(text) + "'");
    }
  }
  throw ConfigError("unknown length policy '" + std::string(text) + "' (expected reference or fixed:N)");
}

std::string LengthPolicy::to_string() const {
  return kind == Kind::reference ? "reference" : "fixed:" + std::to_string(length);
}

std::int64_t LengthPolicy::desired_for(const Example& ex) const {
  return kind == Kind::reference ? ex.reference_char_length : length;
}

std::size_t evaluation_threads() {
  const char* env = std::getenv("LENATTEN_THREADS");
  if (!env || !*env) return 1;
  try {
    const long n = std::stol(env);
    return n < 1 ? 1 : static_cast<std::size_t>(n);
  } catch (const std::logic_error&) {
    throw ConfigError(std::string("LENATTEN_THREADS is not a number: ") + env);
  }
}

std::vector<PredictionRecord> decode_corpus(const Seq2SeqModel& model, const Vocabulary& vocab, const Corpus& corpus,
                                            const LengthPolicy& policy, std::size_t beam_size, std::size_t threads) {
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  std::vector<PredictionRecord> out(corpus.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < corpus.size(); i += stride) {
      const Example& ex = corpus[i];
      const auto desired = policy.desired_for(ex);
      Seq2SeqStepModel step_model(model, vocab, make_source(vocab, ex.source));
      const DecodeResult r = beam_search(step_model, desired, beam_size, default_max_steps(desired));
      out[i] = {ex.id, r.text, desired, static_cast<std::int64_t>(char_length(r.text))};
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, corpus.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) {
      pool.emplace_back([&, k] {
        try {
          work(k, threads);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& records) {
  for (const auto& r : records) {
    out << json{{"id", r.id}, {"prediction", r.prediction}, {"desired_length", r.desired_length},
                {"char_length", r.char_length}}
               .dump()
        << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(std::istream& in, const std::string& origin) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("prediction").get<std::string>(),
                     j.at("desired_length").get<std::int64_t>(), j.at("char_length").get<std::int64_t>()});
    } catch (const json::exception& e) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open predictions " + path.string());
  return read_predictions(in, path.string());
}

}  // namespace lenatten
