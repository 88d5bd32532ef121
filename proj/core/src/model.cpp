#include "lenatten/model.hpp"

#include <algorithm>

#include "lenatten/error.hpp"
#include "lenatten/rng.hpp"

namespace lenatten {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::s2s: return "s2s";
    case Variant::attention: return "attention";
    case Variant::paulus: return "paulus";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "s2s") return Variant::s2s;
  if (name == "attention") return Variant::attention;
  if (name == "paulus") return Variant::paulus;
  throw ConfigError("unknown model variant '" + std::string(name) + "' (expected s2s, attention or paulus)");
}

void ModelConfig::validate() const {
  if (d_hidden < 1 || d_embed < 1) throw ConfigError("model dimensions must be positive");
  if (vocab_size < Vocabulary::kReserved + 1) throw ConfigError("vocab_size must exceed the reserved ids");
  if (use_lenatten) {
    if (aleph < 1) throw ConfigError("aleph must be >= 1 when length attention is enabled");
    if (length_dim() % 2 != 0) throw ConfigError("length embedding width must be even");
  }
  if (!(r_scale > 0.0)) throw ConfigError("r_scale must be positive");
  if (max_source_len < 1) throw ConfigError("max_source_len must be positive");
}

// ---------------------------------------------------------------- sources

Source make_source(const Vocabulary& vocab, std::span<const std::string> words) {
  Source s;
  const int v = static_cast<int>(vocab.size());
  for (const auto& w : words) {
    const int id = vocab.id(w);
    s.ids.push_back(id);
    if (id != Vocabulary::kUnk || w == "<unk>") {
      s.ext_ids.push_back(id);
      continue;
    }
    auto it = std::find(s.oov.begin(), s.oov.end(), w);
    if (it == s.oov.end()) {
      s.oov.push_back(w);
      s.ext_ids.push_back(v + static_cast<int>(s.oov.size()) - 1);
    } else {
      s.ext_ids.push_back(v + static_cast<int>(it - s.oov.begin()));
    }
  }
  return s;
}

std::vector<int> target_ids(const Vocabulary& vocab, const Source& source, std::span<const std::string> reference,
                            bool copy) {
  std::vector<int> ids;
  ids.reserve(reference.size() + 1);
  const int v = static_cast<int>(vocab.size());
  for (const auto& w : reference) {
    int id = vocab.id(w);
    if (id == Vocabulary::kUnk && copy) {
      auto it = std::find(source.oov.begin(), source.oov.end(), w);
      if (it != source.oov.end()) id = v + static_cast<int>(it - source.oov.begin());
    }
    ids.push_back(id);
  }
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::string_view token_text(const Vocabulary& vocab, const Source& source, int id) {
  const int v = static_cast<int>(vocab.size());
  if (id >= v) {
    const auto k = static_cast<std::size_t>(id - v);
    if (k >= source.oov.size()) throw IndexError("extended id " + std::to_string(id) + " has no source word");
    return source.oov[k];
  }
  return vocab.word(id);
}

// ---------------------------------------------------------------- model

ParameterSet Seq2SeqModel::fresh_parameters(const ModelConfig& c, std::uint64_t init_seed) {
  c.validate();
  const std::size_t d = c.d_hidden, e = c.d_embed, v = c.vocab_size;
  ParameterSet p;
  Rng rng = Rng::derive(init_seed, "model.init");
  auto init = [&](Tensor& t) {
    for (auto& x : t.data()) x = rng.uniform(-c.init_range, c.init_range);
  };
  auto lstm = [&](const std::string& prefix) {
    init(p.add(prefix + ".W", {4 * d, e + d}));
    Tensor& b = p.add(prefix + ".b", {4 * d});
    init(b);
    for (std::size_t i = d; i < 2 * d; ++i) b[i] += 1.0;  // forget gate
  };
  init(p.add("embedding", {v, e}));
  lstm("enc.fwd");
  lstm("enc.bwd");
  init(p.add("bridge.W", {d, 2 * d}));
  init(p.add("bridge.b", {d}));
  lstm("dec");
  if (c.attends()) {
    init(p.add("attn.enc.W", {d, 2 * d}));
    init(p.add("attn.dec.W", {d, d}));
  }
  const std::size_t length_width = c.use_lenatten ? c.length_dim() : 0;
  const std::size_t in = c.variant == Variant::s2s ? d + length_width + e + 2 * d : d + length_width + 2 * d + d;
  init(p.add("out.W", {v, in}));
  init(p.add("out.b", {v}));
  if (c.copies()) {
    init(p.add("gen.w", {d + 2 * d + d + length_width}));
    init(p.add("gen.b", {1}));
  }
  if (c.use_lenatten) LenAttenParams::add_to(p, c.attention_dim(), d, c.aleph, rng, c.init_range);
  return p;
}

Seq2SeqModel::Seq2SeqModel(ModelConfig config, std::uint64_t init_seed)
    : config_(config), params_(fresh_parameters(config, init_seed)) {
  if (config_.use_lenatten) table_.emplace(config_.aleph, config_.length_dim());
}

Seq2SeqModel::Seq2SeqModel(ModelConfig config, ParameterSet params) : config_(config), params_(std::move(params)) {
  config_.validate();
  check_parameters();
  if (config_.use_lenatten) table_.emplace(config_.aleph, config_.length_dim());
}

void Seq2SeqModel::check_parameters() const {
  const ParameterSet layout = fresh_parameters(config_, 0);
  if (layout.names() != params_.names()) throw CheckpointError("parameter names do not match the model configuration");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout.at(i).shape() != params_.at(i).shape()) {
      throw CheckpointError("parameter " + layout.name(i) + " has shape " + shape_str(params_.at(i).shape()) +
                            ", expected " + shape_str(layout.at(i).shape()));
    }
  }
}

std::size_t Seq2SeqModel::output_size(const Source& source) const {
  return config_.copies() ? config_.vocab_size + source.oov.size() : config_.vocab_size;
}

std::size_t Seq2SeqModel::projection_input_size() const { return params_.get("out.W").cols(); }

// ---------------------------------------------------------------- graph

ModelGraph::ModelGraph(Tape& tape, Seq2SeqModel& model) : tape_(&tape), model_(&model) { bind(true, &model); }

ModelGraph::ModelGraph(Tape& tape, const Seq2SeqModel& model) : tape_(&tape), model_(&model) { bind(false, nullptr); }

void ModelGraph::bind(bool trainable, Seq2SeqModel* mutable_model) {
  const auto& params = model_->parameters();
  vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars_.push_back(trainable ? tape_->parameter(mutable_model->parameters().at(i)) : tape_->constant(params.at(i)));
  }
  if (model_->length_table()) table_ = tape_->constant(model_->length_table()->rows());
}

Var ModelGraph::param(std::string_view name) { return vars_[model_->parameters().index_of(name)]; }

Var ModelGraph::embed(int id) {
  const auto v = static_cast<int>(config().vocab_size);
  if (id < 0) throw IndexError("negative token id " + std::to_string(id));
  return gather_row(param("embedding"), static_cast<std::size_t>(id >= v ? Vocabulary::kUnk : id));
}

std::pair<Var, Var> ModelGraph::lstm_cell(std::string_view prefix, Var input, Var hidden, Var cell) {
  const std::string p(prefix);
  const std::size_t d = config().d_hidden;
  Var z = add(matvec(param(p + ".W"), concat({input, hidden})), param(p + ".b"));
  Var in_gate = sigmoid(slice(z, 0, d));
  Var forget_gate = sigmoid(slice(z, d, d));
  Var candidate = tanh(slice(z, 2 * d, d));
  Var out_gate = sigmoid(slice(z, 3 * d, d));
  Var next_cell = add(mul(forget_gate, cell), mul(in_gate, candidate));
  Var next_hidden = mul(out_gate, tanh(next_cell));
  return {next_hidden, next_cell};
}

EncoderOutput ModelGraph::encode(const Source& source) {
  const auto& c = config();
  if (source.ids.empty()) throw InputError("cannot encode an empty source");
  if (source.ids.size() > c.max_source_len) {
    throw InputError("source length " + std::to_string(source.ids.size()) + " exceeds max_source_len " +
                     std::to_string(c.max_source_len));
  }
  for (int id : source.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw IndexError("source id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(c.vocab_size));
    }
  }
  const std::size_t n = source.ids.size(), d = c.d_hidden;
  std::vector<Var> inputs;
  inputs.reserve(n);
  for (int id : source.ids) inputs.push_back(embed(id));

  Var zero = tape_->constant({d}, std::vector<double>(d, 0.0));
  std::vector<Var> fwd(n), bwd(n);
  Var h = zero, cell = zero;
  for (std::size_t i = 0; i < n; ++i) {
    std::tie(h, cell) = lstm_cell("enc.fwd", inputs[i], h, cell);
    fwd[i] = h;
  }
  h = zero;
  cell = zero;
  for (std::size_t i = n; i-- > 0;) {
    std::tie(h, cell) = lstm_cell("enc.bwd", inputs[i], h, cell);
    bwd[i] = h;
  }
  EncoderOutput out;
  out.states.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.states.push_back(concat({fwd[i], bwd[i]}));
  out.memory = stack_rows(out.states);
  out.final_state = concat({fwd[n - 1], bwd[0]});
  return out;
}

DecoderStepState ModelGraph::initial_state(const EncoderOutput& enc, RemainingLength r1) {
  const std::size_t d = config().d_hidden;
  DecoderStepState s;
  s.hidden = tanh(add(matvec(param("bridge.W"), enc.final_state), param("bridge.b")));
  s.cell = tape_->constant({d}, std::vector<double>(d, 0.0));
  s.remaining = r1;
  return s;
}

Attention ModelGraph::encoder_attention(Var hidden, const EncoderOutput& enc) {
  if (!config().attends()) throw ConfigError("variant has no encoder attention");
  Var query = matvec_t(param("attn.enc.W"), hidden);
  Var weights = softmax(matvec(enc.memory, query));
  return {matvec_t(enc.memory, weights), weights};
}

Var ModelGraph::intra_decoder_attention(Var hidden, std::span<const Var> past) {
  if (!config().attends()) throw ConfigError("variant has no decoder attention");
  const std::size_t d = config().d_hidden;
  if (past.empty()) return tape_->constant({d}, std::vector<double>(d, 0.0));
  Var memory = stack_rows(past);
  Var query = matvec_t(param("attn.dec.W"), hidden);
  Var weights = softmax(matvec(memory, query));
  return matvec_t(memory, weights);
}

LengthAttention ModelGraph::length_attention(Var hidden, RemainingLength r) {
  if (!config().use_lenatten) throw ConfigError("length attention is disabled for this model");
  const LenAttenVars p{param(LenAttenParams::kScoreProjection), param(LenAttenParams::kStateProjection),
                       param(LenAttenParams::kLengthWeight), param(LenAttenParams::kBias)};
  return lenatten::length_attention(hidden, r, config().r_scale, table_, p);
}

namespace {

void check_length_slot(const ModelConfig& c, const std::optional<Var>& length_context) {
  if (c.use_lenatten && !length_context) throw ConfigError("length context required when length attention is on");
  if (!c.use_lenatten && length_context) throw ConfigError("length context given to a model without length attention");
}

}  // namespace

Var ModelGraph::project_vocab_s2s(Var hidden, std::optional<Var> length_context, Var prev_embedding,
                                  Var fixed_context) {
  check_length_slot(config(), length_context);
  std::vector<Var> parts{hidden};
  if (length_context) parts.push_back(*length_context);
  parts.push_back(prev_embedding);
  parts.push_back(fixed_context);
  return add(matvec(param("out.W"), concat(parts)), param("out.b"));
}

Var ModelGraph::project_vocab_paulus(Var hidden, std::optional<Var> length_context, Var encoder_context,
                                     Var decoder_context) {
  check_length_slot(config(), length_context);
  std::vector<Var> parts{hidden};
  if (length_context) parts.push_back(*length_context);
  parts.push_back(encoder_context);
  parts.push_back(decoder_context);
  return add(matvec(param("out.W"), concat(parts)), param("out.b"));
}

Var ModelGraph::copy_gate(Var hidden, Var encoder_context, Var decoder_context, std::optional<Var> length_context) {
  if (!config().copies()) throw ConfigError("variant has no copy gate");
  check_length_slot(config(), length_context);
  std::vector<Var> parts{hidden, encoder_context, decoder_context};
  if (length_context) parts.push_back(*length_context);
  return sigmoid(add(dot(param("gen.w"), concat(parts)), param("gen.b")));
}

StepOutput ModelGraph::decode_step(const DecoderStepState& state, int prev_id, const EncoderOutput& enc,
                                   const Source& source) {
  const auto& c = config();
  if (!state.hidden.valid() || state.hidden.tape() != tape_) throw ConfigError("decoder state belongs to another graph");
  StepOutput out;
  Var input = embed(prev_id);
  auto [hidden, cell] = lstm_cell("dec", input, state.hidden, state.cell);

  std::optional<Var> length_context;
  if (c.use_lenatten) {
    out.length = length_attention(hidden, state.remaining);
    length_context = out.length->context;
  }

  if (c.variant == Variant::s2s) {
    out.logits = project_vocab_s2s(hidden, length_context, input, enc.final_state);
    out.distribution = softmax(out.logits);
  } else {
    out.encoder_attention = encoder_attention(hidden, enc);
    Var decoder_context = intra_decoder_attention(hidden, state.past_decoder_states);
    out.logits = project_vocab_paulus(hidden, length_context, out.encoder_attention->context, decoder_context);
    Var p_vocab = softmax(out.logits);
    if (c.copies()) {
      out.copy_gate = copy_gate(hidden, out.encoder_attention->context, decoder_context, length_context);
      out.distribution = final_distribution(p_vocab, out.encoder_attention->weights, source.ext_ids, out.copy_gate,
                                            model_->output_size(source));
    } else {
      out.distribution = p_vocab;
    }
  }

  out.next.hidden = hidden;
  out.next.cell = cell;
  out.next.remaining = state.remaining;
  out.next.past_decoder_states = state.past_decoder_states;
  out.next.past_decoder_states.push_back(hidden);
  out.next.step = state.step + 1;
  out.next.emitted_words = state.emitted_words;
  return out;
}

Var final_distribution(Var p_vocab, Var encoder_weights, std::span<const int> source_ext_ids, Var p_gen,
                       std::size_t extended_size) {
  if (p_gen.size() != 1) throw ShapeError("copy gate must be scalar, got " + shape_str(p_gen.shape()));
  if (encoder_weights.size() != source_ext_ids.size()) {
    throw ShapeError("encoder weights " + shape_str(encoder_weights.shape()) + " vs " +
                     std::to_string(source_ext_ids.size()) + " source ids");
  }
  Var generated = scale_by(p_gen, pad_to(p_vocab, extended_size));
  Var copied = scale_by(one_minus(p_gen), scatter_add(encoder_weights, source_ext_ids, extended_size));
  return add(generated, copied);
}

}  // namespace lenatten
