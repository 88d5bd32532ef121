#include "lenatten/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "lenatten/error.hpp"

namespace lenatten {

using nlohmann::json;

void TrainConfig::validate() const {
  if (adam.lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (adam.eps <= 0.0) throw ConfigError("Adam epsilon must be positive");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
  if (sampling_prob < 0.0 || sampling_prob > 1.0) throw ConfigError("sampling_prob must lie in [0, 1]");
  if (accumulate < 1) throw ConfigError("accumulate must be >= 1");
}

// ---------------------------------------------------------------- Adam

AdamOptimizer::AdamOptimizer(const ParameterSet& params, AdamConfig config) : config_(config) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.at(i).size(), 0.0);
    v_.emplace_back(params.at(i).size(), 0.0);
  }
}

void AdamOptimizer::step(ParameterSet& params) {
  if (params.size() != m_.size()) throw ContractError("optimizer state does not match the parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double g : params.at(i).grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + params.name(i));
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params.at(i).data();
    auto g = params.at(i).grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void AdamOptimizer::restore(std::uint64_t steps, std::vector<std::vector<double>> m,
                            std::vector<std::vector<double>> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw CheckpointError("optimizer state size mismatch");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size()) {
      throw CheckpointError("optimizer moment shape mismatch at parameter " + std::to_string(i));
    }
  }
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

double global_grad_norm(const ParameterSet& params) {
  double s = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (double g : params.at(i).grad()) s += g * g;
  return std::sqrt(s);
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (double g : params.at(i).grad())
        if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + params.name(i));
  }
  if (norm > max_norm) {
    const double k = max_norm / norm;
    for (std::size_t i = 0; i < params.size(); ++i)
      for (auto& g : params.at(i).grad()) g *= k;
  }
  return norm;
}

int scheduled_sample(int gold_id, int predicted_id, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ConfigError("sampling probability must lie in [0, 1]");
  return rng.bernoulli(p) ? predicted_id : gold_id;
}

// ---------------------------------------------------------------- loss

EncodedExample encode_example(const Vocabulary& vocab, const Example& ex, bool copy) {
  if (ex.reference.empty()) throw InputError("example " + ex.id + " has an empty reference");
  EncodedExample out;
  out.id = ex.id;
  out.source = make_source(vocab, ex.source);
  out.targets = target_ids(vocab, out.source, ex.reference, copy);
  out.reference = ex.reference;
  out.desired_length = ex.reference_char_length;
  return out;
}

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

LossResult mle_loss(ModelGraph& graph, const Vocabulary& vocab, const EncodedExample& ex, double sampling_prob,
                    Rng& rng) {
  if (ex.targets.size() < 2) throw InputError("example " + ex.id + " has an empty reference");
  const auto& cfg = graph.config();
  EncoderOutput enc = graph.encode(ex.source);
  DecoderStepState state = graph.initial_state(enc, init_remaining(ex.desired_length));
  std::vector<Var> losses;
  losses.reserve(ex.targets.size());
  int prev = Vocabulary::kSos;
  for (std::size_t t = 0; t < ex.targets.size(); ++t) {
    const int gold = ex.targets[t];
    StepOutput step = graph.decode_step(state, prev, enc, ex.source);
    const auto g = static_cast<std::size_t>(gold);
    losses.push_back(cfg.copies() ? scale(log(pick(step.distribution, g)), -1.0)
                                  : cross_entropy_from_logits(step.logits, g));
    state = std::move(step.next);
    if (!Vocabulary::is_special(gold)) {
      state.remaining = update_remaining(state.remaining, token_text(vocab, ex.source, gold), cfg.count_separator,
                                         state.emitted_words == 0);
      ++state.emitted_words;
    }
    if (t + 1 < ex.targets.size()) {
      prev = gold;
      if (sampling_prob > 0.0) {
        const int predicted = static_cast<int>(argmax(step.distribution.value()));
        prev = scheduled_sample(gold, predicted, sampling_prob, rng);
      }
    }
  }
  LossResult r;
  r.tokens = losses.size();
  Var total = sum(concat(losses));
  r.nll_sum = total.item();
  r.loss = scale(total, 1.0 / static_cast<double>(r.tokens));
  return r;
}

// ---------------------------------------------------------------- config JSON

namespace {

json to_json(const ModelConfig& c) {
  return json{{"variant", std::string(to_string(c.variant))},
              {"use_lenatten", c.use_lenatten},
              {"aleph", c.aleph},
              {"d_hidden", c.d_hidden},
              {"d_embed", c.d_embed},
              {"vocab_size", c.vocab_size},
              {"d_len", c.d_len},
              {"d_attn", c.d_attn},
              {"r_scale", c.r_scale},
              {"count_separator", c.count_separator},
              {"init_range", c.init_range},
              {"max_source_len", c.max_source_len}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.use_lenatten = j.at("use_lenatten").get<bool>();
  c.aleph = j.at("aleph").get<std::size_t>();
  c.d_hidden = j.at("d_hidden").get<std::size_t>();
  c.d_embed = j.at("d_embed").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.d_len = j.at("d_len").get<std::size_t>();
  c.d_attn = j.at("d_attn").get<std::size_t>();
  c.r_scale = j.at("r_scale").get<double>();
  c.count_separator = j.at("count_separator").get<bool>();
  c.init_range = j.at("init_range").get<double>();
  c.max_source_len = j.at("max_source_len").get<std::size_t>();
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"lr", c.adam.lr},
              {"beta1", c.adam.beta1},
              {"beta2", c.adam.beta2},
              {"eps", c.adam.eps},
              {"clip_norm", c.clip_norm},
              {"sampling_prob", c.sampling_prob},
              {"accumulate", c.accumulate},
              {"checkpoint_every", c.checkpoint_every},
              {"seed", c.seed}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.adam.lr = j.at("lr").get<double>();
  c.adam.beta1 = j.at("beta1").get<double>();
  c.adam.beta2 = j.at("beta2").get<double>();
  c.adam.eps = j.at("eps").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.sampling_prob = j.at("sampling_prob").get<double>();
  c.accumulate = j.at("accumulate").get<std::size_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

std::string model_config_json(const ModelConfig& c) { return to_json(c).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return model_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

std::string config_hash(const ModelConfig& c) {
  const auto s = model_config_json(c);
  return hex64(fnv1a(s.data(), s.size()));
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'L', 'N', 'A', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const std::size_t n = ckpt.params.size();
  if (ckpt.adam_m.size() != n || ckpt.adam_v.size() != n) throw CheckpointError("optimizer state size mismatch");

  std::string payload;
  json tensors = json::array();
  std::uint64_t offset = 0;
  auto append = [&](const std::string& name, const Shape& shape, std::span<const double> values) {
    tensors.push_back(json{{"name", name}, {"shape", shape}, {"offset", offset}, {"count", values.size()}});
    for (double x : values) put_u64(payload, std::bit_cast<std::uint64_t>(x));
    offset += values.size();
  };
  for (std::size_t i = 0; i < n; ++i) append("param:" + ckpt.params.name(i), ckpt.params.at(i).shape(), ckpt.params.at(i).data());
  for (std::size_t i = 0; i < n; ++i) append("adam.m:" + ckpt.params.name(i), ckpt.params.at(i).shape(), ckpt.adam_m[i]);
  for (std::size_t i = 0; i < n; ++i) append("adam.v:" + ckpt.params.name(i), ckpt.params.at(i).shape(), ckpt.adam_v[i]);

  json header;
  header["format"] = "lenatten-checkpoint";
  header["version"] = kVersion;
  header["model"] = to_json(ckpt.model);
  header["config_hash"] = config_hash(ckpt.model);
  header["train"] = to_json(ckpt.train);
  header["vocabulary"] = ckpt.vocab.content_words();
  header["tensors"] = std::move(tensors);
  header["adam_steps"] = ckpt.adam_steps;
  header["rng"] = ckpt.rng_state;
  header["epoch"] = ckpt.epoch;
  header["step"] = ckpt.step;
  header["run"] = json::parse(ckpt.run_config);
  header["payload_doubles"] = offset;
  header["payload_checksum"] = hex64(fnv1a(payload.data(), payload.size()));
  const std::string head = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u64(out, head.size());
  out += head;
  out += payload;
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  constexpr std::size_t prefix = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < prefix) throw CheckpointError("file truncated before header (corrupt)");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw CheckpointError("bad magic; not a checkpoint");
  const auto version = get_u32(bytes, sizeof(kMagic));
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kVersion) + ")");
  }
  const auto head_len = get_u64(bytes, sizeof(kMagic) + 4);
  if (bytes.size() - prefix < head_len) throw CheckpointError("file truncated inside header (corrupt)");
  json header;
  try {
    header = json::parse(bytes.substr(prefix, head_len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt header: ") + e.what());
  }
  const std::string payload = bytes.substr(prefix + head_len);

  Checkpoint ckpt;
  try {
    if (header.at("version").get<std::uint32_t>() != kVersion) throw CheckpointError("header version mismatch");
    const auto doubles = header.at("payload_doubles").get<std::uint64_t>();
    if (payload.size() != doubles * 8) {
      throw CheckpointError("payload holds " + std::to_string(payload.size()) + " bytes, expected " +
                            std::to_string(doubles * 8) + " (truncated or corrupt)");
    }
    if (header.at("payload_checksum").get<std::string>() != hex64(fnv1a(payload.data(), payload.size()))) {
      throw CheckpointError("payload checksum mismatch (corrupt)");
    }
    ckpt.model = model_from_json(header.at("model"));
    if (header.at("config_hash").get<std::string>() != config_hash(ckpt.model)) {
      throw CheckpointError("config hash mismatch: stored model configuration does not match its hash");
    }
    ckpt.train = train_from_json(header.at("train"));
    ckpt.vocab = Vocabulary(header.at("vocabulary").get<std::vector<std::string>>());
    ckpt.adam_steps = header.at("adam_steps").get<std::uint64_t>();
    ckpt.rng_state = header.at("rng").get<std::string>();
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.step = header.at("step").get<std::uint64_t>();
    ckpt.run_config = header.at("run").dump();

    auto read = [&](const json& entry) {
      const auto off = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (off + count > doubles) throw CheckpointError("tensor " + entry.at("name").get<std::string>() + " exceeds payload");
      std::vector<double> values(count);
      for (std::uint64_t k = 0; k < count; ++k) values[k] = std::bit_cast<double>(get_u64(payload, (off + k) * 8));
      return values;
    };
    const auto& tensors = header.at("tensors");
    if (tensors.size() % 3 != 0) throw CheckpointError("tensor table is inconsistent");
    const std::size_t n = tensors.size() / 3;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& e = tensors[i];
      auto name = e.at("name").get<std::string>();
      if (name.rfind("param:", 0) != 0) throw CheckpointError("expected parameter entry, got " + name);
      Tensor& t = ckpt.params.add(name.substr(6), e.at("shape").get<Shape>());
      auto values = read(e);
      if (values.size() != t.size()) throw CheckpointError("parameter " + name + " size does not match its shape");
      std::copy(values.begin(), values.end(), t.data().begin());
    }
    for (std::size_t i = 0; i < n; ++i) ckpt.adam_m.push_back(read(tensors[n + i]));
    for (std::size_t i = 0; i < n; ++i) ckpt.adam_v.push_back(read(tensors[2 * n + i]));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("corrupt header: ") + e.what());
  }
  if (ckpt.vocab.size() != ckpt.model.vocab_size) throw CheckpointError("vocabulary size disagrees with model config");
  Seq2SeqModel probe(ckpt.model, ckpt.params);  // validates parameter layout
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  if (config_hash(ckpt.model) != config_hash(expected)) {
    throw CheckpointError("incompatible checkpoint: config hash " + config_hash(ckpt.model) + " does not match " +
                          config_hash(expected) + " of the requested model");
  }
  return ckpt;
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(Seq2SeqModel model, Vocabulary vocab, TrainConfig config)
    : model_(std::move(model)),
      vocab_(std::move(vocab)),
      config_(config),
      optimizer_(model_.parameters(), config.adam),
      rng_(Rng::derive(config.seed, "train.loop")) {
  config_.validate();
  if (vocab_.size() != model_.config().vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(vocab_.size()) + " entries but the model expects " +
                      std::to_string(model_.config().vocab_size));
  }
}

Trainer::Trainer(const Checkpoint& ckpt)
    : model_(ckpt.model, ckpt.params),
      vocab_(ckpt.vocab),
      config_(ckpt.train),
      optimizer_(model_.parameters(), ckpt.train.adam),
      epoch_(ckpt.epoch),
      step_(ckpt.step) {
  optimizer_.restore(ckpt.adam_steps, ckpt.adam_m, ckpt.adam_v);
  rng_.set_state(ckpt.rng_state);
}

std::vector<EncodedExample> Trainer::encode(const Corpus& corpus) const {
  if (corpus.empty()) throw InputError("training corpus is empty");
  std::vector<EncodedExample> out;
  out.reserve(corpus.size());
  for (const auto& ex : corpus) out.push_back(encode_example(vocab_, ex, model_.config().copies()));
  return out;
}

EpochLog Trainer::run_epoch(const std::vector<EncodedExample>& data) {
  if (data.empty()) throw InputError("training corpus is empty");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);

  auto& params = model_.parameters();
  params.zero_grad();
  Tape tape;
  double loss_sum = 0.0;
  std::size_t pending = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    tape.clear();
    ModelGraph graph(tape, model_);
    LossResult r = mle_loss(graph, vocab_, data[order[k]], config_.sampling_prob, rng_);
    if (!std::isfinite(r.loss.item())) throw NumericError("non-finite loss on example " + data[order[k]].id);
    loss_sum += r.loss.item();
    tape.backward(config_.accumulate > 1 ? scale(r.loss, 1.0 / static_cast<double>(config_.accumulate)) : r.loss);
    if (++pending == config_.accumulate || k + 1 == order.size()) {
      clip_grad_norm(params, config_.clip_norm);
      optimizer_.step(params);
      params.zero_grad();
      pending = 0;
      ++step_;
    }
  }
  ++epoch_;
  EpochLog log;
  log.epoch = epoch_;
  log.step = step_;
  log.loss = loss_sum / static_cast<double>(data.size());
  log.wallclock = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  return log;
}

Checkpoint Trainer::checkpoint(std::string run_config) const {
  Checkpoint c;
  c.model = model_.config();
  c.train = config_;
  c.vocab = vocab_;
  c.params = model_.parameters();
  c.adam_steps = optimizer_.steps();
  c.adam_m = optimizer_.first_moments();
  c.adam_v = optimizer_.second_moments();
  c.rng_state = rng_.state();
  c.epoch = epoch_;
  c.step = step_;
  c.run_config = std::move(run_config);
  return c;
}

Checkpoint train(Trainer& trainer, const Corpus& corpus, const TrainOptions& options) {
  const auto data = trainer.encode(corpus);
  const auto& cfg = trainer.config();
  while (trainer.epoch() < cfg.epochs) {
    const EpochLog log = trainer.run_epoch(data);
    if (options.log) {
      *options.log << json{{"epoch", log.epoch}, {"step", log.step}, {"loss", log.loss}, {"wallclock", log.wallclock}}.dump()
                   << '\n'
                   << std::flush;
    }
    if (options.on_epoch) options.on_epoch(log, trainer);
    const bool due = cfg.checkpoint_every > 0 && (log.epoch % cfg.checkpoint_every == 0 || log.epoch == cfg.epochs);
    if (options.checkpoint_path && due) save_checkpoint(trainer.checkpoint(options.run_config), *options.checkpoint_path);
  }
  return trainer.checkpoint(options.run_config);
}

Checkpoint train(const Corpus& corpus, const Vocabulary& vocab, const ModelConfig& model, const TrainConfig& config,
                 const TrainOptions& options) {
  Trainer trainer(Seq2SeqModel(model, config.seed), vocab, config);
  return train(trainer, corpus, options);
}

}  // namespace lenatten
