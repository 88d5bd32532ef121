#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "lenatten/error.hpp"
#include "lenatten_cli/app.hpp"

namespace lenatten::cli {

using nlohmann::json;

namespace {

struct Field {
  std::string key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> put;
};

template <class T>
Field field(std::string key, T RunConfig::*member) {
  return {std::move(key), [member](const RunConfig& c) { return json(c.*member); },
          [member](RunConfig& c, const json& j) { c.*member = j.get<T>(); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all{
      field("seed", &RunConfig::seed),
      field("data.dir", &RunConfig::data_dir),
      field("data.n", &RunConfig::data_n),
      field("data.min_source_words", &RunConfig::data_min_source_words),
      field("data.max_source_words", &RunConfig::data_max_source_words),
      field("data.min_target_chars", &RunConfig::data_min_target_chars),
      field("data.max_target_chars", &RunConfig::data_max_target_chars),
      field("data.vocab_cap", &RunConfig::data_vocab_cap),
      field("model.variant", &RunConfig::model_variant),
      field("model.use_lenatten", &RunConfig::model_use_lenatten),
      field("model.aleph", &RunConfig::model_aleph),
      field("model.d_hidden", &RunConfig::model_d_hidden),
      field("model.d_embed", &RunConfig::model_d_embed),
      field("model.d_len", &RunConfig::model_d_len),
      field("model.d_attn", &RunConfig::model_d_attn),
      field("model.r_scale", &RunConfig::model_r_scale),
      field("model.count_separator", &RunConfig::model_count_separator),
      field("model.init_range", &RunConfig::model_init_range),
      field("model.max_source_len", &RunConfig::model_max_source_len),
      field("train.epochs", &RunConfig::train_epochs),
      field("train.lr", &RunConfig::train_lr),
      field("train.beta1", &RunConfig::train_beta1),
      field("train.beta2", &RunConfig::train_beta2),
      field("train.eps", &RunConfig::train_eps),
      field("train.clip_norm", &RunConfig::train_clip_norm),
      field("train.sampling_prob", &RunConfig::train_sampling_prob),
      field("train.accumulate", &RunConfig::train_accumulate),
      field("train.checkpoint_every", &RunConfig::train_checkpoint_every),
      field("decode.beam", &RunConfig::decode_beam),
      field("decode.policy", &RunConfig::decode_policy),
      field("eval.split", &RunConfig::eval_split),
      field("eval.fixed_lengths", &RunConfig::eval_fixed_lengths),
      field("sweep.alephs", &RunConfig::sweep_alephs),
      field("run.dir", &RunConfig::run_dir),
  };
  return all;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void assign(RunConfig& c, const Field& f, const json& value) {
  try {
    f.put(c, value);
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + f.key + "': " + value.dump());
  }
}

}  // namespace

std::string RunConfig::to_json(int indent) const {
  json j = json::object();
  for (const auto& f : fields()) j[f.key] = f.get(*this);
  return j.dump(indent);
}

RunConfig RunConfig::from_json(std::string_view text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(origin + ": config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) assign(c, find_field(key), value);
  return c;
}

void RunConfig::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not KEY=VALUE");
  }
  const auto& f = find_field(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  assign(*this, f, value);
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

ModelConfig RunConfig::model_config(std::size_t vocab_size) const {
  ModelConfig m;
  m.variant = parse_variant(model_variant);
  m.use_lenatten = model_use_lenatten;
  m.aleph = model_aleph;
  m.d_hidden = model_d_hidden;
  m.d_embed = model_d_embed;
  m.vocab_size = vocab_size;
  m.d_len = model_d_len;
  m.d_attn = model_d_attn;
  m.r_scale = model_r_scale;
  m.count_separator = model_count_separator;
  m.init_range = model_init_range;
  m.max_source_len = model_max_source_len;
  m.validate();
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = train_epochs;
  t.adam = {train_lr, train_beta1, train_beta2, train_eps};
  t.clip_norm = train_clip_norm;
  t.sampling_prob = train_sampling_prob;
  t.accumulate = train_accumulate;
  t.checkpoint_every = train_checkpoint_every;
  t.seed = seed;
  t.validate();
  return t;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.min_source_words = data_min_source_words;
  s.max_source_words = data_max_source_words;
  s.min_target_chars = data_min_target_chars;
  s.max_target_chars = data_max_target_chars;
  return s;
}

std::filesystem::path RunConfig::split_path(std::string_view split) const {
  return std::filesystem::path(data_dir) / (std::string(split) + ".jsonl");
}

std::filesystem::path RunConfig::checkpoint_path() const { return std::filesystem::path(run_dir) / "model.ckpt"; }

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return RunConfig::from_json(ss.str(), path.string());
}

}  // namespace lenatten::cli
