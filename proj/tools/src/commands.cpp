#include <algorithm>
#include <fstream>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "lenatten/decoding.hpp"
#include "lenatten/error.hpp"
#include "lenatten/metrics.hpp"
#include "lenatten_cli/app.hpp"

#ifndef LENATTEN_VERSION
#define LENATTEN_VERSION "unknown"
#endif

namespace lenatten::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Context {
  RunConfig cfg;
  bool force = false;
  std::ostream& out;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
}

void refuse_existing(const std::vector<fs::path>& paths, bool force) {
  if (force) return;
  for (const auto& p : paths)
    if (fs::exists(p)) throw ConfigError(p.string() + " already exists (pass --force to overwrite)");
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<fs::path>& outputs) {
  json j{{"command", command}, {"version", LENATTEN_VERSION}, {"seed", cfg.seed}, {"config", json::parse(cfg.to_json())}};
  j["outputs"] = json::array();
  for (const auto& p : outputs) j["outputs"].push_back(p.string());
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

std::string policy_tag(const LengthPolicy& p) {
  auto s = p.to_string();
  std::replace(s.begin(), s.end(), ':', '-');
  return s;
}

struct LoadedModel {
  Checkpoint ckpt;
  Seq2SeqModel model;
};

LoadedModel load_model(const fs::path& path) {
  Checkpoint ck = load_checkpoint(path);
  Seq2SeqModel model(ck.model, ck.params);
  return {std::move(ck), std::move(model)};
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(Context& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.data_n < 10) throw ConfigError("data.n must be at least 10 to fill three splits");
  const fs::path dir(cfg.data_dir);
  const std::vector<fs::path> outputs{cfg.split_path("train"), cfg.split_path("valid"), cfg.split_path("test")};
  refuse_existing(outputs, ctx.force);

  const Corpus corpus = generate_synthetic(SyntheticTask::prefix_copy, cfg.data_n, cfg.seed, cfg.synthetic_spec());
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::derive(cfg.seed, "cli.split");
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  const std::size_t n_train = corpus.size() * 8 / 10, n_valid = corpus.size() / 10;
  const std::size_t bounds[4] = {0, n_train, n_train + n_valid, corpus.size()};
  fs::create_directories(dir);
  for (std::size_t s = 0; s < 3; ++s) {
    Corpus part;
    for (std::size_t k = bounds[s]; k < bounds[s + 1]; ++k) part.push_back(corpus[order[k]]);
    save_jsonl(part, outputs[s]);
    ctx.out << outputs[s].string() << ": " << part.size() << " examples\n";
  }
  write_manifest(dir, "gen-data", cfg, outputs);
  return 0;
}

// ---------------------------------------------------------------- train

Checkpoint train_run(const RunConfig& cfg, bool force, const std::optional<fs::path>& resume, std::ostream& out) {
  const Corpus corpus = load_jsonl(cfg.split_path("train"));
  const fs::path dir(cfg.run_dir);
  const fs::path ckpt_path = cfg.checkpoint_path();
  const fs::path log_path = dir / "train_log.jsonl";
  fs::create_directories(dir);

  std::optional<Trainer> trainer;
  std::string snapshot;
  if (resume) {
    const Checkpoint ck = load_checkpoint(*resume);
    trainer.emplace(ck);
    snapshot = ck.run_config;
  } else {
    refuse_existing({ckpt_path}, force);
    const Vocabulary vocab = build_vocab(corpus, cfg.data_vocab_cap);
    const TrainConfig tc = cfg.train_config();
    trainer.emplace(Seq2SeqModel(cfg.model_config(vocab.size()), tc.seed), vocab, tc);
    snapshot = cfg.to_json(-1);
  }

  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw InputError("cannot write " + log_path.string());
  TrainOptions opts;
  opts.log = &log;
  opts.checkpoint_path = ckpt_path;
  opts.run_config = snapshot;
  opts.on_epoch = [&](const EpochLog& e, const Trainer& t) {
    out << "epoch " << e.epoch << "/" << t.config().epochs << "  loss " << e.loss << "\n" << std::flush;
  };
  Checkpoint ck = train(*trainer, corpus, opts);
  save_checkpoint(ck, ckpt_path);
  write_manifest(dir, "train", cfg, {ckpt_path, log_path});
  out << "checkpoint: " << ckpt_path.string() << "\n";
  return ck;
}

// ---------------------------------------------------------------- eval

struct EvalOutcome {
  LengthPolicy policy;
  MetricsReport report;
};

std::vector<EvalOutcome> eval_run(const RunConfig& cfg, const fs::path& ckpt_path,
                                  const std::vector<LengthPolicy>& policies, std::ostream& out) {
  const auto loaded = load_model(ckpt_path);
  const Corpus corpus = load_jsonl(cfg.split_path(cfg.eval_split));
  const auto ppl = perplexity(loaded.model, loaded.ckpt.vocab, corpus);
  const std::size_t threads = evaluation_threads();

  std::vector<EvalOutcome> outcomes;
  for (const auto& policy : policies) {
    const auto preds = decode_corpus(loaded.model, loaded.ckpt.vocab, corpus, policy, cfg.decode_beam, threads);
    MetricsReport rep = evaluate(preds, corpus);
    rep.perplexity = ppl.perplexity;

    const fs::path dir = fs::path(cfg.run_dir) / "eval" / (cfg.eval_split + "-" + policy_tag(policy));
    fs::create_directories(dir);
    std::ofstream pf(dir / "predictions.jsonl");
    write_predictions(pf, preds);
    json j = json::parse(report_json(rep));
    j["policy"] = policy.to_string();
    j["split"] = cfg.eval_split;
    j["beam"] = cfg.decode_beam;
    j["checkpoint"] = ckpt_path.string();
    j["config"] = json::parse(cfg.to_json());
    j["model_config"] = json::parse(model_config_json(loaded.ckpt.model));
    write_text(dir / "report.json", j.dump(2) + "\n");
    std::ostringstream table;
    write_report_table(table, rep);
    write_text(dir / "report.txt", table.str());
    write_manifest(dir, "eval", cfg, {dir / "predictions.jsonl", dir / "report.json", dir / "report.txt"});

    out << "== " << cfg.eval_split << " / " << policy.to_string() << " ==\n" << table.str();
    outcomes.push_back({policy, rep});
  }
  return outcomes;
}

std::vector<LengthPolicy> requested_policies(const RunConfig& cfg, const std::vector<std::int64_t>& lengths,
                                             const std::optional<std::string>& policy) {
  std::vector<LengthPolicy> out;
  if (!lengths.empty()) {
    for (auto n : lengths) out.push_back(LengthPolicy::fixed(n));
  } else if (policy) {
    out.push_back(LengthPolicy::parse(*policy));
  } else if (!cfg.eval_fixed_lengths.empty()) {
    for (auto n : cfg.eval_fixed_lengths) out.push_back(LengthPolicy::fixed(n));
  } else {
    out.push_back(LengthPolicy::parse(cfg.decode_policy));
  }
  return out;
}

// ---------------------------------------------------------------- sweep-aleph

int cmd_sweep_aleph(Context& ctx, std::vector<std::size_t> alephs) {
  const auto& cfg = ctx.cfg;
  if (alephs.empty()) alephs = cfg.sweep_alephs;
  if (alephs.empty()) throw ConfigError("no aleph values to sweep");
  std::sort(alephs.begin(), alephs.end());
  alephs.erase(std::unique(alephs.begin(), alephs.end()), alephs.end());

  const fs::path dir(cfg.run_dir);
  const fs::path csv_path = dir / "aleph_sweep.csv";
  refuse_existing({csv_path}, ctx.force);

  std::ostringstream csv;
  csv << "aleph,rougeL,var\n";
  for (std::size_t aleph : alephs) {
    RunConfig sub = cfg;
    sub.model_aleph = aleph;
    sub.run_dir = (dir / ("aleph-" + std::to_string(aleph))).string();
    ctx.out << "-- aleph " << aleph << " --\n";
    train_run(sub, ctx.force, std::nullopt, ctx.out);
    const auto outcome = eval_run(sub, sub.checkpoint_path(), {LengthPolicy::reference()}, ctx.out).front();
    csv << aleph << "," << outcome.report.rougeL.f1 << "," << outcome.report.var << "\n";
  }
  write_text(csv_path, csv.str());
  write_manifest(dir, "sweep-aleph", cfg, {csv_path});
  ctx.out << csv_path.string() << "\n" << csv.str();
  return 0;
}

// ---------------------------------------------------------------- inspect / summarize

int cmd_inspect(Context& ctx, const fs::path& ckpt_path, const std::string& example_id,
                std::optional<std::int64_t> length, std::optional<fs::path> out_path) {
  const auto& cfg = ctx.cfg;
  const auto loaded = load_model(ckpt_path);
  const Corpus corpus = load_jsonl(cfg.split_path(cfg.eval_split));
  const auto it = std::find_if(corpus.begin(), corpus.end(), [&](const Example& e) { return e.id == example_id; });
  if (it == corpus.end()) throw InputError("no example '" + example_id + "' in " + cfg.split_path(cfg.eval_split).string());
  const std::int64_t desired = length.value_or(it->reference_char_length);

  const Source src = make_source(loaded.ckpt.vocab, it->source);
  Seq2SeqStepModel step_model(loaded.model, loaded.ckpt.vocab, src);
  const auto r = beam_search(step_model, desired, cfg.decode_beam, default_max_steps(desired), true);

  json steps = json::array();
  for (std::size_t t = 0; t < r.trace.size(); ++t) {
    const auto& s = r.trace[t];
    steps.push_back({{"step", t + 1},
                     {"remaining", s.remaining},
                     {"alpha", s.length_weights},
                     {"token", s.token},
                     {"text", s.text},
                     {"cost", s.cost}});
  }
  const json j{{"id", it->id},
               {"desired_length", desired},
               {"reference", detokenize(it->reference)},
               {"prediction", r.text},
               {"char_length", char_length(r.text)},
               {"steps", steps}};
  const fs::path path =
      out_path.value_or(fs::path(cfg.run_dir) / "inspect" / (example_id + "-" + std::to_string(desired) + ".json"));
  refuse_existing({path}, ctx.force);
  write_text(path, j.dump(2) + "\n");
  write_manifest(path.parent_path().empty() ? fs::path(".") : path.parent_path(), "inspect", cfg, {path});
  ctx.out << path.string() << "\n" << r.text << "\n";
  return 0;
}

int cmd_summarize(Context& ctx, const fs::path& ckpt_path, const std::string& text, std::int64_t length) {
  const auto loaded = load_model(ckpt_path);
  const Words words = tokenize(text);
  if (words.empty()) throw InputError("--text is empty");
  const Source src = make_source(loaded.ckpt.vocab, words);
  Seq2SeqStepModel step_model(loaded.model, loaded.ckpt.vocab, src);
  const auto r = beam_search(step_model, length, ctx.cfg.decode_beam, default_max_steps(length));
  ctx.out << r.text << "\n";
  return 0;
}

int exit_code(const Error& e) {
  switch (e.category()) {
    case Error::Category::usage:
      return 1;
    case Error::Category::data:
      return 2;
    case Error::Category::numeric:
      return 3;
  }
  return 2;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Length-controllable summarization: data, training, decoding and evaluation", "lenatten"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool force = false;
  app.add_option("--config", config_path, "Flat dotted-key JSON run config");
  app.add_option("--seed", seed, "Seed for every random stream");
  app.add_option("--set", overrides, "Config override KEY=VALUE (repeatable)")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_flag("--force", force, "Overwrite existing outputs");

  std::optional<std::size_t> beam;
  std::optional<std::string> checkpoint;

  auto* gen = app.add_subcommand("gen-data", "Write synthetic train/valid/test splits");

  auto* tr = app.add_subcommand("train", "Train a model on the train split");
  std::optional<std::string> resume;
  bool no_lenatten = false;
  tr->add_option("--resume", resume, "Continue from a checkpoint");
  tr->add_flag("--no-lenatten", no_lenatten, "Ablation: drop the length context");

  auto* ev = app.add_subcommand("eval", "Decode a split and write metric reports");
  std::optional<std::string> policy;
  std::vector<std::int64_t> eval_lengths;
  ev->add_option("--checkpoint", checkpoint, "Checkpoint (default <run.dir>/model.ckpt)");
  ev->add_option("--policy", policy, "reference or fixed:N");
  ev->add_option("--length", eval_lengths, "Fixed desired length (repeatable)")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  ev->add_option("--beam", beam, "Beam size");

  auto* sw = app.add_subcommand("sweep-aleph", "Train and evaluate one model per length-embedding count");
  std::vector<std::size_t> alephs;
  sw->add_option("--values", alephs, "Counts to sweep (default sweep.alephs)")->delimiter(',');

  auto* in = app.add_subcommand("inspect", "Dump the per-step decoding trace of one example");
  std::string example_id;
  std::optional<std::int64_t> inspect_length;
  std::optional<std::string> inspect_out;
  in->add_option("--checkpoint", checkpoint, "Checkpoint (default <run.dir>/model.ckpt)");
  in->add_option("--example", example_id, "Example id in the eval split")->required();
  in->add_option("--length", inspect_length, "Desired length (default: reference length)");
  in->add_option("--out", inspect_out, "Trace file");
  in->add_option("--beam", beam, "Beam size");

  auto* su = app.add_subcommand("summarize", "Summarize one text to a desired length");
  std::string text;
  std::int64_t summary_length = 0;
  su->add_option("--checkpoint", checkpoint, "Checkpoint (default <run.dir>/model.ckpt)");
  su->add_option("--text", text, "Source text")->required();
  su->add_option("--length", summary_length, "Desired length in characters")->required();
  su->add_option("--beam", beam, "Beam size");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    Context ctx{config_path.empty() ? RunConfig{} : load_run_config(config_path), force, out};
    for (const auto& o : overrides) ctx.cfg.set(o);
    if (seed) ctx.cfg.seed = *seed;
    if (beam) ctx.cfg.decode_beam = *beam;
    if (policy) ctx.cfg.decode_policy = *policy;
    const fs::path ckpt = checkpoint ? fs::path(*checkpoint) : ctx.cfg.checkpoint_path();

    if (gen->parsed()) return cmd_gen_data(ctx);
    if (tr->parsed()) {
      if (no_lenatten) ctx.cfg.model_use_lenatten = false;
      train_run(ctx.cfg, ctx.force, resume ? std::optional<fs::path>(*resume) : std::nullopt, out);
      return 0;
    }
    if (ev->parsed()) {
      eval_run(ctx.cfg, ckpt, requested_policies(ctx.cfg, eval_lengths, policy), out);
      return 0;
    }
    if (sw->parsed()) return cmd_sweep_aleph(ctx, alephs);
    if (in->parsed()) {
      return cmd_inspect(ctx, ckpt, example_id, inspect_length,
                         inspect_out ? std::optional<fs::path>(*inspect_out) : std::nullopt);
    }
    if (su->parsed()) return cmd_summarize(ctx, ckpt, text, summary_length);
  } catch (const Error& e) {
    err << "lenatten: " << e.what() << "\n";
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    err << "lenatten: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace lenatten::cli
