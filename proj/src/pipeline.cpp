#include "tgeat/pipeline.hpp"
#include "tgeat/parallel.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace tgeat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log_line(const CommandOptions& o, const std::string& msg) {
  if (o.log) *o.log << msg << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write " + path.string());
  os << text;
  if (!os) fail(ErrorKind::io, "failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, path.string() + ": " + e.what());
  }
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory " + dir.string() + ": " + ec.message());
}

json synth_to_json(const SynthConfig& s) {
  return {{"train_count", s.train_count},
          {"dev_count", s.dev_count},
          {"test_count", s.test_count},
          {"min_duration_s", s.min_duration_s},
          {"max_duration_s", s.max_duration_s},
          {"clips_per_adapt_environment", s.clips_per_adapt_environment},
          {"clips_per_test_environment", s.clips_per_test_environment},
          {"noise_duration_s", s.noise_duration_s}};
}

SynthConfig synth_from_json(const json& j) {
  SynthConfig s;
  s.train_count = j.value("train_count", s.train_count);
  s.dev_count = j.value("dev_count", s.dev_count);
  s.test_count = j.value("test_count", s.test_count);
  s.min_duration_s = j.value("min_duration_s", s.min_duration_s);
  s.max_duration_s = j.value("max_duration_s", s.max_duration_s);
  s.clips_per_adapt_environment = j.value("clips_per_adapt_environment", s.clips_per_adapt_environment);
  s.clips_per_test_environment = j.value("clips_per_test_environment", s.clips_per_test_environment);
  s.noise_duration_s = j.value("noise_duration_s", s.noise_duration_s);
  return s;
}

const std::set<std::string>& provider_kinds() {
  static const std::set<std::string> kinds{"semantic", "semantic_ungrouped", "audio", "onehot", "table", "precomputed"};
  return kinds;
}

bool selected(const CommandOptions& o, const std::string& id) {
  return o.models.empty() || std::find(o.models.begin(), o.models.end(), id) != o.models.end();
}

// Hash of everything that determines a model's checkpoint.
std::string model_hash(const ExperimentConfig& c, const ModelSpec& m) {
  json j{{"model", nn::to_json(c.model)}, {"synth", synth_to_json(c.synth)}, {"corpus_seed", c.seed}, {"stage", to_json(m.stage)}};
  if (!m.provider.empty()) {
    const auto& p = c.find_provider(m.provider);
    j["provider"] = {{"kind", p.kind}, {"dim", p.dim}, {"seed", p.seed}, {"path", p.path.string()}};
  }
  if (m.stage.stage != Stage::clean_finetune) j["upstream"] = model_hash(c, c.clean_model());
  return content_hash(j.dump());
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

fs::path default_output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::current_path();
}

void ExperimentConfig::validate() const {
  if (output_dir.empty()) fail(ErrorKind::config, "output_dir is empty");
  if (models.empty()) fail(ErrorKind::config, "config lists no models");
  model.validate();
  if (model.fusion != nn::Fusion::none || model.env_classifier) {
    fail(ErrorKind::config, "the base model config must have neither text fusion nor an environment classifier");
  }
  if (models.front().stage.stage != Stage::clean_finetune) {
    fail(ErrorKind::config, "the first model must be the clean_finetune stage (adaptation stages depend on it)");
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    if (m.id.empty()) fail(ErrorKind::config, "model id is empty");
    if (!ids.insert(m.id).second) fail(ErrorKind::config, "duplicate model id '" + m.id + "'");
    if (i > 0 && m.stage.stage == Stage::clean_finetune) {
      fail(ErrorKind::config, "only one clean_finetune model is allowed ('" + m.id + "')");
    }
    m.stage.validate();
    if (m.stage.stage == Stage::tgeat) {
      if (m.provider.empty()) fail(ErrorKind::config, "tgeat model '" + m.id + "' needs a provider");
      find_provider(m.provider);
    } else if (!m.provider.empty()) {
      fail(ErrorKind::config, "model '" + m.id + "' is not a tgeat stage but names a provider");
    }
  }
  std::set<std::string> names;
  for (const auto& p : providers) {
    if (!names.insert(p.name).second) fail(ErrorKind::config, "duplicate provider name '" + p.name + "'");
    if (!provider_kinds().contains(p.kind)) fail(ErrorKind::config, "unknown provider kind '" + p.kind + "'");
    if ((p.kind == "table" || p.kind == "precomputed") && p.path.empty()) {
      fail(ErrorKind::config, "provider '" + p.name + "' needs a path");
    }
  }
  if (eval.snrs_db.empty() || eval.replications < 2) fail(ErrorKind::config, "eval needs SNR levels and >= 2 replications");
  if (synth.train_count < 2 || synth.dev_count < 2 || synth.test_count < 2) {
    fail(ErrorKind::config, "synth counts must be >= 2");
  }
}

const ModelSpec& ExperimentConfig::clean_model() const { return models.front(); }

const ModelSpec& ExperimentConfig::find_model(const std::string& id) const {
  for (const auto& m : models) {
    if (m.id == id) return m;
  }
  fail(ErrorKind::config, "no model named '" + id + "' in the config");
}

const ProviderSpec& ExperimentConfig::find_provider(const std::string& name) const {
  for (const auto& p : providers) {
    if (p.name == name) return p;
  }
  fail(ErrorKind::config, "no provider named '" + name + "' in the config");
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir,
                                             std::optional<std::uint64_t> seed_override) {
  ExperimentConfig c;
  try {
    c.seed = seed_override ? *seed_override : j.value("seed", c.seed);
    fs::path out = j.value("output_dir", std::string("tgeat_run"));
    c.output_dir = out.is_absolute() ? out : default_output_root() / out;
    if (j.contains("synth")) c.synth = synth_from_json(j.at("synth"));
    if (j.contains("model")) c.model = nn::model_config_from_json(j.at("model"));
    for (const auto& p : j.value("providers", json::array())) {
      ProviderSpec s;
      s.name = p.at("name").get<std::string>();
      s.kind = p.value("kind", s.kind);
      s.dim = p.value("dim", s.dim);
      s.seed = p.contains("seed") ? p.at("seed").get<std::uint64_t>() : tagged_seed(c.seed, "provider:" + s.name);
      if (p.contains("path")) {
        fs::path path = p.at("path").get<std::string>();
        s.path = path.is_absolute() ? path : base_dir / path;
      }
      c.providers.push_back(s);
    }
    for (const auto& m : j.at("models")) {
      ModelSpec s;
      s.id = m.at("id").get<std::string>();
      json stage = m;
      if (!stage.contains("seed")) stage["seed"] = tagged_seed(c.seed, "stage:" + s.id);
      s.stage = stage_config_from_json(stage);
      s.provider = m.value("provider", std::string());
      c.models.push_back(s);
    }
    const json ev = j.value("eval", json::object());
    c.eval.seed = ev.contains("seed") ? ev.at("seed").get<std::uint64_t>() : tagged_seed(c.seed, "eval");
    if (ev.contains("snrs_db")) c.eval.snrs_db = ev.at("snrs_db").get<std::vector<double>>();
    c.eval.replications = ev.value("replications", c.eval.replications);
    c.eval.noise = parse_noise_split(ev.value("noise", std::string("test")));
    const json an = j.value("analysis", json::object());
    c.analysis.seed = an.contains("seed") ? an.at("seed").get<std::uint64_t>() : tagged_seed(c.seed, "analysis");
    c.analysis.snr_db = an.value("snr_db", c.analysis.snr_db);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("malformed experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  if (!fs::exists(path)) fail(ErrorKind::config, "config file not found: " + path.string());
  json j;
  try {
    j = read_json(path);
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
  return experiment_config_from_json(j, fs::absolute(path).parent_path(), seed_override);
}

json to_json(const ExperimentConfig& c) {
  json providers = json::array();
  for (const auto& p : c.providers) {
    json row{{"name", p.name}, {"kind", p.kind}, {"dim", p.dim}, {"seed", p.seed}};
    if (!p.path.empty()) row["path"] = p.path.string();
    providers.push_back(row);
  }
  json models = json::array();
  for (const auto& m : c.models) {
    json row = to_json(m.stage);
    row["id"] = m.id;
    if (!m.provider.empty()) row["provider"] = m.provider;
    models.push_back(row);
  }
  return {{"output_dir", c.output_dir.string()},
          {"seed", c.seed},
          {"synth", synth_to_json(c.synth)},
          {"model", nn::to_json(c.model)},
          {"providers", providers},
          {"models", models},
          {"eval",
           {{"seed", c.eval.seed},
            {"snrs_db", c.eval.snrs_db},
            {"replications", c.eval.replications},
            {"noise", to_string(c.eval.noise)}}},
          {"analysis", {{"seed", c.analysis.seed}, {"snr_db", c.analysis.snr_db}}}};
}

std::string config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("output_dir");
  return content_hash(j.dump());
}

std::unique_ptr<EncoderProvider> make_provider(const ProviderSpec& spec, const SynthCorpus& corpus) {
  if (spec.kind == "semantic") return std::make_unique<SemanticProvider>(corpus.catalog, spec.dim, spec.seed, true);
  if (spec.kind == "semantic_ungrouped") {
    return std::make_unique<SemanticProvider>(corpus.catalog, spec.dim, spec.seed, false);
  }
  if (spec.kind == "audio") {
    return std::make_unique<AudioGroundedProvider>(corpus.noise, corpus.catalog.all_environments(), spec.dim, spec.seed);
  }
  if (spec.kind == "onehot") return std::make_unique<OneHotProvider>(corpus.catalog);
  if (spec.kind == "table") return std::make_unique<TableProvider>(load_embedding_table(spec.path));
  if (spec.kind == "precomputed") return std::make_unique<PrecomputedProvider>(spec.path);
  fail(ErrorKind::config, "unknown provider kind '" + spec.kind + "'");
}

void write_run_metadata(const fs::path& dir, const std::string& command, const ExperimentConfig& config,
                        const json& extra) {
  make_dirs(dir);
  json j{{"command", command},
         {"config_hash", config_hash(config)},
         {"seed", config.seed},
         {"code_version", std::string(kCodeVersion)}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_text(dir / "run.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Commands

SynthCorpus load_experiment_corpus(const ExperimentConfig& config) {
  const Layout layout{config.output_dir};
  if (!fs::exists(layout.corpus() / "utterances.jsonl")) {
    fail(ErrorKind::dependency, "corpus not found at " + layout.corpus().string() + "; run synth first");
  }
  return read_corpus(layout.corpus());
}

void cmd_synth(const ExperimentConfig& config, const CommandOptions& options) {
  const Layout layout{config.output_dir};
  const fs::path dir = layout.corpus();
  if (!fs::exists(config.output_dir.parent_path()) && !config.output_dir.parent_path().empty()) {
    fail(ErrorKind::io, "parent directory does not exist: " + config.output_dir.parent_path().string());
  }
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!options.force) fail(ErrorKind::config, "corpus directory " + dir.string() + " is not empty (use --force)");
    fs::remove_all(dir);
  }
  make_dirs(dir);
  log_line(options, "synthesizing corpus into " + dir.string());
  const SynthCorpus corpus = synth_corpus(config.synth, default_catalog(), tagged_seed(config.seed, "synth"));
  write_corpus(dir, corpus);
  write_run_metadata(dir, "synth", config,
                     {{"utterances", corpus.utterances.size()}, {"noise_clips", corpus.noise.size()}});
}

std::vector<EvalSetSpec> load_eval_sets(const ExperimentConfig& config) {
  const Layout layout{config.output_dir};
  const fs::path index = layout.evalsets() / "index.json";
  if (!fs::exists(index)) fail(ErrorKind::dependency, "no evaluation sets at " + layout.evalsets().string() + "; run mix first");
  std::vector<EvalSetSpec> sets;
  const json listing = read_json(index);
  for (const auto& name : listing.at("sets")) sets.push_back(read_eval_set(layout.evalsets() / name.get<std::string>()));
  return sets;
}

void cmd_mix(const ExperimentConfig& config, const CommandOptions& options) {
  const Layout layout{config.output_dir};
  const SynthCorpus corpus = load_experiment_corpus(config);
  const auto test = select_split(corpus.utterances, Split::test);
  std::vector<const NoiseClip*> noise;
  for (const auto& c : corpus.noise) {
    if (c.split == config.eval.noise) noise.push_back(&c);
  }
  const auto sets = build_eval_sets(test, noise, config.eval.seed, config.eval.snrs_db, config.eval.replications);
  if (fs::exists(layout.evalsets())) fs::remove_all(layout.evalsets());
  make_dirs(layout.evalsets());
  json names = json::array();
  for (const auto& s : sets) names.push_back(eval_set_filename(s));
  parallel_for(sets.size(), options.jobs, [&](std::size_t i) {
    write_eval_set(layout.evalsets() / eval_set_filename(sets[i]), sets[i]);
  });
  write_text(layout.evalsets() / "index.json", json{{"sets", names}}.dump(2) + "\n");
  if (options.write_wavs) {
    std::map<std::string, const Utterance*> utts;
    for (const auto* u : test) utts[u->id] = u;
    std::map<std::string, const NoiseClip*> clips;
    for (const auto* c : noise) clips[c->id] = c;
    if (fs::exists(layout.mixed())) fs::remove_all(layout.mixed());
    parallel_for(sets.size(), options.jobs, [&](std::size_t i) {
      std::string stem = eval_set_filename(sets[i]);
      stem = stem.substr(0, stem.rfind('.'));
      const fs::path dir = layout.mixed() / stem;
      make_dirs(dir);
      for (const auto& spec : sets[i].specs) {
        write_wav(dir / (spec.utterance_id + ".wav"), apply_spec(*utts.at(spec.utterance_id), *clips.at(spec.noise_id), spec).samples);
      }
    });
  }
  write_run_metadata(layout.evalsets(), "mix", config, {{"sets", sets.size()}});
  log_line(options, "wrote " + std::to_string(sets.size()) + " evaluation sets to " + layout.evalsets().string());
}

MixVerification verify_mix(const ExperimentConfig& config, const CommandOptions& options) {
  const SynthCorpus corpus = load_experiment_corpus(config);
  const auto sets = load_eval_sets(config);
  std::map<std::string, const Utterance*> utts;
  for (const auto& u : corpus.utterances) utts[u.id] = &u;
  std::map<std::string, const NoiseClip*> clips;
  for (const auto& c : corpus.noise) clips[c.id] = &c;
  std::vector<double> worst(sets.size(), 0.0);
  parallel_for(sets.size(), options.jobs, [&](std::size_t i) {
    for (const auto& spec : sets[i].specs) {
      const auto u = utts.find(spec.utterance_id);
      const auto c = clips.find(spec.noise_id);
      if (u == utts.end() || c == clips.end()) fail(ErrorKind::validation, "eval set references unknown ids");
      worst[i] = std::max(worst[i], std::abs(achieved_snr_db(*u->second, *c->second, spec) - spec.target_snr_db));
    }
  });
  MixVerification v;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    v.samples += sets[i].specs.size();
    v.max_deviation_db = std::max(v.max_deviation_db, worst[i]);
  }
  return v;
}

void cmd_train(const ExperimentConfig& config, const CommandOptions& options) {
  const Layout layout{config.output_dir};
  const SynthCorpus corpus = load_experiment_corpus(config);
  const TrainingData data = make_training_data(corpus);
  std::optional<nn::SerModel<float>> clean;

  for (const auto& spec : config.models) {
    if (!selected(options, spec.id)) continue;
    const std::string hash = model_hash(config, spec);
    const fs::path ckpt = layout.checkpoint(spec.id);
    if (options.resume && fs::exists(ckpt)) {
      const Checkpoint existing = load_checkpoint(ckpt);
      if (existing.metadata.value("model_hash", std::string()) != hash) {
        fail(ErrorKind::validation, "checksum mismatch on resume: checkpoint of '" + spec.id +
                                        "' was trained with a different configuration (delete it or drop --resume)");
      }
      log_line(options, "resume: '" + spec.id + "' is up to date");
      continue;
    }

    std::unique_ptr<EncoderProvider> provider;
    const nn::SerModel<float>* stage1 = nullptr;
    if (spec.stage.stage != Stage::clean_finetune) {
      if (!clean) {
        const auto& cm = config.clean_model();
        const fs::path clean_ckpt = layout.checkpoint(cm.id);
        if (!fs::exists(clean_ckpt)) {
          fail(ErrorKind::dependency, "model '" + spec.id + "' needs the clean_finetune checkpoint of '" + cm.id +
                                          "' (" + clean_ckpt.string() + "); train it first");
        }
        Checkpoint ck = load_checkpoint(clean_ckpt);
        if (ck.metadata.value("model_hash", std::string()) != model_hash(config, cm)) {
          fail(ErrorKind::validation, "checksum mismatch: checkpoint of '" + cm.id + "' does not match the config");
        }
        clean = std::move(ck.model);
      }
      stage1 = &*clean;
      if (!spec.provider.empty()) provider = make_provider(config.find_provider(spec.provider), corpus);
    }

    log_line(options, "training '" + spec.id + "' (" + to_string(spec.stage.stage) + ")");
    StageResult result = run_stage(spec.stage, data, config.model, stage1, provider.get());
    make_dirs(layout.model_dir(spec.id));
    const EncoderProvider* saved_provider = result.provider ? result.provider.get() : nullptr;
    save_checkpoint(ckpt, result.model, to_string(spec.stage.stage), saved_provider,
                    {{"model_id", spec.id}, {"model_hash", hash}, {"provider", spec.provider}});
    write_text(layout.train_log(spec.id), to_json(result.run).dump(1) + "\n");
    write_run_metadata(layout.model_dir(spec.id), "train", config,
                       {{"model_id", spec.id}, {"model_hash", hash}, {"best_epoch", result.run.best_epoch}});
    const auto& best = result.run.epochs[static_cast<std::size_t>(result.run.best_epoch)];
    std::ostringstream msg;
    msg << "  best epoch " << result.run.best_epoch << ", dev CCC sum " << std::fixed << std::setprecision(3) << best.sum();
    log_line(options, msg.str());
    if (spec.stage.stage == Stage::clean_finetune) clean = std::move(result.model);
  }
}

namespace {

struct LoadedModel {
  Checkpoint checkpoint;
  std::unique_ptr<EncoderProvider> provider;
};

LoadedModel load_model(const ExperimentConfig& config, const ModelSpec& spec, const SynthCorpus& corpus) {
  const Layout layout{config.output_dir};
  const fs::path ckpt = layout.checkpoint(spec.id);
  if (!fs::exists(ckpt)) {
    fail(ErrorKind::dependency, "no trained checkpoint for stage '" + to_string(spec.stage.stage) + "' (model '" +
                                    spec.id + "'); run train first");
  }
  LoadedModel m{load_checkpoint(ckpt), nullptr};
  if (!spec.provider.empty()) {
    m.provider = make_provider(config.find_provider(spec.provider), corpus);
    restore_provider(*m.provider, m.checkpoint);
  }
  return m;
}

}  // namespace

void cmd_eval(const ExperimentConfig& config, const CommandOptions& options) {
  const Layout layout{config.output_dir};
  const SynthCorpus corpus = load_experiment_corpus(config);
  const TrainingData data = make_training_data(corpus);
  const auto sets = load_eval_sets(config);
  make_dirs(layout.root / "eval");
  for (const auto& spec : config.models) {
    if (!selected(options, spec.id)) continue;
    const LoadedModel m = load_model(config, spec, corpus);
    EvalOptions eo;
    eo.model_id = spec.id;
    eo.prompt_template = spec.stage.prompt_template;
    eo.jobs = options.jobs;
    log_line(options, "evaluating '" + spec.id + "' on " + std::to_string(sets.size()) + " sets");
    const EvalReport report = evaluate(m.checkpoint.model, data, sets, m.provider.get(), eo);
    write_text(layout.eval_report(spec.id), to_json(report).dump(1) + "\n");
  }
  write_run_metadata(layout.root / "eval", "eval", config);
}

void cmd_analyze(const ExperimentConfig& config, const CommandOptions& options) {
  const Layout layout{config.output_dir};
  const SynthCorpus corpus = load_experiment_corpus(config);
  const TrainingData data = make_training_data(corpus);
  make_dirs(layout.analysis());
  const LoadedModel original = load_model(config, config.clean_model(), corpus);
  json diffs = json::array();
  std::ostringstream table;
  table << std::left << std::setw(16) << "model" << std::right << std::setw(14) << "a/first" << std::setw(14) << "a/last"
        << std::setw(14) << "b/first" << std::setw(14) << "b/last" << '\n';
  for (const auto& spec : config.models) {
    if (!selected(options, spec.id)) continue;
    const LoadedModel m = spec.id == config.clean_model().id ? LoadedModel{original.checkpoint, nullptr}
                                                             : load_model(config, spec, corpus);
    const auto s = embedding_differences(m.checkpoint.model, original.checkpoint.model, data, config.analysis.seed,
                                         config.analysis.snr_db, m.provider.get(), spec.id, spec.stage.prompt_template,
                                         config.eval.noise, options.all_layers);
    diffs.push_back(to_json(s));
    table << std::left << std::setw(16) << spec.id << std::right << std::fixed << std::setprecision(5);
    for (DiffMode mode : {DiffMode::same_model, DiffMode::vs_original}) {
      for (TraceLayer layer : {TraceLayer::first, TraceLayer::last}) table << std::setw(14) << s.at(mode, layer);
    }
    table << '\n';
  }
  write_text(layout.analysis() / "embedding_differences.json",
             json{{"snr_db", config.analysis.snr_db}, {"models", diffs}}.dump(1) + "\n");
  write_text(layout.analysis() / "embedding_differences.txt", table.str());
  for (const auto& p : config.providers) {
    const auto provider = make_provider(p, corpus);
    const auto e = export_embeddings_2d(*provider, corpus.catalog);
    write_embeddings_csv(layout.analysis() / ("embeddings_" + p.name + ".csv"), e);
    write_embeddings_jsonl(layout.analysis() / ("embeddings_" + p.name + ".jsonl"), e);
  }
  write_run_metadata(layout.analysis(), "analyze", config);
  log_line(options, table.str());
}

std::string cmd_report(const ExperimentConfig& config, const CommandOptions& options) {
  const Layout layout{config.output_dir};
  std::vector<EvalReport> reports;
  for (const auto& spec : config.models) {
    if (!selected(options, spec.id)) continue;
    const fs::path path = layout.eval_report(spec.id);
    if (!fs::exists(path)) {
      fail(ErrorKind::dependency, "no evaluation report for model '" + spec.id + "'; run eval first");
    }
    reports.push_back(eval_report_from_json(read_json(path)));
  }
  if (reports.empty()) fail(ErrorKind::config, "no models selected for the report");
  make_dirs(layout.report());
  const std::string text = render_table(reports);
  write_text(layout.report() / "table.txt", text);
  write_text(layout.report() / "table.csv", render_csv(reports));
  write_run_metadata(layout.report(), "report", config);
  log_line(options, text);
  return text;
}

}  // namespace tgeat
