#include "tgeat/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tgeat {

using nlohmann::json;

double WarmupSchedule::lr_at(long step) const {
  if (step < 0) fail(ErrorKind::validation, "negative step");
  if (step >= warmup_steps) return lr_peak;
  return lr_start + (lr_peak - lr_start) * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

void WarmupSchedule::validate() const {
  if (!(lr_start > 0.0) || !(lr_peak > 0.0)) fail(ErrorKind::config, "learning rates must be positive");
  if (warmup_steps < 0) fail(ErrorKind::config, "warmup_steps must be >= 0");
}

void Adam::step(std::span<nn::Param<float>* const> params, double lr) {
  ++t_;
  double scale = 1.0;
  if (config_.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto* p : params) sq += p->grad.template cast<double>().squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > config_.grad_clip) scale = config_.grad_clip / norm;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(config_.beta1);
  const auto b2 = static_cast<float>(config_.beta2);
  for (auto* p : params) {
    auto& s = state_[p->name];
    if (s.m.size() == 0) {
      s.m = Matrix<float>::Zero(p->value.rows(), p->value.cols());
      s.v = Matrix<float>::Zero(p->value.rows(), p->value.cols());
    }
    const Matrix<float> g = p->grad * static_cast<float>(scale);
    s.m = b1 * s.m + (1.0f - b1) * g;
    s.v = b2 * s.v + (1.0f - b2) * g.cwiseProduct(g);
    const auto step_size = static_cast<float>(lr / bc1);
    const auto denom = (s.v.array() / static_cast<float>(bc2)).sqrt() + static_cast<float>(config_.eps);
    p->value.array() -= step_size * s.m.array() / denom;
  }
}

double cross_entropy(const Matrix<float>& logits, std::span<const int> targets, Matrix<float>* grad) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) fail(ErrorKind::validation, "cross_entropy: row mismatch");
  const Matrix<double> z = logits.cast<double>();
  const auto n = static_cast<double>(z.rows());
  double loss = 0.0;
  Matrix<double> g(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= z.cols()) fail(ErrorKind::validation, "cross_entropy: target out of range");
    const double mx = z.row(i).maxCoeff();
    const RowVector<double> e = (z.row(i).array() - mx).exp().matrix();
    const double total = e.sum();
    loss += std::log(total) + mx - z(i, t);
    g.row(i) = e / total;
    g(i, t) -= 1.0;
  }
  if (grad) *grad = (g / n).cast<float>();
  return loss / n;
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::clean_finetune:
      return "clean_finetune";
    case Stage::rt:
      return "rt";
    case Stage::dat:
      return "dat";
    case Stage::tgeat:
      return "tgeat";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  if (s == "clean_finetune") return Stage::clean_finetune;
  if (s == "rt") return Stage::rt;
  if (s == "dat") return Stage::dat;
  if (s == "tgeat") return Stage::tgeat;
  fail(ErrorKind::config, "unknown stage '" + s + "' (expected clean_finetune, rt, dat or tgeat)");
}

std::set<nn::Group> trainable_groups(Stage stage, bool provider_trainable) {
  using nn::Group;
  switch (stage) {
    case Stage::clean_finetune:
      return {Group::conv, Group::transformer, Group::head};
    case Stage::rt:
      return {Group::transformer, Group::head};
    case Stage::dat:
      return {Group::transformer, Group::head, Group::env_classifier};
    case Stage::tgeat: {
      std::set<Group> g{Group::transformer, Group::head, Group::text_projection};
      if (provider_trainable) g.insert(Group::provider);
      return g;
    }
  }
  return {};
}

void StageConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::config, "epochs must be >= 1");
  if (batch_size < 2) fail(ErrorKind::config, "batch_size must be >= 2 (CCC needs batch statistics)");
  schedule.validate();
  if (!(grl_lambda > 0.0)) fail(ErrorKind::config, "grl_lambda must be > 0");
  if (dat_weight < 0.0) fail(ErrorKind::config, "dat_weight must be >= 0");
  if (provider_trainable && stage != Stage::tgeat) fail(ErrorKind::config, "provider_trainable applies to the tgeat stage only");
  if (max_steps < 0) fail(ErrorKind::config, "max_steps must be >= 0");
}

json to_json(const StageConfig& c) {
  return {{"stage", to_string(c.stage)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"lr_start", c.schedule.lr_start},
          {"lr_peak", c.schedule.lr_peak},
          {"warmup_steps", c.schedule.warmup_steps},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"grad_clip", c.adam.grad_clip},
          {"dat_weight", c.dat_weight},
          {"grl_lambda", c.grl_lambda},
          {"provider_trainable", c.provider_trainable},
          {"prompt_template", c.prompt_template},
          {"dev_noise", to_string(c.dev_noise)},
          {"max_steps", c.max_steps}};
}

StageConfig stage_config_from_json(const json& j) {
  StageConfig c;
  try {
    c.stage = parse_stage(j.value("stage", std::string("clean_finetune")));
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.schedule.lr_start = j.value("lr_start", c.schedule.lr_start);
    c.schedule.lr_peak = j.value("lr_peak", c.schedule.lr_peak);
    c.schedule.warmup_steps = j.value("warmup_steps", c.schedule.warmup_steps);
    c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
    c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
    c.adam.eps = j.value("adam_eps", c.adam.eps);
    c.adam.grad_clip = j.value("grad_clip", c.adam.grad_clip);
    c.dat_weight = j.value("dat_weight", c.dat_weight);
    c.grl_lambda = j.value("grl_lambda", c.grl_lambda);
    c.provider_trainable = j.value("provider_trainable", c.provider_trainable);
    c.prompt_template = j.value("prompt_template", c.prompt_template);
    c.dev_noise = parse_noise_split(j.value("dev_noise", std::string("adapt")));
    c.max_steps = j.value("max_steps", c.max_steps);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("malformed stage config: ") + e.what());
  }
  c.validate();
  return c;
}

int select_best(std::span<const EpochRecord> epochs) {
  if (epochs.empty()) fail(ErrorKind::validation, "no epochs to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < epochs.size(); ++i) {
    if (epochs[i].sum() > epochs[best].sum()) best = i;
  }
  return epochs[best].epoch;
}

TrainingData make_training_data(const SynthCorpus& corpus) {
  corpus.catalog.validate();
  const auto train = select_split(corpus.utterances, Split::train);
  if (train.size() < 2) fail(ErrorKind::validation, "corpus needs at least 2 training utterances");
  return {&corpus, compute_stats(train)};
}

namespace {

using Model = nn::SerModel<float>;
using Input = nn::ModelInput<float>;

Matrix<float> label_matrix(std::span<const Utterance* const> utts) {
  Matrix<float> y(static_cast<Eigen::Index>(utts.size()), 3);
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const LabelTriple n = normalize_labels(utts[i]->labels_raw);
    for (int a = 0; a < 3; ++a) y(static_cast<Eigen::Index>(i), a) = static_cast<float>(n[a]);
  }
  return y;
}

std::map<std::string, std::vector<const NoiseClip*>> noise_by_environment(const SynthCorpus& corpus, NoiseSplit split) {
  std::map<std::string, std::vector<const NoiseClip*>> out;
  for (const auto& clip : corpus.noise) {
    if (clip.split == split) out[clip.environment].push_back(&clip);
  }
  return out;
}

const std::vector<const NoiseClip*>& clips_for(const std::map<std::string, std::vector<const NoiseClip*>>& pools,
                                               const std::string& environment) {
  auto it = pools.find(environment);
  if (it == pools.end() || it->second.empty()) {
    fail(ErrorKind::validation, "no noise clips for environment '" + environment + "'");
  }
  return it->second;
}

// Caches one embedding per environment for a fixed provider state.
class EmbeddingCache {
 public:
  EmbeddingCache(const EncoderProvider* provider, std::string prompt_template)
      : provider_(provider), template_(std::move(prompt_template)) {}

  const Vector<float>* get(const std::string& environment) {
    if (!provider_) return nullptr;
    auto it = cache_.find(environment);
    if (it == cache_.end()) {
      it = cache_.emplace(environment, encode_prompt(*provider_, render_prompt(environment, template_)).vector).first;
    }
    return &it->second;
  }

 private:
  const EncoderProvider* provider_;
  std::string template_;
  std::map<std::string, Vector<float>> cache_;
};

}  // namespace

std::array<double, 3> dev_ccc(const Model& model, const TrainingData& data, std::uint64_t seed,
                              std::optional<NoiseSplit> contaminate, const EncoderProvider* provider,
                              const std::string& prompt_template) {
  const SynthCorpus& corpus = *data.corpus;
  const auto dev = select_split(corpus.utterances, Split::dev);
  if (dev.size() < 2) fail(ErrorKind::validation, "corpus needs at least 2 dev utterances");
  const bool fused = model.config().fusion == nn::Fusion::text;
  if (fused && !provider) fail(ErrorKind::config, "text-fused model needs an encoder provider");
  if (fused && !contaminate) fail(ErrorKind::validation, "text-fused model needs a noise environment per utterance");

  std::map<std::string, std::vector<const NoiseClip*>> pools;
  std::vector<std::string> envs;
  if (contaminate) {
    pools = noise_by_environment(corpus, *contaminate);
    envs = *contaminate == NoiseSplit::adapt ? corpus.catalog.adapt_environments : corpus.catalog.test_environments;
  }
  EmbeddingCache embeddings(fused ? provider : nullptr, prompt_template);

  Matrix<float> pred(static_cast<Eigen::Index>(dev.size()), 3);
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < dev.size(); start += kChunk) {
    const std::size_t end = std::min(dev.size(), start + kChunk);
    std::vector<Samples> waves;
    std::vector<const Vector<float>*> texts;
    for (std::size_t i = start; i < end; ++i) {
      const Utterance& u = *dev[i];
      if (!contaminate) {
        waves.push_back(z_normalize(u.samples, data.stats));
        texts.push_back(nullptr);
        continue;
      }
      Rng rng(tagged_seed(seed, "dev:" + u.id));
      std::string env;
      double snr = 0.0;
      if (*contaminate == NoiseSplit::adapt) {
        const AdaptCondition cond = sample_adapt_condition(corpus.catalog, rng);
        env = cond.environment;
        snr = cond.snr_db;
      } else {
        env = envs[std::uniform_int_distribution<std::size_t>(0, envs.size() - 1)(rng)];
        snr = kAdaptSnrsDb[std::uniform_int_distribution<std::size_t>(0, kAdaptSnrsDb.size() - 1)(rng)];
      }
      const auto& pool = clips_for(pools, env);
      const NoiseClip& clip = *pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      waves.push_back(z_normalize(mix(u, clip, snr, rng()).samples, data.stats));
      texts.push_back(embeddings.get(env));
    }
    std::vector<Input> batch;
    for (std::size_t k = 0; k < waves.size(); ++k) batch.push_back({waves[k], texts[k]});
    pred.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = model.predict(batch);
  }
  const Matrix<float> y = label_matrix(dev);
  std::array<double, 3> out{};
  for (int a = 0; a < 3; ++a) out[static_cast<std::size_t>(a)] = ccc(pred.col(a), y.col(a));
  return out;
}

StageResult run_stage(const StageConfig& config, const TrainingData& data, const nn::ModelConfig& fresh_config,
                      const Model* stage1, EncoderProvider* provider) {
  config.validate();
  if (!data.corpus) fail(ErrorKind::validation, "training data has no corpus");
  const SynthCorpus& corpus = *data.corpus;
  const bool adaptation = config.stage != Stage::clean_finetune;
  const bool text = config.stage == Stage::tgeat;

  Model model;
  if (!adaptation) {
    model = Model(fresh_config, tagged_seed(config.seed, "init"));
  } else {
    if (!stage1) {
      fail(ErrorKind::dependency, "stage '" + to_string(config.stage) + "' requires a clean_finetune checkpoint");
    }
    if (stage1->config().fusion != nn::Fusion::none || stage1->config().env_classifier) {
      fail(ErrorKind::validation, "stage-1 model must have neither text fusion nor an environment classifier");
    }
    model = *stage1;
    Rng init(tagged_seed(config.seed, "adapt-init"));
    if (config.stage == Stage::dat) {
      model.enable_env_classifier(static_cast<int>(corpus.catalog.adapt_environments.size()), config.grl_lambda, init);
    }
    if (text) {
      if (!provider) fail(ErrorKind::config, "tgeat stage needs an encoder provider");
      model.enable_text_fusion(provider->dim(), init);
    }
  }
  if (text) {
    set_trainable(*provider, config.provider_trainable);
  } else {
    provider = nullptr;
  }

  const auto groups = trainable_groups(config.stage, config.provider_trainable);
  std::vector<nn::Param<float>*> trainable;
  for (auto* p : model.parameters()) {
    if (groups.contains(p->group)) trainable.push_back(p);
  }
  if (provider && config.provider_trainable) {
    for (auto* p : provider->parameters()) trainable.push_back(p);
  }

  const auto train = select_split(corpus.utterances, Split::train);
  std::vector<Samples> clean_waves;
  if (!adaptation) {
    clean_waves.reserve(train.size());
    for (const auto* u : train) clean_waves.push_back(z_normalize(u->samples, data.stats));
  }
  const auto pools = noise_by_environment(corpus, NoiseSplit::adapt);

  StageResult result;
  result.run.stage = config.stage;
  Adam adam(config.adam);
  std::vector<std::size_t> order(train.size());
  long step = 0;
  bool stop = false;
  double best_sum = -std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(tagged_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t start = 0; start + 2 <= order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      if (config.max_steps > 0 && step >= config.max_steps) {
        stop = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const Utterance*> utts;
      for (std::size_t k = start; k < end; ++k) utts.push_back(train[order[k]]);

      Rng batch_rng(tagged_seed(config.seed, "batch", static_cast<std::uint64_t>(step)));
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      std::vector<Samples> mixed;
      std::vector<int> env_targets;
      Vector<float> embedding;
      EnvironmentPrompt prompt;
      if (adaptation) {
        const AdaptCondition cond = sample_adapt_condition(corpus.catalog, batch_rng);
        rec.environment = cond.environment;
        rec.snr_db = cond.snr_db;
        const auto& pool = clips_for(pools, cond.environment);
        const auto clips = choose_noise_clips(pool, utts.size(), batch_rng);
        for (std::size_t k = 0; k < utts.size(); ++k) {
          mixed.push_back(z_normalize(mix(*utts[k], *clips[k], cond.snr_db, batch_rng()).samples, data.stats));
        }
        env_targets.assign(utts.size(), *corpus.catalog.adapt_index(cond.environment));
        if (provider) {
          prompt = render_prompt(cond.environment, config.prompt_template);
          embedding = encode_prompt(*provider, prompt).vector;
        }
      }

      std::vector<Input> batch;
      for (std::size_t k = 0; k < utts.size(); ++k) {
        const Samples& w = adaptation ? mixed[k] : clean_waves[order[start + k]];
        batch.push_back({w, provider ? &embedding : nullptr});
      }

      Model::BatchCache cache;
      Rng dropout_rng(tagged_seed(config.seed, "dropout", static_cast<std::uint64_t>(step)));
      const auto out = model.forward(batch, &dropout_rng, &cache, !adaptation);
      const Matrix<float> target = label_matrix(utts);
      Matrix<float> dpred;
      rec.ccc_loss = ccc_loss(out.predictions, target, &dpred);
      rec.loss = rec.ccc_loss;
      Matrix<float> dlogits;
      if (config.stage == Stage::dat) {
        rec.env_xent = cross_entropy(out.env_logits, env_targets, &dlogits);
        dlogits *= static_cast<float>(config.dat_weight);
        rec.loss += config.dat_weight * rec.env_xent;
      }
      if (!std::isfinite(rec.loss)) {
        fail(ErrorKind::numeric, "non-finite loss at step " + std::to_string(step) + " of stage " + to_string(config.stage));
      }

      model.zero_grad();
      if (provider) {
        for (auto* p : provider->parameters()) p->zero_grad();
      }
      const auto text_grads = model.backward(cache, dpred, config.stage == Stage::dat ? &dlogits : nullptr, !adaptation);
      if (provider && config.provider_trainable) {
        Vector<float> total = Vector<float>::Zero(provider->dim());
        for (const auto& g : text_grads) total += g;
        provider->encode_backward(prompt, total);
      }
      rec.lr = config.schedule.lr_at(step);
      adam.step(trainable, rec.lr);
      result.run.steps.push_back(rec);
      ++step;
    }

    EpochRecord er;
    er.epoch = epoch;
    const std::optional<NoiseSplit> dev_noise = adaptation ? std::optional<NoiseSplit>(config.dev_noise) : std::nullopt;
    er.dev_ccc = dev_ccc(model, data, tagged_seed(config.seed, "dev"), dev_noise, provider, config.prompt_template);
    result.run.epochs.push_back(er);
    if (er.sum() > best_sum) {
      best_sum = er.sum();
      result.model = model;
      if (provider && config.provider_trainable) result.provider = provider->clone();
    }
  }
  result.run.best_epoch = select_best(result.run.epochs);
  return result;
}

json to_json(const TrainRun& run) {
  json steps = json::array();
  for (const auto& s : run.steps) {
    json row{{"step", s.step}, {"epoch", s.epoch}, {"lr", s.lr}, {"loss", s.loss}, {"ccc_loss", s.ccc_loss}};
    if (!s.environment.empty()) {
      row["environment"] = s.environment;
      row["snr_db"] = s.snr_db;
    }
    if (s.env_xent != 0.0) row["env_xent"] = s.env_xent;
    steps.push_back(row);
  }
  json epochs = json::array();
  for (const auto& e : run.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"dev_ccc", {{"arousal", e.dev_ccc[0]}, {"dominance", e.dev_ccc[1]}, {"valence", e.dev_ccc[2]}}},
                      {"dev_ccc_sum", e.sum()}});
  }
  return {{"stage", to_string(run.stage)}, {"best_epoch", run.best_epoch}, {"steps", steps}, {"epochs", epochs}};
}

TrainRun train_run_from_json(const json& j) {
  TrainRun run;
  try {
    run.stage = parse_stage(j.at("stage").get<std::string>());
    run.best_epoch = j.at("best_epoch").get<int>();
    for (const auto& s : j.at("steps")) {
      StepRecord r;
      r.step = s.at("step").get<long>();
      r.epoch = s.at("epoch").get<int>();
      r.lr = s.at("lr").get<double>();
      r.loss = s.at("loss").get<double>();
      r.ccc_loss = s.at("ccc_loss").get<double>();
      r.env_xent = s.value("env_xent", 0.0);
      r.environment = s.value("environment", std::string());
      r.snr_db = s.value("snr_db", 0.0);
      run.steps.push_back(r);
    }
    for (const auto& e : j.at("epochs")) {
      EpochRecord r;
      r.epoch = e.at("epoch").get<int>();
      const auto& d = e.at("dev_ccc");
      r.dev_ccc = {d.at("arousal").get<double>(), d.at("dominance").get<double>(), d.at("valence").get<double>()};
      run.epochs.push_back(r);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, std::string("malformed training log: ") + e.what());
  }
  return run;
}

}  // namespace tgeat
