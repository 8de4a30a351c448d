#pragma once

#include "tgeat/ccc.hpp"
#include "tgeat/corpus.hpp"
#include "tgeat/envtext.hpp"
#include "tgeat/mixer.hpp"
#include "tgeat/nn/model.hpp"

#include <json.hpp>

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tgeat {

// Linear warmup from lr_start to lr_peak over warmup_steps, then constant.
struct WarmupSchedule {
  double lr_start = 1e-8;
  double lr_peak = 1e-5;
  long warmup_steps = 1000;

  double lr_at(long step) const;
  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
};

// Adam with per-parameter moments keyed by parameter name.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(std::span<nn::Param<float>* const> params, double lr);
  long steps() const { return t_; }

 private:
  struct Moments {
    Matrix<float> m;
    Matrix<float> v;
  };
  AdamConfig config_;
  std::map<std::string, Moments> state_;
  long t_ = 0;
};

// Mean softmax cross-entropy over rows; `grad` receives d(loss)/d(logits).
double cross_entropy(const Matrix<float>& logits, std::span<const int> targets, Matrix<float>* grad = nullptr);

enum class Stage { clean_finetune, rt, dat, tgeat };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& s);

// Parameter groups updated by a stage.
std::set<nn::Group> trainable_groups(Stage stage, bool provider_trainable);

struct StageConfig {
  Stage stage = Stage::clean_finetune;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 0;
  WarmupSchedule schedule;
  AdamConfig adam;
  double dat_weight = 1.0;  // weight of the environment cross-entropy
  double grl_lambda = 1.0;
  bool provider_trainable = false;
  std::string prompt_template{kDefaultTemplate};
  // Noise split used to contaminate the dev set during adaptation stages.
  NoiseSplit dev_noise = NoiseSplit::adapt;
  // Stops after this many optimizer steps when > 0.
  long max_steps = 0;

  void validate() const;
};

nlohmann::json to_json(const StageConfig& config);
StageConfig stage_config_from_json(const nlohmann::json& j);

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double ccc_loss = 0.0;
  double env_xent = 0.0;
  std::string environment;
  double snr_db = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  std::array<double, 3> dev_ccc{};

  double sum() const { return dev_ccc[0] + dev_ccc[1] + dev_ccc[2]; }
};

struct TrainRun {
  Stage stage = Stage::clean_finetune;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
};

// Index of the epoch with the highest dev CCC sum; ties keep the earliest.
int select_best(std::span<const EpochRecord> epochs);

struct TrainingData {
  const SynthCorpus* corpus = nullptr;
  WaveformStats stats;
};

TrainingData make_training_data(const SynthCorpus& corpus);

struct StageResult {
  TrainRun run;
  nn::SerModel<float> model;                     // parameters of the best epoch
  std::unique_ptr<EncoderProvider> provider;     // best-epoch copy for trainable providers
};

// Trains one stage. clean_finetune starts from a fresh model built from
// `fresh_config`; the adaptation stages start from the stage-1 model.
StageResult run_stage(const StageConfig& config, const TrainingData& data, const nn::ModelConfig& fresh_config,
                      const nn::SerModel<float>* stage1, EncoderProvider* provider = nullptr);

// Dev-set CCC per attribute for a model. `contaminate` mixes every dev
// utterance with a noise clip of the given split at an adaptation SNR.
std::array<double, 3> dev_ccc(const nn::SerModel<float>& model, const TrainingData& data, std::uint64_t seed,
                              std::optional<NoiseSplit> contaminate, const EncoderProvider* provider,
                              const std::string& prompt_template = std::string(kDefaultTemplate));

nlohmann::json to_json(const TrainRun& run);
TrainRun train_run_from_json(const nlohmann::json& j);

}  // namespace tgeat
