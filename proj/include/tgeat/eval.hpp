#pragma once

#include "tgeat/training.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tgeat {

struct SetResult {
  double snr_db = 0.0;
  int replication = 0;
  std::array<double, 3> ccc{};  // arousal, dominance, valence
};

struct EvalReport {
  std::string model_id;
  std::string provider_id;
  std::vector<SetResult> sets;

  std::vector<double> snrs() const;  // descending
  // Per-replication CCC of one attribute at one SNR, ordered by replication.
  std::vector<double> values(double snr_db, int attribute) const;
  double mean(double snr_db, int attribute) const;
  // Throws unless every SNR has the same number of replications.
  void validate(int expected_replications = kEvalReplications) const;
};

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

struct EvalOptions {
  std::string model_id;
  std::string prompt_template{kDefaultTemplate};
  int jobs = 1;
  // Inference batch size; does not affect results.
  int chunk = 32;
};

// Runs every set through the model; CCC is computed over each whole set.
EvalReport evaluate(const nn::SerModel<float>& model, const TrainingData& data, std::span<const EvalSetSpec> sets,
                    const EncoderProvider* provider, const EvalOptions& options);

// ---- Significance ----

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_one_tailed = 0.5;
  bool significant = false;
};

double regularized_incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double df);

// One-tailed test of mean(a) > mean(b) with unequal variances.
WelchResult welch_one_tailed(std::span<const double> a, std::span<const double> b);

// ---- Embedding analysis ----

enum class TraceLayer { first, last };
enum class DiffMode { same_model, vs_original };

std::string to_string(TraceLayer layer);
std::string to_string(DiffMode mode);

struct EmbDiffRecord {
  TraceLayer layer = TraceLayer::last;
  DiffMode mode = DiffMode::same_model;
  double value = 0.0;
};

// Mean over acoustic slots of one layer's output (the text slot is skipped).
RowVector<double> pool_acoustic(const nn::LayerTrace<float>& trace, int layer_index);
int layer_index(const nn::LayerTrace<float>& trace, TraceLayer layer);

double mean_square_difference(const RowVector<double>& a, const RowVector<double>& b);

// same_model: model(clean) vs model(noisy). vs_original: original(clean) vs
// model(noisy). A text-fused model gets the noisy sample's prompt on both
// passes. Waveforms are z-normalized by the caller.
EmbDiffRecord embedding_difference(const nn::SerModel<float>& model, const nn::SerModel<float>& original,
                                   std::span<const float> clean, std::span<const float> noisy,
                                   const Vector<float>* text, TraceLayer layer, DiffMode mode);

struct EmbDiffSummary {
  std::string model_id;
  // Keyed by (mode, layer); the mean over utterances.
  std::map<std::pair<DiffMode, TraceLayer>, double> means;
  // Keyed by (mode, layer index); only filled when every layer is requested.
  std::map<std::pair<DiffMode, int>, double> per_layer;
  std::size_t count = 0;

  double at(DiffMode mode, TraceLayer layer) const;
};

// Averages both modes and both layers over the dev set, contaminating every
// utterance with an evaluation-split clip at `snr_db`. `all_layers` also
// records every transformer layer in `per_layer`.
EmbDiffSummary embedding_differences(const nn::SerModel<float>& model, const nn::SerModel<float>& original,
                                     const TrainingData& data, std::uint64_t seed, double snr_db,
                                     const EncoderProvider* provider, const std::string& model_id,
                                     const std::string& prompt_template = std::string(kDefaultTemplate),
                                     NoiseSplit noise = NoiseSplit::test, bool all_layers = false);

nlohmann::json to_json(const EmbDiffSummary& summary);

// ---- Text-embedding export ----

struct Embeddings2D {
  std::vector<std::string> environments;
  Matrix<double> raw;     // n x dim
  Matrix<double> coords;  // n x 2
};

// First two principal components; each component's largest-magnitude
// loading is made positive.
Matrix<double> pca_2d(const Matrix<double>& data);

Embeddings2D export_embeddings_2d(const EncoderProvider& provider, const EnvironmentCatalog& catalog,
                                  const std::string& prompt_template = std::string(kDefaultTemplate));

void write_embeddings_csv(const std::filesystem::path& path, const Embeddings2D& e);
void write_embeddings_jsonl(const std::filesystem::path& path, const Embeddings2D& e);

// ---- Report tables ----

// Models named "Original", "RT" and "DAT" act as the baselines for the
// significance markers (* vs Original, † vs RT, ★ vs DAT).
std::string render_table(std::span<const EvalReport> reports);
std::string render_csv(std::span<const EvalReport> reports);

}  // namespace tgeat
